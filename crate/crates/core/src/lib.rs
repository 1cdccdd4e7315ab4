//! Copy-move forgery detection.
//!
//! SIFT and log-polar SURF keypoints are matched with the generalized
//! 2-nearest-neighbour test, filtered by distance and iterated RANSAC, and the
//! surviving pairs seed evolving circular domains that grow while their block
//! features (DCT singular value or PCET moments) still agree. The union of the
//! final domains, closed morphologically, is the tamper mask.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod imgcore;
pub mod keypoint;
pub mod matching;
pub mod geofilter;
pub mod blockfeat;
pub mod config;
pub mod ecdc;
pub mod forgerylab;
pub mod evalkit;

#[cfg(test)]
mod test_support;

pub use config::Config;
pub use ecdc::{detect, CoverageMask, Detection};
pub use error::{Error, Result};
pub use imgcore::{load_grayscale, GrayImage};
