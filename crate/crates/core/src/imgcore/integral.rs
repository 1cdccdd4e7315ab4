use super::Raster;

/// Summed-area table with one extra leading row and column of zeros.
#[derive(Clone, Debug)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<f64>,
}

pub fn integral(img: &Raster) -> IntegralImage {
    let (w, h) = img.dimensions();
    let stride = w + 1;
    let mut sums = vec![0.0f64; stride * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0.0f64;
        let row = img.row(y);
        for x in 0..w {
            row_sum += row[x] as f64;
            sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row_sum;
        }
    }
    IntegralImage {
        width: w,
        height: h,
        sums,
    }
}

impl IntegralImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.sums[y * (self.width + 1) + x]
    }

    /// Sum over the half-open rectangle `[x0, x1) x [y0, y1)`.
    #[inline]
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        debug_assert!(x0 <= x1 && x1 <= self.width && y0 <= y1 && y1 <= self.height);
        self.at(x1, y1) - self.at(x0, y1) - self.at(x1, y0) + self.at(x0, y0)
    }

    /// Like [`rect_sum`](Self::rect_sum) but with signed bounds clipped to the
    /// image. Returns the sum and the clipped area.
    #[inline]
    pub fn rect_sum_clipped(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> (f64, usize) {
        let cx0 = x0.clamp(0, self.width as i64) as usize;
        let cx1 = x1.clamp(0, self.width as i64) as usize;
        let cy0 = y0.clamp(0, self.height as i64) as usize;
        let cy1 = y1.clamp(0, self.height as i64) as usize;
        if cx1 <= cx0 || cy1 <= cy0 {
            return (0.0, 0);
        }
        (
            self.rect_sum(cx0, cy0, cx1, cy1),
            (cx1 - cx0) * (cy1 - cy0),
        )
    }

    /// Mean of the clipped box of odd side `side` centered on pixel `(x, y)`.
    #[inline]
    pub fn box_mean(&self, x: i64, y: i64, side: i64) -> f64 {
        let half = side / 2;
        let (sum, area) = self.rect_sum_clipped(x - half, y - half, x - half + side, y - half + side);
        if area == 0 {
            0.0
        } else {
            sum / area as f64
        }
    }
}
