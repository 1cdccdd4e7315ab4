use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecdc::blockfeat::Mode;
use ecdc::config::CONFIG_ENV;
use ecdc::evalkit::{batch_evaluate, render_overlay, Detector, OracleDetector};
use ecdc::forgerylab::{attack_suite, scenario_placement, write_suite, Scenario};
use ecdc::matching::write_matches_jsonl;
use ecdc::{detect, load_grayscale, Config, Error};

const EXIT_FORGED: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_NO_INPUT: u8 = 66;
const EXIT_SOFTWARE: u8 = 70;
const EXIT_CANT_CREATE: u8 = 73;

#[derive(Parser)]
#[command(name = "ecdc", version, about = "Copy-move forgery detection and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines; falls back to $ECDC_CONFIG
    #[arg(long)]
    config: Option<PathBuf>,
    /// Block feature used to grow domains
    #[arg(long)]
    mode: Option<Mode>,
    /// Override one config key, e.g. `--set ransac.n=8`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Detect copy-move forgery in one image. Exits 0 when clean, 3 when forged.
    Detect {
        input: PathBuf,
        /// Write the detection mask as a PNG
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Write the image with detected pixels tinted red
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Write the geometrically consistent matches as JSON lines
        #[arg(long)]
        matches: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Synthesize an attack suite from a base image.
    Synth {
        base: PathBuf,
        #[arg(long, default_value = "plain")]
        scenario: Scenario,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Side of the copied square fragment
        #[arg(long, default_value_t = 128)]
        side: usize,
    },
    /// Run detection over a suite manifest and score it.
    Eval {
        manifest: PathBuf,
        /// Report JSON path; printed to stdout when omitted
        #[arg(long)]
        report: Option<PathBuf>,
        /// Curve CSV path; defaults to the report path with a .csv extension
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Worker threads, 0 for one per logical core
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Score the ground truth itself instead of running the detector
        #[arg(long, hide = true)]
        oracle: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn input_failure(e: Error) -> Failure {
    let code = match e {
        Error::Io { .. } | Error::Decode(_) => EXIT_NO_INPUT,
        Error::Config(_) => EXIT_USAGE,
        Error::NoData(_) | Error::Json(_) | Error::InvalidInput(_) => EXIT_DATA,
    };
    Failure::new(code, e.to_string())
}

fn output_failure(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| Failure::new(EXIT_CANT_CREATE, format!("cannot write {}: {e}", path.display()))
}

/// Defaults, then the config file (or `$ECDC_CONFIG`), then flags.
fn resolve_config(args: &ConfigArgs) -> Result<Config, Failure> {
    let path = args
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => Config::load(&p).map_err(input_failure)?,
        None => Config::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::new(EXIT_USAGE, format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    }
    if let Some(mode) = args.mode {
        cfg.ecdc.block.mode = mode;
    }
    cfg.validate().map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    Ok(cfg)
}

fn cmd_detect(
    input: &Path,
    mask_out: Option<&Path>,
    overlay_out: Option<&Path>,
    matches_out: Option<&Path>,
    config: &ConfigArgs,
) -> Result<u8, Failure> {
    let cfg = resolve_config(config)?;
    let img = load_grayscale(input).map_err(|e| Failure::new(EXIT_NO_INPUT, e.to_string()))?;
    let det = detect(&img, &cfg).map_err(|e| Failure::new(EXIT_SOFTWARE, e.to_string()))?;
    if let Some(p) = mask_out {
        det.mask.save_png(p).map_err(output_failure(p))?;
    }
    if let Some(p) = overlay_out {
        let rgb = render_overlay(&det.mask, &img).map_err(|e| Failure::new(EXIT_SOFTWARE, e.to_string()))?;
        rgb.save(p).map_err(|e| output_failure(p)(e.into()))?;
    }
    if let Some(p) = matches_out {
        let pairs: Vec<_> = det.filtered.iter().map(|f| f.pair).collect();
        let write = || -> ecdc::Result<()> {
            let file = File::create(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            let mut w = BufWriter::new(file);
            write_matches_jsonl(&mut w, &pairs)?;
            w.flush().map_err(serde_json::Error::io)?;
            Ok(())
        };
        write().map_err(output_failure(p))?;
    }
    let verdict = if det.is_forged() { "forged" } else { "clean" };
    println!(
        "{verdict}\t{}\tpixels={}\tmatches={}\tconsistent={}",
        input.display(),
        det.mask.count(),
        det.matches.len(),
        det.filtered.len()
    );
    Ok(if det.is_forged() { EXIT_FORGED } else { 0 })
}

fn cmd_synth(base: &Path, scenario: Scenario, out: &Path, seed: u64, side: usize) -> Result<u8, Failure> {
    let img = load_grayscale(base).map_err(|e| Failure::new(EXIT_NO_INPUT, e.to_string()))?;
    let placement =
        scenario_placement(&img, scenario, side, seed).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    let cases = attack_suite(&img, &placement, scenario, seed).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    let base_name = base.file_name().map(|n| n.to_string_lossy().into_owned());
    let manifest = write_suite(out, "", &cases, base_name.as_deref()).map_err(output_failure(out))?;
    println!("{} cases\t{}", cases.len(), manifest.display());
    Ok(0)
}

fn cmd_eval(
    manifest: &Path,
    report: Option<&Path>,
    curves: Option<&Path>,
    jobs: usize,
    oracle: bool,
    config: &ConfigArgs,
) -> Result<u8, Failure> {
    let cfg = resolve_config(config)?;
    let detector: &dyn Detector = if oracle { &OracleDetector } else { &cfg };
    let rep = batch_evaluate(manifest, detector, jobs).map_err(input_failure)?;
    let failed = rep.pixel.cases.iter().filter(|c| c.error.is_some()).count();
    match report {
        Some(r) => {
            let curves = curves.map_or_else(|| r.with_extension("csv"), Path::to_path_buf);
            rep.write(r, &curves).map_err(output_failure(r))?;
        }
        None => {
            let json = rep.to_json().map_err(|e| Failure::new(EXIT_SOFTWARE, e.to_string()))?;
            println!("{json}");
            if let Some(c) = curves {
                std::fs::write(c, rep.curves_csv()).map_err(|e| {
                    output_failure(c)(Error::Io {
                        path: c.to_path_buf(),
                        source: e,
                    })
                })?;
            }
        }
    }
    eprintln!(
        "{} cases ({failed} failed): pixel p={:.4} r={:.4} f1={:.4}; image p={:.4} r={:.4} f1={:.4}",
        rep.pixel.cases.len(),
        rep.pixel.p,
        rep.pixel.r,
        rep.pixel.f1,
        rep.image.p,
        rep.image.r,
        rep.image.f1
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Detect {
            input,
            mask,
            overlay,
            matches,
            config,
        } => cmd_detect(input, mask.as_deref(), overlay.as_deref(), matches.as_deref(), config),
        Command::Synth {
            base,
            scenario,
            out,
            seed,
            side,
        } => cmd_synth(base, *scenario, out, *seed, *side),
        Command::Eval {
            manifest,
            report,
            curves,
            jobs,
            oracle,
            config,
        } => cmd_eval(manifest, report.as_deref(), curves.as_deref(), *jobs, *oracle, config),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("ecdc: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
