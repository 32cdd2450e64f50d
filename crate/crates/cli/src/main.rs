use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetmorph::error::{Error, Result};
use hetmorph::harness::{run_manifest, EvaluationManifest, TOOLKIT_VERSION};
use hetmorph::io;
use hetmorph::kfold::{stratified_kfold_records, DEFAULT_FOLDS};
use hetmorph::metrics::{self, BpcerRule, DEFAULT_BPCER_TARGETS, DEFAULT_TARGET_FMR};
use hetmorph::model::ImposterScoreSet;
use hetmorph::morph::{warp_blend, MorphParams};
use hetmorph::printscan::{artifact_energy, difference_image, image_seed, simulate_print_scan, PrintScanParams};
use hetmorph::report::{render_report, ReportFormat};
use rayon::prelude::*;

const EXIT_FATAL: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Heterogeneous face-morph evaluation toolkit.
#[derive(Debug, Parser)]
#[command(name = "hetmorph", version = TOOLKIT_VERSION)]
struct Cli {
    /// Seed for every stochastic stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print the toolkit version, the effective configuration and progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Landmark-based morph of two face images.
    Morph(MorphArgs),
    /// Run every PNG in a directory through the simulated print-scan channel.
    Printscan(PrintscanArgs),
    /// Amplified absolute difference of two images; prints the RMS difference.
    Diff(DiffArgs),
    /// Vulnerability and detector metrics from score files.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Threshold at a target false match rate.
    Calibrate(CalibrateArgs),
    /// Stratified k-fold assignment of a classifier score file.
    Kfold(KfoldArgs),
    /// Evaluate a manifest and write reports.
    Harness(HarnessArgs),
    /// EMA decay for a batch size.
    Ema(EmaArgs),
}

#[derive(Debug, Args)]
struct MorphArgs {
    /// First contributing image (PNG).
    #[arg(long)]
    a: PathBuf,
    /// Landmarks of the first image (JSON).
    #[arg(long)]
    a_landmarks: PathBuf,
    /// Second contributing image (PNG).
    #[arg(long)]
    b: PathBuf,
    /// Landmarks of the second image (JSON).
    #[arg(long)]
    b_landmarks: PathBuf,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
    /// Weight of the second image, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Triangulate the landmarks only, without the 8 image-border points.
    #[arg(long)]
    no_boundary_points: bool,
    /// Also write the triangle mesh as JSON to this path.
    #[arg(long)]
    mesh_debug: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PrintscanArgs {
    /// Input directory of PNG images.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Preset name (default, icc-mismatch) or path to a JSON parameter file.
    #[arg(long, default_value = "default")]
    preset: String,
}

#[derive(Debug, Args)]
struct DiffArgs {
    /// Digital image (PNG).
    #[arg(long)]
    a: PathBuf,
    /// Print-scanned image (PNG), same size.
    #[arg(long)]
    b: PathBuf,
    /// Amplification factor, at least 1.
    #[arg(long, default_value_t = 1.0)]
    gain: f64,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    /// Similarity score file.
    #[arg(long)]
    scores: PathBuf,
    /// Fixed threshold; a score matches when strictly above it.
    #[arg(long, conflicts_with = "impostors", required_unless_present = "impostors")]
    delta: Option<f64>,
    /// Impostor score file to calibrate the threshold from.
    #[arg(long)]
    impostors: Option<PathBuf>,
    /// Target false match rate for calibration.
    #[arg(long, default_value_t = DEFAULT_TARGET_FMR)]
    fmr: f64,
}

#[derive(Debug, Args)]
struct DetectorArgs {
    /// Classifier score file.
    #[arg(long)]
    scores: PathBuf,
}

#[derive(Debug, Args)]
struct MacerArgs {
    /// Classifier score file.
    #[arg(long)]
    scores: PathBuf,
    /// BPCER targets (repeatable).
    #[arg(long, num_args = 1.., default_values_t = DEFAULT_BPCER_TARGETS)]
    bpcer: Vec<f64>,
    /// Operating point selection: at-most or at-least the target BPCER.
    #[arg(long, default_value = "at-most", value_parser = parse_rule)]
    rule: BpcerRule,
}

#[derive(Debug, Subcommand)]
enum MetricsCommand {
    /// MMPMR (one sample per subject).
    Mmpmr(ThresholdArgs),
    /// ProdAvg-MMPMR.
    Prodavg(ThresholdArgs),
    /// Equal error rate.
    Eer(DetectorArgs),
    /// EER and MACER at BPCER targets, as JSON.
    Macer(MacerArgs),
    /// ROC operating points as CSV.
    Roc(DetectorArgs),
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Impostor score file.
    #[arg(long)]
    impostors: PathBuf,
    /// Target false match rate.
    #[arg(long, default_value_t = DEFAULT_TARGET_FMR)]
    fmr: f64,
}

#[derive(Debug, Args)]
struct KfoldArgs {
    /// Classifier score file.
    #[arg(long)]
    scores: PathBuf,
    /// Number of folds.
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    k: usize,
}

#[derive(Debug, Args)]
struct HarnessArgs {
    /// Manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for report files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Report formats (repeatable): json, csv, markdown. Default: all.
    #[arg(long, num_args = 1.., value_parser = parse_format)]
    format: Vec<ReportFormat>,
}

#[derive(Debug, Args)]
struct EmaArgs {
    /// Training batch size.
    #[arg(long, allow_negative_numbers = true)]
    batch_size: i64,
}

fn parse_rule(s: &str) -> std::result::Result<BpcerRule, String> {
    match s {
        "at-most" => Ok(BpcerRule::AtMost),
        "at-least" => Ok(BpcerRule::AtLeast),
        other => Err(format!("unknown rule {other:?} (expected at-most or at-least)")),
    }
}

fn parse_format(s: &str) -> std::result::Result<ReportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn threshold(args: &ThresholdArgs) -> Result<f64> {
    match (&args.impostors, args.delta) {
        (_, Some(delta)) => Ok(delta),
        (Some(path), None) => {
            let cal = metrics::calibrate_threshold(&io::load_impostor_scores(path)?, args.fmr)?;
            log::info!("calibrated delta {} (achieved FMR {})", cal.delta, cal.achieved_fmr);
            Ok(cal.delta)
        }
        (None, None) => unreachable!("clap requires --delta or --impostors"),
    }
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn run_printscan(args: &PrintscanArgs, seed: u64) -> Result<()> {
    let base = match args.preset.as_str() {
        "default" | "icc-mismatch" => PrintScanParams::preset(&args.preset)?,
        path => PrintScanParams::from_json(&io::read_to_string(Path::new(path))?)?,
    };
    let files = png_files(&args.input)?;
    if files.is_empty() {
        return Err(Error::InvalidInput(format!("no PNG files in {}", args.input.display())));
    }
    create_dir(&args.out)?;
    files.par_iter().try_for_each(|path| {
        let name = path.file_name().expect("listed files have names").to_string_lossy();
        let params = PrintScanParams {
            seed: image_seed(seed, &name),
            ..base.clone()
        };
        let out = simulate_print_scan(&io::read_png(path)?, &params)?;
        io::write_png(&args.out.join(name.as_ref()), &out)?;
        log::info!("{name}: done");
        Ok(())
    })
}

fn run(cli: &Cli) -> Result<u8> {
    let mut stdout = std::io::stdout().lock();
    let mut say = |line: String| {
        let _ = writeln!(stdout, "{line}");
    };
    match &cli.command {
        Command::Morph(a) => {
            let params = MorphParams {
                alpha: a.alpha,
                boundary_augmentation: !a.no_boundary_points,
            };
            let output = warp_blend(
                &io::read_png(&a.a)?,
                &io::load_landmarks(&a.a_landmarks)?,
                &io::read_png(&a.b)?,
                &io::load_landmarks(&a.b_landmarks)?,
                &params,
            )?;
            io::write_png(&a.out, &output.image)?;
            if let Some(path) = &a.mesh_debug {
                write_file(path, serde_json::to_string_pretty(&output.mesh)?.as_bytes())?;
            }
            say(serde_json::to_string(&output.quality)?);
        }
        Command::Printscan(a) => run_printscan(a, cli.seed)?,
        Command::Diff(a) => {
            let digital = io::read_png(&a.a)?;
            let printscanned = io::read_png(&a.b)?;
            io::write_png(&a.out, &difference_image(&digital, &printscanned, a.gain)?)?;
            say(artifact_energy(&digital, &printscanned)?.to_string());
        }
        Command::Metrics(MetricsCommand::Mmpmr(a)) => {
            let set = io::load_similarity_scores(&a.scores)?;
            say(metrics::mmpmr(&set, threshold(a)?)?.to_string());
        }
        Command::Metrics(MetricsCommand::Prodavg(a)) => {
            let set = io::load_similarity_scores(&a.scores)?;
            say(metrics::prodavg_mmpmr(&set, threshold(a)?).to_string());
        }
        Command::Metrics(MetricsCommand::Eer(a)) => {
            say(metrics::equal_error_rate(&io::load_classifier_scores(&a.scores)?)?.to_string());
        }
        Command::Metrics(MetricsCommand::Macer(a)) => {
            let records = io::load_classifier_scores(&a.scores)?;
            say(serde_json::to_string(&metrics::macer_at_bpcer(&records, &a.bpcer, a.rule)?)?);
        }
        Command::Metrics(MetricsCommand::Roc(a)) => {
            let roc = metrics::compute_roc(&io::load_classifier_scores(&a.scores)?)?;
            say("threshold,bpcer,macer".into());
            for p in roc.points() {
                say(format!("{},{},{}", p.threshold, p.false_accept_rate, p.false_reject_rate));
            }
        }
        Command::Calibrate(a) => {
            let impostors: ImposterScoreSet = io::load_impostor_scores(&a.impostors)?;
            say(serde_json::to_string(&metrics::calibrate_threshold(&impostors, a.fmr)?)?);
        }
        Command::Kfold(a) => {
            let records = io::load_classifier_scores(&a.scores)?;
            let folds = stratified_kfold_records(&records, a.k, cli.seed)?;
            let mut fold_of = vec![0; records.len()];
            for (f, fold) in folds.iter().enumerate() {
                for &i in &fold.validation {
                    fold_of[i] = f;
                }
            }
            say("image_id,label,fold".into());
            for (r, f) in records.iter().zip(fold_of) {
                say(format!("{},{},{f}", r.image_id, r.label.as_str()));
            }
        }
        Command::Harness(a) => {
            let manifest = EvaluationManifest::load(&a.manifest)?;
            let report = run_manifest(&manifest)?;
            create_dir(&a.out_dir)?;
            let formats = if a.format.is_empty() { ReportFormat::ALL.to_vec() } else { a.format.clone() };
            for format in formats {
                let path = a.out_dir.join(format!("report.{}", format.extension()));
                write_file(&path, &render_report(&report, format)?)?;
                say(path.display().to_string());
            }
            if !report.is_complete() {
                log::warn!("{} cells absent", report.absent.len());
                return Ok(EXIT_PARTIAL);
            }
        }
        Command::Ema(a) => say(metrics::ema_decay(a.batch_size)?.to_string()),
    }
    Ok(0)
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let message: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            let message = message.join(" ");
            eprintln!("{}", error_line("usage", message.trim_start_matches("error: ")));
            return ExitCode::from(EXIT_USAGE);
        }
    };

    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if cli.verbose {
        eprintln!("hetmorph {TOOLKIT_VERSION}");
        eprintln!("{cli:#?}");
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("{}", error_line("usage", "--jobs must be at least 1"));
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("{}", error_line("usage", &e.to_string()));
            return ExitCode::from(EXIT_USAGE);
        }
    }

    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::from(EXIT_FATAL)
        }
    }
}
