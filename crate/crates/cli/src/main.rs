//! `striplab` — verification, benchmark, loss-evaluation, and dataset-filter
//! commands over the strip-attention lab kernels.
//!
//! Exit codes: 0 success, 1 verification failure, 2 bad arguments,
//! 3 I/O or malformed-data errors.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use striplab_core::bench::{render_csv, run_bench, BenchConfig};
use striplab_core::condition_fusion::{self, FusionParams};
use striplab_core::diffusion::extractors::{
    EmbeddingGapScorer, FixedLinearExtractor, FrameMeanGapScorer, IdentityExtractor,
};
use striplab_core::diffusion::{
    estimate_clean_latent, forward_noising, lpips_loss, noise_loss, sliding_windows,
    sync_loss_over_windows, trepa_loss, DiffusionSchedule, FeatureExtractor, LossBreakdown,
    LossWeights, SyncScorer,
};
use striplab_core::tensor::{compensated_sum, Tensor};
use striplab_core::verify::{run_full_verification, InjectedFault, SuiteConfig};
use striplab_core::{tsr1, DEFAULT_SEED};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_BAD_ARGS: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "striplab",
    about = "Strip-attention lab: verification suites, scaling benchmarks, loss evaluation, and dataset filtering",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every verification suite (oracles, gradients, impulse, chain).
    Verify(VerifyArgs),
    /// Time self-attention vs the strip composition over a size grid.
    Bench(BenchArgs),
    /// Evaluate the training-objective stack on a fixture directory.
    Losses(LossesArgs),
    /// Filter a sample manifest by fused-condition cosine similarity.
    Filter(FilterArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Randomized-case seed (env STRIPLAB_SEED overrides the default).
    #[arg(long)]
    seed: Option<u64>,
    /// Randomized cases per oracle sweep.
    #[arg(long, default_value_t = 100)]
    cases: usize,
    /// Deliberately break a kernel to prove the suite notices (test fixture).
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    BrokenStripIndex,
}

#[derive(Args)]
struct BenchArgs {
    /// Grid of sizes, comma-separated `HxW` or bare `N` for square points.
    #[arg(long, default_value = "8x8,16x16,32x32,64x64")]
    grid: String,
    #[arg(long, default_value_t = 32)]
    channels: usize,
    /// Strip length (odd).
    #[arg(long, default_value_t = 7)]
    k: usize,
    /// Timing repetitions per point (at least 3).
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Warmup runs per point (at least 1).
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path.
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtractorArg {
    /// Seeded frozen linear maps (default).
    Fixed,
    /// Identity features and frame-mean sync scoring; exactly calibratable.
    Identity,
}

#[derive(Args)]
struct LossesArgs {
    /// Directory holding z0.tsr, eps.tsr, eps_pred.tsr, ref.tsr, audio.tsr,
    /// schedule.tsr.
    fixture_dir: PathBuf,
    /// Timestep index into the schedule (default: the middle step).
    #[arg(long)]
    t: Option<usize>,
    /// Sliding-window stride over frames.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = ExtractorArg::Fixed)]
    extractor: ExtractorArg,
}

#[derive(Args)]
struct FilterArgs {
    /// Manifest: one `<id> <audio.tsr> <text.tsr> <emotion.tsr>` per line.
    manifest: PathBuf,
    /// Retention threshold in [-1, 1].
    #[arg(long, default_value_t = condition_fusion::DEFAULT_TAU)]
    tau: f64,
    /// Output file for retained ids (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Projection matrix fixture; seeded random when omitted.
    #[arg(long)]
    fusion_w: Option<PathBuf>,
    /// Projection bias fixture; zeros when omitted.
    #[arg(long)]
    fusion_b: Option<PathBuf>,
    /// Fusion weight for the projected text stream.
    #[arg(long, default_value_t = condition_fusion::DEFAULT_LAMBDA)]
    lambda: f64,
}

enum CliError {
    BadArgs(String),
    Io(String),
    VerifyFailed,
}

impl CliError {
    fn report(self) -> ExitCode {
        match self {
            CliError::BadArgs(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(EXIT_BAD_ARGS)
            }
            CliError::Io(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(EXIT_IO)
            }
            CliError::VerifyFailed => ExitCode::from(EXIT_VERIFY_FAILED),
        }
    }
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("STRIPLAB_SEED") {
        Ok(raw) => raw
            .parse()
            .map_err(|_| CliError::BadArgs(format!("STRIPLAB_SEED={raw} is not a u64"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Losses(args) => cmd_losses(args),
        Command::Filter(args) => cmd_filter(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let config = SuiteConfig {
        seed: resolve_seed(args.seed)?,
        cases: args.cases,
        fault: args.inject_fault.map(|f| match f {
            FaultArg::BrokenStripIndex => InjectedFault::BrokenStripIndex,
        }),
    };
    let summary = run_full_verification(&config);
    for line in &summary.lines {
        println!("{line}");
    }
    if summary.passed {
        println!("verify: PASS ({} checks)", summary.lines.len());
        Ok(())
    } else {
        println!("verify: FAIL");
        Err(CliError::VerifyFailed)
    }
}

fn parse_grid(raw: &str) -> Result<Vec<(usize, usize)>, CliError> {
    let mut grid = Vec::new();
    for token in raw.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let (h, w) = match token.split_once('x') {
            Some((h, w)) => (h, w),
            None => (token, token),
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| CliError::BadArgs(format!("bad grid token {token:?}")))
        };
        grid.push((parse(h)?, parse(w)?));
    }
    if grid.is_empty() {
        return Err(CliError::BadArgs("empty grid".into()));
    }
    Ok(grid)
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let config = BenchConfig {
        grid: parse_grid(&args.grid)?,
        channels: args.channels,
        k: args.k,
        reps: args.reps,
        warmup: args.warmup,
        seed: resolve_seed(args.seed)?,
    };
    let output = run_bench(&config).map_err(|e| CliError::BadArgs(e.to_string()))?;
    let csv = render_csv(&output);
    std::fs::write(&args.out, &csv)
        .map_err(|e| io_err(format!("writing {}: {e}", args.out.display())))?;
    for (op, slope) in &output.slopes {
        println!("slope op={op} loglog={slope:.4}");
    }
    println!(
        "wrote {} rows to {}",
        output.records.len(),
        args.out.display()
    );
    Ok(())
}

fn frame_slice(clip: &Tensor, frame: usize) -> Tensor {
    let per_frame: usize = clip.shape()[1..].iter().product();
    let data = clip.data()[frame * per_frame..(frame + 1) * per_frame].to_vec();
    Tensor::new(clip.shape()[1..].to_vec(), data).expect("frame slice")
}

fn cmd_losses(args: LossesArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    if args.stride == 0 {
        return Err(CliError::BadArgs("stride must be positive".into()));
    }
    let dir = &args.fixture_dir;
    let load = |name: &str| tsr1::read_file(dir.join(name)).map_err(io_err);
    let z0 = load("z0.tsr")?;
    let eps = load("eps.tsr")?;
    let eps_pred = load("eps_pred.tsr")?;
    let reference = load("ref.tsr")?;
    let audio = load("audio.tsr")?;
    let schedule = DiffusionSchedule::from_file(dir.join("schedule.tsr")).map_err(io_err)?;

    for (name, t) in [
        ("eps.tsr", &eps),
        ("eps_pred.tsr", &eps_pred),
        ("ref.tsr", &reference),
    ] {
        if t.shape() != z0.shape() {
            return Err(CliError::Io(format!(
                "{name} shape {:?} does not match z0.tsr shape {:?}",
                t.shape(),
                z0.shape()
            )));
        }
    }
    if z0.rank() != 4 {
        return Err(CliError::Io(format!(
            "z0.tsr must be [F, C, H, W], got {:?}",
            z0.shape()
        )));
    }

    let t_step = args.t.unwrap_or(schedule.len() / 2);
    let alpha = schedule.alpha_bar(t_step).map_err(io_err)?;
    let z_t = forward_noising(&z0, &eps, alpha).map_err(io_err)?;
    let estimated = estimate_clean_latent(&z_t, &eps_pred, alpha).map_err(io_err)?;

    let est_windows = sliding_windows(&estimated, &audio, args.stride).map_err(io_err)?;
    let ref_windows = sliding_windows(&reference, &audio, args.stride).map_err(io_err)?;

    let frames = z0.shape()[0];
    let frame_len: usize = z0.shape()[1..].iter().product();
    let window_video_len = striplab_core::diffusion::WINDOW_FRAMES * frame_len;
    let window_audio_len = striplab_core::diffusion::WINDOW_FRAMES * audio.shape()[1];

    // The extractor stack stands in for the perceptual, video, and sync
    // networks; `fixed` exercises the layered path, `identity` makes every
    // component exactly calibratable from the fixtures.
    let (lpips_ex, lpips_layers, trepa_ex, sync_scorer): (
        Box<dyn FeatureExtractor>,
        Vec<usize>,
        Box<dyn FeatureExtractor>,
        Box<dyn SyncScorer>,
    ) = match args.extractor {
        ExtractorArg::Fixed => (
            Box::new(FixedLinearExtractor::new(seed ^ 0xE1, frame_len, 16, 2)),
            vec![0, 1],
            Box::new(FixedLinearExtractor::new(
                seed ^ 0xE2,
                window_video_len,
                16,
                1,
            )),
            Box::new(EmbeddingGapScorer::new(
                FixedLinearExtractor::new(seed ^ 0xE3, window_video_len, 8, 1),
                FixedLinearExtractor::new(seed ^ 0xE4, window_audio_len, 8, 1),
            )),
        ),
        ExtractorArg::Identity => (
            Box::new(IdentityExtractor),
            vec![0],
            Box::new(IdentityExtractor),
            Box::new(FrameMeanGapScorer),
        ),
    };

    let noise = noise_loss(&eps, &eps_pred).map_err(io_err)?;

    let per_frame: Vec<f64> = (0..frames)
        .map(|f| {
            lpips_loss(
                &frame_slice(&estimated, f),
                &frame_slice(&reference, f),
                lpips_ex.as_ref(),
                &lpips_layers,
            )
            .map_err(io_err)
        })
        .collect::<Result<_, _>>()?;
    let lpips = compensated_sum(per_frame.iter().copied()) / frames as f64;

    let per_window: Vec<f64> = est_windows
        .iter()
        .zip(ref_windows.iter())
        .map(|(e, r)| trepa_loss(&e.video, &r.video, trepa_ex.as_ref()).map_err(io_err))
        .collect::<Result<_, _>>()?;
    let trepa = compensated_sum(per_window.iter().copied()) / per_window.len() as f64;

    let sync = sync_loss_over_windows(&est_windows, sync_scorer.as_ref()).map_err(io_err)?;

    let breakdown =
        LossBreakdown::from_components(noise, sync, lpips, trepa, &LossWeights::default());
    print!("{}", breakdown.render());
    Ok(())
}

fn cmd_filter(args: FilterArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    if !(-1.0..=1.0).contains(&args.tau) {
        return Err(CliError::BadArgs(format!(
            "--tau must lie in [-1, 1], got {}",
            args.tau
        )));
    }
    let samples = condition_fusion::load_samples(&args.manifest).map_err(io_err)?;
    if samples.is_empty() {
        return Err(CliError::Io(format!(
            "{}: no samples in manifest",
            args.manifest.display()
        )));
    }
    let d_a = samples[0].audio_feature.len();
    let d_t = samples[0].text_tokens.shape()[1];

    let w = match &args.fusion_w {
        Some(path) => tsr1::read_file(path).map_err(io_err)?,
        None => {
            FusionParams::seeded(seed ^ 0xF0, d_a, d_t)
                .map_err(io_err)?
                .w
        }
    };
    let b = match &args.fusion_b {
        Some(path) => tsr1::read_file(path).map_err(io_err)?,
        None => Tensor::zeros(&[w.shape()[0]]).map_err(io_err)?,
    };
    let params = FusionParams::new(w, b)
        .map_err(io_err)?
        .with_lambda(args.lambda)
        .map_err(|e| CliError::BadArgs(e.to_string()))?;

    let outcome = condition_fusion::filter_dataset(&samples, &params, args.tau).map_err(io_err)?;
    let rendered = outcome.render();
    match &args.out {
        Some(path) => {
            std::fs::write(path, &rendered)
                .map_err(|e| io_err(format!("writing {}: {e}", path.display())))?;
            // Echo just the summary when the ids went to a file.
            print!("{}", rendered.lines().last().unwrap_or(""));
            println!();
        }
        None => print!("{rendered}"),
    }
    Ok(())
}
