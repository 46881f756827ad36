//! Wall-clock benchmark harness comparing reference self-attention against
//! the strip composition over a grid of spatial sizes, with modeled FLOP
//! counts and a log-log scaling fit.
//!
//! Timing is strictly single-threaded: median of at least three repetitions
//! after warmup on a monotonic clock. Medians resist scheduler noise at
//! desk scale; the scaling verdict uses log-log slope bands rather than
//! absolute times so it is machine-independent.

use crate::attention::{
    flops_self_attention, flops_stda, self_attention, stda, SelfAttentionParams, StdaParams,
    StripDirection, StripParams,
};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::time::Instant;
use thiserror::Error;

/// CSV schema version line.
pub const CSV_HEADER_COMMENT: &str = "# strip-attention-lab bench v1";
/// CSV column order.
pub const CSV_COLUMNS: &str = "op,H,W,C,K,ns_median,flops_model,flops_per_ns";

/// Refuse to allocate attention maps beyond this many bytes; the point is
/// skipped with a diagnostic row instead of aborting the run.
const ALLOCATION_GUARD_BYTES: u64 = 4 << 30;

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("bench config: {0}")]
    Config(String),
}

/// Grid, sizes, and repetition policy for one benchmark run.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// (H, W) points, timed in order.
    pub grid: Vec<(usize, usize)>,
    pub channels: usize,
    pub k: usize,
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            grid: vec![(8, 8), (16, 16), (32, 32), (64, 64)],
            channels: 32,
            k: 7,
            reps: 5,
            warmup: 2,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.grid.is_empty() || self.grid.iter().any(|&(h, w)| h == 0 || w == 0) {
            return Err(BenchError::Config("grid sizes must be positive".into()));
        }
        if self.channels == 0 {
            return Err(BenchError::Config("channels must be positive".into()));
        }
        if self.k == 0 || self.k % 2 == 0 {
            return Err(BenchError::Config(format!("K must be odd, got {}", self.k)));
        }
        if self.reps < 3 {
            return Err(BenchError::Config(format!(
                "need at least 3 repetitions, got {}",
                self.reps
            )));
        }
        if self.warmup == 0 {
            return Err(BenchError::Config("need at least 1 warmup run".into()));
        }
        Ok(())
    }
}

/// One timed grid point for one operator.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub op: &'static str,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
    pub ns_median: u64,
    pub flops_model: u64,
    pub flops_per_ns: f64,
}

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.op,
            self.h,
            self.w,
            self.c,
            self.k,
            self.ns_median,
            self.flops_model,
            self.flops_per_ns
        )
    }
}

/// A grid point that was skipped, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedPoint {
    pub op: &'static str,
    pub h: usize,
    pub w: usize,
    pub reason: String,
}

/// Full output of a benchmark run.
#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub records: Vec<BenchRecord>,
    pub skipped: Vec<SkippedPoint>,
    /// (op name, fitted log-log slope of median time vs H·W).
    pub slopes: Vec<(&'static str, f64)>,
}

/// Reason to skip a self-attention point, if its score matrices would blow
/// past the allocation guard.
fn attention_allocation_veto(h: usize, w: usize) -> Option<String> {
    // Two (HW)² score matrices live at once inside self_attention.
    let bytes = 2 * (h as u128 * w as u128).pow(2) * 8;
    (bytes > ALLOCATION_GUARD_BYTES as u128)
        .then(|| format!("attention map would need {bytes} bytes"))
}

fn median_ns(samples: &mut [u64]) -> u64 {
    samples.sort_unstable();
    samples[samples.len() / 2]
}

/// Busy work before any timing so a frequency-scaling governor reaches its
/// steady state; otherwise the earliest grid points measure at low clocks
/// and medians drift between runs.
const GOVERNOR_SPIN_NS: u64 = 300_000_000;

fn spin_up() {
    let start = Instant::now();
    let mut acc = 0.0f64;
    let mut x = 1.000000001f64;
    while (start.elapsed().as_nanos() as u64) < GOVERNOR_SPIN_NS {
        for _ in 0..10_000 {
            acc += x;
            x = x * 1.000000001 + 1e-9;
        }
    }
    std::hint::black_box((acc, x));
}

/// Minimum wall time the warmup phase must cover; doubles as a frequency
/// settle and yields a per-call estimate for sample batching.
const WARMUP_FLOOR_NS: u64 = 10_000_000;
/// Target span of one timing sample. Microsecond-scale kernels are batched
/// until a sample covers this much wall time, so each point's samples
/// stretch across scheduler epochs and the medians stay comparable.
const SAMPLE_TARGET_NS: u64 = 20_000_000;

fn time_median(reps: usize, warmup: usize, mut f: impl FnMut()) -> u64 {
    let settle = Instant::now();
    let mut warm_calls: u64 = 0;
    while warm_calls < warmup as u64 || (settle.elapsed().as_nanos() as u64) < WARMUP_FLOOR_NS {
        f();
        warm_calls += 1;
        if warm_calls >= 1_000_000 {
            break;
        }
    }
    let est_call_ns = (settle.elapsed().as_nanos() as u64 / warm_calls.max(1)).max(1);
    let iters = (SAMPLE_TARGET_NS / est_call_ns).clamp(1, 1_000_000);
    let mut samples: Vec<u64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..iters {
                f();
            }
            (start.elapsed().as_nanos() as u64 / iters).max(1)
        })
        .collect();
    median_ns(&mut samples)
}

/// Least-squares slope of ln(y) against ln(x).
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Run the full grid single-threaded and fit per-op scaling slopes.
pub fn run_bench(config: &BenchConfig) -> Result<BenchOutput, BenchError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let c = config.channels;
    let k = config.k;

    let scale = 1.0 / c as f64;
    let sa_params = SelfAttentionParams::new(
        Tensor::random_uniform(&[c, c], -scale, scale, &mut rng).unwrap(),
        Tensor::random_uniform(&[c, c], -scale, scale, &mut rng).unwrap(),
        Tensor::random_uniform(&[c, c], -scale, scale, &mut rng).unwrap(),
    )
    .expect("square projections");
    let stda_params = StdaParams::new(
        StripParams::new(
            StripDirection::Horizontal,
            Tensor::random_uniform(&[k, c], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::random_uniform(&[k], -1.0, 1.0, &mut rng).unwrap(),
        )
        .map_err(|e| BenchError::Config(e.to_string()))?,
        StripParams::new(
            StripDirection::Vertical,
            Tensor::random_uniform(&[k, c], -1.0, 1.0, &mut rng).unwrap(),
            Tensor::random_uniform(&[k], -1.0, 1.0, &mut rng).unwrap(),
        )
        .map_err(|e| BenchError::Config(e.to_string()))?,
    )
    .map_err(|e| BenchError::Config(e.to_string()))?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();

    spin_up();
    for &(h, w) in &config.grid {
        let x = Tensor::random_uniform(&[c, h, w], -1.0, 1.0, &mut rng).unwrap();

        if let Some(reason) = attention_allocation_veto(h, w) {
            skipped.push(SkippedPoint {
                op: "self_attention",
                h,
                w,
                reason,
            });
        } else {
            let ns = time_median(config.reps, config.warmup, || {
                std::hint::black_box(self_attention(std::hint::black_box(&x), &sa_params).unwrap());
            });
            let flops = flops_self_attention(h, w, c).total;
            records.push(BenchRecord {
                op: "self_attention",
                h,
                w,
                c,
                k,
                ns_median: ns,
                flops_model: flops,
                flops_per_ns: flops as f64 / ns as f64,
            });
        }

        let ns = time_median(config.reps, config.warmup, || {
            std::hint::black_box(stda(std::hint::black_box(&x), &stda_params).unwrap());
        });
        let flops = flops_stda(h, w, c, k).total;
        records.push(BenchRecord {
            op: "stda",
            h,
            w,
            c,
            k,
            ns_median: ns,
            flops_model: flops,
            flops_per_ns: flops as f64 / ns as f64,
        });
    }

    let mut slopes = Vec::new();
    for op in ["self_attention", "stda"] {
        let points: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.op == op)
            .map(|r| ((r.h * r.w) as f64, r.ns_median as f64))
            .collect();
        if points.len() >= 2 {
            slopes.push((op, loglog_slope(&points)));
        }
    }

    Ok(BenchOutput {
        records,
        skipped,
        slopes,
    })
}

/// Render a run as CSV: version comment, column header, data rows, skip
/// diagnostics, and the fitted scaling summary as trailing comments.
pub fn render_csv(output: &BenchOutput) -> String {
    let mut csv = String::new();
    let _ = writeln!(csv, "{CSV_HEADER_COMMENT}");
    let _ = writeln!(csv, "{CSV_COLUMNS}");
    for record in &output.records {
        let _ = writeln!(csv, "{}", record.csv_row());
    }
    for skip in &output.skipped {
        let _ = writeln!(
            csv,
            "# skipped op={} H={} W={} reason={}",
            skip.op, skip.h, skip.w, skip.reason
        );
    }
    for (op, slope) in &output.slopes {
        let _ = writeln!(csv, "# slope op={op} loglog={slope:.4}");
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> BenchConfig {
        BenchConfig {
            grid: vec![(4, 4), (8, 8)],
            channels: 4,
            k: 3,
            reps: 3,
            warmup: 1,
            seed: 7,
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = tiny_config();
        cfg.reps = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.k = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.warmup = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.grid.clear();
        assert!(cfg.validate().is_err());
        assert!(tiny_config().validate().is_ok());
    }

    #[test]
    fn records_carry_exact_flop_model_values() {
        let output = run_bench(&tiny_config()).unwrap();
        assert_eq!(output.records.len(), 4);
        for record in &output.records {
            let want = match record.op {
                "self_attention" => flops_self_attention(record.h, record.w, record.c).total,
                "stda" => flops_stda(record.h, record.w, record.c, record.k).total,
                other => panic!("unexpected op {other}"),
            };
            assert_eq!(record.flops_model, want);
            assert!(record.ns_median > 0);
        }
    }

    #[test]
    fn csv_layout_is_versioned_and_columned() {
        let output = run_bench(&tiny_config()).unwrap();
        let csv = render_csv(&output);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER_COMMENT);
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS);
        let first = lines.next().unwrap();
        assert!(first.starts_with("self_attention,4,4,4,3,"));
        assert_eq!(first.split(',').count(), 8);
        assert!(csv.contains("# slope op=self_attention"));
        assert!(csv.contains("# slope op=stda"));
    }

    #[test]
    fn slope_fit_recovers_exact_power_laws() {
        // t = 3·(hw)^p fits to exactly p.
        for p in [1.0, 2.0, 1.5] {
            let points: Vec<(f64, f64)> = [64.0f64, 256.0, 1024.0, 4096.0]
                .iter()
                .map(|&hw| (hw, 3.0 * hw.powf(p)))
                .collect();
            assert!((loglog_slope(&points) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn allocation_guard_vetoes_oversized_attention() {
        assert!(attention_allocation_veto(8, 8).is_none());
        assert!(attention_allocation_veto(64, 64).is_none());
        let reason = attention_allocation_veto(40960, 40960).expect("must veto");
        assert!(reason.contains("bytes"));
    }
}
