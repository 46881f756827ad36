//! Independent numerical verification: literal-loop oracles for every
//! kernel, central finite-difference gradient checks, impulse-response
//! receptive-field probes, and chain-influence probes, plus the randomized
//! suite runners the CLI and the acceptance tests drive.

pub mod gradcheck;
pub mod gradients;
pub mod oracles;
pub mod probes;
mod suites;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_STEP, DEFAULT_TOLERANCE};
pub use probes::{chain_influence_probe, impulse_response};
pub use suites::{
    run_chain_suite, run_fault_injection_trials, run_full_verification, run_gradient_suite,
    run_impulse_suite, run_oracle_suite, ChainReport, FaultInjectionReport, ImpulseReport,
    InjectedFault, SuiteConfig, VerifySummary,
};

/// Absolute agreement bar between optimized kernels and their loop oracles,
/// sized for accumulated double-precision rounding at desk scale.
pub const ORACLE_TOLERANCE: f64 = 1e-12;

/// Outcome of one randomized oracle-equivalence sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub op_name: String,
    pub max_abs_diff: f64,
    pub num_cases: usize,
    pub passed: bool,
}

impl OracleReport {
    pub fn from_diffs(op_name: &str, diffs: &[f64]) -> Self {
        let max_abs_diff = diffs.iter().copied().fold(0.0, f64::max);
        Self {
            op_name: op_name.to_string(),
            max_abs_diff,
            num_cases: diffs.len(),
            passed: max_abs_diff < ORACLE_TOLERANCE,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "{} cases={} max_abs_diff={:e} passed={}",
            self.op_name, self.num_cases, self.max_abs_diff, self.passed
        )
    }
}
