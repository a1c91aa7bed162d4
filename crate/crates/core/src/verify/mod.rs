//! Oracle-backed property suites.
//!
//! Every suite pits a production component against an independent reference
//! from [`oracle`] on seeded random inputs. [`Mutation`] switches on a known
//! defect so that a suite's ability to fail can itself be checked.

pub mod oracle;
mod suites;

pub use suites::{
    run_suite, run_suites, scan_doubling_ratio, Mutation, Suite, SuiteReport, VerifyOptions, GATE_TRIALS,
    GRADIENT_EPS, GRADIENT_SEEDS, GRADIENT_TOLERANCE, MATCHING_TRIALS, MEMORY_STEPS_PER_POLICY, POOL_TRIALS,
    SCAN_TRIALS,
};
