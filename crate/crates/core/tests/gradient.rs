//! Analytic gradient against central finite differences of an independent
//! risk oracle.

#[path = "support/oracle.rs"]
mod oracle;

use oracle::gradient_check;
use sparsegnn::NormMode;

fn check(dim: usize, k: usize, samples: usize, norm: NormMode, sample: bool, seed: u64) {
    let c = gradient_check(dim, k, samples, norm, sample, seed, 100);
    assert!(c.max_risk_gap < 1e-12, "{c:?}");
    assert!(c.max_rel_err <= 1e-5, "{c:?}");
}

#[test]
fn small_instances_over_surviving() {
    check(5, 3, 4, NormMode::OverSurviving, false, 1);
}

#[test]
fn small_instances_over_k() {
    check(5, 3, 4, NormMode::OverK, false, 2);
}

#[test]
fn masked_neuron_and_sampled_neighborhoods() {
    check(4, 6, 6, NormMode::OverSurviving, true, 3);
}
