//! Analytic gradients against central finite differences, parameter by
//! parameter. The acceptance suite repeats this across ten seeds; two seeds
//! here keep the integration cycle quick while still covering every layer
//! type.

use asc_core::model::{init_weights, HeadFusion};
use asc_core::rng::RngStream;
use asc_testkit::fixtures::{random_feature, tiny_model};
use asc_testkit::gradcheck::sweep_all_parameters;

fn run_seed(cfg: &asc_core::model::ModelConfig, seed: u64) {
    let weights = init_weights(cfg, seed).unwrap();
    let mut rng = RngStream::new(seed ^ 0xfeed);
    let feat = random_feature(cfg, &mut rng);
    let label = rng.below(cfg.n_classes);
    let report = sweep_all_parameters(cfg, &weights, &feat, label, 1e-5);
    assert!(
        report.worst_ratio <= 1.0,
        "seed {seed}: worst violation {:.3} at {}",
        report.worst_ratio,
        report.worst_at
    );
    assert!(
        report.kink_skipped * 100 <= report.total,
        "seed {seed}: {}/{} coordinates sat on kinks",
        report.kink_skipped,
        report.total
    );
}

#[test]
fn every_parameter_matches_finite_differences() {
    let cfg = tiny_model();
    for seed in [11u64, 23] {
        run_seed(&cfg, seed);
    }
}

#[test]
fn concat_fusion_gradients_also_match() {
    let mut cfg = tiny_model();
    cfg.head_fusion = HeadFusion::Concat;
    run_seed(&cfg, 7);
}

#[test]
fn multiplier_and_wide_kernel_gradients_match() {
    let mut cfg = tiny_model();
    cfg.block_specs[0].dw_multiplier = 2;
    cfg.block_specs[0].time_kernel = 5;
    cfg.block_specs[1].in_channels = 16;
    cfg.block_specs[1].freq_stride = 1;
    cfg.validate().unwrap();
    run_seed(&cfg, 3);
}
