mod common;

use common::gradient_check;
use dapnet::backbone::BackboneConfig;
use dapnet::model::{Fusion, NetConfig};
use dapnet::pruning::PruningConfig;

fn narrow(fusion: Fusion) -> NetConfig {
    NetConfig {
        backbone: BackboneConfig {
            c1: 8,
            c2: 8,
            c3: 8,
            ..BackboneConfig::toy()
        },
        c_agg: 8,
        d4: 16,
        d5: 16,
        fusion,
        fc_relu: true,
    }
}

fn assert_close(cfg: &NetConfig, pruning: PruningConfig, seed: u64) {
    let report = gradient_check(cfg, pruning, 6, 1e-5, seed);
    for (name, err, _) in &report.per_tensor {
        assert!(*err < 1e-3, "{name}: relative error {err:e}");
    }
}

#[test]
fn narrow_dense_network_without_pruning() {
    assert_close(&narrow(Fusion::Dense), PruningConfig::disabled(), 1);
}

#[test]
fn narrow_dense_network_with_fixed_pruning() {
    assert_close(&narrow(Fusion::Dense), PruningConfig::new(0.5).unwrap(), 2);
}

#[test]
fn concatenated_conv3_network() {
    assert_close(&narrow(Fusion::ConcatConv3), PruningConfig::new(0.75).unwrap(), 3);
}

#[test]
fn linear_fc_head() {
    let cfg = NetConfig {
        fc_relu: false,
        ..narrow(Fusion::Dense)
    };
    assert_close(&cfg, PruningConfig::disabled(), 4);
}
