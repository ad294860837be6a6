use std::collections::BTreeMap;
use std::time::Instant;

use sdcs_core::tensor::gradcheck::suite;

#[test]
fn every_layer_passes_the_gradient_check() {
    let start = Instant::now();
    let checks = suite(2024, 20).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut per_layer: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for c in &checks {
        let e = per_layer.entry(c.layer).or_default();
        e.0 += 1;
        e.1 = e.1.max(c.max_rel_error);
    }
    for (layer, (count, worst)) in &per_layer {
        assert!(*count >= 20, "{layer}: {count} shapes");
        assert!(*worst <= 1e-3, "{layer}: relative error {worst}");
    }
    assert!(per_layer.len() >= 9, "{per_layer:?}");
    assert!(elapsed <= 60.0, "{elapsed} s");
}
