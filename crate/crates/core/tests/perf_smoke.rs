//! Ignored-by-default timing probe for a desk-scale iteration.

use std::time::Instant;

use spil_core::trainer::{train, TrainConfig};

#[test]
#[ignore]
fn time_desk_scale_iterations() {
    let config = TrainConfig {
        trajectory_count: 512,
        horizon: 40,
        eval_trajectory_count: 512,
        max_iterations: 10,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = train(&config).unwrap();
    let elapsed = start.elapsed();
    println!(
        "10 iterations in {:.2?} ({:.0} ms/iter), final p_s = {:.3}",
        elapsed,
        elapsed.as_millis() as f64 / out.log.rows.len() as f64,
        out.log.rows.last().unwrap().p_s
    );
}
