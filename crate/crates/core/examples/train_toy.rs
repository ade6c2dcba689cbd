//! Trains the desk-scale model on procedural frames and writes a checkpoint.
//!
//! cargo run --example train_toy -- [steps] [out_dir]

use std::time::Instant;

use trafficgen::config::{ModelConfig, TrainConfig};
use trafficgen::dataset::synthetic::synthetic_dataset;
use trafficgen::scene::GraphVariant;
use trafficgen::spade::{save_checkpoint, TrainState, TrainingBatch};

fn main() -> trafficgen::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let out = args.next().unwrap_or_else(|| "target/toy-checkpoint".into());

    let config = ModelConfig::toy(GraphVariant::Cluster);
    let train = TrainConfig {
        batch_size: 2,
        ..TrainConfig::default()
    };
    let points = synthetic_dataset(20, 0, 64, config.lattice, config.variant)?;
    let mut state = TrainState::new(&config, &train)?;

    let start = Instant::now();
    for step in 0..steps {
        let i = (2 * step as usize) % points.len();
        let batch = TrainingBatch::new(&[&points[i], &points[(i + 1) % points.len()]], &config)?;
        let report = state.train_step(&batch)?;
        if step % 10 == 0 || step + 1 == steps {
            println!(
                "step {:4}  d {:.4}  g {:.4}  fm {:.4}  |grad gat| {:.3e}  {:.1}s",
                report.step,
                report.d_loss,
                report.g_loss,
                report.g_feature_matching,
                report.condition_grad_norm,
                start.elapsed().as_secs_f64()
            );
        }
    }
    save_checkpoint(&state, std::path::Path::new(&out))?;
    println!("checkpoint written to {out}");
    Ok(())
}
