//! Scores an untrained toy model against procedural test frames.
//!
//! cargo run --example evaluate_metrics

use trafficgen::config::ModelConfig;
use trafficgen::dataset::synthetic::synthetic_dataset;
use trafficgen::eval::{evaluate_model, EvalOptions, PrototypeSegmenter, RandomProjection};
use trafficgen::scene::GraphVariant;
use trafficgen::spade::TrafficModel;

fn main() -> trafficgen::Result<()> {
    let config = ModelConfig::toy(GraphVariant::Discrete);
    let train = synthetic_dataset(16, 0, 64, config.lattice, config.variant)?;
    let test = synthetic_dataset(10, 1_000, 64, config.lattice, config.variant)?;

    let extractor = RandomProjection::new(0, 32, 64)?;
    let segmenter = PrototypeSegmenter::fit(&train)?;
    let model = TrafficModel::new(&config, 0)?;
    let report = evaluate_model(&model, &test, &extractor, &segmenter, &EvalOptions::default())?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    // Upper bound for the segmenter: score the real test images themselves.
    let real = test.iter().map(|p| p.segmap.clone()).collect::<Vec<_>>();
    let pred = test
        .iter()
        .map(|p| trafficgen::eval::Segmenter::segment(&segmenter, &p.image))
        .collect::<trafficgen::Result<Vec<_>>>()?;
    let classes = trafficgen::eval::scored_classes(true);
    let miou = trafficgen::eval::compute_miou(&pred, &real, &classes)?;
    println!("segmenter on real frames: mean IoU {:?}", trafficgen::eval::mean_score(&miou));
    Ok(())
}
