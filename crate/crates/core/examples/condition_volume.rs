//! Runs the graph-attention condition model on one scene and reports tensor shapes.
//!
//! cargo run --example condition_volume

use trafficgen::config::ModelConfig;
use trafficgen::scene::{build_scene_graph, encode_time, BBox, ColorFeature, EntityClass, GraphVariant, SceneEntity};
use trafficgen::spade::TrafficModel;

fn main() -> trafficgen::Result<()> {
    let config = ModelConfig::toy(GraphVariant::Cluster);
    let model = TrafficModel::new(&config, 0)?;
    let car = SceneEntity::new(
        EntityClass::Car,
        BBox::new(0.4, 0.6, 0.2, 0.1)?,
        ColorFeature::solid([30, 60, 200], GraphVariant::Cluster)?,
    )?;
    let graph = build_scene_graph(&[car], encode_time(30_000.0)?, config.lattice, config.variant)?;

    let cond = model.condition.forward(&[&graph])?;
    println!("graph: {} nodes, {} edges", graph.node_count(), graph.edges().len());
    for (i, layer) in config.gat.widths.iter().enumerate() {
        println!("  attention layer {i}: width {layer} x {} heads", config.gat.heads[i]);
    }
    println!("latent image  {:?}", cond.latent.dims());
    println!("volume ω      {:?}", cond.volume.dims());

    let summary = trafficgen::spade::model_summary(&config)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
