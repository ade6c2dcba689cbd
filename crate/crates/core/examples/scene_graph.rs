//! Builds the lattice-plus-entity graph for a small scene and prints its structure.
//!
//! cargo run --example scene_graph

use trafficgen::scene::{
    build_scene_graph, encode_time, parse_clock_time, BBox, ColorFeature, EntityClass, GraphVariant, LatticeSpec,
    PaletteColor, SceneEntity,
};

fn main() -> trafficgen::Result<()> {
    let scene = [
        (EntityClass::Car, BBox::new(0.30, 0.55, 0.12, 0.08)?, PaletteColor::Red),
        (EntityClass::Bus, BBox::new(0.65, 0.40, 0.25, 0.15)?, PaletteColor::Yellow),
        (EntityClass::Person, BBox::new(0.10, 0.80, 0.03, 0.08)?, PaletteColor::Black),
    ];
    let entities = scene
        .into_iter()
        .map(|(c, b, p)| SceneEntity::new(c, b, ColorFeature::Discrete(p)))
        .collect::<trafficgen::Result<Vec<_>>>()?;

    let time = encode_time(parse_clock_time("17:45")?)?;
    let spec = LatticeSpec::default();
    let graph = build_scene_graph(&entities, time, spec, GraphVariant::Discrete)?;

    println!(
        "{}x{} lattice, {} entities, {} nodes, {} directed edges, feature width {}",
        spec.rows,
        spec.cols,
        graph.entity_count(),
        graph.node_count(),
        graph.edges().len(),
        graph.feature_width()
    );
    println!("time encoding: sin {:.4} cos {:.4}", time.sin, time.cos);
    let lattice = spec.node_count();
    for (k, e) in entities.iter().enumerate() {
        let node = lattice + k;
        let links = graph.neighbors(node);
        let cells: Vec<String> = links.iter().map(|i| format!("({},{})", i / spec.cols, i % spec.cols)).collect();
        println!("{:<6} node {node}: linked to grid {}", e.entity_class.name(), cells.join(" "));
        println!("       features {:?}", graph.node_features(node));
    }
    Ok(())
}
