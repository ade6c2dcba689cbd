//! Maps simulator vehicle states onto image-space scene entities.
//!
//! cargo run --example sumo_bridge

use std::collections::BTreeMap;

use trafficgen::scene::{BBox, EntityClass, GraphVariant, PaletteColor};
use trafficgen::sumo::{
    group_frames, sim_frame_to_scene, BBoxHistogram, Lane, LaneCorrespondence, SimColor, SizeDraw, VehicleState,
    WaypointPair,
};

fn main() -> trafficgen::Result<()> {
    let waypoints = |pairs: &[(f64, f64)]| {
        pairs
            .iter()
            .map(|&(sim_offset, image_arclength)| WaypointPair {
                sim_offset,
                image_arclength,
            })
            .collect::<Vec<_>>()
    };
    // One straight approach and one lane curving to the right.
    let lanes = BTreeMap::from([
        (
            "north_in_0".to_string(),
            Lane::new(
                &[[0.45, 0.05], [0.45, 0.3], [0.46, 0.6], [0.47, 0.95]],
                waypoints(&[(0.0, 0.0), (50.0, 0.4), (120.0, 1.0)]),
            )?,
        ),
        (
            "west_turn_0".to_string(),
            Lane::new(
                &[[0.05, 0.55], [0.3, 0.56], [0.5, 0.65], [0.6, 0.9]],
                waypoints(&[(0.0, 0.0), (80.0, 1.0)]),
            )?,
        ),
    ]);
    let corr = LaneCorrespondence { lanes };

    let mut hist = BBoxHistogram::new(4)?;
    for (class, w, h) in [(EntityClass::Car, 0.09, 0.06), (EntityClass::Car, 0.11, 0.07), (EntityClass::Bus, 0.2, 0.12)] {
        hist.add(class, &BBox::new(0.5, 0.5, w, h)?)?;
    }

    let v = |lane: &str, offset: f64, class, color, time| VehicleState {
        id: None,
        lane_id: lane.into(),
        offset,
        class,
        color,
        time,
    };
    let states = vec![
        v("north_in_0", 20.0, EntityClass::Car, SimColor::Named(PaletteColor::Red), 45_000.0),
        v("west_turn_0", 60.0, EntityClass::Bus, SimColor::Rgb([240, 220, 20]), 45_000.0),
        v("north_in_0", 25.0, EntityClass::Car, SimColor::Named(PaletteColor::Red), 45_001.0),
        v("south_in_3", 5.0, EntityClass::Car, SimColor::Named(PaletteColor::White), 45_001.0),
    ];
    for frame in group_frames(states) {
        let scene = sim_frame_to_scene(&frame, &corr, &hist, GraphVariant::Discrete, SizeDraw::Median)?;
        println!("t = {}s", frame.time);
        for e in &scene.entities {
            let b = e.bbox;
            println!(
                "  {:<5} at ({:.3}, {:.3}) size {:.3} x {:.3}",
                e.entity_class.name(),
                b.x,
                b.y,
                b.w,
                b.h
            );
        }
        for err in &scene.errors {
            println!("  vehicle {} skipped: {}", err.index, err.message);
        }
    }
    Ok(())
}
