use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use trafficgen::dataset::SegmentationMap;
use trafficgen::eval::{compute_fid, compute_miou, compute_pixel_accuracy, scored_classes};
use trafficgen::scene::{BBox, ColorFeature, EntityClass, GraphVariant, PaletteColor};
use trafficgen::sumo::{
    group_frames, map_lane_position, sim_frame_to_scene, BBoxHistogram, BinSource, CubicSpline, Lane,
    LaneCorrespondence, SimColor, SizeDraw, VehicleState, WaypointPair,
};

fn wp(sim_offset: f64, image_arclength: f64) -> WaypointPair {
    WaypointPair {
        sim_offset,
        image_arclength,
    }
}

fn straight_lane() -> LaneCorrespondence {
    let lane = Lane::new(
        &[[0.1, 0.2], [0.3, 0.2], [0.6, 0.2], [0.9, 0.2]],
        vec![wp(0.0, 0.0), wp(40.0, 0.5), wp(60.0, 1.0)],
    )
    .unwrap();
    LaneCorrespondence {
        lanes: BTreeMap::from([("east_0".to_string(), lane)]),
    }
}

#[test]
fn spline_examples() {
    let s = CubicSpline::fit(&[[0.0, 0.0], [0.1, 0.2], [0.2, 0.4], [0.4, 0.8]]).unwrap();
    assert_abs_diff_eq!(s.length(), (0.4f64.powi(2) + 0.8f64.powi(2)).sqrt(), epsilon = 1e-6);

    let pts: Vec<[f64; 2]> = (0..8)
        .map(|i| {
            let a = std::f64::consts::FRAC_PI_2 * i as f64 / 7.0;
            [a.cos(), a.sin()]
        })
        .collect();
    let arc = CubicSpline::fit(&pts).unwrap();
    assert!((arc.length() / std::f64::consts::FRAC_PI_2 - 1.0).abs() < 0.01);
    for (i, p) in pts.iter().enumerate() {
        let q = arc.point(arc.knots()[i]);
        assert_abs_diff_eq!(q[0], p[0], epsilon = 1e-12);
        assert_abs_diff_eq!(q[1], p[1], epsilon = 1e-12);
    }
    assert!(CubicSpline::fit(&pts[..3]).is_err());
}

#[test]
fn lane_mapping_examples() {
    let corr = straight_lane();
    let at = |o: f64| map_lane_position(&corr, "east_0", o).unwrap();
    // Arclength 0.5 of a 0.8-long segment starting at x = 0.1.
    assert_abs_diff_eq!(at(40.0)[0], 0.5, epsilon = 1e-9);
    assert_abs_diff_eq!(at(20.0)[0], 0.3, epsilon = 1e-6);
    assert_abs_diff_eq!(at(50.0)[0], 0.7, epsilon = 1e-6);
    assert_eq!(at(500.0), at(60.0));
    assert_eq!(at(-3.0), at(0.0));
    assert!(map_lane_position(&corr, "west_1", 1.0).is_err());
}

#[test]
fn histogram_examples() {
    let mut hist = BBoxHistogram::new(2).unwrap();
    let car = BBox::new(0.2, 0.2, 0.1, 0.05).unwrap();
    for _ in 0..5 {
        hist.add(EntityClass::Car, &car).unwrap();
    }
    // Lower-left quadrant is empty; its neighbors hold the cars.
    let b = hist.sample_bbox([0.2, 0.8], EntityClass::Car, SizeDraw::Median).unwrap();
    assert_eq!((b.w, b.h), (0.1, 0.05));
    assert_eq!(hist.samples([0.2, 0.8], EntityClass::Car).unwrap().1, BinSource::Neighbors);
    let a = hist.sample_bbox([0.3, 0.3], EntityClass::Car, SizeDraw::Seeded(4)).unwrap();
    assert_eq!(a, hist.sample_bbox([0.3, 0.3], EntityClass::Car, SizeDraw::Seeded(4)).unwrap());
    assert!(hist.sample_bbox([0.3, 0.3], EntityClass::Bus, SizeDraw::Median).is_err());
}

#[test]
fn frames_convert_with_per_vehicle_errors() {
    let corr = straight_lane();
    let hist = BBoxHistogram::fit([(EntityClass::Car, &BBox::new(0.5, 0.5, 0.08, 0.06).unwrap())], 1).unwrap();
    let state = |lane: &str, offset: f64, time: f64| VehicleState {
        id: None,
        lane_id: lane.into(),
        offset,
        class: EntityClass::Car,
        color: SimColor::Named(PaletteColor::Lime),
        time,
    };
    let frames = group_frames(vec![
        state("east_0", 40.0, 10.0),
        state("east_9", 1.0, 10.0),
        state("east_0", 0.0, 5.0),
    ]);
    assert_eq!(frames.len(), 2);
    let first = sim_frame_to_scene(&frames[0], &corr, &hist, GraphVariant::Discrete, SizeDraw::Median).unwrap();
    assert_eq!(first.entities.len(), 1);
    assert_abs_diff_eq!(first.entities[0].bbox.x, 0.1, epsilon = 1e-9);
    let second = sim_frame_to_scene(&frames[1], &corr, &hist, GraphVariant::Discrete, SizeDraw::Median).unwrap();
    assert_eq!(second.entities.len(), 1);
    assert_eq!(second.entities[0].color, ColorFeature::Discrete(PaletteColor::Lime));
    assert_abs_diff_eq!(second.entities[0].bbox.x, 0.5, epsilon = 1e-9);
    assert_eq!(second.errors.len(), 1);
    assert_eq!(second.errors[0].index, 1);
}

fn gaussian(seed: u64, n: usize, mean: &[f64]) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| mean.iter().map(|m| m + unit.sample(&mut rng)).collect()).collect()
}

#[test]
fn fid_identities() {
    let a = gaussian(1, 400, &[0.0; 4]);
    let b = gaussian(2, 400, &[1.0, -0.5, 0.0, 2.0]);
    assert!(compute_fid(&a, &a).unwrap().value.abs() < 1e-6);
    let ab = compute_fid(&a, &b).unwrap().value;
    assert_abs_diff_eq!(ab, compute_fid(&b, &a).unwrap().value, epsilon = 1e-6);
    // Analytic value for equal covariances is the squared mean gap.
    assert!((ab - 5.25).abs() < 0.5, "{ab}");
    assert!(compute_fid(&a, &gaussian(3, 10, &[0.0; 3])).is_err());
}

#[test]
fn metric_fixtures() {
    let map = |f: &dyn Fn(usize) -> u8| SegmentationMap::from_labels(4, 4, (0..16).map(f).collect()).unwrap();
    let truth = map(&|i| if i % 4 < 2 { 3 } else { 4 });
    let classes = scored_classes(true);
    assert!(!classes.contains(&EntityClass::Bus));

    let perfect = compute_miou(&[truth.clone()], &[truth.clone()], &classes).unwrap();
    assert_eq!(perfect[&EntityClass::Car], Some(1.0));
    assert_eq!(perfect[&EntityClass::Truck], None);

    let background = map(&|_| 0);
    let acc = compute_pixel_accuracy(&[background.clone()], &[truth.clone()], &classes).unwrap();
    assert_eq!(acc[&EntityClass::Car], Some(0.0));
    assert_eq!(acc[&EntityClass::Person], Some(0.0));

    let swapped = map(&|i| if i % 4 < 2 { 4 } else { 3 });
    assert_eq!(compute_miou(&[swapped], &[truth], &classes).unwrap()[&EntityClass::Car], Some(0.0));
}
