use std::collections::BTreeSet;

use proptest::prelude::*;
use trafficgen::scene::{
    build_lattice, build_scene_graph, discretize_color, encode_time, extract_color_clusters, BBox, ColorFeature,
    EntityClass, GraphVariant, LatticeSpec, PaletteColor, SceneEntity,
};

const CLASSES: [EntityClass; 4] = [EntityClass::Bus, EntityClass::Truck, EntityClass::Car, EntityClass::Person];

fn entity_strategy(variant: GraphVariant) -> impl Strategy<Value = SceneEntity> {
    (0usize..4, 0.05f64..0.95, 0.05f64..0.95, 0.02f64..0.3, 0.02f64..0.3, any::<[u8; 3]>()).prop_map(
        move |(c, x, y, w, h, rgb)| {
            SceneEntity::new(
                CLASSES[c],
                BBox::new(x, y, w, h).unwrap(),
                ColorFeature::solid(rgb, variant).unwrap(),
            )
            .unwrap()
        },
    )
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = v.iter().map(|x| x.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

proptest! {
    #[test]
    fn time_encoding_is_on_the_unit_circle(t in 0.0f64..86_400.0) {
        let e = encode_time(t).unwrap();
        prop_assert!((e.sin * e.sin + e.cos * e.cos - 1.0).abs() < 1e-9);
    }

    #[test]
    fn entity_links_match_brute_force(
        entities in prop::collection::vec(entity_strategy(GraphVariant::Discrete), 0..6),
        radius in 1usize..3,
    ) {
        let spec = LatticeSpec::new(8, 6, radius).unwrap();
        let g = build_scene_graph(&entities, encode_time(0.0).unwrap(), spec, GraphVariant::Discrete).unwrap();
        let (sx, sy) = spec.spacing();
        // Radius counts hops along the coarser grid axis.
        let r = radius as f64 * sx.max(sy);
        let lattice = spec.node_count();
        prop_assert_eq!(g.node_count(), lattice + entities.len());
        for (k, e) in entities.iter().enumerate() {
            let [x, y] = e.bbox.center();
            let expected: BTreeSet<usize> = (0..lattice)
                .filter(|&i| {
                    let [gx, gy] = spec.grid_position(i / spec.cols, i % spec.cols);
                    ((gx - x).powi(2) + (gy - y).powi(2)).sqrt() <= r + 1e-12
                })
                .collect();
            let got: BTreeSet<usize> = g.neighbors(lattice + k).into_iter().collect();
            prop_assert_eq!(got, expected);
        }
    }
}

#[test]
fn time_examples() {
    for (t, s, c) in [(0.0, 0.0, 1.0), (21_600.0, 1.0, 0.0), (64_800.0, -1.0, 0.0)] {
        let e = encode_time(t).unwrap();
        assert!((e.sin - s).abs() < 1e-12 && (e.cos - c).abs() < 1e-12, "{t}");
    }
    assert!(encode_time(86_400.0).is_err());
    assert!(encode_time(-1.0).is_err());
}

#[test]
fn cluster_colors_of_solid_and_two_tone_crops() {
    let w0 = softmax(&[1.0, 0.0, 0.0, 0.0, 0.0]);
    let f = extract_color_clusters(&[[255, 0, 0]; 100], 5, 3).unwrap().to_features();
    assert_eq!(&f[..3], &[1.0, 0.0, 0.0]);
    for (i, w) in w0.iter().enumerate() {
        assert!((f[4 * i + 3] - w).abs() < 1e-9);
    }
    assert!(f[4..].chunks(4).all(|c| c[..3] == [0.0; 3]));

    let mut pixels = vec![[255, 255, 255]; 50];
    pixels.extend(vec![[0, 0, 0]; 50]);
    let f = extract_color_clusters(&pixels, 5, 3).unwrap().to_features();
    let half = softmax(&[0.5, 0.5, 0.0, 0.0, 0.0]);
    let centers: BTreeSet<[u64; 3]> = f
        .chunks(4)
        .take(2)
        .map(|c| [c[0] as u64, c[1] as u64, c[2] as u64])
        .collect();
    assert_eq!(centers, BTreeSet::from([[0, 0, 0], [1, 1, 1]]));
    assert!((f[3] - half[0]).abs() < 1e-9 && (f[7] - half[1]).abs() < 1e-9);
    let total: f64 = f.chunks(4).map(|c| c[3]).sum();
    assert!((total - 1.0).abs() < 1e-6);
}

#[test]
fn discrete_palette_choices() {
    for (rgb, want) in [
        ([255, 0, 0], PaletteColor::Red),
        ([128, 128, 128], PaletteColor::Gray),
        ([250, 10, 10], PaletteColor::Red),
        ([0, 250, 5], PaletteColor::Lime),
    ] {
        assert_eq!(discretize_color(&[rgb; 20], 0).unwrap(), ColorFeature::Discrete(want), "{rgb:?}");
    }
    assert!(discretize_color(&[], 0).is_err());
}

#[test]
fn lattice_and_graph_shapes() {
    let g = build_lattice(LatticeSpec::new(20, 20, 1).unwrap(), GraphVariant::Cluster).unwrap();
    assert_eq!(g.node_count(), 400);
    let undirected: BTreeSet<(usize, usize)> = g.edges().iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    assert_eq!(undirected.len(), 2 * 20 * 19);

    let person = SceneEntity::new(
        EntityClass::Person,
        BBox::new(0.4, 0.6, 0.05, 0.1).unwrap(),
        ColorFeature::Discrete(PaletteColor::Blue),
    )
    .unwrap();
    let g = build_scene_graph(&[person.clone()], encode_time(3_600.0).unwrap(), LatticeSpec::default(), GraphVariant::Discrete)
        .unwrap();
    assert_eq!(g.feature_width(), 19);
    assert!(g.kinds()[..400].iter().all(|k| *k == EntityClass::Grid));
    assert_eq!(g.kinds()[400], EntityClass::Person);

    assert!(
        build_scene_graph(&[person], encode_time(0.0).unwrap(), LatticeSpec::default(), GraphVariant::Cluster).is_err()
    );
}
