use std::fs;

use image::{Rgb, RgbImage};
use serde_json::Value;
use trafficgen::dataset::synthetic::synthetic_dataset;
use trafficgen::dataset::{
    build_datapoint, open_dataset, rasterize_segmentation_map, read_dataset, write_dataset, Detection, Split,
    SplitRatio,
};
use trafficgen::scene::{BBox, ColorFeature, EntityClass, GraphVariant, LatticeSpec, PaletteColor};

fn detection(class: EntityClass, bbox: BBox, order_index: usize) -> Detection {
    Detection {
        entity_class: class,
        bbox,
        order_index,
        crop_pixels: Vec::new(),
    }
}

#[test]
fn rasterization_examples() {
    let empty = rasterize_segmentation_map(&[], 12, 16).unwrap();
    assert!(empty.labels().iter().all(|&v| v == 0));

    let left = BBox::new(0.25, 0.5, 0.5, 1.0).unwrap();
    let map = rasterize_segmentation_map(&[detection(EntityClass::Car, left, 0)], 12, 16).unwrap();
    assert_eq!(map.labels().iter().filter(|&&v| v == 3).count(), 12 * 16 / 2);
    assert!((0..12).all(|r| map.get(r, 7) == 3 && map.get(r, 8) == 0));

    let b = BBox::new(0.5, 0.5, 0.4, 0.4).unwrap();
    // Order index decides, not slice order.
    let dets = [detection(EntityClass::Truck, b, 1), detection(EntityClass::Car, b, 0)];
    let map = rasterize_segmentation_map(&dets, 10, 10).unwrap();
    assert_eq!(map.get(5, 5), 2);
    assert!(!map.labels().contains(&3));

    let dup = [detection(EntityClass::Truck, b, 0), detection(EntityClass::Car, b, 0)];
    assert!(rasterize_segmentation_map(&dup, 10, 10).is_err());
}

#[test]
fn red_car_becomes_a_red_node() {
    let mut image = RgbImage::from_pixel(32, 32, Rgb([90, 90, 90]));
    let bbox = BBox::new(0.5, 0.5, 0.25, 0.25).unwrap();
    let rect = bbox.pixel_rect(32, 32);
    let mut crop = Vec::new();
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            image.put_pixel(x as u32, y as u32, Rgb([240, 12, 8]));
            crop.push([240, 12, 8]);
        }
    }
    let det = Detection {
        entity_class: EntityClass::Car,
        bbox,
        order_index: 0,
        crop_pixels: crop,
    };
    let spec = LatticeSpec::new(4, 4, 1).unwrap();
    let p = build_datapoint(image.clone(), &[det.clone()], 43_200.0, spec, GraphVariant::Discrete, 0).unwrap();
    assert_eq!(p.graph.entity_count(), 1);
    let color = &p.graph.node_features(16)[11..];
    assert_eq!(color, ColorFeature::Discrete(PaletteColor::Red).to_features().as_slice());
    assert_eq!(p.segmap.get(16, 16), 3);

    let p = build_datapoint(image.clone(), &[det.clone()], 43_200.0, spec, GraphVariant::Cluster, 0).unwrap();
    assert_eq!(p.graph.feature_width(), 31);

    let truncated = Detection {
        crop_pixels: det.crop_pixels[1..].to_vec(),
        ..det
    };
    assert!(build_datapoint(image, &[truncated], 0.0, spec, GraphVariant::Discrete, 0).is_err());
}

#[test]
fn round_trip_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = LatticeSpec::new(4, 4, 1).unwrap();
    let points = synthetic_dataset(3, 11, 64, spec, GraphVariant::Cluster).unwrap();
    let manifest = write_dataset(points.clone(), tmp.path(), SplitRatio::default()).unwrap();
    assert_eq!(manifest.count, 3);
    assert_eq!(manifest.split_ratio, SplitRatio { train: 10_322, test: 630 });
    let back = read_dataset(tmp.path()).unwrap();
    assert_eq!(back, points);
}

#[test]
fn split_assignment_follows_ratio() {
    let r = SplitRatio::default();
    let total = 10_322 + 630;
    let tests = (0..total).filter(|&i| r.assign(i) == Split::Test).count();
    assert_eq!(tests, 630);
}

#[test]
fn manifest_count_mismatch_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = LatticeSpec::new(4, 4, 1).unwrap();
    write_dataset(synthetic_dataset(2, 0, 32, spec, GraphVariant::Discrete).unwrap(), tmp.path(), SplitRatio::default())
        .unwrap();
    let path = tmp.path().join("manifest.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    v["count"] = 5.into();
    fs::write(&path, v.to_string()).unwrap();
    let err = open_dataset(tmp.path()).err().expect("count mismatch accepted").to_string();
    assert!(err.contains("manifest.json"), "{err}");

    fs::remove_file(&path).unwrap();
    assert!(open_dataset(tmp.path()).is_err());
}
