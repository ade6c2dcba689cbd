//! Procedural junction frames for tests, examples and smoke training.
//!
//! A frame is a time-of-day tinted background with a road cross, plus solid boxes
//! in class-typical sizes and palette colors. Detections are exact, so the data points
//! go through the same path as real frames.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_datapoint_with, DataPoint, RawDetection};
use crate::error::Result;
use crate::scene::{EntityClass, GraphVariant, LatticeSpec, PaletteColor, SECONDS_PER_DAY};

/// A rendered frame with its ground-truth detections.
#[derive(Clone, Debug)]
pub struct SyntheticFrame {
    pub image: RgbImage,
    pub detections: Vec<RawDetection>,
    pub timestamp: f64,
}

/// Daylight factor in `[0, 1]`: 0 at midnight, 1 at noon.
pub fn daylight(seconds: f64) -> f64 {
    0.5 - 0.5 * (std::f64::consts::TAU * seconds / SECONDS_PER_DAY).cos()
}

fn shade(rgb: [u8; 3], light: f64) -> Rgb<u8> {
    Rgb(rgb.map(|c| (c as f64 * (0.25 + 0.75 * light)).round().clamp(0.0, 255.0) as u8))
}

fn typical_size(class: EntityClass) -> (f64, f64) {
    match class {
        EntityClass::Bus => (0.22, 0.14),
        EntityClass::Truck => (0.18, 0.12),
        EntityClass::Car => (0.11, 0.07),
        EntityClass::Person => (0.03, 0.07),
        EntityClass::Grid => (0.0, 0.0),
    }
}

/// Renders one frame of side `size` with up to `max_entities` objects.
pub fn render_frame(seed: u64, size: u32, max_entities: usize) -> SyntheticFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let timestamp = rng.random_range(0..86_400u32) as f64;
    let light = daylight(timestamp);
    let mut image = RgbImage::from_pixel(size, size, shade([70, 110, 60], light));
    let road = shade([110, 110, 115], light);
    let band = size / 4;
    for y in 0..size {
        for x in 0..size {
            let in_h = y.abs_diff(size / 2) < band / 2;
            let in_v = x.abs_diff(size / 2) < band / 2;
            if in_h || in_v {
                image.put_pixel(x, y, road);
            }
        }
    }
    let count = rng.random_range(0..=max_entities);
    let mut detections = Vec::with_capacity(count);
    for _ in 0..count {
        let class = match rng.random_range(0..10) {
            0 => EntityClass::Bus,
            1 | 2 => EntityClass::Truck,
            3..=7 => EntityClass::Car,
            _ => EntityClass::Person,
        };
        let (tw, th) = typical_size(class);
        let w = tw * rng.random_range(0.8..1.2);
        let h = th * rng.random_range(0.8..1.2);
        let x = rng.random_range(w / 2.0..1.0 - w / 2.0);
        let y = rng.random_range(h / 2.0..1.0 - h / 2.0);
        let color = PaletteColor::ALL[rng.random_range(0..PaletteColor::ALL.len())];
        let raw = RawDetection { class, x, y, w, h };
        let Ok(bbox) = raw.bbox() else { continue };
        let rect = bbox.pixel_rect(size as usize, size as usize);
        let fill = shade(color.rgb(), light);
        for py in rect.y0..rect.y1 {
            for px in rect.x0..rect.x1 {
                image.put_pixel(px as u32, py as u32, fill);
            }
        }
        if !rect.is_empty() {
            detections.push(raw);
        }
    }
    SyntheticFrame {
        image,
        detections,
        timestamp,
    }
}

/// `count` data points; point `i` is rendered from seed `seed + i`.
pub fn synthetic_dataset(
    count: usize,
    seed: u64,
    size: u32,
    spec: LatticeSpec,
    variant: GraphVariant,
) -> Result<Vec<DataPoint>> {
    (0..count as u64)
        .map(|i| {
            let frame = render_frame(seed.wrapping_add(i), size, 6);
            let raw = frame.detections;
            let detector = move |_: &RgbImage| Ok(raw.clone());
            build_datapoint_with(&detector, frame.image, frame.timestamp, spec, variant, seed)
        })
        .collect()
}
