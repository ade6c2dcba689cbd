//! Training triples: segmentation map, scene graph and real image.

mod store;
pub mod synthetic;

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_domain, Error, Result};
use crate::scene::{
    build_scene_graph, discretize_color, encode_time, extract_color_clusters, BBox, ColorFeature,
    EntityClass, GraphVariant, LatticeSpec, SceneEntity, SceneGraph,
};

pub use store::{open_dataset, read_dataset, write_dataset, Dataset, Manifest, ManifestEntry, Split, SplitRatio};

/// Number of segmentation labels: background plus four entity classes.
pub const LABEL_COUNT: usize = 5;
/// Default frame resolution of the training data.
pub const DEFAULT_RESOLUTION: u32 = 640;

/// One entry of a detection file: class and normalized center/size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDetection {
    pub class: EntityClass,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl RawDetection {
    pub fn bbox(&self) -> Result<BBox> {
        BBox::new(self.x, self.y, self.w, self.h)
    }
}

/// Anything that turns a frame into detections, in emission order.
pub trait Detector {
    fn detect(&self, image: &RgbImage) -> Result<Vec<RawDetection>>;
}

impl<F> Detector for F
where
    F: Fn(&RgbImage) -> Result<Vec<RawDetection>>,
{
    fn detect(&self, image: &RgbImage) -> Result<Vec<RawDetection>> {
        self(image)
    }
}

/// Reads a detection file: a JSON list of `{class, x, y, w, h}` in emission order.
pub fn read_detection_file(path: &Path) -> Result<Vec<RawDetection>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dets: Vec<RawDetection> =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    for (i, d) in dets.iter().enumerate() {
        d.bbox()
            .map_err(|e| Error::format(path, format!("detection {i}: {e}")))?;
        if d.class == EntityClass::Grid {
            return Err(Error::format(path, format!("detection {i} has class grid")));
        }
    }
    Ok(dets)
}

/// A detected object together with the pixels under its box.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub entity_class: EntityClass,
    pub bbox: BBox,
    pub order_index: usize,
    pub crop_pixels: Vec<[u8; 3]>,
}

impl Detection {
    /// Cuts the crop for `raw` out of `image`.
    pub fn from_image(image: &RgbImage, raw: &RawDetection, order_index: usize) -> Result<Self> {
        ensure_domain!(raw.class != EntityClass::Grid, "detections cannot have class grid");
        let bbox = raw.bbox()?;
        let crop_pixels = crop(image, &bbox)?;
        Ok(Self {
            entity_class: raw.class,
            bbox,
            order_index,
            crop_pixels,
        })
    }
}

fn crop(image: &RgbImage, bbox: &BBox) -> Result<Vec<[u8; 3]>> {
    let (w, h) = image.dimensions();
    let rect = bbox.pixel_rect(h as usize, w as usize);
    ensure_domain!(
        !rect.is_empty(),
        "bbox {:?} covers no pixel of the {w}x{h} image",
        bbox.as_array()
    );
    let mut out = Vec::with_capacity(rect.area());
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            out.push(image.get_pixel(x as u32, y as u32).0);
        }
    }
    Ok(out)
}

/// Per-pixel class labels: 0 background, 1 bus, 2 truck, 3 car, 4 person.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl SegmentationMap {
    pub fn background(height: usize, width: usize) -> Result<Self> {
        ensure_domain!(height > 0 && width > 0, "segmentation map must be non-empty");
        Ok(Self {
            height,
            width,
            labels: vec![0; height * width],
        })
    }

    pub fn from_labels(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        ensure_domain!(height > 0 && width > 0, "segmentation map must be non-empty");
        ensure_domain!(
            labels.len() == height * width,
            "expected {} labels, got {}",
            height * width,
            labels.len()
        );
        ensure_domain!(
            labels.iter().all(|l| (*l as usize) < LABEL_COUNT),
            "labels must lie in [0, 4]"
        );
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    /// Channel-major one-hot encoding, `5 × height × width`.
    pub fn one_hot(&self) -> Vec<f32> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; LABEL_COUNT * plane];
        for (i, l) in self.labels.iter().enumerate() {
            out[*l as usize * plane + i] = 1.0;
        }
        out
    }

    fn paint(&mut self, class: EntityClass, bbox: &BBox) {
        let Some(label) = class.label() else { return };
        let rect = bbox.pixel_rect(self.height, self.width);
        for y in rect.y0..rect.y1 {
            self.labels[y * self.width + rect.x0..y * self.width + rect.x1].fill(label);
        }
    }
}

/// Paints boxes in the given order; later boxes overwrite earlier ones.
pub fn rasterize_boxes<'a>(
    boxes: impl IntoIterator<Item = (EntityClass, &'a BBox)>,
    height: usize,
    width: usize,
) -> Result<SegmentationMap> {
    let mut map = SegmentationMap::background(height, width)?;
    for (class, bbox) in boxes {
        map.paint(class, bbox);
    }
    Ok(map)
}

/// Rasterizes detections in ascending `order_index`, so the latest detection wins overlaps.
pub fn rasterize_segmentation_map(
    detections: &[Detection],
    height: usize,
    width: usize,
) -> Result<SegmentationMap> {
    let ordered = ordered(detections)?;
    rasterize_boxes(ordered.iter().map(|d| (d.entity_class, &d.bbox)), height, width)
}

fn ordered(detections: &[Detection]) -> Result<Vec<&Detection>> {
    let mut ordered: Vec<&Detection> = detections.iter().collect();
    ordered.sort_by_key(|d| d.order_index);
    for pair in ordered.windows(2) {
        ensure_domain!(
            pair[0].order_index != pair[1].order_index,
            "order_index {} appears twice",
            pair[0].order_index
        );
    }
    Ok(ordered)
}

/// One training triple plus its capture time.
#[derive(Clone, Debug, PartialEq)]
pub struct DataPoint {
    pub segmap: SegmentationMap,
    pub graph: SceneGraph,
    pub image: RgbImage,
    /// Seconds since midnight.
    pub timestamp: f64,
}

/// Color feature of a crop in the requested variant.
pub fn color_feature(pixels: &[[u8; 3]], variant: GraphVariant, seed: u64) -> Result<ColorFeature> {
    match variant {
        GraphVariant::Cluster => extract_color_clusters(pixels, crate::scene::color::CLUSTER_COUNT, seed),
        GraphVariant::Discrete => discretize_color(pixels, seed),
    }
}

/// Builds the segmentation map and scene graph for one frame.
pub fn build_datapoint(
    image: RgbImage,
    detections: &[Detection],
    timestamp: f64,
    spec: LatticeSpec,
    variant: GraphVariant,
    seed: u64,
) -> Result<DataPoint> {
    let (w, h) = image.dimensions();
    let (h, w) = (h as usize, w as usize);
    let ordered = ordered(detections)?;
    let mut entities = Vec::with_capacity(ordered.len());
    for d in &ordered {
        let rect = d.bbox.pixel_rect(h, w);
        ensure_domain!(
            !rect.is_empty() && d.crop_pixels.len() == rect.area(),
            "detection {} crop does not lie within the {w}x{h} image",
            d.order_index
        );
        let color = color_feature(&d.crop_pixels, variant, seed)?;
        entities.push(SceneEntity::new(d.entity_class, d.bbox, color)?);
    }
    let segmap = rasterize_boxes(ordered.iter().map(|d| (d.entity_class, &d.bbox)), h, w)?;
    let graph = build_scene_graph(&entities, encode_time(timestamp)?, spec, variant)?;
    Ok(DataPoint {
        segmap,
        graph,
        image,
        timestamp,
    })
}

/// Runs a detector on a frame and builds its data point.
pub fn build_datapoint_with(
    detector: &dyn Detector,
    image: RgbImage,
    timestamp: f64,
    spec: LatticeSpec,
    variant: GraphVariant,
    seed: u64,
) -> Result<DataPoint> {
    let raw = detector.detect(&image)?;
    let detections = raw
        .iter()
        .enumerate()
        .map(|(i, r)| Detection::from_image(&image, r, i))
        .collect::<Result<Vec<_>>>()?;
    build_datapoint(image, &detections, timestamp, spec, variant, seed)
}

/// One frame listed in a frame index file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// Image path, relative to the index file.
    pub image: PathBuf,
    /// Detection file path, relative to the index file.
    pub detections: PathBuf,
    /// Seconds since midnight.
    pub timestamp: f64,
}

/// Reads a frame index: a JSON list of [`FrameRecord`]. Paths are resolved against the
/// index file's directory.
pub fn read_frame_index(path: &Path) -> Result<Vec<FrameRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records: Vec<FrameRecord> =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for r in &mut records {
        r.image = base.join(&r.image);
        r.detections = base.join(&r.detections);
    }
    Ok(records)
}

/// Loads one indexed frame, resizing it to `resolution` when given.
pub fn load_frame(
    record: &FrameRecord,
    resolution: Option<(u32, u32)>,
    spec: LatticeSpec,
    variant: GraphVariant,
    seed: u64,
) -> Result<DataPoint> {
    let mut image = image::open(&record.image)
        .map_err(|e| Error::format(&record.image, e.to_string()))?
        .to_rgb8();
    if let Some((w, h)) = resolution {
        if image.dimensions() != (w, h) {
            image = image::imageops::resize(&image, w, h, image::imageops::FilterType::Triangle);
        }
    }
    let raw = read_detection_file(&record.detections)?;
    let detector = move |_: &RgbImage| Ok(raw.clone());
    build_datapoint_with(&detector, image, record.timestamp, spec, variant, seed)
}
