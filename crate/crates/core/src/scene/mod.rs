//! Scene entities and the lattice + entity graph that conditions the generator.
//!
//! Every node carries a feature vector laid out as
//!
//! ```text
//! | x y w h | bus truck car person grid | sin cos | color (20 or 8) |
//! ```
//!
//! giving width 31 for the cluster-colors variant and 19 for discrete-colors.

pub mod color;
pub mod graph;

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_domain, Error, Result};

pub use color::{discretize_color, extract_color_clusters, kmeans_rgb, Cluster, ColorClusters};
pub use graph::{build_lattice, build_scene_graph, LatticeSpec, SceneGraph};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Feature slots shared by both graph variants.
pub const BBOX_SLOTS: std::ops::Range<usize> = 0..4;
pub const CLASS_SLOTS: std::ops::Range<usize> = 4..9;
pub const TIME_SLOTS: std::ops::Range<usize> = 9..11;
pub const COLOR_OFFSET: usize = 11;

/// Axis-aligned box in normalized image coordinates, stored as center and size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBBox")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Deserialize)]
struct RawBBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl TryFrom<RawBBox> for BBox {
    type Error = Error;

    fn try_from(raw: RawBBox) -> Result<Self> {
        BBox::new(raw.x, raw.y, raw.w, raw.h)
    }
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        for (name, v) in [("x", x), ("y", y), ("w", w), ("h", h)] {
            ensure_domain!(
                v.is_finite() && (0.0..=1.0).contains(&v),
                "bbox {name} = {v} outside [0, 1]"
            );
        }
        ensure_domain!(w > 0.0 && h > 0.0, "bbox must have positive size, got {w}x{h}");
        Ok(Self { x, y, w, h })
    }

    pub fn center(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Corners `(x0, y0, x1, y1)`, clipped to the unit square.
    pub fn corners(&self) -> [f64; 4] {
        [
            (self.x - self.w / 2.0).max(0.0),
            (self.y - self.h / 2.0).max(0.0),
            (self.x + self.w / 2.0).min(1.0),
            (self.y + self.h / 2.0).min(1.0),
        ]
    }

    /// Pixel rectangle `[x0, x1) × [y0, y1)` covered by the box, clipped to the image.
    ///
    /// A pixel is inside when its center falls inside the box.
    pub fn pixel_rect(&self, height: usize, width: usize) -> PixelRect {
        let [x0, y0, x1, y1] = self.corners();
        let lo = |v: f64, n: usize| ((v * n as f64 - 0.5).ceil().max(0.0) as usize).min(n);
        let hi = |v: f64, n: usize| ((v * n as f64 - 0.5).floor() + 1.0).clamp(0.0, n as f64) as usize;
        PixelRect {
            x0: lo(x0, width),
            y0: lo(y0, height),
            x1: hi(x1, width),
            y1: hi(y1, height),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

/// Half-open pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn area(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.x1 - self.x0) * (self.y1 - self.y0)
        }
    }
}

/// Node class. `Grid` marks lattice nodes; every other value is a detectable entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityClass {
    Bus,
    Truck,
    Car,
    Person,
    Grid,
}

impl EntityClass {
    pub const ALL: [EntityClass; 5] = [
        EntityClass::Bus,
        EntityClass::Truck,
        EntityClass::Car,
        EntityClass::Person,
        EntityClass::Grid,
    ];

    pub const ENTITIES: [EntityClass; 4] = [
        EntityClass::Bus,
        EntityClass::Truck,
        EntityClass::Car,
        EntityClass::Person,
    ];

    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [f64; 5] {
        let mut v = [0.0; 5];
        v[self.slot()] = 1.0;
        v
    }

    /// Segmentation label: 1 bus, 2 truck, 3 car, 4 person. Grid nodes have none.
    pub fn label(self) -> Option<u8> {
        match self {
            EntityClass::Grid => None,
            other => Some(other as u8 + 1),
        }
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            1..=4 => Some(Self::ENTITIES[label as usize - 1]),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityClass::Bus => "bus",
            EntityClass::Truck => "truck",
            EntityClass::Car => "car",
            EntityClass::Person => "person",
            EntityClass::Grid => "grid",
        }
    }
}

impl fmt::Display for EntityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown entity class {s:?}")))
    }
}

/// Time of day on the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeEncoding {
    pub sin: f64,
    pub cos: f64,
}

impl TimeEncoding {
    pub fn as_array(&self) -> [f64; 2] {
        [self.sin, self.cos]
    }
}

pub fn encode_time(seconds_since_midnight: f64) -> Result<TimeEncoding> {
    ensure_domain!(
        seconds_since_midnight.is_finite()
            && (0.0..SECONDS_PER_DAY).contains(&seconds_since_midnight),
        "time {seconds_since_midnight} s is outside [0, 86400)"
    );
    let (sin, cos) = (TAU * seconds_since_midnight / SECONDS_PER_DAY).sin_cos();
    Ok(TimeEncoding { sin, cos })
}

/// Parses `"HH:MM"` or `"HH:MM:SS"` into seconds since midnight.
pub fn parse_clock_time(text: &str) -> Result<f64> {
    let parts: Vec<&str> = text.trim().split(':').collect();
    ensure_domain!(
        (2..=3).contains(&parts.len()),
        "time {text:?} is not HH:MM"
    );
    let mut fields = [0u32; 3];
    for (slot, part) in fields.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| Error::domain(format!("time {text:?} is not HH:MM")))?;
    }
    let [h, m, s] = fields;
    ensure_domain!(h < 24 && m < 60 && s < 60, "time {text:?} out of range");
    Ok(f64::from(h * 3600 + m * 60 + s))
}

/// The fixed 8-color palette of the discrete-colors variant, in one-hot order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaletteColor {
    Black,
    White,
    Red,
    Lime,
    Blue,
    Yellow,
    Magenta,
    Gray,
}

impl PaletteColor {
    pub const ALL: [PaletteColor; 8] = [
        PaletteColor::Black,
        PaletteColor::White,
        PaletteColor::Red,
        PaletteColor::Lime,
        PaletteColor::Blue,
        PaletteColor::Yellow,
        PaletteColor::Magenta,
        PaletteColor::Gray,
    ];

    pub fn rgb(self) -> [u8; 3] {
        match self {
            PaletteColor::Black => [0, 0, 0],
            PaletteColor::White => [255, 255, 255],
            PaletteColor::Red => [255, 0, 0],
            PaletteColor::Lime => [0, 255, 0],
            PaletteColor::Blue => [0, 0, 255],
            PaletteColor::Yellow => [255, 255, 0],
            PaletteColor::Magenta => [255, 0, 255],
            PaletteColor::Gray => [128, 128, 128],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PaletteColor::Black => "black",
            PaletteColor::White => "white",
            PaletteColor::Red => "red",
            PaletteColor::Lime => "lime",
            PaletteColor::Blue => "blue",
            PaletteColor::Yellow => "yellow",
            PaletteColor::Magenta => "magenta",
            PaletteColor::Gray => "gray",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for PaletteColor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|c| c.name()).collect();
                Error::domain(format!(
                    "color {s:?} is not in the palette [{}]",
                    names.join(", ")
                ))
            })
    }
}

impl fmt::Display for PaletteColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which color encoding the graph carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphVariant {
    Cluster,
    Discrete,
}

impl GraphVariant {
    pub fn color_width(self) -> usize {
        match self {
            GraphVariant::Cluster => 20,
            GraphVariant::Discrete => 8,
        }
    }

    pub fn feature_width(self) -> usize {
        COLOR_OFFSET + self.color_width()
    }
}

impl fmt::Display for GraphVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphVariant::Cluster => "cluster",
            GraphVariant::Discrete => "discrete",
        })
    }
}

impl FromStr for GraphVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(GraphVariant::Cluster),
            "discrete" => Ok(GraphVariant::Discrete),
            _ => Err(Error::domain(format!("unknown graph variant {s:?}"))),
        }
    }
}

/// Per-entity color feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorFeature {
    Clusters(ColorClusters),
    Discrete(PaletteColor),
}

impl ColorFeature {
    pub fn variant(&self) -> GraphVariant {
        match self {
            ColorFeature::Clusters(_) => GraphVariant::Cluster,
            ColorFeature::Discrete(_) => GraphVariant::Discrete,
        }
    }

    pub fn to_features(&self) -> Vec<f64> {
        match self {
            ColorFeature::Clusters(c) => c.to_features().to_vec(),
            ColorFeature::Discrete(p) => {
                let mut v = vec![0.0; 8];
                v[p.index()] = 1.0;
                v
            }
        }
    }

    /// Color feature for a single flat RGB color in the given variant.
    pub fn solid(rgb: [u8; 3], variant: GraphVariant) -> Result<Self> {
        match variant {
            GraphVariant::Cluster => extract_color_clusters(&[rgb], color::CLUSTER_COUNT, 0),
            GraphVariant::Discrete => discretize_color(&[rgb], 0),
        }
    }
}

/// One detected or user-placed object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntity {
    #[serde(rename = "class")]
    pub entity_class: EntityClass,
    pub bbox: BBox,
    pub color: ColorFeature,
}

impl SceneEntity {
    pub fn new(entity_class: EntityClass, bbox: BBox, color: ColorFeature) -> Result<Self> {
        ensure_domain!(
            entity_class != EntityClass::Grid,
            "scene entities cannot have class grid"
        );
        Ok(Self {
            entity_class,
            bbox,
            color,
        })
    }
}
