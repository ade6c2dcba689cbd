//! On-disk dataset layout.
//!
//! ```text
//! root/
//!   manifest.json
//!   images/000000.png     RGB, lossless
//!   segmaps/000000.png    8-bit gray, one label per pixel
//!   graphs/000000.json    scene graph
//! ```
//!
//! Writing is single-writer: one call owns the directory until it returns.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use super::{DataPoint, SegmentationMap};
use crate::error::{Error, Result};
use crate::scene::{GraphVariant, LatticeSpec, SceneGraph};

const MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Relative sizes of the train and test splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u64,
    pub test: u64,
}

impl Default for SplitRatio {
    /// 10 322 training frames to 630 test frames.
    fn default() -> Self {
        Self {
            train: 10_322,
            test: 630,
        }
    }
}

impl SplitRatio {
    /// Deterministic interleaved assignment: after `n` entries, the test count is
    /// `floor(n * test / (train + test))`.
    pub fn assign(&self, index: u64) -> Split {
        let total = self.train + self.test;
        if total == 0 || self.test == 0 {
            return Split::Train;
        }
        let before = index * self.test / total;
        let after = (index + 1) * self.test / total;
        if after > before {
            Split::Test
        } else {
            Split::Train
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub timestamp: f64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub count: usize,
    pub variant: GraphVariant,
    pub lattice: LatticeSpec,
    pub split_ratio: SplitRatio,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn split_count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `points` under `root` and returns the manifest that was written.
///
/// All points must share one graph variant and lattice.
pub fn write_dataset(
    points: impl IntoIterator<Item = DataPoint>,
    root: &Path,
    split_ratio: SplitRatio,
) -> Result<Manifest> {
    for sub in ["images", "segmaps", "graphs"] {
        create_dir(&root.join(sub))?;
    }
    let mut entries = Vec::new();
    let mut layout: Option<(GraphVariant, LatticeSpec)> = None;
    for (i, point) in points.into_iter().enumerate() {
        let this = (point.graph.variant(), point.graph.lattice());
        match layout {
            None => layout = Some(this),
            Some(first) if first != this => {
                return Err(Error::domain(format!(
                    "data point {i} uses {} / {:?}, dataset uses {} / {:?}",
                    this.0, this.1, first.0, first.1
                )))
            }
            _ => {}
        }
        let (w, h) = point.image.dimensions();
        if (h as usize, w as usize) != (point.segmap.height(), point.segmap.width()) {
            return Err(Error::domain(format!(
                "data point {i}: image is {w}x{h} but segmentation map is {}x{}",
                point.segmap.width(),
                point.segmap.height()
            )));
        }
        let id = format!("{i:06}");
        let image_path = root.join("images").join(format!("{id}.png"));
        point.image.save(&image_path).map_err(|e| Error::format(&image_path, e.to_string()))?;
        let seg_path = root.join("segmaps").join(format!("{id}.png"));
        GrayImage::from_raw(w, h, point.segmap.labels().to_vec())
            .expect("segmentation buffer matches image size")
            .save(&seg_path)
            .map_err(|e| Error::format(&seg_path, e.to_string()))?;
        let graph_path = root.join("graphs").join(format!("{id}.json"));
        let text = serde_json::to_string(&point.graph)?;
        fs::write(&graph_path, text).map_err(|e| Error::io(&graph_path, e))?;
        entries.push(ManifestEntry {
            id,
            timestamp: point.timestamp,
            split: split_ratio.assign(i as u64),
        });
    }
    let (variant, lattice) = layout.ok_or_else(|| Error::domain("cannot write an empty dataset"))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        count: entries.len(),
        variant,
        lattice,
        split_ratio,
        entries,
    };
    let path = root.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A dataset opened for reading.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
}

pub fn open_dataset(root: &Path) -> Result<Dataset> {
    let path = root.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    if manifest.count != manifest.entries.len() {
        return Err(Error::format(
            &path,
            format!(
                "manifest declares {} points but lists {}",
                manifest.count,
                manifest.entries.len()
            ),
        ));
    }
    Ok(Dataset {
        root: root.to_path_buf(),
        manifest,
    })
}

impl Dataset {
    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.count == 0
    }

    pub fn load(&self, index: usize) -> Result<DataPoint> {
        let entry = &self.manifest.entries[index];
        let image_path = self.root.join("images").join(format!("{}.png", entry.id));
        let image: RgbImage = image::open(&image_path)
            .map_err(|e| Error::format(&image_path, e.to_string()))?
            .to_rgb8();

        let seg_path = self.root.join("segmaps").join(format!("{}.png", entry.id));
        let seg = image::open(&seg_path)
            .map_err(|e| Error::format(&seg_path, e.to_string()))?
            .to_luma8();
        let (w, h) = seg.dimensions();
        let segmap = SegmentationMap::from_labels(h as usize, w as usize, seg.into_raw())
            .map_err(|e| Error::format(&seg_path, e.to_string()))?;
        if image.dimensions() != (w, h) {
            return Err(Error::format(&seg_path, "size differs from the image"));
        }

        let graph_path = self.root.join("graphs").join(format!("{}.json", entry.id));
        let text = fs::read_to_string(&graph_path).map_err(|e| Error::io(&graph_path, e))?;
        let graph: SceneGraph =
            serde_json::from_str(&text).map_err(|e| Error::format(&graph_path, e.to_string()))?;
        if graph.variant() != self.manifest.variant || graph.lattice() != self.manifest.lattice {
            return Err(Error::format(&graph_path, "graph layout differs from the manifest"));
        }
        Ok(DataPoint {
            segmap,
            graph,
            image,
            timestamp: entry.timestamp,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<DataPoint>> + '_ {
        (0..self.len()).map(|i| self.load(i))
    }

    /// Indices of the entries assigned to `split`.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Reads every data point under `root`.
pub fn read_dataset(root: &Path) -> Result<Vec<DataPoint>> {
    open_dataset(root)?.iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_assignment_matches_ratio() {
        let ratio = SplitRatio::default();
        let n = 10_952u64;
        let test = (0..n).filter(|i| ratio.assign(*i) == Split::Test).count();
        assert_eq!(test, 630);
        let even = SplitRatio { train: 1, test: 1 };
        assert_eq!(even.assign(0), Split::Train);
        assert_eq!(even.assign(1), Split::Test);
        assert_eq!(SplitRatio { train: 5, test: 0 }.assign(3), Split::Train);
    }
}
