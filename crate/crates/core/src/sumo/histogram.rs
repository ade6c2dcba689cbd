use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_domain, Error, Result};
use crate::scene::{BBox, EntityClass, SceneGraph, BBOX_SLOTS};

/// How a box size is drawn from a bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SizeDraw {
    /// Component-wise median of the bin.
    Median,
    /// Uniformly chosen observed size, from a ChaCha8 stream with this seed.
    Seeded(u64),
}

/// Which samples a lookup ended up using.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinSource {
    Bin,
    Neighbors,
    ClassGlobal,
}

/// Spatially binned `(w, h)` observations per entity class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBoxHistogram {
    pub bins: usize,
    /// Merge the 8 surrounding bins when a bin is empty.
    pub neighbor_merge: bool,
    /// Per class: `bins × bins` row-major lists of `[w, h]`.
    pub classes: BTreeMap<EntityClass, Vec<Vec<[f64; 2]>>>,
}

impl BBoxHistogram {
    pub const DEFAULT_BINS: usize = 8;

    pub fn new(bins: usize) -> Result<Self> {
        ensure_domain!(bins >= 1, "histogram needs at least one bin");
        Ok(Self {
            bins,
            neighbor_merge: true,
            classes: BTreeMap::new(),
        })
    }

    /// Builds a histogram from observed boxes.
    pub fn fit<'a>(
        boxes: impl IntoIterator<Item = (EntityClass, &'a BBox)>,
        bins: usize,
    ) -> Result<Self> {
        let mut hist = Self::new(bins)?;
        for (class, b) in boxes {
            hist.add(class, b)?;
        }
        Ok(hist)
    }

    /// Builds a histogram from the entity nodes of scene graphs.
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a SceneGraph>, bins: usize) -> Result<Self> {
        let mut hist = Self::new(bins)?;
        for g in graphs {
            for (i, kind) in g.kinds().iter().enumerate() {
                if *kind == EntityClass::Grid {
                    continue;
                }
                let f = &g.node_features(i)[BBOX_SLOTS];
                hist.add(*kind, &BBox::new(f[0], f[1], f[2], f[3])?)?;
            }
        }
        Ok(hist)
    }

    pub fn add(&mut self, class: EntityClass, b: &BBox) -> Result<()> {
        ensure_domain!(class != EntityClass::Grid, "grid nodes have no box size");
        let (row, col) = self.bin_of([b.x, b.y]);
        let bins = self.bins;
        let grid = self
            .classes
            .entry(class)
            .or_insert_with(|| vec![Vec::new(); bins * bins]);
        grid[row * bins + col].push([b.w, b.h]);
        Ok(())
    }

    /// Bin `(row, col)` holding a normalized image point; points outside are clamped.
    pub fn bin_of(&self, point: [f64; 2]) -> (usize, usize) {
        let idx = |v: f64| ((v.clamp(0.0, 1.0) * self.bins as f64) as usize).min(self.bins - 1);
        (idx(point[1]), idx(point[0]))
    }

    /// Sizes available for `class` at `point`, after fallback merging.
    pub fn samples(&self, point: [f64; 2], class: EntityClass) -> Result<(Vec<[f64; 2]>, BinSource)> {
        let grid = self
            .classes
            .get(&class)
            .ok_or_else(|| Error::domain(format!("no {class} boxes in the histogram")))?;
        let (row, col) = self.bin_of(point);
        let n = self.bins;
        let here = &grid[row * n + col];
        if !here.is_empty() {
            return Ok((here.clone(), BinSource::Bin));
        }
        if self.neighbor_merge {
            let mut merged = Vec::new();
            for r in row.saturating_sub(1)..=(row + 1).min(n - 1) {
                for c in col.saturating_sub(1)..=(col + 1).min(n - 1) {
                    merged.extend_from_slice(&grid[r * n + c]);
                }
            }
            if !merged.is_empty() {
                return Ok((merged, BinSource::Neighbors));
            }
        }
        let all: Vec<[f64; 2]> = grid.iter().flatten().copied().collect();
        ensure_domain!(!all.is_empty(), "no {class} boxes in the histogram");
        Ok((all, BinSource::ClassGlobal))
    }

    /// Box for `class` centered at `point`, clipped to the unit square.
    pub fn sample_bbox(&self, point: [f64; 2], class: EntityClass, draw: SizeDraw) -> Result<BBox> {
        let (samples, _) = self.samples(point, class)?;
        let [w, h] = match draw {
            SizeDraw::Median => [
                median(samples.iter().map(|s| s[0]).collect()),
                median(samples.iter().map(|s| s[1]).collect()),
            ],
            SizeDraw::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                samples[rng.random_range(0..samples.len())]
            }
        };
        centered_box(point, w, h)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Box of size `w × h` centered at `point`, with the part outside the image cut off.
pub fn centered_box(point: [f64; 2], w: f64, h: f64) -> Result<BBox> {
    let [x, y] = point;
    ensure_domain!(
        (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y),
        "point ({x}, {y}) lies outside the image"
    );
    let (x0, x1) = ((x - w / 2.0).max(0.0), (x + w / 2.0).min(1.0));
    let (y0, y1) = ((y - h / 2.0).max(0.0), (y + h / 2.0).min(1.0));
    if x0 == x - w / 2.0 && x1 == x + w / 2.0 && y0 == y - h / 2.0 && y1 == y + h / 2.0 {
        return BBox::new(x, y, w, h);
    }
    BBox::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(x: f64, y: f64, w: f64, h: f64) -> (EntityClass, BBox) {
        (EntityClass::Car, BBox::new(x, y, w, h).unwrap())
    }

    #[test]
    fn constant_sizes_come_back() {
        let data: Vec<_> = (0..10).map(|i| car(0.05 + 0.09 * i as f64, 0.5, 0.1, 0.05)).collect();
        let hist = BBoxHistogram::fit(data.iter().map(|(c, b)| (*c, b)), 8).unwrap();
        let b = hist.sample_bbox([0.5, 0.5], EntityClass::Car, SizeDraw::Median).unwrap();
        assert_eq!((b.w, b.h), (0.1, 0.05));
        let a = hist.sample_bbox([0.5, 0.5], EntityClass::Car, SizeDraw::Seeded(3)).unwrap();
        assert_eq!((a.w, a.h), (0.1, 0.05));
    }

    #[test]
    fn empty_bin_uses_neighbors_then_global() {
        // 2x2 bins: data only in the top-left bin.
        let data = [car(0.1, 0.1, 0.2, 0.1), car(0.2, 0.2, 0.4, 0.3)];
        let mut hist = BBoxHistogram::fit(data.iter().map(|(c, b)| (*c, b)), 2).unwrap();
        let (s, src) = hist.samples([0.9, 0.9], EntityClass::Car).unwrap();
        assert_eq!(src, BinSource::Neighbors);
        assert_eq!(s.len(), 2);
        let b = hist.sample_bbox([0.75, 0.75], EntityClass::Car, SizeDraw::Median).unwrap();
        assert!((b.w - 0.3).abs() < 1e-12 && (b.h - 0.2).abs() < 1e-12);
        hist.neighbor_merge = false;
        assert_eq!(hist.samples([0.9, 0.9], EntityClass::Car).unwrap().1, BinSource::ClassGlobal);
        assert!(hist.samples([0.9, 0.9], EntityClass::Bus).is_err());
    }

    #[test]
    fn boxes_are_clipped() {
        let b = centered_box([0.95, 0.5], 0.2, 0.1).unwrap();
        assert!((b.x - 0.925).abs() < 1e-12 && (b.w - 0.15).abs() < 1e-12);
    }
}
