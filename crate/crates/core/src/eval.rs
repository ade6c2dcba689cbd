//! FID, per-class IoU and per-class pixel accuracy.
//!
//! Background is never scored. Buses can be dropped as well, since they are rare in
//! the camera footage.

use std::collections::BTreeMap;
use std::path::Path;

use image::imageops::FilterType;
use image::RgbImage;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{DataPoint, SegmentationMap};
use crate::error::{ensure_domain, Error, Result};
use crate::scene::EntityClass;
use crate::spade::{tensor_to_image, TrafficModel, TrainingBatch};

/// Maps an image to a fixed-length embedding.
pub trait FeatureExtractor {
    fn dim(&self) -> usize;
    fn extract(&self, image: &RgbImage) -> Result<Vec<f64>>;
}

/// Seeded Gaussian random projection of a downsampled image.
///
/// Deterministic and dependency-free; FID values computed with it are not comparable
/// to FID computed with a pretrained classification network.
#[derive(Clone, Debug)]
pub struct RandomProjection {
    side: u32,
    dim: usize,
    weights: DMatrix<f64>,
}

impl RandomProjection {
    pub fn new(seed: u64, side: u32, dim: usize) -> Result<Self> {
        ensure_domain!(side > 0 && dim > 0, "projection needs a positive size and dimension");
        let inputs = (side * side * 3) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (inputs as f64).sqrt();
        let weights = DMatrix::from_fn(dim, inputs, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * scale
        });
        Ok(Self { side, dim, weights })
    }
}

impl FeatureExtractor for RandomProjection {
    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, image: &RgbImage) -> Result<Vec<f64>> {
        let small = image::imageops::resize(image, self.side, self.side, FilterType::Triangle);
        let x = DVector::from_iterator(
            small.as_raw().len(),
            small.as_raw().iter().map(|v| *v as f64 / 127.5 - 1.0),
        );
        Ok((&self.weights * x).iter().copied().collect())
    }
}

/// Labels every pixel of an image.
pub trait Segmenter {
    fn segment(&self, image: &RgbImage) -> Result<SegmentationMap>;
}

/// Assigns each pixel the label whose mean training color is nearest.
///
/// A hermetic stand-in for a trained segmentation network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSegmenter {
    /// Mean RGB per label 0..=4; `None` for labels never seen.
    pub prototypes: Vec<Option<[f64; 3]>>,
}

impl PrototypeSegmenter {
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a DataPoint>) -> Result<Self> {
        let mut sums = [[0.0f64; 3]; 5];
        let mut counts = [0usize; 5];
        for p in points {
            for (px, label) in p.image.pixels().zip(p.segmap.labels()) {
                let l = *label as usize;
                for c in 0..3 {
                    sums[l][c] += px.0[c] as f64;
                }
                counts[l] += 1;
            }
        }
        ensure_domain!(counts.iter().any(|c| *c > 0), "no pixels to fit prototypes on");
        Ok(Self {
            prototypes: (0..5)
                .map(|l| (counts[l] > 0).then(|| sums[l].map(|s| s / counts[l] as f64)))
                .collect(),
        })
    }
}

impl Segmenter for PrototypeSegmenter {
    fn segment(&self, image: &RgbImage) -> Result<SegmentationMap> {
        let (w, h) = image.dimensions();
        let labels = image
            .pixels()
            .map(|px| {
                let mut best = (f64::INFINITY, 0u8);
                for (l, proto) in self.prototypes.iter().enumerate() {
                    if let Some(p) = proto {
                        let d: f64 = (0..3).map(|c| (px.0[c] as f64 - p[c]).powi(2)).sum();
                        if d < best.0 {
                            best = (d, l as u8);
                        }
                    }
                }
                best.1
            })
            .collect();
        SegmentationMap::from_labels(h as usize, w as usize, labels)
    }
}

/// FID and the diagonal regularization that was needed, if any.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fid {
    pub value: f64,
    /// Added to both covariance diagonals when either was not positive definite.
    pub epsilon: f64,
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    ensure_domain!(!rows.is_empty(), "empty feature set");
    let d = rows[0].len();
    ensure_domain!(d >= 1, "features must have at least one dimension");
    ensure_domain!(rows.iter().all(|r| r.len() == d), "feature rows differ in length");
    ensure_domain!(rows.iter().flatten().all(|v| v.is_finite()), "features must be finite");
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

/// Column means and unbiased covariance.
fn gaussian_fit(x: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    ensure_domain!(n >= 2, "need at least 2 samples for a covariance, got {n}");
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Ok((mean, cov))
}

fn symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetric(m));
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

const FID_EPS: f64 = 1e-6;

/// `‖μ_r − μ_f‖² + tr(Σ_r + Σ_f − 2 (Σ_r Σ_f)^{1/2})` with rows as samples.
///
/// The trace of the matrix square root is computed as `tr((S Σ_f S)^{1/2})` with
/// `S = Σ_r^{1/2}`, which has the same eigenvalues and stays symmetric.
pub fn compute_fid(real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<Fid> {
    let (xr, xf) = (to_matrix(real)?, to_matrix(fake)?);
    ensure_domain!(xr.ncols() == xf.ncols(), "feature dimensions differ: {} vs {}", xr.ncols(), xf.ncols());
    let (mu_r, mut cov_r) = gaussian_fit(&xr)?;
    let (mu_f, mut cov_f) = gaussian_fit(&xf)?;
    let degenerate = |c: &DMatrix<f64>| {
        let e = SymmetricEigen::new(symmetric(c)).eigenvalues;
        e.min() <= 1e-12 * e.max().abs().max(1.0)
    };
    let mut epsilon = 0.0;
    if degenerate(&cov_r) || degenerate(&cov_f) {
        epsilon = FID_EPS;
        let d = cov_r.nrows();
        cov_r += DMatrix::identity(d, d) * epsilon;
        cov_f += DMatrix::identity(d, d) * epsilon;
    }
    let s = sqrt_psd(&cov_r);
    let inner = symmetric(&(&s * &cov_f * &s));
    let tr_sqrt: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();
    let diff = (&mu_r - &mu_f).norm_squared();
    let value = diff + cov_r.trace() + cov_f.trace() - 2.0 * tr_sqrt;
    Ok(Fid {
        value: value.max(0.0),
        epsilon,
    })
}

/// Foreground classes scored by default; buses optionally dropped.
pub fn scored_classes(exclude_bus: bool) -> Vec<EntityClass> {
    EntityClass::ENTITIES
        .into_iter()
        .filter(|c| !(exclude_bus && *c == EntityClass::Bus))
        .collect()
}

fn check_pairs(pred: &[SegmentationMap], truth: &[SegmentationMap]) -> Result<()> {
    ensure_domain!(pred.len() == truth.len(), "{} predictions for {} targets", pred.len(), truth.len());
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        ensure_domain!(
            (p.height(), p.width()) == (t.height(), t.width()),
            "map {i}: prediction {}x{} vs target {}x{}",
            p.width(),
            p.height(),
            t.width(),
            t.height()
        );
    }
    Ok(())
}

fn label_of(class: EntityClass) -> Result<u8> {
    class
        .label()
        .ok_or_else(|| Error::domain(format!("class {class} has no segmentation label")))
}

/// Per-class `|pred ∩ truth| / |pred ∪ truth|`, summed over the whole set. Classes
/// absent from both are `None`.
pub fn compute_miou(
    pred: &[SegmentationMap],
    truth: &[SegmentationMap],
    classes: &[EntityClass],
) -> Result<BTreeMap<EntityClass, Option<f64>>> {
    check_pairs(pred, truth)?;
    let mut out = BTreeMap::new();
    for class in classes {
        let l = label_of(*class)?;
        let (mut inter, mut union) = (0u64, 0u64);
        for (p, t) in pred.iter().zip(truth) {
            for (a, b) in p.labels().iter().zip(t.labels()) {
                let (pa, tb) = (*a == l, *b == l);
                inter += (pa && tb) as u64;
                union += (pa || tb) as u64;
            }
        }
        out.insert(*class, (union > 0).then(|| inter as f64 / union as f64));
    }
    Ok(out)
}

/// Per-class recall: correctly labeled pixels of the class over its true pixels.
pub fn compute_pixel_accuracy(
    pred: &[SegmentationMap],
    truth: &[SegmentationMap],
    classes: &[EntityClass],
) -> Result<BTreeMap<EntityClass, Option<f64>>> {
    check_pairs(pred, truth)?;
    let mut out = BTreeMap::new();
    for class in classes {
        let l = label_of(*class)?;
        let (mut hit, mut total) = (0u64, 0u64);
        for (p, t) in pred.iter().zip(truth) {
            for (a, b) in p.labels().iter().zip(t.labels()) {
                if *b == l {
                    total += 1;
                    hit += (*a == l) as u64;
                }
            }
        }
        out.insert(*class, (total > 0).then(|| hit as f64 / total as f64));
    }
    Ok(out)
}

/// Mean over the classes that have a score.
pub fn mean_score(scores: &BTreeMap<EntityClass, Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = scores.values().flatten().copied().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub exclude_bus: bool,
    /// Noise seed of test image `i` is `seed + i`.
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            exclude_bus: true,
            seed: 0,
            batch_size: 8,
        }
    }
}

/// One row of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fid: f64,
    pub fid_epsilon: f64,
    /// Class name → IoU; classes without pixels are omitted.
    pub miou: BTreeMap<String, f64>,
    pub accuracy: BTreeMap<String, f64>,
    pub mean_iou: Option<f64>,
    pub mean_accuracy: Option<f64>,
    pub excluded_classes: Vec<String>,
    pub images_evaluated: usize,
    pub images_failed: usize,
    pub failures: Vec<String>,
}

impl EvalReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

fn named(scores: &BTreeMap<EntityClass, Option<f64>>) -> BTreeMap<String, f64> {
    scores
        .iter()
        .filter_map(|(c, v)| v.map(|v| (c.name().to_string(), v)))
        .collect()
}

/// Generates one image per test point and scores it against the real image and map.
///
/// Points whose generation fails are counted and listed; the rest are still scored.
pub fn evaluate_model(
    model: &TrafficModel,
    points: &[DataPoint],
    extractor: &dyn FeatureExtractor,
    segmenter: &dyn Segmenter,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let mut real_feats = Vec::new();
    let mut fake_feats = Vec::new();
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut failures = Vec::new();
    for (i, p) in points.iter().enumerate() {
        match generate_for_point(model, p, options.seed.wrapping_add(i as u64)) {
            Ok(img) => {
                real_feats.push(extractor.extract(&p.image)?);
                fake_feats.push(extractor.extract(&img)?);
                preds.push(segmenter.segment(&img)?);
                truths.push(p.segmap.clone());
            }
            Err(e) => {
                tracing::warn!(index = i, error = %e, "generation failed");
                failures.push(format!("point {i}: {e}"));
            }
        }
    }
    let fid = compute_fid(&real_feats, &fake_feats)?;
    let classes = scored_classes(options.exclude_bus);
    let miou = compute_miou(&preds, &truths, &classes)?;
    let accuracy = compute_pixel_accuracy(&preds, &truths, &classes)?;
    let mut excluded_classes = vec!["background".to_string()];
    if options.exclude_bus {
        excluded_classes.push(EntityClass::Bus.name().to_string());
    }
    Ok(EvalReport {
        fid: fid.value,
        fid_epsilon: fid.epsilon,
        mean_iou: mean_score(&miou),
        mean_accuracy: mean_score(&accuracy),
        miou: named(&miou),
        accuracy: named(&accuracy),
        excluded_classes,
        images_evaluated: preds.len(),
        images_failed: failures.len(),
        failures,
    })
}

fn generate_for_point(model: &TrafficModel, point: &DataPoint, seed: u64) -> Result<RgbImage> {
    let batch = TrainingBatch::new(&[point], &model.config)?;
    let noise = match model.config.generator.noise_dim {
        0 => None,
        d => Some(crate::spade::sample_noise(seed, 1, d, model.config.dtype())?),
    };
    let (images, _) = model.generate(&[&point.graph], &batch.segmaps, noise.as_ref())?;
    tensor_to_image(&images.get(0)?)
}
