//! Color featurization of entity crops: dominant-color clusters and palette discretization.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ColorFeature, PaletteColor};
use crate::error::{ensure_domain, Result};

/// Number of dominant colors kept in the cluster-colors feature.
pub const CLUSTER_COUNT: usize = 5;
const MAX_ITERATIONS: usize = 20;
const TOLERANCE: f64 = 1e-4;
/// Clusters averaged before the palette lookup.
const DISCRETE_TOP: usize = 3;
/// Channel standard deviation (in [0,1] units) under which a color counts as achromatic.
const GRAY_MAX_CHANNEL_STD: f64 = 30.0 / 255.0;

/// A k-means cluster over RGB values scaled to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cluster {
    pub center: [f64; 3],
    pub count: usize,
}

/// Five dominant colors with softmax-normalized weights, in descending count order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorClusters {
    pub centers: [[f64; 3]; CLUSTER_COUNT],
    pub weights: [f64; CLUSTER_COUNT],
}

impl ColorClusters {
    pub fn to_features(&self) -> [f64; 4 * CLUSTER_COUNT] {
        let mut out = [0.0; 4 * CLUSTER_COUNT];
        for (i, (c, w)) in self.centers.iter().zip(&self.weights).enumerate() {
            out[4 * i..4 * i + 3].copy_from_slice(c);
            out[4 * i + 3] = *w;
        }
        out
    }
}

fn scale(rgb: [u8; 3]) -> [f64; 3] {
    rgb.map(|v| f64::from(v) / 255.0)
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64; 3], centers: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(point, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Draws an index with probability proportional to `weights`.
fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            if target < *w {
                return i;
            }
            target -= w;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Weighted k-means over the distinct colors of `pixels`.
///
/// Pixels are first collapsed to a sorted histogram of distinct values, so the result
/// depends only on the pixel multiset and the seed. Seeding is k-means++; at most 20
/// Lloyd iterations, stopping once no center moves more than 1e-4. Empty clusters are
/// dropped. Output is sorted by descending count, ties broken by center.
pub fn kmeans_rgb(pixels: &[[u8; 3]], k: usize, seed: u64) -> Result<Vec<Cluster>> {
    ensure_domain!(!pixels.is_empty(), "cannot cluster an empty pixel list");
    ensure_domain!(k >= 1, "k-means needs k >= 1");

    let mut histogram: BTreeMap<[u8; 3], usize> = BTreeMap::new();
    for p in pixels {
        *histogram.entry(*p).or_default() += 1;
    }
    let points: Vec<[f64; 3]> = histogram.keys().map(|p| scale(*p)).collect();
    let counts: Vec<usize> = histogram.values().copied().collect();
    let weights: Vec<f64> = counts.iter().map(|c| *c as f64).collect();

    let mut clusters = if points.len() <= k {
        points
            .iter()
            .zip(&counts)
            .map(|(p, c)| Cluster {
                center: *p,
                count: *c,
            })
            .collect::<Vec<_>>()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centers = vec![points[weighted_pick(&mut rng, &weights)]];
        while centers.len() < k {
            let d2: Vec<f64> = points
                .iter()
                .zip(&weights)
                .map(|(p, w)| w * dist2(p, &centers[nearest(p, &centers)]))
                .collect();
            centers.push(points[weighted_pick(&mut rng, &d2)]);
        }

        let mut assignment = vec![0; points.len()];
        for _ in 0..MAX_ITERATIONS {
            for (a, p) in assignment.iter_mut().zip(&points) {
                *a = nearest(p, &centers);
            }
            let mut sums = vec![[0.0; 3]; k];
            let mut mass = vec![0.0; k];
            for ((p, w), a) in points.iter().zip(&weights).zip(&assignment) {
                for ch in 0..3 {
                    sums[*a][ch] += w * p[ch];
                }
                mass[*a] += w;
            }
            let mut shift: f64 = 0.0;
            for j in 0..k {
                if mass[j] > 0.0 {
                    let next = sums[j].map(|s| s / mass[j]);
                    shift = shift.max(dist2(&next, &centers[j]).sqrt());
                    centers[j] = next;
                }
            }
            if shift <= TOLERANCE {
                break;
            }
        }
        for (a, p) in assignment.iter_mut().zip(&points) {
            *a = nearest(p, &centers);
        }
        let mut totals = vec![0usize; k];
        for (a, c) in assignment.iter().zip(&counts) {
            totals[*a] += c;
        }
        centers
            .into_iter()
            .zip(totals)
            .filter(|(_, n)| *n > 0)
            .map(|(center, count)| Cluster { center, count })
            .collect()
    };

    clusters.sort_by(|a, b| {
        b.count.cmp(&a.count).then_with(|| {
            a.center
                .partial_cmp(&b.center)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    Ok(clusters)
}

fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cluster-colors feature: the `k` (≤ 5) dominant colors and the softmax of their
/// count proportions. Missing clusters are zero centers with proportion 0.
pub fn extract_color_clusters(pixels: &[[u8; 3]], k: usize, seed: u64) -> Result<ColorFeature> {
    ensure_domain!(
        (1..=CLUSTER_COUNT).contains(&k),
        "cluster count must be in 1..=5, got {k}"
    );
    let clusters = kmeans_rgb(pixels, k, seed)?;
    let total = pixels.len() as f64;
    let mut centers = [[0.0; 3]; CLUSTER_COUNT];
    let mut proportions = [0.0; CLUSTER_COUNT];
    for (i, c) in clusters.iter().enumerate() {
        centers[i] = c.center;
        proportions[i] = c.count as f64 / total;
    }
    let soft = softmax(&proportions);
    let mut weights = [0.0; CLUSTER_COUNT];
    weights.copy_from_slice(&soft);
    Ok(ColorFeature::Clusters(ColorClusters { centers, weights }))
}

/// Count-weighted mean of the top three clusters, in [0, 1] RGB.
pub fn dominant_mean(pixels: &[[u8; 3]], seed: u64) -> Result<[f64; 3]> {
    let clusters = kmeans_rgb(pixels, CLUSTER_COUNT, seed)?;
    let top = &clusters[..clusters.len().min(DISCRETE_TOP)];
    let mass: usize = top.iter().map(|c| c.count).sum();
    let mut mean = [0.0; 3];
    for c in top {
        for ch in 0..3 {
            mean[ch] += c.center[ch] * c.count as f64;
        }
    }
    Ok(mean.map(|v| v / mass as f64))
}

/// Nearest palette color to a [0, 1] RGB value, with the gray guard applied.
pub fn nearest_palette(rgb: [f64; 3]) -> PaletteColor {
    let by_distance = |allow_gray: bool| {
        PaletteColor::ALL
            .into_iter()
            .filter(|c| allow_gray || *c != PaletteColor::Gray)
            .min_by(|a, b| {
                dist2(&rgb, &scale(a.rgb()))
                    .partial_cmp(&dist2(&rgb, &scale(b.rgb())))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("palette is non-empty")
    };
    let best = by_distance(true);
    if best != PaletteColor::Gray {
        return best;
    }
    let mean = rgb.iter().sum::<f64>() / 3.0;
    let std = (rgb.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0).sqrt();
    if std < GRAY_MAX_CHANNEL_STD {
        PaletteColor::Gray
    } else {
        by_distance(false)
    }
}

/// Discrete-colors feature: palette color nearest to the dominant mean color.
pub fn discretize_color(pixels: &[[u8; 3]], seed: u64) -> Result<ColorFeature> {
    let mean = dominant_mean(pixels, seed)?;
    Ok(ColorFeature::Discrete(nearest_palette(mean)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clusters_of(f: ColorFeature) -> ColorClusters {
        match f {
            ColorFeature::Clusters(c) => c,
            other => panic!("expected clusters, got {other:?}"),
        }
    }

    /// softmax([1,0,0,0,0]) evaluated by hand: e/(e+4) and 1/(e+4).
    fn one_hot_softmax() -> [f64; 5] {
        let e = std::f64::consts::E;
        [e / (e + 4.0), 1.0 / (e + 4.0), 1.0 / (e + 4.0), 1.0 / (e + 4.0), 1.0 / (e + 4.0)]
    }

    #[test]
    fn identical_pixels_give_one_cluster() {
        let c = clusters_of(extract_color_clusters(&[[255, 0, 0]; 100], 5, 7).unwrap());
        assert_eq!(c.centers[0], [1.0, 0.0, 0.0]);
        assert!(c.centers[1..].iter().all(|p| *p == [0.0; 3]));
        for (w, expect) in c.weights.iter().zip(one_hot_softmax()) {
            assert!((w - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn two_value_set_splits_evenly() {
        let mut px = vec![[255, 255, 255]; 50];
        px.extend(vec![[0, 0, 0]; 50]);
        let c = clusters_of(extract_color_clusters(&px, 5, 1).unwrap());
        let mut top: Vec<[f64; 3]> = c.centers[..2].to_vec();
        top.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(top, vec![[0.0; 3], [1.0; 3]]);
        assert!((c.weights[0] - c.weights[1]).abs() < 1e-12);
        // softmax([0.5, 0.5, 0, 0, 0])
        let e = 0.5f64.exp();
        assert!((c.weights[0] - e / (2.0 * e + 3.0)).abs() < 1e-12);
        assert!(c.weights[2..].iter().all(|w| (w - 1.0 / (2.0 * e + 3.0)).abs() < 1e-12));
    }

    #[test]
    fn single_pixel() {
        let c = clusters_of(extract_color_clusters(&[[128, 128, 128]], 5, 0).unwrap());
        assert_eq!(c.centers[0], [128.0 / 255.0; 3]);
        assert!((c.weights[0] - one_hot_softmax()[0]).abs() < 1e-12);
    }

    #[test]
    fn empty_pixels_rejected() {
        assert!(extract_color_clusters(&[], 5, 0).is_err());
        assert!(discretize_color(&[], 0).is_err());
    }

    #[test]
    fn many_colors_keep_five_clusters() {
        let px: Vec<[u8; 3]> = (0..200u32)
            .map(|i| [(i * 37 % 256) as u8, (i * 91 % 256) as u8, (i * 13 % 256) as u8])
            .collect();
        let clusters = kmeans_rgb(&px, 5, 3).unwrap();
        assert_eq!(clusters.len(), 5);
        assert_eq!(clusters.iter().map(|c| c.count).sum::<usize>(), 200);
        assert!(clusters.windows(2).all(|w| w[0].count >= w[1].count));
    }

    #[test]
    fn discrete_exact_palette_colors() {
        for c in PaletteColor::ALL {
            assert_eq!(
                discretize_color(&[c.rgb(); 10], 0).unwrap(),
                ColorFeature::Discrete(c),
                "{c}"
            );
        }
    }

    #[test]
    fn near_red_is_red() {
        // Distances from (250,10,10) to each palette entry, squared, in 0..255 units.
        let px = [250.0, 10.0, 10.0];
        let d: Vec<(PaletteColor, f64)> = PaletteColor::ALL
            .iter()
            .map(|c| {
                let q = c.rgb().map(f64::from);
                (*c, (0..3).map(|i| (px[i] - q[i]).powi(2)).sum())
            })
            .collect();
        let best = d.iter().min_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap().0;
        assert_eq!(best, PaletteColor::Red);
        assert_eq!(
            discretize_color(&[[250, 10, 10]; 30], 0).unwrap(),
            ColorFeature::Discrete(PaletteColor::Red)
        );
    }

    #[test]
    fn gray_guard_rejects_chromatic_means() {
        // (150, 100, 100) is nearest to gray with channel std ~23.6/255, so gray is kept.
        assert_eq!(nearest_palette(scale([150, 100, 100])), PaletteColor::Gray);
        // (170, 90, 120): nearest gray, channel std ~33/255 so the guard rejects it.
        let chroma = scale([170, 90, 120]);
        assert_ne!(nearest_palette(chroma), PaletteColor::Gray);
    }

    proptest! {
        #[test]
        fn weights_are_probabilities_and_order_free(
            px in proptest::collection::vec(any::<[u8; 3]>(), 1..60),
            seed in any::<u64>(),
        ) {
            let a = clusters_of(extract_color_clusters(&px, 5, seed).unwrap());
            prop_assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(a.weights.iter().all(|w| *w >= 0.0));
            let mut rev = px.clone();
            rev.reverse();
            rev.rotate_left(px.len() / 2);
            let b = clusters_of(extract_color_clusters(&rev, 5, seed).unwrap());
            prop_assert_eq!(a, b);
        }
    }
}
