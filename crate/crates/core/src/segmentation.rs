//! Superpixel quantization, sky/cloud 2-means, and the thresholding baselines.

use serde::{Deserialize, Serialize};

use crate::colorspace::{extract_channel, ChannelId};
use crate::error::{Error, Result};
use crate::imaging::{ChannelMap, CloudMask, RgbImage};
use crate::superpixel::{slic_oversegment, SlicParams, SuperpixelLabeling};

const DEGENERATE_SPREAD: f64 = 1e-12;
const KMEANS_TOL: f64 = 1e-9;

/// Channel map in which every pixel carries its superpixel's mean value.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedMap {
    map: ChannelMap,
    means: Vec<f64>,
    sizes: Vec<usize>,
}

impl IndexedMap {
    pub fn map(&self) -> &ChannelMap {
        &self.map
    }

    pub fn values(&self) -> &[f64] {
        self.map.values()
    }

    /// Mean source value per superpixel label.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Replaces every pixel by the mean of its superpixel.
pub fn quantize(cmap: &ChannelMap, labeling: &SuperpixelLabeling) -> Result<IndexedMap> {
    if cmap.dims() != labeling.dims() {
        return Err(Error::DimensionMismatch {
            left: cmap.dims(),
            right: labeling.dims(),
        });
    }
    let mut sums = vec![0.0f64; labeling.count()];
    let mut sizes = vec![0usize; labeling.count()];
    for (&v, &l) in cmap.values().iter().zip(labeling.labels()) {
        sums[l as usize] += v;
        sizes[l as usize] += 1;
    }
    let means: Vec<f64> = sums.iter().zip(&sizes).map(|(s, &n)| s / n as f64).collect();
    let values = labeling.labels().iter().map(|&l| means[l as usize]).collect();
    let (w, h) = cmap.dims();
    Ok(IndexedMap {
        map: ChannelMap::new(w, h, values, cmap.channel())?,
        means,
        sizes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cluster {
    Sky,
    Cloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoClusterResult {
    pub center_sky: f64,
    pub center_cloud: f64,
    /// One entry per input value.
    pub assignment: Vec<Cluster>,
}

impl TwoClusterResult {
    /// Weighted within-cluster sum of squares.
    pub fn sse(&self, values: &[f64], weights: &[f64]) -> f64 {
        values
            .iter()
            .zip(weights)
            .zip(&self.assignment)
            .map(|((&v, &w), c)| {
                let center = match c {
                    Cluster::Sky => self.center_sky,
                    Cluster::Cloud => self.center_cloud,
                };
                w * (v - center) * (v - center)
            })
            .sum()
    }
}

fn nearest(v: f64, sky: f64, cloud: f64) -> Cluster {
    if (v - cloud).abs() < (v - sky).abs() {
        Cluster::Cloud
    } else {
        Cluster::Sky
    }
}

/// Weighted Lloyd iterations from the given centers until they stop moving.
fn lloyd(values: &[f64], weights: &[f64], mut sky: f64, mut cloud: f64) -> (f64, f64) {
    // a 1-D Lloyd run always terminates: each step strictly lowers the SSE
    // or leaves the split unchanged; the cap only guards float ping-pong
    for _ in 0..10_000 {
        let mut acc = [[0.0f64; 2]; 2];
        for (&v, &w) in values.iter().zip(weights) {
            let k = (nearest(v, sky, cloud) == Cluster::Cloud) as usize;
            acc[k][0] += w * v;
            acc[k][1] += w;
        }
        let next_sky = if acc[0][1] > 0.0 { acc[0][0] / acc[0][1] } else { sky };
        let next_cloud = if acc[1][1] > 0.0 { acc[1][0] / acc[1][1] } else { cloud };
        let moved = (next_sky - sky).abs().max((next_cloud - cloud).abs());
        sky = next_sky;
        cloud = next_cloud;
        if moved < KMEANS_TOL {
            break;
        }
    }
    (sky, cloud)
}

/// Weighted 2-means on scalar values.
///
/// Lloyd iterations start from the extreme values. The converged split is then
/// compared against every threshold split of the sorted values (the optimal
/// 1-D 2-clustering is always one of these); if one is strictly better, Lloyd
/// is restarted from its centers. The lower center is sky.
pub fn kmeans_two(values: &[f64], weights: &[f64]) -> Result<TwoClusterResult> {
    if values.len() < 2 {
        return Err(Error::InvalidParams("2-means needs at least two values".into()));
    }
    if weights.len() != values.len() {
        return Err(Error::InvalidParams(format!(
            "{} weights for {} values",
            weights.len(),
            values.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidParams(format!("weights must be positive, got {w}")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(format!("non-finite value {v}")));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < DEGENERATE_SPREAD {
        return Err(Error::DegenerateInput(format!(
            "all {} values equal {lo}",
            values.len()
        )));
    }

    let finish = |(sky, cloud): (f64, f64)| {
        let assignment = values.iter().map(|&v| nearest(v, sky, cloud)).collect();
        TwoClusterResult {
            center_sky: sky,
            center_cloud: cloud,
            assignment,
        }
    };

    let result = finish(lloyd(values, weights, lo, hi));
    let sse = result.sse(values, weights);
    match best_split(values, weights) {
        Some((s, c, best)) if best < sse * (1.0 - 1e-12) => {
            let refined = finish(lloyd(values, weights, s, c));
            if refined.sse(values, weights) <= sse {
                Ok(refined)
            } else {
                Ok(result)
            }
        }
        _ => Ok(result),
    }
}

/// Best threshold split of the sorted values: `(sky_center, cloud_center, sse)`.
fn best_split(values: &[f64], weights: &[f64]) -> Option<(f64, f64, f64)> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let (mut tw, mut twx, mut twxx) = (0.0, 0.0, 0.0);
    for &i in &order {
        let (v, w) = (values[i], weights[i]);
        tw += w;
        twx += w * v;
        twxx += w * v * v;
    }
    let (mut lw, mut lwx, mut lwxx) = (0.0, 0.0, 0.0);
    let mut best: Option<(f64, f64, f64)> = None;
    for pair in order.windows(2) {
        let (v, w) = (values[pair[0]], weights[pair[0]]);
        lw += w;
        lwx += w * v;
        lwxx += w * v * v;
        if values[pair[1]] == v {
            continue;
        }
        let (rw, rwx, rwxx) = (tw - lw, twx - lwx, twxx - lwxx);
        let sse = (lwxx - lwx * lwx / lw) + (rwxx - rwx * rwx / rw);
        if best.is_none_or(|b| sse < b.2) {
            best = Some((lwx / lw, rwx / rw, sse));
        }
    }
    best
}

/// How superpixel means are weighted in the sky/cloud clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Each superpixel counts with its pixel area.
    #[default]
    PixelCount,
    /// Each superpixel counts once.
    Uniform,
}

/// Labels each superpixel sky or cloud from its mean channel value.
pub fn classify_superpixels(
    cmap: &ChannelMap,
    labeling: &SuperpixelLabeling,
    weighting: Weighting,
) -> Result<CloudMask> {
    let indexed = quantize(cmap, labeling)?;
    let (w, h) = cmap.dims();
    let weights: Vec<f64> = match weighting {
        Weighting::PixelCount => indexed.sizes.iter().map(|&n| n as f64).collect(),
        Weighting::Uniform => vec![1.0; indexed.means.len()],
    };
    let clusters = match kmeans_two(&indexed.means, &weights) {
        Ok(r) => r,
        Err(Error::DegenerateInput(why)) => {
            log::info!("uniform superpixel means ({why}); labeling the whole image sky");
            return CloudMask::filled(w, h, CloudMask::SKY);
        }
        Err(Error::InvalidParams(_)) if indexed.means.len() < 2 => {
            log::info!("single superpixel; labeling the whole image sky");
            return CloudMask::filled(w, h, CloudMask::SKY);
        }
        Err(e) => return Err(e),
    };
    let labels = labeling
        .labels()
        .iter()
        .map(|&l| u8::from(clusters.assignment[l as usize] == Cluster::Cloud))
        .collect();
    CloudMask::new(w, h, labels)
}

/// Full superpixel pipeline with pixel-count weighted clustering.
pub fn segment(img: &RgbImage, channel: ChannelId, params: &SlicParams) -> Result<CloudMask> {
    segment_weighted(img, channel, params, Weighting::PixelCount)
}

pub fn segment_weighted(
    img: &RgbImage,
    channel: ChannelId,
    params: &SlicParams,
    weighting: Weighting,
) -> Result<CloudMask> {
    let cmap = extract_channel(img, channel);
    let labeling = slic_oversegment(&cmap, params)?;
    classify_superpixels(&cmap, &labeling, weighting)
}

pub const OTSU_BINS: usize = 256;

/// Otsu cut on a histogram: the largest index `t` of the lower class that
/// maximizes between-class variance. Ties keep the smallest `t`. `None` when
/// fewer than two bins are populated.
pub fn otsu_threshold(hist: &[u64]) -> Option<usize> {
    let total: f64 = hist.iter().map(|&c| c as f64).sum();
    let weighted: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut s0) = (0.0f64, 0.0f64);
    let mut best: Option<(usize, f64)> = None;
    for (t, &c) in hist.iter().enumerate().take(hist.len().saturating_sub(1)) {
        w0 += c as f64;
        s0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = s0 / w0 - (weighted - s0) / w1;
        let between = w0 * w1 * diff * diff;
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t, between));
        }
    }
    best.map(|(t, _)| t)
}

/// Bin index of `v` among `OTSU_BINS` uniform bins over `[lo, hi]`.
fn bin_of(v: f64, lo: f64, hi: f64) -> usize {
    (((v - lo) / (hi - lo) * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

/// Baseline: Otsu threshold on the red-blue difference image.
pub fn segment_otsu_rb(img: &RgbImage) -> Result<CloudMask> {
    let cmap = extract_channel(img, ChannelId::RMinusB);
    let (lo, hi) = cmap.range();
    if hi - lo <= 0.0 {
        return Err(Error::DegenerateInput("red-blue difference is constant".into()));
    }
    let bins: Vec<usize> = cmap.values().iter().map(|&v| bin_of(v, lo, hi)).collect();
    let mut hist = [0u64; OTSU_BINS];
    for &b in &bins {
        hist[b] += 1;
    }
    let t = otsu_threshold(&hist).expect("non-constant map populates two bins");
    let (w, h) = cmap.dims();
    CloudMask::new(w, h, bins.into_iter().map(|b| u8::from(b > t)).collect())
}

/// Baseline: fixed threshold on luminance; `gray >= threshold` is cloud.
pub fn segment_fixed_gray(img: &RgbImage, threshold: f64) -> Result<CloudMask> {
    if !(0.0..=255.0).contains(&threshold) {
        return Err(Error::InvalidParams(format!(
            "gray threshold {threshold} outside [0, 255]"
        )));
    }
    let labels = img
        .pixels()
        .iter()
        .map(|&px| u8::from(ChannelId::Gray.apply(px) >= threshold))
        .collect();
    CloudMask::new(img.width(), img.height(), labels)
}
