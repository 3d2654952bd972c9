//! SLIC over-segmentation on a single channel.
//!
//! Each pixel is described by the 3-D feature `[value, x, y]`. Clustering is
//! the usual localized k-means: seeds on a regular grid of step
//! `S = sqrt(N / P)`, nudged off edges, then alternating assignment within a
//! `2S x 2S` window and centroid updates. A final pass makes every label one
//! 4-connected region.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ChannelMap;

/// Stop once no center moves by this many pixels.
const CONVERGENCE_PX: f64 = 0.5;
const MAX_REFINE_PASSES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    /// Requested number of superpixels, `P`.
    pub target_count: usize,
    /// Weight `m` of the spatial term.
    pub compactness: f64,
    pub max_iterations: usize,
    /// Divisor applied to value differences. `None` uses the map's own
    /// `max - min`.
    pub value_scale: Option<f64>,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            target_count: 100,
            compactness: 10.0,
            max_iterations: 10,
            value_scale: None,
        }
    }
}

impl SlicParams {
    pub fn new(target_count: usize, compactness: f64) -> Self {
        Self {
            target_count,
            compactness,
            ..Self::default()
        }
    }

    pub fn validate(&self, pixels: usize) -> Result<()> {
        if self.target_count == 0 || self.target_count > pixels {
            return Err(Error::InvalidParams(format!(
                "superpixel count {} outside [1, {pixels}]",
                self.target_count
            )));
        }
        if !(self.compactness.is_finite() && self.compactness > 0.0) {
            return Err(Error::InvalidParams(format!(
                "compactness must be positive, got {}",
                self.compactness
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParams("max_iterations must be at least 1".into()));
        }
        if let Some(s) = self.value_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidParams(format!("value_scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Per-pixel superpixel labels in `[0, count)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelLabeling {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl SuperpixelLabeling {
    /// Wraps an externally produced label raster. Labels must be dense: every
    /// value in `[0, count)` must occur.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || width * height != labels.len() {
            return Err(Error::InvalidRaster(format!(
                "labeling has {} entries, expected {width}x{height}",
                labels.len()
            )));
        }
        let count = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidRaster(format!("label {missing} is unused")));
        }
        Ok(Self {
            width,
            height,
            labels,
            count,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Pixel count of each superpixel.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// True when every label forms exactly one 4-connected region.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.count];
        let mut visited = vec![false; self.labels.len()];
        let mut stack = Vec::new();
        for start in 0..self.labels.len() {
            if visited[start] {
                continue;
            }
            let l = self.labels[start] as usize;
            if seen[l] {
                return false;
            }
            seen[l] = true;
            flood(self.width, self.height, start, &mut stack, |i| {
                if !visited[i] && self.labels[i] as usize == l {
                    visited[i] = true;
                    true
                } else {
                    false
                }
            });
        }
        true
    }

    /// Marks pixels that have a 4-neighbor with a different label.
    pub fn boundary(&self) -> Vec<bool> {
        let (w, h) = (self.width, self.height);
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let l = self.labels[i];
                out[i] = (x > 0 && self.labels[i - 1] != l)
                    || (x + 1 < w && self.labels[i + 1] != l)
                    || (y > 0 && self.labels[i - w] != l)
                    || (y + 1 < h && self.labels[i + w] != l);
            }
        }
        out
    }
}

/// Iterative 4-connected flood fill. `accept(i)` both tests and marks pixel `i`.
fn flood(w: usize, h: usize, start: usize, stack: &mut Vec<usize>, mut accept: impl FnMut(usize) -> bool) -> usize {
    if !accept(start) {
        return 0;
    }
    let mut filled = 0;
    stack.clear();
    stack.push(start);
    while let Some(i) = stack.pop() {
        filled += 1;
        let (x, y) = (i % w, i / w);
        if x > 0 && accept(i - 1) {
            stack.push(i - 1);
        }
        if x + 1 < w && accept(i + 1) {
            stack.push(i + 1);
        }
        if y > 0 && accept(i - w) {
            stack.push(i - w);
        }
        if y + 1 < h && accept(i + w) {
            stack.push(i + w);
        }
    }
    filled
}

#[derive(Debug, Clone, Copy)]
struct Center {
    value: f64,
    x: f64,
    y: f64,
}

/// Grid shape `(nx, ny)` whose product approximates `target` cells of side `step`.
fn seed_grid(width: usize, height: usize, target: usize, step: f64) -> (usize, usize) {
    let nx = ((width as f64 / step).round() as usize).clamp(1, target.min(width));
    let ny = ((target as f64 / nx as f64).round() as usize).clamp(1, height);
    (nx, ny)
}

fn gradient(values: &[f64], w: usize, h: usize, x: usize, y: usize) -> f64 {
    let at = |x: usize, y: usize| values[y * w + x];
    let dx = at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y);
    let dy = at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1));
    dx * dx + dy * dy
}

fn initial_centers(values: &[f64], w: usize, h: usize, target: usize, step: f64) -> Vec<Center> {
    let (nx, ny) = seed_grid(w, h, target, step);
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let sx = (((i as f64 + 0.5) * w as f64 / nx as f64) as usize).min(w - 1);
            let sy = (((j as f64 + 0.5) * h as f64 / ny as f64) as usize).min(h - 1);
            // move to the lowest-gradient pixel of the 3x3 neighborhood; on
            // grids finer than 3 px neighboring seeds could collide
            let (mut bx, mut by) = (sx, sy);
            let mut best = gradient(values, w, h, sx, sy);
            let reach = usize::from(step >= 3.0);
            for yy in sy.saturating_sub(reach)..=(sy + reach).min(h - 1) {
                for xx in sx.saturating_sub(reach)..=(sx + reach).min(w - 1) {
                    let g = gradient(values, w, h, xx, yy);
                    if g < best {
                        best = g;
                        (bx, by) = (xx, yy);
                    }
                }
            }
            centers.push(Center {
                value: values[by * w + bx],
                x: bx as f64,
                y: by as f64,
            });
        }
    }
    centers
}

struct Assigner<'a> {
    values: &'a [f64],
    w: usize,
    h: usize,
    step: f64,
    spatial_weight: f64,
}

impl Assigner<'_> {
    fn distance(&self, c: &Center, v: f64, x: usize, y: usize) -> f64 {
        let dv = v - c.value;
        let dx = x as f64 - c.x;
        let dy = y as f64 - c.y;
        dv * dv + self.spatial_weight * (dx * dx + dy * dy)
    }

    /// One assignment sweep. Rows are processed in parallel; each row reads
    /// only the (immutable) centers of the previous update.
    fn assign(&self, centers: &[Center], labels: &mut [u32]) {
        let windows: Vec<(usize, usize, usize, usize)> = centers
            .iter()
            .map(|c| {
                let x0 = (c.x - self.step).floor().max(0.0) as usize;
                let x1 = ((c.x + self.step).ceil() as usize).min(self.w - 1);
                let y0 = (c.y - self.step).floor().max(0.0) as usize;
                let y1 = ((c.y + self.step).ceil() as usize).min(self.h - 1);
                (x0, x1, y0, y1)
            })
            .collect();
        labels.par_chunks_mut(self.w).enumerate().for_each(|(y, row)| {
            let mut best = vec![f64::INFINITY; self.w];
            row.fill(u32::MAX);
            for (k, (c, &(x0, x1, y0, y1))) in centers.iter().zip(&windows).enumerate() {
                if y < y0 || y > y1 {
                    continue;
                }
                for x in x0..=x1 {
                    let d = self.distance(c, self.values[y * self.w + x], x, y);
                    if d < best[x] {
                        best[x] = d;
                        row[x] = k as u32;
                    }
                }
            }
            // pixels outside every window fall back to the global nearest center
            for (x, slot) in row.iter_mut().enumerate() {
                if *slot == u32::MAX {
                    let v = self.values[y * self.w + x];
                    let (k, _) = centers
                        .iter()
                        .enumerate()
                        .map(|(k, c)| (k, self.distance(c, v, x, y)))
                        .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
                    *slot = k as u32;
                }
            }
        });
    }

    /// Lets each pixel move to a 4-neighbor's superpixel when that center is
    /// nearer. Repeats until stable. Reaches pixels (such as region tips at
    /// the border) that no same-valued center's window covers.
    fn refine_boundaries(&self, centers: &[Center], labels: &mut [u32]) {
        let (w, h) = (self.w, self.h);
        for _ in 0..MAX_REFINE_PASSES {
            let prev = labels.to_vec();
            let changed: usize = labels
                .par_chunks_mut(w)
                .enumerate()
                .map(|(y, row)| {
                    let mut changed = 0;
                    for (x, slot) in row.iter_mut().enumerate() {
                        let i = y * w + x;
                        let v = self.values[i];
                        let mut best = prev[i];
                        let mut best_d = self.distance(&centers[best as usize], v, x, y);
                        let around = [
                            (x > 0).then(|| i - 1),
                            (x + 1 < w).then(|| i + 1),
                            (y > 0).then(|| i - w),
                            (y + 1 < h).then(|| i + w),
                        ];
                        for q in around.into_iter().flatten() {
                            let l = prev[q];
                            let d = self.distance(&centers[l as usize], v, x, y);
                            if d < best_d || (d == best_d && l < best) {
                                best = l;
                                best_d = d;
                            }
                        }
                        if best != prev[i] {
                            *slot = best;
                            changed += 1;
                        }
                    }
                    changed
                })
                .sum();
            if changed == 0 {
                break;
            }
        }
    }
}

/// Over-segments `cmap` into roughly `params.target_count` superpixels.
pub fn slic_oversegment(cmap: &ChannelMap, params: &SlicParams) -> Result<SuperpixelLabeling> {
    let (w, h) = cmap.dims();
    let n = w * h;
    params.validate(n)?;

    let (lo, hi) = cmap.range();
    let scale = params.value_scale.unwrap_or(if hi > lo { hi - lo } else { 1.0 });
    let values: Vec<f64> = cmap.values().iter().map(|v| (v - lo) / scale).collect();

    let step = (n as f64 / params.target_count as f64).sqrt();
    let assigner = Assigner {
        values: &values,
        w,
        h,
        step,
        spatial_weight: (params.compactness / step).powi(2),
    };

    let mut centers = initial_centers(&values, w, h, params.target_count, step);
    let mut labels = vec![0u32; n];
    for _ in 0..params.max_iterations {
        assigner.assign(&centers, &mut labels);
        assigner.refine_boundaries(&centers, &mut labels);

        let mut sums = vec![[0.0f64; 4]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            s[0] += values[i];
            s[1] += (i % w) as f64;
            s[2] += (i / w) as f64;
            s[3] += 1.0;
        }
        let mut moved: f64 = 0.0;
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[3] == 0.0 {
                continue;
            }
            let next = Center {
                value: s[0] / s[3],
                x: s[1] / s[3],
                y: s[2] / s[3],
            };
            moved = moved.max((next.x - c.x).hypot(next.y - c.y));
            *c = next;
        }
        if moved < CONVERGENCE_PX {
            break;
        }
    }

    let min_size = ((step * step / 4.0) as usize).max(1);
    Ok(enforce_connectivity(&values, w, h, &labels, min_size))
}

struct Fragment {
    size: usize,
    value_sum: f64,
    pixels: Vec<u32>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Splits labels into 4-connected components, then folds every component
/// smaller than `min_size` into an adjacent one. The absorbing neighbor is the
/// one whose mean value is closest, then the one sharing the longest border.
fn enforce_connectivity(values: &[f64], w: usize, h: usize, labels: &[u32], min_size: usize) -> SuperpixelLabeling {
    let n = w * h;
    let mut comp = vec![usize::MAX; n];
    let mut frags: Vec<Fragment> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = frags.len();
        let l = labels[start];
        let mut pixels = Vec::new();
        flood(w, h, start, &mut stack, |i| {
            if comp[i] == usize::MAX && labels[i] == l {
                comp[i] = id;
                pixels.push(i as u32);
                true
            } else {
                false
            }
        });
        frags.push(Fragment {
            size: pixels.len(),
            value_sum: pixels.iter().map(|&i| values[i as usize]).sum(),
            pixels,
        });
    }

    let mut parent: Vec<usize> = (0..frags.len()).collect();
    let mut small: Vec<usize> = (0..frags.len()).filter(|&f| frags[f].size < min_size).collect();
    small.sort_by_key(|&f| (frags[f].size, f));

    for f in small {
        if find(&mut parent, f) != f || frags[f].size >= min_size {
            continue;
        }
        // neighbor root -> shared border length
        let mut borders: Vec<(usize, usize)> = Vec::new();
        for &p in &frags[f].pixels {
            let p = p as usize;
            let (x, y) = (p % w, p / w);
            let around = [
                (x > 0).then(|| p - 1),
                (x + 1 < w).then(|| p + 1),
                (y > 0).then(|| p - w),
                (y + 1 < h).then(|| p + w),
            ];
            for q in around.into_iter().flatten() {
                let r = find(&mut parent, comp[q]);
                if r == f {
                    continue;
                }
                match borders.iter_mut().find(|(root, _)| *root == r) {
                    Some((_, len)) => *len += 1,
                    None => borders.push((r, 1)),
                }
            }
        }
        let mean = frags[f].value_sum / frags[f].size as f64;
        let target = borders
            .iter()
            .map(|&(r, len)| {
                let diff = (frags[r].value_sum / frags[r].size as f64 - mean).abs();
                (r, len, diff)
            })
            .min_by(|a, b| a.2.total_cmp(&b.2).then(b.1.cmp(&a.1)).then(a.0.cmp(&b.0)));
        let Some((target, _, _)) = target else {
            continue;
        };
        parent[f] = target;
        let moved = std::mem::take(&mut frags[f].pixels);
        let (size, sum) = (frags[f].size, frags[f].value_sum);
        let t = &mut frags[target];
        t.size += size;
        t.value_sum += sum;
        t.pixels.extend(moved);
    }

    let mut remap = vec![u32::MAX; frags.len()];
    let mut count = 0u32;
    let mut out = vec![0u32; n];
    for i in 0..n {
        let r = find(&mut parent, comp[i]);
        if remap[r] == u32::MAX {
            remap[r] = count;
            count += 1;
        }
        out[i] = remap[r];
    }
    SuperpixelLabeling {
        width: w,
        height: h,
        labels: out,
        count: count as usize,
    }
}
