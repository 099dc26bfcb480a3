//! Cross-view geometric consensus: mask erosion, 3D lifting, outlier
//! cleaning, farthest-point sampling, DBSCAN, majority-vote instance
//! labeling, and ITM-ranked cluster selection.
//!
//! The flow mirrors the lifting stage end to end: each view's mask is eroded
//! and back-projected, each instance cloud is cleaned and FPS-downsampled,
//! the concatenated FPS points are clustered, instances take the modal label
//! of their points, and the cluster with the highest mean ITM score wins.
//! Clustering runs on the FPS subsets; the merged object geometry uses the
//! full per-instance clouds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{backproject_pixel, CameraView, Vec3};

/// DBSCAN noise label.
pub const NOISE: i32 = -1;

/// Erosion never shrinks a mask below this many pixels; the previous
/// (larger) mask is returned instead.
pub const MIN_MASK_PIXELS: usize = 16;

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("mask is {mask_w}x{mask_h} but view {view_id} is {view_w}x{view_h}")]
    MaskDimensionMismatch {
        view_id: String,
        mask_w: u32,
        mask_h: u32,
        view_w: u32,
        view_h: u32,
    },
    #[error("no points survive erosion and depth filtering in view {view_id}")]
    EmptyLift { view_id: String },
    #[error("no valid observation for object \"{name}\"")]
    NoValidObservation { name: String },
}

/// Binary mask as sorted, non-overlapping runs of row-major flattened pixel
/// indices. The layout is shared byte-exactly with the scene-bundle format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    /// `(start, len)` pairs, `start` row-major flattened, sorted, disjoint.
    pub runs: Vec<(u32, u32)>,
}

impl Mask {
    pub fn from_runs(width: u32, height: u32, runs: Vec<(u32, u32)>) -> Self {
        debug_assert!(runs.windows(2).all(|w| w[0].0 + w[0].1 <= w[1].0));
        debug_assert!(runs
            .last()
            .map_or(true, |r| (r.0 + r.1) as u64 <= width as u64 * height as u64));
        Self { width, height, runs }
    }

    /// Builds a mask from a dense row-major boolean grid.
    pub fn from_dense(width: u32, height: u32, dense: &[bool]) -> Self {
        assert_eq!(dense.len(), (width * height) as usize);
        let mut runs = Vec::new();
        let mut i = 0usize;
        while i < dense.len() {
            if dense[i] {
                let start = i;
                while i < dense.len() && dense[i] {
                    i += 1;
                }
                runs.push((start as u32, (i - start) as u32));
            } else {
                i += 1;
            }
        }
        Self { width, height, runs }
    }

    pub fn to_dense(&self) -> Vec<bool> {
        let mut dense = vec![false; (self.width * self.height) as usize];
        for &(start, len) in &self.runs {
            for i in start..start + len {
                dense[i as usize] = true;
            }
        }
        dense
    }

    pub fn pixel_count(&self) -> usize {
        self.runs.iter().map(|&(_, len)| len as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// Iterates `(u, v)` pixel coordinates in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let width = self.width;
        self.runs
            .iter()
            .flat_map(move |&(start, len)| (start..start + len).map(move |i| (i % width, i / width)))
    }

    /// Axis-aligned bounding box `(x0, y0, x1, y1)` with exclusive max, or
    /// `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        for (u, v) in self.pixels() {
            x0 = x0.min(u);
            y0 = y0.min(v);
            x1 = x1.max(u + 1);
            y1 = y1.max(v + 1);
        }
        if x0 == u32::MAX {
            None
        } else {
            Some((x0, y0, x1, y1))
        }
    }
}

/// One view's 2D hypothesis lifted to 3D.
#[derive(Debug, Clone)]
pub struct InstanceObservation {
    pub view_id: String,
    pub mask: Mask,
    pub bbox: (f64, f64, f64, f64),
    pub itm_score: f64,
    pub world_points: Vec<Vec3>,
    pub fps_points: Vec<Vec3>,
}

/// A grounded object's world point cloud with robust statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectState {
    pub name: String,
    pub points: Vec<Vec3>,
    pub centroid: Vec3,
    pub extent: Vec3,
    pub source_views: Vec<String>,
}

/// Tuning knobs for the lifting stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsensusParams {
    /// DBSCAN radius in meters. `None` picks 5% of the object's own
    /// point-cloud AABB diagonal, floored at 0.10 m, which survives the
    /// metric-scale ambiguity of learned depth.
    pub eps: Option<f64>,
    pub min_samples: usize,
    pub fps_budget: usize,
    pub erosion_iterations: usize,
    pub outlier_mad_threshold: f64,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        Self {
            eps: None,
            min_samples: 8,
            fps_budget: 256,
            erosion_iterations: 1,
            outlier_mad_threshold: 2.5,
        }
    }
}

impl ConsensusParams {
    pub fn resolve_eps(&self, object_points: &[Vec3]) -> f64 {
        match self.eps {
            Some(eps) => eps,
            None => (0.05 * aabb_diagonal(object_points)).max(0.10),
        }
    }
}

fn aabb_diagonal(points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    hi.sub(lo).norm()
}

/// 8-connected (3x3 full neighborhood) erosion, `iterations` times. If a
/// step would drop the mask below [`MIN_MASK_PIXELS`], the last mask at or
/// above the floor is returned instead (possibly the input).
pub fn erode_mask(mask: &Mask, iterations: usize) -> Mask {
    let mut current = mask.clone();
    for _ in 0..iterations {
        if current.is_empty() {
            break;
        }
        let eroded = erode_once(&current);
        if eroded.pixel_count() < MIN_MASK_PIXELS {
            return current;
        }
        current = eroded;
    }
    current
}

fn erode_once(mask: &Mask) -> Mask {
    let w = mask.width as usize;
    let h = mask.height as usize;
    let dense = mask.to_dense();
    let mut out = vec![false; dense.len()];
    for v in 0..h {
        for u in 0..w {
            if !dense[v * w + u] {
                continue;
            }
            // Border pixels always erode: the neighborhood extends outside.
            if u == 0 || v == 0 || u == w - 1 || v == h - 1 {
                continue;
            }
            let mut keep = true;
            'scan: for dv in -1i64..=1 {
                for du in -1i64..=1 {
                    let idx = (v as i64 + dv) as usize * w + (u as i64 + du) as usize;
                    if !dense[idx] {
                        keep = false;
                        break 'scan;
                    }
                }
            }
            out[v * w + u] = keep;
        }
    }
    Mask::from_dense(mask.width, mask.height, &out)
}

/// Erodes, back-projects every masked pixel with valid depth, and cleans
/// outliers. Errors when nothing survives.
pub fn lift_instance(
    view: &CameraView,
    mask: &Mask,
    params: &ConsensusParams,
) -> Result<Vec<Vec3>, ConsensusError> {
    if mask.width != view.width || mask.height != view.height {
        return Err(ConsensusError::MaskDimensionMismatch {
            view_id: view.view_id.clone(),
            mask_w: mask.width,
            mask_h: mask.height,
            view_w: view.width,
            view_h: view.height,
        });
    }
    let eroded = erode_mask(mask, params.erosion_iterations);
    let mut points = Vec::with_capacity(eroded.pixel_count());
    for (u, v) in eroded.pixels() {
        if let Ok(p) = backproject_pixel(view, u, v) {
            points.push(p);
        }
    }
    if points.is_empty() {
        return Err(ConsensusError::EmptyLift {
            view_id: view.view_id.clone(),
        });
    }
    Ok(clean_outliers(&points, params.outlier_mad_threshold))
}

/// Keeps points within `threshold * MAD` of the componentwise median, where
/// MAD is the median Euclidean distance to that median. Never returns empty:
/// if everything is filtered, the single point nearest the median survives.
pub fn clean_outliers(points: &[Vec3], mad_threshold: f64) -> Vec<Vec3> {
    assert!(!points.is_empty());
    let center = robust_centroid(points);
    let dists: Vec<f64> = points.iter().map(|p| p.sub(center).norm()).collect();
    let mad = lower_median(&dists);
    let cutoff = mad_threshold * mad.max(1e-9);
    let kept: Vec<Vec3> = points
        .iter()
        .zip(&dists)
        .filter(|(_, &d)| d <= cutoff)
        .map(|(p, _)| *p)
        .collect();
    if kept.is_empty() {
        let (best, _) = dists
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty input");
        vec![points[best]]
    } else {
        kept
    }
}

fn lower_median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

/// Farthest-point sampling with a deterministic start: the point nearest the
/// componentwise median (lowest index on ties). Greedy argmax of min-distance
/// to the selected set, ties again to the lowest index. The seed parameter is
/// reserved for randomized starts; the default strategy ignores it.
pub fn fps_downsample(points: &[Vec3], k: usize, _seed: u64) -> Vec<Vec3> {
    assert!(!points.is_empty());
    if points.len() <= k {
        return points.to_vec();
    }
    let center = robust_centroid(points);
    let start = points
        .iter()
        .enumerate()
        .min_by(|a, b| {
            a.1.sub(center)
                .norm()
                .total_cmp(&b.1.sub(center).norm())
                .then(a.0.cmp(&b.0))
        })
        .map(|(i, _)| i)
        .expect("non-empty input");
    let mut selected = Vec::with_capacity(k);
    let mut taken = vec![false; points.len()];
    let mut min_dist = vec![f64::INFINITY; points.len()];
    let mut current = start;
    selected.push(start);
    taken[start] = true;
    while selected.len() < k {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = p.sub(points[current]).norm();
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if !taken[i] && min_dist[i] > best.1 {
                best = (i, min_dist[i]);
            }
        }
        selected.push(best.0);
        taken[best.0] = true;
        current = best.0;
    }
    selected.into_iter().map(|i| points[i]).collect()
}

/// Standard DBSCAN. A point is core iff it has at least `min_samples`
/// neighbors within `eps` inclusive, counting itself. Labels are assigned in
/// order of the first core point encountered; border points attach to the
/// cluster of their first core neighbor in index order. Noise is `-1`.
pub fn dbscan(points: &[Vec3], eps: f64, min_samples: usize) -> Vec<i32> {
    assert!(eps > 0.0 && min_samples >= 1);
    let n = points.len();
    let eps2 = eps * eps;
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = points[i].sub(points[j]);
            if d.dot(d) <= eps2 {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    let core: Vec<bool> = neighbors
        .iter()
        .map(|nb| nb.len() + 1 >= min_samples)
        .collect();

    let mut labels = vec![NOISE; n];
    let mut next_label = 0i32;
    // Connected components over core points, breadth-first in index order.
    for i in 0..n {
        if !core[i] || labels[i] != NOISE {
            continue;
        }
        let label = next_label;
        next_label += 1;
        labels[i] = label;
        let mut queue = vec![i];
        while let Some(p) = queue.pop() {
            for &q in &neighbors[p] {
                if core[q] && labels[q] == NOISE {
                    labels[q] = label;
                    queue.push(q);
                }
            }
        }
    }
    // Border points: first core neighbor in index order decides.
    for i in 0..n {
        if core[i] || labels[i] != NOISE {
            continue;
        }
        if let Some(&c) = neighbors[i].iter().find(|&&j| core[j]) {
            labels[i] = labels[c];
        }
    }
    labels
}

/// Modal label per instance over its FPS points. `point_labels` aligns with
/// the concatenation of `fps_points` in instance order. Ties break toward
/// the non-noise label with the smallest value; an all-noise instance stays
/// noise.
pub fn assign_instance_labels(instances: &[InstanceObservation], point_labels: &[i32]) -> Vec<i32> {
    let total: usize = instances.iter().map(|o| o.fps_points.len()).sum();
    assert_eq!(total, point_labels.len(), "labels misaligned with fps points");
    let mut out = Vec::with_capacity(instances.len());
    let mut offset = 0usize;
    for obs in instances {
        let slice = &point_labels[offset..offset + obs.fps_points.len()];
        offset += obs.fps_points.len();
        out.push(modal_label(slice));
    }
    out
}

fn modal_label(labels: &[i32]) -> i32 {
    let mut counts: Vec<(i32, usize)> = Vec::new();
    for &l in labels {
        match counts.iter_mut().find(|(k, _)| *k == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    let max = counts.iter().map(|&(_, c)| c).max().unwrap_or(0);
    counts
        .iter()
        .filter(|&&(_, c)| c == max)
        .map(|&(l, _)| l)
        .min_by_key(|&l| if l == NOISE { (1, 0) } else { (0, l) })
        .unwrap_or(NOISE)
}

/// Picks the instance cluster with the highest mean ITM score, ignoring
/// noise. Ties break toward more instances, then more total world points,
/// then the smallest label. If every instance is noise, the single
/// best-scoring instance wins (lowest index on ties).
pub fn select_consensus_cluster(
    instances: &[InstanceObservation],
    instance_labels: &[i32],
) -> Vec<usize> {
    assert!(!instances.is_empty());
    assert_eq!(instances.len(), instance_labels.len());
    let mut clusters: Vec<(i32, Vec<usize>)> = Vec::new();
    for (idx, &label) in instance_labels.iter().enumerate() {
        if label == NOISE {
            continue;
        }
        match clusters.iter_mut().find(|(l, _)| *l == label) {
            Some((_, members)) => members.push(idx),
            None => clusters.push((label, vec![idx])),
        }
    }
    if clusters.is_empty() {
        let best = instances
            .iter()
            .enumerate()
            .max_by(|a, b| {
                a.1.itm_score
                    .total_cmp(&b.1.itm_score)
                    .then(b.0.cmp(&a.0))
            })
            .map(|(i, _)| i)
            .expect("non-empty instances");
        return vec![best];
    }
    clusters
        .into_iter()
        .max_by(|(la, a), (lb, b)| {
            let mean_a: f64 = a.iter().map(|&i| instances[i].itm_score).sum::<f64>() / a.len() as f64;
            let mean_b: f64 = b.iter().map(|&i| instances[i].itm_score).sum::<f64>() / b.len() as f64;
            let points_a: usize = a.iter().map(|&i| instances[i].world_points.len()).sum();
            let points_b: usize = b.iter().map(|&i| instances[i].world_points.len()).sum();
            mean_a
                .total_cmp(&mean_b)
                .then(a.len().cmp(&b.len()))
                .then(points_a.cmp(&points_b))
                .then(lb.cmp(la))
        })
        .map(|(_, members)| members)
        .expect("at least one cluster")
}

/// Componentwise median, lower median for even counts.
pub fn robust_centroid(points: &[Vec3]) -> Vec3 {
    assert!(!points.is_empty());
    let component = |f: fn(&Vec3) -> f64| {
        let values: Vec<f64> = points.iter().map(f).collect();
        lower_median(&values)
    };
    Vec3::new(component(|p| p.x), component(|p| p.y), component(|p| p.z))
}

/// Componentwise p95 - p5 under nearest-rank percentiles.
pub fn robust_extent(points: &[Vec3]) -> Vec3 {
    assert!(!points.is_empty());
    let component = |f: fn(&Vec3) -> f64| {
        let mut values: Vec<f64> = points.iter().map(f).collect();
        values.sort_by(f64::total_cmp);
        (nearest_rank(&values, 95.0) - nearest_rank(&values, 5.0)).max(0.0)
    };
    Vec3::new(component(|p| p.x), component(|p| p.y), component(|p| p.z))
}

fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = ((percentile / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// One view's 2D detection handed to [`lift_object`].
#[derive(Debug, Clone)]
pub struct ViewObservation {
    pub mask: Mask,
    pub bbox: (f64, f64, f64, f64),
    pub itm_score: f64,
}

/// The full consensus stage for one object: per-view lifting, FPS, DBSCAN
/// over the concatenated FPS points, majority-vote instance labels,
/// ITM-ranked selection, and a merge of the selected instances' full clouds.
/// Per-view failures are skipped; at least one view must survive.
pub fn lift_object(
    name: &str,
    views: &[CameraView],
    observations: &[(String, ViewObservation)],
    params: &ConsensusParams,
) -> Result<ObjectState, ConsensusError> {
    let mut instances: Vec<InstanceObservation> = Vec::new();
    for view in views {
        let Some((_, obs)) = observations.iter().find(|(id, _)| *id == view.view_id) else {
            continue;
        };
        let world_points = match lift_instance(view, &obs.mask, params) {
            Ok(points) => points,
            Err(ConsensusError::EmptyLift { .. }) => continue,
            Err(e) => return Err(e),
        };
        let fps_points = fps_downsample(&world_points, params.fps_budget, 0);
        instances.push(InstanceObservation {
            view_id: view.view_id.clone(),
            mask: obs.mask.clone(),
            bbox: obs.bbox,
            itm_score: obs.itm_score,
            world_points,
            fps_points,
        });
    }
    if instances.is_empty() {
        return Err(ConsensusError::NoValidObservation {
            name: name.to_string(),
        });
    }

    let all_fps: Vec<Vec3> = instances
        .iter()
        .flat_map(|o| o.fps_points.iter().copied())
        .collect();
    let all_world: Vec<Vec3> = instances
        .iter()
        .flat_map(|o| o.world_points.iter().copied())
        .collect();
    let eps = params.resolve_eps(&all_world);
    let point_labels = dbscan(&all_fps, eps, params.min_samples);
    let instance_labels = assign_instance_labels(&instances, &point_labels);
    let selected = select_consensus_cluster(&instances, &instance_labels);

    let mut points = Vec::new();
    let mut source_views = Vec::new();
    for &idx in &selected {
        points.extend_from_slice(&instances[idx].world_points);
        source_views.push(instances[idx].view_id.clone());
    }
    Ok(ObjectState {
        name: name.to_string(),
        centroid: robust_centroid(&points),
        extent: robust_extent(&points),
        points,
        source_views,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid_square(width: u32, height: u32, x0: u32, y0: u32, side: u32) -> Mask {
        let mut dense = vec![false; (width * height) as usize];
        for v in y0..y0 + side {
            for u in x0..x0 + side {
                dense[(v * width + u) as usize] = true;
            }
        }
        Mask::from_dense(width, height, &dense)
    }

    /// Independent oracle: direct per-pixel 3x3 neighborhood scan.
    fn erode_oracle(mask: &Mask) -> Mask {
        let w = mask.width as i64;
        let h = mask.height as i64;
        let dense = mask.to_dense();
        let at = |u: i64, v: i64| u >= 0 && v >= 0 && u < w && v < h && dense[(v * w + u) as usize];
        let mut out = vec![false; dense.len()];
        for v in 0..h {
            for u in 0..w {
                let mut all = true;
                for dv in -1..=1 {
                    for du in -1..=1 {
                        all &= at(u + du, v + dv);
                    }
                }
                out[(v * w + u) as usize] = all;
            }
        }
        Mask::from_dense(mask.width, mask.height, &out)
    }

    #[test]
    fn erode_seven_square_textbook() {
        // 7x7 solid block erodes to the inner 5x5 (25 px, above the floor).
        let mask = solid_square(16, 16, 4, 4, 7);
        let eroded = erode_mask(&mask, 1);
        assert_eq!(eroded, solid_square(16, 16, 5, 5, 5));
        assert_eq!(eroded, erode_oracle(&mask));
    }

    #[test]
    fn erode_respects_minimum_size_guard() {
        // 5x5 would erode to 9 px < 16; the guard returns the input.
        let mask = solid_square(16, 16, 4, 4, 5);
        assert_eq!(erode_mask(&mask, 1), mask);
        // A 2-pixel mask is untouchable.
        let tiny = Mask::from_runs(8, 8, vec![(9, 2)]);
        assert_eq!(erode_mask(&tiny, 1), tiny);
    }

    #[test]
    fn erode_twenty_square_two_iterations() {
        let mask = solid_square(32, 32, 4, 4, 20);
        let eroded = erode_mask(&mask, 2);
        assert_eq!(eroded, solid_square(32, 32, 6, 6, 16));
        assert_eq!(eroded, erode_oracle(&erode_oracle(&mask)));
    }

    #[test]
    fn erode_touching_image_border() {
        // Pixels on the image border always erode (neighborhood off-image).
        let mask = solid_square(8, 8, 0, 0, 8);
        let eroded = erode_mask(&mask, 1);
        assert_eq!(eroded, solid_square(8, 8, 1, 1, 6));
    }

    #[test]
    fn clean_outliers_drops_far_point() {
        // Grid of 100 near-origin points plus one 50 m away.
        let mut points = Vec::new();
        for i in 0..100 {
            let t = i as f64;
            points.push(Vec3::new(
                0.01 * ((t * 0.37).sin()),
                0.01 * ((t * 0.71).cos()),
                0.01 * ((t * 0.13).sin()),
            ));
        }
        points.push(Vec3::new(50.0, 0.0, 0.0));
        let kept = clean_outliers(&points, 2.5);
        // Oracle: brute-force distance-to-median scan.
        let center = robust_centroid(&points);
        let mut dists: Vec<f64> = points.iter().map(|p| p.sub(center).norm()).collect();
        dists.sort_by(f64::total_cmp);
        let mad = dists[(dists.len() - 1) / 2];
        let expected = points
            .iter()
            .filter(|p| p.sub(center).norm() <= 2.5 * mad.max(1e-9))
            .count();
        assert_eq!(kept.len(), expected);
        assert!(kept.iter().all(|p| p.x < 10.0), "far point must be gone");
        assert_eq!(kept.len(), 100);
    }

    #[test]
    fn clean_outliers_single_and_identical() {
        let single = vec![Vec3::new(1.0, 2.0, 3.0)];
        assert_eq!(clean_outliers(&single, 2.5), single);
        let same = vec![Vec3::new(0.5, 0.5, 0.5); 7];
        assert_eq!(clean_outliers(&same, 2.5), same);
    }

    #[test]
    fn fps_cube_corners_picks_opposite_pair() {
        let corners: Vec<Vec3> = (0..8)
            .map(|i| {
                Vec3::new(
                    (i & 1) as f64,
                    ((i >> 1) & 1) as f64,
                    ((i >> 2) & 1) as f64,
                )
            })
            .collect();
        let picked = fps_downsample(&corners, 2, 0);
        assert_eq!(picked.len(), 2);
        let d = picked[0].sub(picked[1]).norm();
        // Oracle: the pair realizes the max distance from the deterministic
        // start (corner nearest the lower median, i.e. the origin corner).
        let max_from_origin = corners
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
        assert!((d - max_from_origin).abs() < 1e-12);
        assert!((d - 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fps_small_input_and_ties() {
        let points = vec![Vec3::ZERO, Vec3::X];
        assert_eq!(fps_downsample(&points, 5, 0), points);
        let same = vec![Vec3::new(1.0, 1.0, 1.0); 5];
        let picked = fps_downsample(&same, 3, 0);
        assert_eq!(picked.len(), 3);
        assert!(picked.iter().all(|p| *p == same[0]));
    }

    #[test]
    fn dbscan_two_blobs() {
        let mut points = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.30;
            points.push(Vec3::new(0.05 * t.sin(), 0.05 * t.cos(), 0.0));
            points.push(Vec3::new(5.0 + 0.05 * t.cos(), 0.05 * t.sin(), 0.0));
        }
        let labels = dbscan(&points, 0.2, 4);
        let distinct: std::collections::BTreeSet<i32> = labels.iter().copied().collect();
        assert_eq!(distinct.len(), 2);
        assert!(!labels.contains(&NOISE));
    }

    #[test]
    fn dbscan_isolated_points_are_noise() {
        let points = vec![Vec3::ZERO, Vec3::new(10.0, 0.0, 0.0), Vec3::new(0.0, 10.0, 0.0)];
        assert_eq!(dbscan(&points, 0.5, 4), vec![NOISE; 3]);
    }

    #[test]
    fn dbscan_chain_is_one_cluster() {
        let eps = 0.5;
        let points: Vec<Vec3> = (0..12)
            .map(|i| Vec3::new(i as f64 * 0.9 * eps, 0.0, 0.0))
            .collect();
        let labels = dbscan(&points, eps, 2);
        // Oracle: transitive closure of the eps-neighborhood graph.
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn instance_labels_mode_and_ties() {
        let inst = |n: usize| InstanceObservation {
            view_id: "v".into(),
            mask: Mask::from_runs(4, 4, vec![(0, 1)]),
            bbox: (0.0, 0.0, 1.0, 1.0),
            itm_score: 0.5,
            world_points: vec![Vec3::ZERO; n],
            fps_points: vec![Vec3::ZERO; n],
        };
        let instances = vec![inst(3), inst(2), inst(3)];
        let labels = assign_instance_labels(&instances, &[0, 0, 1, 0, 1, -1, -1, -1]);
        assert_eq!(labels, vec![0, 0, NOISE]);
    }

    #[test]
    fn select_cluster_prefers_higher_mean_itm() {
        let inst = |score: f64| InstanceObservation {
            view_id: "v".into(),
            mask: Mask::from_runs(4, 4, vec![(0, 1)]),
            bbox: (0.0, 0.0, 1.0, 1.0),
            itm_score: score,
            world_points: vec![Vec3::ZERO],
            fps_points: vec![Vec3::ZERO],
        };
        // Cluster 0: mean 0.85. Cluster 1: mean 0.95. Enumerated by hand.
        let instances = vec![inst(0.9), inst(0.8), inst(0.95)];
        assert_eq!(select_consensus_cluster(&instances, &[0, 0, 1]), vec![2]);
        // All-noise fallback: highest score wins.
        let instances = vec![inst(0.2), inst(0.7)];
        assert_eq!(select_consensus_cluster(&instances, &[-1, -1]), vec![1]);
        // Single labeled instance.
        let instances = vec![inst(0.4)];
        assert_eq!(select_consensus_cluster(&instances, &[0]), vec![0]);
    }

    #[test]
    fn robust_centroid_median_semantics() {
        let points = vec![Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0), Vec3::new(100.0, 0.0, 0.0)];
        assert_eq!(robust_centroid(&points), Vec3::new(2.0, 0.0, 0.0));
        let one = vec![Vec3::new(7.0, 8.0, 9.0)];
        assert_eq!(robust_centroid(&one), one[0]);
        let two = vec![Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)];
        assert_eq!(robust_centroid(&two), Vec3::ZERO);
    }

    #[test]
    fn robust_extent_percentile_span() {
        // 100 evenly spaced points on x in [0, 1].
        let points: Vec<Vec3> = (0..100)
            .map(|i| Vec3::new(i as f64 / 99.0, 0.0, 0.0))
            .collect();
        let extent = robust_extent(&points);
        // Oracle: sort and index the nearest-rank percentiles directly.
        let sorted: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let expected = sorted[94] - sorted[4];
        assert!((extent.x - expected).abs() < 1e-12);
        assert!((extent.x - 0.90).abs() < 0.05);
        assert_eq!((extent.y, extent.z), (0.0, 0.0));

        assert_eq!(robust_extent(&[Vec3::new(3.0, 2.0, 1.0)]), Vec3::ZERO);
    }
}
