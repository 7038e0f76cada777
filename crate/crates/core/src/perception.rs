//! Lidar landmark perception: merged point clouds are density-clustered
//! and filtered down to a small set of 2D landmark proposals.
//!
//! The pipeline is `merge_scans` -> `dbscan` -> per-cluster statistics ->
//! variance filter -> epsilon-neighborhood filter -> projection to the
//! ground plane. Traffic cones show up as compact, isolated clusters;
//! ground returns are sparse enough to be labelled noise by the density
//! clustering, and walls or fences fail the per-axis variance bound.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{transform_points, Point2, Point3, RigidTransform3};

#[allow(unused_imports)]
use num_traits::Float;

/// A set of 3D points in a common frame.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame_id: String,
    /// Scan start time in seconds.
    pub timestamp: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame_id: impl Into<String>, timestamp: f64) -> Self {
        Self {
            points,
            frame_id: frame_id.into(),
            timestamp,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A density-connected group of cloud points.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Indices into the parent cloud, ascending.
    pub point_indices: Vec<usize>,
    /// Mean of the member points.
    pub centroid: Point3,
    /// Per-axis empiric variance (Bessel-corrected); zero for singletons.
    pub variance: Point3,
}

impl Cluster {
    pub fn support(&self) -> usize {
        self.point_indices.len()
    }
}

/// Per-cluster statistics. `singleton` flags clusters of one point, whose
/// variance is reported as the zero vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStats {
    pub centroid: Point3,
    pub variance: Point3,
    pub singleton: bool,
}

/// A 2D cone-position candidate, not yet validated by any camera.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LandmarkProposal {
    pub position: Point2,
    /// Number of lidar points supporting the proposal.
    pub support: usize,
    pub timestamp: f64,
}

/// Tuning knobs of the proposal pipeline.
///
/// `eps1` and `eps2` are *squared* radii in m^2: the neighborhood criterion
/// compares squared centroid distances against them. `eps1` bounds the inner
/// region where co-object clusters are allowed, `eps2` the clearance radius
/// in which no unrelated cluster may sit.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerceptionConfig {
    pub dbscan_eps: f64,
    pub dbscan_min_points: usize,
    pub max_variance: Point3,
    pub eps1: f64,
    pub eps2: f64,
    pub max_range: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            dbscan_eps: 0.3,
            dbscan_min_points: 3,
            max_variance: Point3::new(0.05, 0.05, 0.05),
            eps1: 0.25,
            eps2: 2.25,
            max_range: 42.0,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.dbscan_eps > 0.0) || self.dbscan_min_points < 1 {
            return Err(PerceptionError::InvalidConfig("dbscan parameters"));
        }
        if !(self.eps1 > 0.0 && self.eps2 > self.eps1) {
            return Err(PerceptionError::InvalidConfig(
                "neighborhood thresholds need 0 < eps1 < eps2",
            ));
        }
        if !(self.max_range > 0.0) {
            return Err(PerceptionError::InvalidConfig("max_range must be positive"));
        }
        if !(self.max_variance.x > 0.0 && self.max_variance.y > 0.0 && self.max_variance.z > 0.0) {
            return Err(PerceptionError::InvalidConfig(
                "variance limits must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerceptionError {
    /// `merge_scans` got differing scan and extrinsic counts.
    LengthMismatch { scans: usize, extrinsics: usize },
    /// Statistics requested for an empty index set.
    EmptyCluster,
    InvalidConfig(&'static str),
}

impl fmt::Display for PerceptionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerceptionError::LengthMismatch { scans, extrinsics } => {
                write!(f, "{scans} scans but {extrinsics} extrinsics")
            }
            PerceptionError::EmptyCluster => write!(f, "cluster has no points"),
            PerceptionError::InvalidConfig(what) => write!(f, "invalid config: {what}"),
        }
    }
}

impl core::error::Error for PerceptionError {}

/// Transforms each scan into the vehicle frame by its extrinsic and
/// concatenates the results. Output size is the sum of the input sizes;
/// the latest scan timestamp is kept.
pub fn merge_scans(
    scans: &[PointCloud],
    extrinsics: &[RigidTransform3],
) -> Result<PointCloud, PerceptionError> {
    if scans.len() != extrinsics.len() {
        return Err(PerceptionError::LengthMismatch {
            scans: scans.len(),
            extrinsics: extrinsics.len(),
        });
    }
    let mut points = Vec::with_capacity(scans.iter().map(|s| s.len()).sum());
    let mut timestamp = f64::NEG_INFINITY;
    for (scan, tf) in scans.iter().zip(extrinsics) {
        points.extend(transform_points(&scan.points, tf));
        timestamp = timestamp.max(scan.timestamp);
    }
    if !timestamp.is_finite() {
        timestamp = 0.0;
    }
    Ok(PointCloud::new(points, "vehicle", timestamp))
}

/// Density-based clustering over a point cloud.
///
/// A point is a core point when at least `min_points` points (itself
/// included) lie within `eps`; clusters are the connected components of
/// core points under the eps-ball relation. A non-core point inside the
/// eps-ball of some core point joins the cluster of the *nearest* such core
/// point (ties by lexicographic coordinate order), which makes the reported
/// partition independent of input ordering. Remaining points are noise and
/// appear in no cluster.
///
/// Neighbor queries run over a uniform grid with cell size `eps`, so the
/// cost stays near-linear for bounded densities.
pub fn dbscan(cloud: &PointCloud, eps: f64, min_points: usize) -> Vec<Cluster> {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_points >= 1, "min_points must be at least 1");
    let points = &cloud.points;
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }

    let grid = Grid::build(points, eps);
    let eps2 = eps * eps;

    // Pass 1: neighbor lists and the core predicate.
    let mut neighbors: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut is_core = alloc::vec![false; n];
    for (i, p) in points.iter().enumerate() {
        let nb = grid.query(points, p, eps2);
        is_core[i] = nb.len() >= min_points;
        neighbors.push(nb);
    }

    // Pass 2: flood-fill connected components of core points.
    const UNASSIGNED: u32 = u32::MAX;
    let mut label = alloc::vec![UNASSIGNED; n];
    let mut n_clusters = 0u32;
    let mut queue: Vec<u32> = Vec::new();
    for start in 0..n {
        if !is_core[start] || label[start] != UNASSIGNED {
            continue;
        }
        let id = n_clusters;
        n_clusters += 1;
        label[start] = id;
        queue.push(start as u32);
        while let Some(i) = queue.pop() {
            for &j in &neighbors[i as usize] {
                let j = j as usize;
                if is_core[j] && label[j] == UNASSIGNED {
                    label[j] = id;
                    queue.push(j as u32);
                }
            }
        }
    }

    // Pass 3: attach border points to their nearest core neighbor.
    for i in 0..n {
        if is_core[i] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &j in &neighbors[i] {
            let j = j as usize;
            if !is_core[j] {
                continue;
            }
            let d2 = points[i].distance_squared(&points[j]);
            let better = match best {
                None => true,
                Some((bd, bj)) => {
                    d2 < bd || (d2 == bd && lex_less(&points[j], &points[bj]))
                }
            };
            if better {
                best = Some((d2, j));
            }
        }
        if let Some((_, j)) = best {
            label[i] = label[j];
        }
    }

    let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); n_clusters as usize];
    for (i, &l) in label.iter().enumerate() {
        if l != UNASSIGNED {
            members[l as usize].push(i);
        }
    }
    // stable output order: by smallest member index
    members.sort_by_key(|m| m[0]);
    members
        .into_iter()
        .map(|indices| {
            let stats = cluster_stats(cloud, &indices).expect("non-empty by construction");
            Cluster {
                point_indices: indices,
                centroid: stats.centroid,
                variance: stats.variance,
            }
        })
        .collect()
}

fn lex_less(a: &Point3, b: &Point3) -> bool {
    (a.x, a.y, a.z) < (b.x, b.y, b.z)
}

struct Grid {
    cells: BTreeMap<(i64, i64, i64), Vec<u32>>,
    inv_cell: f64,
}

impl Grid {
    fn build(points: &[Point3], cell: f64) -> Self {
        let inv_cell = 1.0 / cell;
        let mut cells: BTreeMap<(i64, i64, i64), Vec<u32>> = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(Self::key(p, inv_cell))
                .or_default()
                .push(i as u32);
        }
        Self { cells, inv_cell }
    }

    fn key(p: &Point3, inv_cell: f64) -> (i64, i64, i64) {
        (
            (p.x * inv_cell).floor() as i64,
            (p.y * inv_cell).floor() as i64,
            (p.z * inv_cell).floor() as i64,
        )
    }

    /// Indices of all points within sqrt(eps2) of `p`, ascending.
    fn query(&self, points: &[Point3], p: &Point3, eps2: f64) -> Vec<u32> {
        let (cx, cy, cz) = Self::key(p, self.inv_cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in ids {
                            if points[i as usize].distance_squared(p) <= eps2 {
                                out.push(i);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Centroid and Bessel-corrected per-axis variance of the indexed points.
pub fn cluster_stats(cloud: &PointCloud, indices: &[usize]) -> Result<ClusterStats, PerceptionError> {
    if indices.is_empty() {
        return Err(PerceptionError::EmptyCluster);
    }
    let m = indices.len() as f64;
    let mut mean = Point3::default();
    for &i in indices {
        let p = cloud.points[i];
        mean.x += p.x;
        mean.y += p.y;
        mean.z += p.z;
    }
    mean.x /= m;
    mean.y /= m;
    mean.z /= m;

    if indices.len() == 1 {
        return Ok(ClusterStats {
            centroid: mean,
            variance: Point3::default(),
            singleton: true,
        });
    }

    let mut var = Point3::default();
    for &i in indices {
        let p = cloud.points[i];
        var.x += (p.x - mean.x) * (p.x - mean.x);
        var.y += (p.y - mean.y) * (p.y - mean.y);
        var.z += (p.z - mean.z) * (p.z - mean.z);
    }
    let denom = m - 1.0;
    var.x /= denom;
    var.y /= denom;
    var.z /= denom;
    Ok(ClusterStats {
        centroid: mean,
        variance: var,
        singleton: false,
    })
}

/// Keeps clusters whose variance is within `max_variance` on every axis.
pub fn filter_variance(clusters: Vec<Cluster>, max_variance: Point3) -> Vec<Cluster> {
    clusters
        .into_iter()
        .filter(|c| {
            c.variance.x <= max_variance.x
                && c.variance.y <= max_variance.y
                && c.variance.z <= max_variance.z
        })
        .collect()
}

/// Epsilon-neighborhood criterion: a cluster survives iff its neighbor
/// count at squared radius `eps1` equals the one at `eps2`, i.e. the
/// annulus between them is empty. Counts compare *squared* centroid
/// distances strictly against the thresholds; each cluster counts itself
/// in both neighborhoods, which cancels in the comparison.
pub fn filter_neighborhood(clusters: Vec<Cluster>, eps1: f64, eps2: f64) -> Vec<Cluster> {
    assert!(
        eps1 > 0.0 && eps2 > eps1,
        "thresholds must satisfy 0 < eps1 < eps2"
    );
    let centroids: Vec<Point3> = clusters.iter().map(|c| c.centroid).collect();
    clusters
        .into_iter()
        .enumerate()
        .filter(|(j, _)| {
            let mut inner = 0usize;
            let mut outer = 0usize;
            for c in &centroids {
                let d2 = centroids[*j].distance_squared(c);
                if d2 < eps1 {
                    inner += 1;
                }
                if d2 < eps2 {
                    outer += 1;
                }
            }
            inner == outer
        })
        .map(|(_, c)| c)
        .collect()
}

/// Full proposal pipeline over a merged vehicle-frame cloud.
///
/// Points beyond `max_range` (planar distance from the rear axle) are
/// dropped first. Surviving clusters are projected to the ground plane;
/// proposals whose squared planar distance is below `eps1` describe the
/// same object and are merged into one support-weighted centroid.
pub fn propose_landmarks(cloud: &PointCloud, cfg: &PerceptionConfig) -> Vec<LandmarkProposal> {
    cfg.validate().expect("invalid perception config");

    let in_range: Vec<Point3> = cloud
        .points
        .iter()
        .copied()
        .filter(|p| p.xy().norm() <= cfg.max_range)
        .collect();
    let ranged = PointCloud::new(in_range, cloud.frame_id.clone(), cloud.timestamp);

    let clusters = dbscan(&ranged, cfg.dbscan_eps, cfg.dbscan_min_points);
    let clusters = filter_variance(clusters, cfg.max_variance);
    let clusters = filter_neighborhood(clusters, cfg.eps1, cfg.eps2);

    // project to 2D, then merge co-object proposals (transitively) within eps1
    let n = clusters.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let a = clusters[i].centroid.xy();
            let b = clusters[j].centroid.xy();
            if a.distance_squared(&b) < cfg.eps1 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }

    let mut merged: BTreeMap<usize, (f64, f64, f64)> = BTreeMap::new(); // root -> (sum_wx, sum_wy, sum_w)
    for (i, c) in clusters.iter().enumerate() {
        let root = find(&mut parent, i);
        let w = c.support() as f64;
        let entry = merged.entry(root).or_insert((0.0, 0.0, 0.0));
        entry.0 += w * c.centroid.x;
        entry.1 += w * c.centroid.y;
        entry.2 += w;
    }

    merged
        .into_values()
        .map(|(wx, wy, w)| LandmarkProposal {
            position: Point2::new(wx / w, wy / w),
            support: w as usize,
            timestamp: cloud.timestamp,
        })
        .collect()
}
