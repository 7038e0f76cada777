//! Motion planning: centerline reference path and quasi-steady-state
//! velocity profile.
//!
//! The centerline is built from the landmark map: Delaunay triangulation
//! over the confirmed cones, midpoints of edges joining a blue (left) and
//! a yellow (right) cone, chained by a greedy heading-gated walk from the
//! vehicle pose, resampled at uniform arc length. The velocity target is
//! the classic three-pass profile (curvature limit, forward traction pass,
//! backward braking pass) against a speed-indexed acceleration-limit map.

pub mod delaunay;

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::camera::ClassLabel;
use crate::geometry::{wrap_radians, Point2, Pose2D};
use crate::localization::LandmarkMap;

#[allow(unused_imports)]
use num_traits::Float;

/// Uniform arc-length spacing of centerline samples, meters.
pub const SAMPLE_SPACING: f64 = 0.5;
/// Half-angle of the forward cone used by the greedy node walk.
pub const WALK_HALF_ANGLE: f64 = 75.0 * PI / 180.0;
/// Longest accepted blue-yellow pair edge; longer Delaunay edges cut
/// across the track interior rather than across the lane.
pub const MAX_PAIR_EDGE: f64 = 7.0;
/// Longest step the walk may take between consecutive centerline nodes.
pub const MAX_WALK_STEP: f64 = 6.5;
/// Moving-average half-width (in samples) applied before curvature
/// estimation.
const SMOOTH_HALF_WIDTH: usize = 2;

/// One arc-length-parameterized sample of the reference path.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CenterlineSample {
    pub s: f64,
    pub position: Point2,
    pub heading: f64,
    pub curvature: f64,
}

/// The reference path. For closed paths `total_length` includes the
/// segment that closes the loop, and arc lengths wrap.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CenterlinePath {
    pub samples: Vec<CenterlineSample>,
    pub closed: bool,
    pub total_length: f64,
}

impl CenterlinePath {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Interpolated sample at arc length `s` (wrapped when closed,
    /// clamped otherwise).
    pub fn sample_at(&self, s: f64) -> CenterlineSample {
        assert!(!self.samples.is_empty(), "empty path");
        let s = if self.closed {
            let r = s - self.total_length * (s / self.total_length).floor();
            if r >= self.total_length {
                0.0
            } else {
                r
            }
        } else {
            s.clamp(0.0, self.total_length)
        };
        // binary search for the segment
        let idx = match self
            .samples
            .binary_search_by(|sam| sam.s.partial_cmp(&s).expect("finite"))
        {
            Ok(i) => return self.samples[i],
            Err(i) => i,
        };
        if idx == 0 {
            return self.samples[0];
        }
        let a = self.samples[idx - 1];
        let (b, seg_end) = if idx < self.samples.len() {
            let b = self.samples[idx];
            let end = b.s;
            (b, end)
        } else if self.closed {
            // wrap segment back to the first sample
            (self.samples[0], self.total_length)
        } else {
            return *self.samples.last().expect("non-empty");
        };
        let span = (seg_end - a.s).max(1e-12);
        let t = (s - a.s) / span;
        CenterlineSample {
            s,
            position: Point2::new(
                a.position.x + t * (b.position.x - a.position.x),
                a.position.y + t * (b.position.y - a.position.y),
            ),
            heading: a.heading + t * wrap_radians(b.heading - a.heading),
            curvature: a.curvature + t * (b.curvature - a.curvature),
        }
    }

    /// Arc length of the point on the path closest to `p`.
    pub fn project(&self, p: Point2) -> f64 {
        assert!(!self.samples.is_empty(), "empty path");
        let mut best_s = 0.0;
        let mut best_d2 = f64::INFINITY;
        let n = self.samples.len();
        let seg_count = if self.closed { n } else { n - 1 };
        for i in 0..seg_count.max(1) {
            let a = &self.samples[i];
            let (b_pos, b_s) = if i + 1 < n {
                (self.samples[i + 1].position, self.samples[i + 1].s)
            } else if self.closed {
                (self.samples[0].position, self.total_length)
            } else {
                break;
            };
            let vx = b_pos.x - a.position.x;
            let vy = b_pos.y - a.position.y;
            let len2 = vx * vx + vy * vy;
            let t = if len2 > 0.0 {
                (((p.x - a.position.x) * vx + (p.y - a.position.y) * vy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = Point2::new(a.position.x + t * vx, a.position.y + t * vy);
            let d2 = p.distance_squared(&q);
            if d2 < best_d2 {
                best_d2 = d2;
                best_s = a.s + t * (b_s - a.s);
            }
        }
        best_s
    }
}

/// Speed-indexed acceleration-limit map ("gg-speed" data).
///
/// All tables share the ascending `speeds` grid and evaluate by linear
/// interpolation with flat extrapolation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GgsMap {
    pub speeds: Vec<f64>,
    pub a_lat_max: Vec<f64>,
    pub a_accel_max: Vec<f64>,
    pub a_brake_max: Vec<f64>,
    pub v_cap: f64,
}

impl GgsMap {
    pub fn new(
        speeds: Vec<f64>,
        a_lat_max: Vec<f64>,
        a_accel_max: Vec<f64>,
        a_brake_max: Vec<f64>,
        v_cap: f64,
    ) -> Result<Self, PlannerError> {
        let n = speeds.len();
        if n == 0 || a_lat_max.len() != n || a_accel_max.len() != n || a_brake_max.len() != n {
            return Err(PlannerError::InvalidGgs("table lengths differ"));
        }
        if !speeds.windows(2).all(|w| w[1] > w[0]) {
            return Err(PlannerError::InvalidGgs("speed grid must ascend"));
        }
        if !(v_cap > 0.0) {
            return Err(PlannerError::InvalidGgs("v_cap must be positive"));
        }
        let positive = |t: &[f64]| t.iter().all(|&v| v > 0.0 && v.is_finite());
        if !positive(&a_lat_max) || !positive(&a_accel_max) || !positive(&a_brake_max) {
            return Err(PlannerError::InvalidGgs("limits must be positive"));
        }
        Ok(Self {
            speeds,
            a_lat_max,
            a_accel_max,
            a_brake_max,
            v_cap,
        })
    }

    /// Constant-limit map, handy for tests and analytic fixtures.
    pub fn uniform(a_lat: f64, a_accel: f64, a_brake: f64, v_cap: f64) -> Self {
        Self::new(
            alloc::vec![0.0, v_cap],
            alloc::vec![a_lat, a_lat],
            alloc::vec![a_accel, a_accel],
            alloc::vec![a_brake, a_brake],
            v_cap,
        )
        .expect("uniform map is valid")
    }

    /// Offline table from a point-mass friction model: lateral grip
    /// `mu * g`, traction limited by grip and engine power, braking by
    /// grip plus `brake_margin`.
    pub fn point_mass(
        mass: f64,
        mu: f64,
        power_w: f64,
        brake_margin: f64,
        v_cap: f64,
        n_points: usize,
    ) -> Self {
        assert!(n_points >= 2);
        let g = 9.81;
        let mut speeds = Vec::with_capacity(n_points);
        let mut a_lat = Vec::with_capacity(n_points);
        let mut a_acc = Vec::with_capacity(n_points);
        let mut a_brk = Vec::with_capacity(n_points);
        for i in 0..n_points {
            let v = v_cap * i as f64 / (n_points - 1) as f64;
            speeds.push(v);
            a_lat.push(mu * g);
            a_acc.push((mu * g).min(power_w / (mass * v.max(1.0))));
            a_brk.push(mu * g + brake_margin);
        }
        Self::new(speeds, a_lat, a_acc, a_brk, v_cap).expect("point-mass map is valid")
    }

    fn lookup(&self, table: &[f64], v: f64) -> f64 {
        let n = self.speeds.len();
        if v <= self.speeds[0] {
            return table[0];
        }
        if v >= self.speeds[n - 1] {
            return table[n - 1];
        }
        let idx = self
            .speeds
            .partition_point(|&s| s <= v)
            .min(n - 1);
        let (s0, s1) = (self.speeds[idx - 1], self.speeds[idx]);
        let t = (v - s0) / (s1 - s0);
        table[idx - 1] * (1.0 - t) + table[idx] * t
    }

    pub fn a_lat(&self, v: f64) -> f64 {
        self.lookup(&self.a_lat_max, v)
    }

    pub fn a_accel(&self, v: f64) -> f64 {
        self.lookup(&self.a_accel_max, v)
    }

    pub fn a_brake(&self, v: f64) -> f64 {
        self.lookup(&self.a_brake_max, v)
    }

    /// The same map with every limit scaled by `factor` (used to keep the
    /// tires in their linear region).
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0);
        Self {
            speeds: self.speeds.clone(),
            a_lat_max: self.a_lat_max.iter().map(|a| a * factor).collect(),
            a_accel_max: self.a_accel_max.iter().map(|a| a * factor).collect(),
            a_brake_max: self.a_brake_max.iter().map(|a| a * factor).collect(),
            v_cap: self.v_cap,
        }
    }
}

/// Velocity target per centerline sample, in `(0, v_cap]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VelocityProfile {
    pub v: Vec<f64>,
}

/// Smallest emitted velocity target; keeps the profile strictly positive.
pub const V_TARGET_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum PlannerError {
    /// Not enough confirmed cones of each color ahead of the vehicle.
    NotEnoughCones { blue: usize, yellow: usize },
    /// The walk produced no usable nodes.
    NoPath,
    InvalidGgs(&'static str),
}

impl fmt::Display for PlannerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlannerError::NotEnoughCones { blue, yellow } => write!(
                f,
                "need at least 2 blue and 2 yellow confirmed cones, have {blue} blue / {yellow} yellow"
            ),
            PlannerError::NoPath => write!(f, "no centerline nodes reachable from the pose"),
            PlannerError::InvalidGgs(what) => write!(f, "invalid ggs table: {what}"),
        }
    }
}

impl core::error::Error for PlannerError {}

/// Builds the centerline from the confirmed landmarks of the map.
///
/// Blue cones delimit the left side, yellow cones the right. Midpoints of
/// Delaunay edges joining a blue and a yellow cone (shorter than
/// [`MAX_PAIR_EDGE`]) form the node set; nodes are chained by a greedy
/// forward walk from the vehicle pose, taking the nearest unvisited node
/// within [`WALK_HALF_ANGLE`] of the current heading. The chain is
/// resampled at [`SAMPLE_SPACING`], lightly smoothed, and closed when it
/// returns to its start.
pub fn extract_centerline(
    map: &LandmarkMap,
    pose: &Pose2D,
    lookahead: f64,
) -> Result<CenterlinePath, PlannerError> {
    let mut points: Vec<Point2> = Vec::new();
    let mut is_blue: Vec<bool> = Vec::new();
    let mut blue = 0usize;
    let mut yellow = 0usize;
    for lm in &map.landmarks {
        match lm.color {
            ClassLabel::SmallBlue => {
                points.push(lm.position);
                is_blue.push(true);
                blue += 1;
            }
            ClassLabel::SmallYellow => {
                points.push(lm.position);
                is_blue.push(false);
                yellow += 1;
            }
            _ => {}
        }
    }
    if blue < 2 || yellow < 2 {
        return Err(PlannerError::NotEnoughCones { blue, yellow });
    }

    let tri = delaunay::triangulate(&points);
    let mut nodes: Vec<Point2> = Vec::new();
    for (a, b) in tri.edges() {
        if is_blue[a] != is_blue[b] && points[a].distance(&points[b]) <= MAX_PAIR_EDGE {
            nodes.push(Point2::new(
                (points[a].x + points[b].x) / 2.0,
                (points[a].y + points[b].y) / 2.0,
            ));
        }
    }
    if nodes.is_empty() {
        return Err(PlannerError::NoPath);
    }

    // greedy forward walk
    let mut visited = alloc::vec![false; nodes.len()];
    let mut chain: Vec<Point2> = Vec::new();
    let mut here = pose.position();
    let mut heading = pose.psi;
    let mut length = 0.0;
    loop {
        let mut best: Option<(f64, usize)> = None;
        for (i, node) in nodes.iter().enumerate() {
            if visited[i] {
                continue;
            }
            let dx = node.x - here.x;
            let dy = node.y - here.y;
            let d = (dx * dx + dy * dy).sqrt();
            if d < 1e-6 || d > MAX_WALK_STEP {
                continue;
            }
            let bearing = wrap_radians(dy.atan2(dx) - heading);
            if bearing.abs() > WALK_HALF_ANGLE {
                continue;
            }
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let Some((d, i)) = best else { break };
        visited[i] = true;
        let node = nodes[i];
        heading = (node.y - here.y).atan2(node.x - here.x);
        here = node;
        chain.push(node);
        length += d;
        if length >= lookahead {
            break;
        }
    }
    if chain.len() < 2 {
        return Err(PlannerError::NoPath);
    }

    // closed if the walk returned next to its first node
    let closed = chain.len() >= 8
        && chain
            .first()
            .expect("non-empty")
            .distance(chain.last().expect("non-empty"))
            <= MAX_WALK_STEP;

    Ok(build_path(&chain, closed))
}

/// Resamples a node chain at uniform spacing, smooths it, and attaches
/// heading and curvature by central differences.
pub fn build_path(chain: &[Point2], closed: bool) -> CenterlinePath {
    // resample the polyline (including the closing segment when closed)
    let mut poly: Vec<Point2> = chain.to_vec();
    if closed {
        poly.push(chain[0]);
    }
    let mut cum = alloc::vec![0.0];
    for w in poly.windows(2) {
        let d = w[0].distance(&w[1]);
        cum.push(cum.last().expect("non-empty") + d);
    }
    let total = *cum.last().expect("non-empty");
    // closed paths use an adjusted step so the spacing stays uniform
    // across the wrap seam (a ragged seam bends the smoothed curvature)
    let (n_samples, step) = if closed {
        let n = ((total / SAMPLE_SPACING).round() as usize).max(3);
        (n, total / n as f64)
    } else {
        (((total / SAMPLE_SPACING).floor() as usize) + 1, SAMPLE_SPACING)
    };
    let mut positions: Vec<Point2> = Vec::with_capacity(n_samples);
    let mut seg = 0usize;
    for k in 0..n_samples {
        let s = (k as f64 * step).min(total);
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let span = (cum[seg + 1] - cum[seg]).max(1e-12);
        let t = (s - cum[seg]) / span;
        positions.push(Point2::new(
            poly[seg].x + t * (poly[seg + 1].x - poly[seg].x),
            poly[seg].y + t * (poly[seg + 1].y - poly[seg].y),
        ));
    }

    let m = positions.len();
    let smooth = |idx: isize| -> Point2 {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut count = 0.0;
        for o in -(SMOOTH_HALF_WIDTH as isize)..=(SMOOTH_HALF_WIDTH as isize) {
            let j = idx + o;
            let j = if closed {
                j.rem_euclid(m as isize) as usize
            } else if j < 0 || j >= m as isize {
                continue;
            } else {
                j as usize
            };
            sx += positions[j].x;
            sy += positions[j].y;
            count += 1.0;
        }
        Point2::new(sx / count, sy / count)
    };
    let smoothed: Vec<Point2> = (0..m as isize).map(smooth).collect();

    // rebuild arc length over the smoothed polyline
    let mut s_acc = alloc::vec![0.0];
    for w in smoothed.windows(2) {
        s_acc.push(s_acc.last().expect("non-empty") + w[0].distance(&w[1]));
    }
    let total_length = if closed {
        s_acc.last().expect("non-empty")
            + smoothed
                .last()
                .expect("non-empty")
                .distance(&smoothed[0])
    } else {
        *s_acc.last().expect("non-empty")
    };

    let at = |i: isize| -> Point2 {
        if closed {
            smoothed[i.rem_euclid(m as isize) as usize]
        } else {
            smoothed[i.clamp(0, m as isize - 1) as usize]
        }
    };
    let mut samples = Vec::with_capacity(m);
    for i in 0..m as isize {
        let prev = at(i - 1);
        let next = at(i + 1);
        let heading = (next.y - prev.y).atan2(next.x - prev.x);
        samples.push(CenterlineSample {
            s: s_acc[i as usize],
            position: smoothed[i as usize],
            heading,
            curvature: 0.0,
        });
    }
    // curvature = d(heading)/ds by central differences
    for i in 0..m as isize {
        let (hp, hn, ds) = if closed {
            let hp = samples[(i - 1).rem_euclid(m as isize) as usize].heading;
            let hn = samples[(i + 1).rem_euclid(m as isize) as usize].heading;
            let ds = at(i).distance(&at(i - 1)) + at(i).distance(&at(i + 1));
            (hp, hn, ds)
        } else {
            let lo = (i - 1).max(0);
            let hi = (i + 1).min(m as isize - 1);
            let ds = samples[hi as usize].s - samples[lo as usize].s;
            (samples[lo as usize].heading, samples[hi as usize].heading, ds)
        };
        if ds > 1e-9 {
            samples[i as usize].curvature = wrap_radians(hn - hp) / ds;
        }
    }

    CenterlinePath {
        samples,
        closed,
        total_length,
    }
}

/// Quasi-steady-state velocity profile over a path.
///
/// Three passes: (i) pointwise curvature limit solved by fixed-point
/// iteration, (ii) forward traction pass from the current speed, (iii)
/// backward braking pass (to standstill at the end of open paths; periodic
/// for closed ones). Longitudinal headroom couples to the lateral load via
/// a friction ellipse. The result is the pointwise minimum, floored at
/// [`V_TARGET_FLOOR`].
pub fn velocity_profile(path: &CenterlinePath, ggs: &GgsMap, v_now: f64) -> VelocityProfile {
    let n = path.samples.len();
    assert!(n > 0, "empty path");
    let ds: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 < n {
                path.samples[i + 1].s - path.samples[i].s
            } else if path.closed {
                path.total_length - path.samples[i].s
            } else {
                0.0
            }
        })
        .collect();

    // pass (i): curvature limit, v = sqrt(a_lat(v) / |kappa|) by fixed point
    let mut v_curv = alloc::vec![ggs.v_cap; n];
    for i in 0..n {
        let kappa = path.samples[i].curvature.abs();
        if kappa < 1e-9 {
            continue;
        }
        let mut v = ggs.v_cap;
        for _ in 0..30 {
            v = (ggs.a_lat(v) / kappa).sqrt().min(ggs.v_cap);
        }
        v_curv[i] = v;
    }

    let ellipse = |v: f64, kappa: f64, a_cap: f64| -> f64 {
        let a_lat = ggs.a_lat(v);
        let used = (kappa.abs() * v * v / a_lat).min(1.0);
        a_cap * (1.0 - used * used).max(0.0).sqrt()
    };

    // pass (ii): forward traction, possibly twice around for closed paths
    let laps = if path.closed { 2 } else { 1 };
    let mut fwd = alloc::vec![f64::INFINITY; n];
    let mut v = v_now.min(ggs.v_cap).max(0.0);
    for lap in 0..laps {
        for i in 0..n {
            if lap == laps - 1 {
                fwd[i] = fwd[i].min(v.min(v_curv[i]));
            }
            v = v.min(v_curv[i]);
            let a = ellipse(v, path.samples[i].curvature, ggs.a_accel(v));
            v = (v * v + 2.0 * a * ds[i]).sqrt().min(ggs.v_cap);
        }
        if lap == 0 && laps == 2 {
            // second lap continues from the wrapped speed
        }
    }

    // pass (iii): backward braking
    let mut bwd = alloc::vec![f64::INFINITY; n];
    let mut v_b = if path.closed { fwd[0] } else { 0.0 };
    for lap in 0..laps {
        for i in (0..n).rev() {
            let limit_here = v_curv[i];
            if lap == laps - 1 {
                bwd[i] = bwd[i].min(v_b.max(0.0)).min(limit_here);
            }
            let v_entry = v_b.min(limit_here);
            let a = ellipse(v_entry, path.samples[i].curvature, ggs.a_brake(v_entry));
            v_b = (v_entry * v_entry + 2.0 * a * ds[if i == 0 { n - 1 } else { i - 1 }]).sqrt();
        }
    }

    let v = (0..n)
        .map(|i| v_curv[i].min(fwd[i]).min(bwd[i]).max(V_TARGET_FLOOR))
        .collect();
    VelocityProfile { v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::{MapConfig, WorldProposal};
    use approx::assert_relative_eq;

    fn map_from(cones: &[(f64, f64, ClassLabel)]) -> LandmarkMap {
        let mut map = LandmarkMap::new(MapConfig::default());
        for &(x, y, color) in cones {
            for _ in 0..2 {
                map.update(&[WorldProposal {
                    position: Point2::new(x, y),
                    color: Some(color),
                }]);
            }
        }
        map
    }

    #[test]
    fn straight_corridor_centerline() {
        let mut cones = Vec::new();
        for i in 0..14 {
            let x = i as f64 * 3.0;
            cones.push((x, 1.5, ClassLabel::SmallBlue));
            cones.push((x, -1.5, ClassLabel::SmallYellow));
        }
        let map = map_from(&cones);
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        let path = extract_centerline(&map, &pose, 100.0).unwrap();
        assert!(!path.closed);
        assert!(path.total_length > 30.0);
        for s in &path.samples {
            assert!(s.position.y.abs() < 0.05, "y = {}", s.position.y);
            assert!(s.curvature.abs() < 1e-3, "kappa = {}", s.curvature);
        }
    }

    #[test]
    fn circle_arc_centerline_has_right_radius() {
        let mut cones = Vec::new();
        let n = 60;
        for i in 0..n {
            let th = i as f64 / n as f64 * 2.0 * PI;
            cones.push((11.0 * th.cos(), 11.0 * th.sin(), ClassLabel::SmallBlue));
            cones.push((9.0 * th.cos(), 9.0 * th.sin(), ClassLabel::SmallYellow));
        }
        let map = map_from(&cones);
        // start on the circle, heading tangentially (ccw)
        let pose = Pose2D::new(10.0, 0.0, PI / 2.0);
        let path = extract_centerline(&map, &pose, 1000.0).unwrap();
        assert!(path.closed, "full circle should close");
        for s in &path.samples {
            let r = s.position.norm();
            assert!((r - 10.0).abs() < 0.1, "radius {r}");
            assert_relative_eq!(s.curvature, 0.1, epsilon = 0.015);
        }
    }

    #[test]
    fn missing_color_reports_reason() {
        let cones: Vec<(f64, f64, ClassLabel)> = (0..8)
            .map(|i| (i as f64 * 3.0, 1.5, ClassLabel::SmallBlue))
            .collect();
        let map = map_from(&cones);
        let err = extract_centerline(&map, &Pose2D::new(0.0, 0.0, 0.0), 50.0).unwrap_err();
        assert!(matches!(
            err,
            PlannerError::NotEnoughCones { blue: 8, yellow: 0 }
        ));
    }

    #[test]
    fn mirrored_track_gives_mirrored_centerline() {
        let mut cones = Vec::new();
        for i in 0..20 {
            let x = i as f64 * 2.5;
            let y_off = (x / 8.0).sin() * 2.0;
            cones.push((x, y_off + 1.7, ClassLabel::SmallBlue));
            cones.push((x, y_off - 1.7, ClassLabel::SmallYellow));
        }
        let mirrored: Vec<(f64, f64, ClassLabel)> = cones
            .iter()
            .map(|&(x, y, c)| {
                let swapped = match c {
                    ClassLabel::SmallBlue => ClassLabel::SmallYellow,
                    ClassLabel::SmallYellow => ClassLabel::SmallBlue,
                    other => other,
                };
                (x, -y, swapped)
            })
            .collect();
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        let path = extract_centerline(&map_from(&cones), &pose, 100.0).unwrap();
        let path_m = extract_centerline(&map_from(&mirrored), &pose, 100.0).unwrap();
        let n = path.samples.len().min(path_m.samples.len());
        for i in 0..n {
            assert_relative_eq!(
                path.samples[i].position.y,
                -path_m.samples[i].position.y,
                epsilon = 1e-6
            );
        }
    }

    fn straight_path(len: f64) -> CenterlinePath {
        let chain: Vec<Point2> = (0..=(len / 2.0) as usize)
            .map(|i| Point2::new(i as f64 * 2.0, 0.0))
            .collect();
        build_path(&chain, false)
    }

    #[test]
    fn profile_steady_cornering_speed() {
        // constant curvature 0.05 -> v = sqrt(a_lat * R) = sqrt(10 * 20)
        let n = 400;
        let chain: Vec<Point2> = (0..n)
            .map(|i| {
                let th = i as f64 / n as f64 * 2.0 * PI;
                Point2::new(20.0 * th.cos(), 20.0 * th.sin())
            })
            .collect();
        let path = build_path(&chain, true);
        let ggs = GgsMap::uniform(10.0, 6.0, 10.0, 30.0);
        let profile = velocity_profile(&path, &ggs, 14.0);
        let expected = (10.0 * 20.0f64).sqrt();
        // interior samples settle at the steady cornering speed
        for i in n / 4..n / 2 {
            assert_relative_eq!(profile.v[i], expected, max_relative = 0.01);
        }
    }

    #[test]
    fn profile_constant_acceleration_from_standstill() {
        let path = straight_path(120.0);
        let ggs = GgsMap::uniform(10.0, 5.0, 10.0, 20.0);
        let profile = velocity_profile(&path, &ggs, 0.0);
        for (i, sample) in path.samples.iter().enumerate() {
            let expected = (2.0 * 5.0 * sample.s).sqrt().min(20.0);
            // backward pass brakes toward the open end; only check the front part
            if sample.s < 60.0 {
                assert_relative_eq!(profile.v[i], expected.max(V_TARGET_FLOOR), max_relative = 0.02);
            }
        }
    }

    #[test]
    fn profile_brakes_before_hairpin() {
        // straight leading into a tight half circle
        let mut chain: Vec<Point2> = (0..30).map(|i| Point2::new(i as f64 * 2.0, 0.0)).collect();
        let r = 4.0;
        for i in 1..=18 {
            let th = i as f64 / 18.0 * PI;
            chain.push(Point2::new(60.0 + r * th.sin(), r - r * th.cos()));
        }
        let path = build_path(&chain, false);
        let ggs = GgsMap::uniform(8.0, 5.0, 9.0, 25.0);
        let profile = velocity_profile(&path, &ggs, 20.0);
        // post-hoc: longitudinal acceleration between samples within limits
        for i in 0..path.samples.len() - 1 {
            let ds = path.samples[i + 1].s - path.samples[i].s;
            if ds < 1e-9 {
                continue;
            }
            let a = (profile.v[i + 1].powi(2) - profile.v[i].powi(2)) / (2.0 * ds);
            assert!(a <= 5.0 + 1e-6, "accel {a} at {i}");
            assert!(a >= -9.0 - 1e-6, "brake {a} at {i}");
        }
        // lateral limit respected
        for (i, s) in path.samples.iter().enumerate() {
            assert!(s.curvature.abs() * profile.v[i].powi(2) <= 8.0 + 1e-6);
        }
    }
}
