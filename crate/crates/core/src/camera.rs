//! Camera-plane validation of landmark proposals.
//!
//! Rather than extracting positions from monocular images, the cameras act
//! as a validation device: lidar proposals are projected into pixel space
//! by a polynomial ground-to-image map, a bounding box is regressed from
//! the known cone geometry, corrected by a color-centroid shift, and
//! finally classified. Classification is pluggable; the built-in
//! [`ColorHistogramClassifier`] distinguishes the five rule classes by hue
//! bands and decides big vs small orange cones by blob height.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::geometry::Point2;
use crate::perception::LandmarkProposal;

#[allow(unused_imports)]
use num_traits::Float;

/// Pixel coordinates, sub-pixel resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

/// The five classes a bounding box can take under the competition rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ClassLabel {
    SmallBlue,
    SmallYellow,
    SmallOrange,
    BigOrange,
    /// Background / false-positive proposal.
    None,
}

impl ClassLabel {
    /// The four physical cone classes, i.e. everything but `None`.
    pub const CONES: [ClassLabel; 4] = [
        ClassLabel::SmallBlue,
        ClassLabel::SmallYellow,
        ClassLabel::SmallOrange,
        ClassLabel::BigOrange,
    ];
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ClassLabel::SmallBlue => "small_blue",
            ClassLabel::SmallYellow => "small_yellow",
            ClassLabel::SmallOrange => "small_orange",
            ClassLabel::BigOrange => "big_orange",
            ClassLabel::None => "none",
        };
        f.write_str(s)
    }
}

/// Axis-aligned box in pixel space, center `(u, v)`, extents `(w, h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundingBox {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
}

/// A dense RGB image used by tests and the simulator in place of real
/// camera frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage {
    width: u32,
    height: u32,
    data: Vec<u8>, // rgb, row-major
}

impl SyntheticImage {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..(width as usize * height as usize) {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn fill(&mut self, rgb: [u8; 3]) {
        for px in self.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            let i = (y as usize * self.width as usize + x as usize) * 3;
            self.data[i..i + 3].copy_from_slice(&rgb);
        }
    }
}

/// Polynomial ground-plane-to-pixel camera model.
///
/// The projection of a ground point `(x, y)` is
/// `sum_{i=0..=N} sum_{j=0..=N} a_ij * x^i * y^j` with 2-vector
/// coefficients `a_ij` stored row-major by `(i, j)`. Bounding-box extents
/// scale reciprocally with the landmark's distance from the rear axle,
/// `w = s_u / |p|`, `h = s_v / |p|`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraModel {
    pub degree: usize,
    /// `(degree + 1)^2` coefficient pairs `(a_u, a_v)`, row-major by `(i, j)`.
    pub coeffs: Vec<[f64; 2]>,
    /// Width scale factor in px * m.
    pub s_u: f64,
    /// Height scale factor in px * m.
    pub s_v: f64,
    pub image_size: (u32, u32),
    /// Ground-plane region (vehicle frame) visible to this camera.
    pub fov_polygon: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CameraError {
    /// Fewer calibration pairs than polynomial terms.
    Underdetermined { pairs: usize, terms: usize },
    /// The regression matrix is numerically rank deficient.
    RankDeficient { rank: usize, terms: usize },
    NonFinite,
    InvalidModel(&'static str),
}

impl fmt::Display for CameraError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CameraError::Underdetermined { pairs, terms } => {
                write!(f, "{pairs} pairs cannot determine {terms} polynomial terms")
            }
            CameraError::RankDeficient { rank, terms } => {
                write!(f, "regression matrix has rank {rank}, need {terms}")
            }
            CameraError::NonFinite => write!(f, "non-finite input"),
            CameraError::InvalidModel(what) => write!(f, "invalid camera model: {what}"),
        }
    }
}

impl core::error::Error for CameraError {}

/// Result of [`fit_projection`]: the coefficient table plus the RMS of the
/// 2D pixel residuals over the training pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFit {
    pub degree: usize,
    pub coeffs: Vec<[f64; 2]>,
    pub residual_rms: f64,
}

/// Least-squares fit of the polynomial projection from ground/pixel pairs.
pub fn fit_projection(
    pairs: &[(Point2, PixelPoint)],
    degree: usize,
) -> Result<ProjectionFit, CameraError> {
    let terms = (degree + 1) * (degree + 1);
    if pairs.len() < terms {
        return Err(CameraError::Underdetermined {
            pairs: pairs.len(),
            terms,
        });
    }
    if !pairs
        .iter()
        .all(|(g, px)| g.is_finite() && px.u.is_finite() && px.v.is_finite())
    {
        return Err(CameraError::NonFinite);
    }

    let rows = pairs.len();
    let mut a = DMatrix::zeros(rows, terms);
    let mut bu = DMatrix::zeros(rows, 1);
    let mut bv = DMatrix::zeros(rows, 1);
    for (r, (g, px)) in pairs.iter().enumerate() {
        let mono = monomials(g, degree);
        for (c, m) in mono.iter().enumerate() {
            a[(r, c)] = *m;
        }
        bu[(r, 0)] = px.u;
        bv[(r, 0)] = px.v;
    }

    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = sigma_max * 1e-12 * rows.max(terms) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < terms {
        return Err(CameraError::RankDeficient { rank, terms });
    }
    let xu = svd.solve(&bu, tol).map_err(|_| CameraError::RankDeficient {
        rank,
        terms,
    })?;
    let xv = svd.solve(&bv, tol).map_err(|_| CameraError::RankDeficient {
        rank,
        terms,
    })?;

    let ru = &a * &xu - &bu;
    let rv = &a * &xv - &bv;
    let residual_rms = ((ru.norm_squared() + rv.norm_squared()) / rows as f64).sqrt();

    let coeffs = (0..terms).map(|i| [xu[(i, 0)], xv[(i, 0)]]).collect();
    Ok(ProjectionFit {
        degree,
        coeffs,
        residual_rms,
    })
}

fn monomials(p: &Point2, degree: usize) -> Vec<f64> {
    let n = degree + 1;
    let mut xp = Vec::with_capacity(n);
    let mut yp = Vec::with_capacity(n);
    let mut acc = 1.0;
    for _ in 0..n {
        xp.push(acc);
        acc *= p.x;
    }
    acc = 1.0;
    for _ in 0..n {
        yp.push(acc);
        acc *= p.y;
    }
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(xp[i] * yp[j]);
        }
    }
    out
}

impl CameraModel {
    pub fn new(
        fit: ProjectionFit,
        s_u: f64,
        s_v: f64,
        image_size: (u32, u32),
        fov_polygon: Vec<Point2>,
    ) -> Result<Self, CameraError> {
        if !(s_u > 0.0 && s_v > 0.0) {
            return Err(CameraError::InvalidModel("scale factors must be positive"));
        }
        if fit.coeffs.len() != (fit.degree + 1) * (fit.degree + 1) {
            return Err(CameraError::InvalidModel("coefficient count mismatch"));
        }
        if !fit.coeffs.iter().all(|c| c[0].is_finite() && c[1].is_finite()) {
            return Err(CameraError::NonFinite);
        }
        Ok(Self {
            degree: fit.degree,
            coeffs: fit.coeffs,
            s_u,
            s_v,
            image_size,
            fov_polygon,
        })
    }

    /// Whether a vehicle-frame ground point lies inside this camera's FOV.
    pub fn sees(&self, p: Point2) -> bool {
        point_in_polygon(p, &self.fov_polygon)
    }

    /// Projects a ground point to pixel coordinates. `None` signals the
    /// point is outside the camera's field of view — not an error.
    pub fn project_landmark(&self, p: Point2) -> Option<PixelPoint> {
        if !self.sees(p) {
            return None;
        }
        Some(self.project_unchecked(p))
    }

    /// Polynomial evaluation without the FOV check (used for calibration
    /// residuals and by tests).
    pub fn project_unchecked(&self, p: Point2) -> PixelPoint {
        let mono = monomials(&p, self.degree);
        let mut u = 0.0;
        let mut v = 0.0;
        for (m, c) in mono.iter().zip(&self.coeffs) {
            u += m * c[0];
            v += m * c[1];
        }
        PixelPoint { u, v }
    }

    /// Bounding box for a landmark at `p`: center from the projection,
    /// extents `s_u/|p|` by `s_v/|p|` with the distance measured from the
    /// vehicle rear axle (the origin).
    pub fn regress_bbox(&self, p: Point2) -> Result<BoundingBox, BboxSignal> {
        let range = p.norm();
        if range < 0.5 {
            return Err(BboxSignal::TooClose { range });
        }
        let center = self.project_landmark(p).ok_or(BboxSignal::OutsideFov)?;
        Ok(BoundingBox {
            u: center.u,
            v: center.v,
            w: self.s_u / range,
            h: self.s_v / range,
        })
    }
}

/// Non-error outcomes of bounding-box regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BboxSignal {
    /// Landmark closer than 0.5 m to the rear axle; the reciprocal size
    /// law degenerates there.
    TooClose { range: f64 },
    OutsideFov,
}

fn point_in_polygon(p: Point2, polygon: &[Point2]) -> bool {
    if polygon.len() < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = polygon.len() - 1;
    for i in 0..polygon.len() {
        let (a, b) = (polygon[i], polygon[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let t = (p.y - a.y) / (b.y - a.y);
            if p.x < a.x + t * (b.x - a.x) {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

// ─── Color classification ────────────────────────────────────────────────

/// Hue band in degrees, `[lo, hi)`, with minimum saturation/value cuts.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HueBand {
    pub lo_deg: f64,
    pub hi_deg: f64,
}

impl HueBand {
    fn contains(&self, hue: f64) -> bool {
        hue >= self.lo_deg && hue < self.hi_deg
    }
}

/// Configuration of the histogram classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifierConfig {
    pub blue: HueBand,
    pub yellow: HueBand,
    pub orange: HueBand,
    pub min_saturation: f64,
    pub min_value: f64,
    /// Minimum fraction of box pixels in the winning band.
    pub min_fill_fraction: f64,
    /// Blob height above `ratio * box.h` is classified as a big cone.
    pub big_cone_height_ratio: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            blue: HueBand {
                lo_deg: 190.0,
                hi_deg: 270.0,
            },
            yellow: HueBand {
                lo_deg: 41.0,
                hi_deg: 75.0,
            },
            orange: HueBand {
                lo_deg: 5.0,
                hi_deg: 41.0,
            },
            min_saturation: 0.35,
            min_value: 0.25,
            min_fill_fraction: 0.1,
            big_cone_height_ratio: 1.25,
        }
    }
}

/// `(hue deg in [0, 360), saturation, value)` of an RGB pixel.
fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let r = rgb[0] as f64 / 255.0;
    let g = rgb[1] as f64 / 255.0;
    let b = rgb[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta) % 6.0 + 6.0) % 360.0
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    (hue, sat, max)
}

/// Anything that can attach one of the five class labels to a box.
pub trait LandmarkClassifier {
    /// Returns the label and a confidence in `[0, 1]`.
    fn classify(&self, image: &SyntheticImage, bbox: &BoundingBox) -> (ClassLabel, f64);
}

/// Default classifier: a per-band pixel histogram over the box.
#[derive(Debug, Clone, Default)]
pub struct ColorHistogramClassifier {
    pub config: ClassifierConfig,
}

impl ColorHistogramClassifier {
    pub fn new(config: ClassifierConfig) -> Self {
        Self { config }
    }

    fn band_of(&self, rgb: [u8; 3]) -> Option<usize> {
        let (h, s, v) = rgb_to_hsv(rgb);
        if s < self.config.min_saturation || v < self.config.min_value {
            return None;
        }
        if self.config.blue.contains(h) {
            Some(0)
        } else if self.config.yellow.contains(h) {
            Some(1)
        } else if self.config.orange.contains(h) {
            Some(2)
        } else {
            None
        }
    }
}

impl LandmarkClassifier for ColorHistogramClassifier {
    fn classify(&self, image: &SyntheticImage, bbox: &BoundingBox) -> (ClassLabel, f64) {
        // scan twice the box so a blob taller than the regressed height is
        // still measured in full; the fill fraction stays normalized by the
        // box area itself
        let Some((x0, x1, y0, y1)) = clip_box(image, bbox, 2.0) else {
            return (ClassLabel::None, 0.0);
        };
        let mut counts = [0usize; 3];
        let mut v_min = [u32::MAX; 3];
        let mut v_max = [0u32; 3];
        for y in y0..=y1 {
            for x in x0..=x1 {
                if let Some(band) = self.band_of(image.get(x, y)) {
                    counts[band] += 1;
                    v_min[band] = v_min[band].min(y);
                    v_max[band] = v_max[band].max(y);
                }
            }
        }
        let (band, &count) = counts
            .iter()
            .enumerate()
            .max_by_key(|(_, &c)| c)
            .expect("three bands");
        let box_area = (bbox.w * bbox.h).max(1.0);
        let fraction = (count as f64 / box_area).min(1.0);
        if fraction < self.config.min_fill_fraction {
            return (ClassLabel::None, 1.0 - fraction);
        }
        let label = match band {
            0 => ClassLabel::SmallBlue,
            1 => ClassLabel::SmallYellow,
            _ => {
                let blob_h = (v_max[2] - v_min[2] + 1) as f64;
                if blob_h > self.config.big_cone_height_ratio * bbox.h {
                    ClassLabel::BigOrange
                } else {
                    ClassLabel::SmallOrange
                }
            }
        };
        (label, fraction)
    }
}

/// Classifies a box with the given classifier. Degenerate boxes yield
/// `(None, 0.0)`.
pub fn classify_bbox(
    image: &SyntheticImage,
    bbox: &BoundingBox,
    classifier: &dyn LandmarkClassifier,
) -> (ClassLabel, f64) {
    if !(bbox.w > 0.0 && bbox.h > 0.0) {
        return (ClassLabel::None, 0.0);
    }
    classifier.classify(image, bbox)
}

/// Clips `scale * extents` of the box against the image; `None` when the
/// box misses the image entirely.
fn clip_box(
    image: &SyntheticImage,
    bbox: &BoundingBox,
    scale: f64,
) -> Option<(u32, u32, u32, u32)> {
    let half_w = (bbox.w * scale) / 2.0;
    let half_h = (bbox.h * scale) / 2.0;
    let x0 = (bbox.u - half_w).floor();
    let x1 = (bbox.u + half_w).ceil();
    let y0 = (bbox.v - half_h).floor();
    let y1 = (bbox.v + half_h).ceil();
    if x1 < 0.0 || y1 < 0.0 || x0 >= image.width() as f64 || y0 >= image.height() as f64 {
        return None;
    }
    let x0 = x0.max(0.0) as u32;
    let y0 = y0.max(0.0) as u32;
    let x1 = (x1.max(0.0) as u32).min(image.width() - 1);
    let y1 = (y1.max(0.0) as u32).min(image.height() - 1);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some((x0, x1, y0, y1))
}

/// Outcome of the centroid correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectedBox {
    pub bbox: BoundingBox,
    /// False when the search window contained no cone-colored pixels; the
    /// box is then returned unchanged and should be treated with low
    /// confidence.
    pub found_color: bool,
}

/// Search window size as a multiple of the box extents.
pub const CORRECTION_WINDOW_SCALE: f64 = 2.0;
/// Lower bound on the half-extent of the search window in pixels. Far
/// landmarks regress to boxes of a few pixels while the polynomial
/// projection error does not shrink with distance, so the window is floored
/// to keep covering the observed projection error at range.
pub const CORRECTION_WINDOW_MIN_HALF: f64 = 24.0;

/// Shifts the box center onto the centroid of cone-colored pixels inside a
/// search window around the box; the size is kept. The window spans
/// [`CORRECTION_WINDOW_SCALE`] times the box extents, floored at
/// [`CORRECTION_WINDOW_MIN_HALF`] half-extent.
pub fn correct_bbox(
    image: &SyntheticImage,
    bbox: &BoundingBox,
    classifier: &ColorHistogramClassifier,
) -> CorrectedBox {
    let half_w = ((bbox.w * CORRECTION_WINDOW_SCALE) / 2.0).max(CORRECTION_WINDOW_MIN_HALF);
    let half_h = ((bbox.h * CORRECTION_WINDOW_SCALE) / 2.0).max(CORRECTION_WINDOW_MIN_HALF);
    let window = BoundingBox {
        u: bbox.u,
        v: bbox.v,
        w: 2.0 * half_w,
        h: 2.0 * half_h,
    };
    let Some((x0, x1, y0, y1)) = clip_box(image, &window, 1.0) else {
        return CorrectedBox {
            bbox: *bbox,
            found_color: false,
        };
    };
    let mut sum_u = 0.0;
    let mut sum_v = 0.0;
    let mut count = 0usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if classifier.band_of(image.get(x, y)).is_some() {
                sum_u += x as f64;
                sum_v += y as f64;
                count += 1;
            }
        }
    }
    if count == 0 {
        return CorrectedBox {
            bbox: *bbox,
            found_color: false,
        };
    }
    CorrectedBox {
        bbox: BoundingBox {
            u: sum_u / count as f64,
            v: sum_v / count as f64,
            w: bbox.w,
            h: bbox.h,
        },
        found_color: true,
    }
}

/// A proposal after camera validation. `color == None` means no camera saw
/// the landmark; it is kept for mapping but cannot confirm a colored map
/// entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedProposal {
    pub proposal: LandmarkProposal,
    pub color: Option<ClassLabel>,
    pub confidence: f64,
}

/// Validates proposals against every camera whose FOV contains them.
///
/// A proposal classified as background (`ClassLabel::None`) by its most
/// confident camera is dropped as a false positive; conflicting labels
/// across cameras resolve to the highest confidence. Proposals visible in
/// no camera pass through colorless. Output positions are a subset of the
/// input positions.
pub fn validate_proposals(
    proposals: &[LandmarkProposal],
    models: &[CameraModel],
    images: &[SyntheticImage],
    classifier: &ColorHistogramClassifier,
) -> Vec<ValidatedProposal> {
    assert_eq!(models.len(), images.len(), "one image per camera model");
    let mut out = Vec::with_capacity(proposals.len());
    for &proposal in proposals {
        let mut best: Option<(ClassLabel, f64)> = None;
        for (model, image) in models.iter().zip(images) {
            let bbox = match model.regress_bbox(proposal.position) {
                Ok(b) => b,
                Err(_) => continue, // outside FOV or too close: this camera abstains
            };
            let corrected = correct_bbox(image, &bbox, classifier);
            let (label, mut confidence) = classify_bbox(image, &corrected.bbox, classifier);
            if !corrected.found_color && label != ClassLabel::None {
                confidence *= 0.5;
            }
            if best.map_or(true, |(_, c)| confidence > c) {
                best = Some((label, confidence));
            }
        }
        match best {
            None => out.push(ValidatedProposal {
                proposal,
                color: None,
                confidence: 0.0,
            }),
            Some((ClassLabel::None, _)) => {} // validated as background: drop
            Some((label, confidence)) => out.push(ValidatedProposal {
                proposal,
                color: Some(label),
                confidence,
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn rect_fov() -> Vec<Point2> {
        vec![
            Point2::new(0.5, -30.0),
            Point2::new(50.0, -30.0),
            Point2::new(50.0, 30.0),
            Point2::new(0.5, 30.0),
        ]
    }

    fn constant_model(u: f64, v: f64) -> CameraModel {
        CameraModel::new(
            ProjectionFit {
                degree: 0,
                coeffs: vec![[u, v]],
                residual_rms: 0.0,
            },
            600.0,
            900.0,
            (640, 480),
            rect_fov(),
        )
        .unwrap()
    }

    #[test]
    fn fit_recovers_affine_map() {
        let mut pairs = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                let p = Point2::new(1.0 + i as f64, -2.0 + j as f64);
                pairs.push((
                    p,
                    PixelPoint {
                        u: 320.0 + 10.0 * p.x - 4.0 * p.y,
                        v: 240.0 - 2.0 * p.x + 7.0 * p.y,
                    },
                ));
            }
        }
        let fit = fit_projection(&pairs, 1).unwrap();
        assert!(fit.residual_rms < 1e-9, "rms = {}", fit.residual_rms);
        // row-major (i, j): [1, y, x, x*y]
        assert_relative_eq!(fit.coeffs[0][0], 320.0, epsilon = 1e-6);
        assert_relative_eq!(fit.coeffs[1][0], -4.0, epsilon = 1e-8);
        assert_relative_eq!(fit.coeffs[2][0], 10.0, epsilon = 1e-8);
        assert_relative_eq!(fit.coeffs[0][1], 240.0, epsilon = 1e-6);
    }

    #[test]
    fn fit_recovers_quadratic_map() {
        let mut pairs = Vec::new();
        for i in 0..7 {
            for j in 0..7 {
                let p = Point2::new(0.5 * i as f64, 0.5 * j as f64 - 1.5);
                let u = 100.0 + 3.0 * p.x * p.x - 2.0 * p.x * p.y + p.y;
                let v = 50.0 - p.y * p.y + 4.0 * p.x;
                pairs.push((p, PixelPoint { u, v }));
            }
        }
        let fit = fit_projection(&pairs, 2).unwrap();
        assert!(fit.residual_rms < 1e-8, "rms = {}", fit.residual_rms);
    }

    #[test]
    fn fit_degenerate_inputs() {
        // 3 pairs cannot determine the 9 terms of a degree-2 map
        let collinear: Vec<_> = (0..3)
            .map(|i| {
                let p = Point2::new(i as f64, 2.0 * i as f64);
                (p, PixelPoint { u: p.x, v: p.y })
            })
            .collect();
        assert!(matches!(
            fit_projection(&collinear, 2),
            Err(CameraError::Underdetermined { pairs: 3, terms: 9 })
        ));

        // plenty of pairs, but all on a line: numerically rank deficient
        let collinear: Vec<_> = (0..12)
            .map(|i| {
                let p = Point2::new(i as f64, 2.0 * i as f64);
                (p, PixelPoint { u: p.x, v: p.y })
            })
            .collect();
        assert!(matches!(
            fit_projection(&collinear, 1),
            Err(CameraError::RankDeficient { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let model = constant_model(320.0, 240.0);
        let px = model.project_landmark(Point2::new(7.0, 3.0)).unwrap();
        assert_relative_eq!(px.u, 320.0);
        assert_relative_eq!(px.v, 240.0);

        // single term a_{1,0} = (10, 0): u = 10 * x
        let model = CameraModel::new(
            ProjectionFit {
                degree: 1,
                coeffs: vec![[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [0.0, 0.0]],
                residual_rms: 0.0,
            },
            600.0,
            900.0,
            (640, 480),
            rect_fov(),
        )
        .unwrap();
        let px = model.project_landmark(Point2::new(2.0, 5.0)).unwrap();
        assert_relative_eq!(px.u, 20.0);
        assert_relative_eq!(px.v, 0.0);

        // outside the FOV polygon: not-visible signal
        assert!(model.project_landmark(Point2::new(-5.0, 0.0)).is_none());
    }

    #[test]
    fn bbox_reciprocal_law() {
        let model = constant_model(320.0, 240.0);
        let b = model.regress_bbox(Point2::new(10.0, 0.0)).unwrap();
        assert_relative_eq!(b.w, 60.0);
        let b = model.regress_bbox(Point2::new(30.0, 0.0)).unwrap();
        assert_relative_eq!(b.h, 30.0);

        let near = model.regress_bbox(Point2::new(6.0, 0.0)).unwrap();
        let far = model.regress_bbox(Point2::new(12.0, 0.0)).unwrap();
        assert_relative_eq!(near.w, 2.0 * far.w, epsilon = 1e-12);
        assert_relative_eq!(near.h, 2.0 * far.h, epsilon = 1e-12);

        assert!(matches!(
            model.regress_bbox(Point2::new(0.2, 0.1)),
            Err(BboxSignal::TooClose { .. })
        ));
    }

    const BLUE: [u8; 3] = [40, 60, 210];
    const ORANGE: [u8; 3] = [235, 120, 30];
    const BG: [u8; 3] = [70, 70, 70];

    fn blob_image(center: (u32, u32), half: (u32, u32), rgb: [u8; 3]) -> SyntheticImage {
        let mut img = SyntheticImage::filled(200, 200, BG);
        for y in center.1 - half.1..=center.1 + half.1 {
            for x in center.0 - half.0..=center.0 + half.0 {
                img.set(x, y, rgb);
            }
        }
        img
    }

    #[test]
    fn correct_bbox_centers_on_blob() {
        let classifier = ColorHistogramClassifier::default();
        let img = blob_image((100, 100), (5, 8), BLUE);

        // already centered: no shift
        let bbox = BoundingBox {
            u: 100.0,
            v: 100.0,
            w: 12.0,
            h: 18.0,
        };
        let c = correct_bbox(&img, &bbox, &classifier);
        assert!(c.found_color);
        assert_relative_eq!(c.bbox.u, 100.0, epsilon = 1.0);
        assert_relative_eq!(c.bbox.v, 100.0, epsilon = 1.0);

        // blob offset by +8 px in u relative to the box
        let offset = BoundingBox {
            u: 92.0,
            v: 100.0,
            w: 12.0,
            h: 18.0,
        };
        let c = correct_bbox(&img, &offset, &classifier);
        assert!(c.found_color);
        assert_relative_eq!(c.bbox.u, 100.0, epsilon = 1.0);
        assert_relative_eq!(c.bbox.w, 12.0); // size unchanged

        // idempotence on a centered blob
        let again = correct_bbox(&img, &c.bbox, &classifier);
        assert_relative_eq!(again.bbox.u, c.bbox.u, epsilon = 1e-9);
        assert_relative_eq!(again.bbox.v, c.bbox.v, epsilon = 1e-9);

        // no matching pixels anywhere near: unchanged box, flag set
        let img = SyntheticImage::filled(200, 200, BG);
        let c = correct_bbox(&img, &bbox, &classifier);
        assert!(!c.found_color);
        assert_eq!(c.bbox, bbox);
    }

    #[test]
    fn classify_examples() {
        let classifier = ColorHistogramClassifier::default();
        let img = blob_image((100, 100), (6, 9), BLUE);
        let bbox = BoundingBox {
            u: 100.0,
            v: 100.0,
            w: 14.0,
            h: 20.0,
        };
        let (label, conf) = classify_bbox(&img, &bbox, &classifier);
        assert_eq!(label, ClassLabel::SmallBlue);
        assert!(conf > 0.3);

        let img = SyntheticImage::filled(200, 200, BG);
        let (label, _) = classify_bbox(&img, &bbox, &classifier);
        assert_eq!(label, ClassLabel::None);

        // orange blob taller than the regressed height: big cone
        let img = blob_image((100, 100), (6, 16), ORANGE);
        let (label, _) = classify_bbox(
            &img,
            &BoundingBox {
                u: 100.0,
                v: 100.0,
                w: 14.0,
                h: 20.0,
            },
            &classifier,
        );
        assert_eq!(label, ClassLabel::BigOrange);

        // degenerate box
        let (label, conf) = classify_bbox(
            &img,
            &BoundingBox {
                u: 10.0,
                v: 10.0,
                w: 0.0,
                h: 5.0,
            },
            &classifier,
        );
        assert_eq!(label, ClassLabel::None);
        assert_eq!(conf, 0.0);
    }

    #[test]
    fn validate_keeps_unseen_drops_background() {
        let classifier = ColorHistogramClassifier::default();
        // box extents at 6 m range roughly match the painted blob
        let model = CameraModel::new(
            ProjectionFit {
                degree: 0,
                coeffs: vec![[100.0, 100.0]],
                residual_rms: 0.0,
            },
            130.0,
            190.0,
            (200, 200),
            rect_fov(),
        )
        .unwrap();
        let img = blob_image((100, 100), (10, 15), BLUE);

        let seen = LandmarkProposal {
            position: Point2::new(6.0, 0.0),
            support: 10,
            timestamp: 0.0,
        };
        let unseen = LandmarkProposal {
            position: Point2::new(-6.0, 0.0),
            support: 10,
            timestamp: 0.0,
        };
        let out = validate_proposals(&[seen, unseen], &[model.clone()], &[img], &classifier);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].color, Some(ClassLabel::SmallBlue));
        assert_eq!(out[1].color, None);

        // ghost proposal over plain background is dropped
        let bg = SyntheticImage::filled(200, 200, BG);
        let out = validate_proposals(&[seen], &[model], &[bg], &classifier);
        assert!(out.is_empty());
    }
}
