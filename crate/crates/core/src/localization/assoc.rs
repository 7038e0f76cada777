//! Data association between measured and mapped landmarks.
//!
//! ICNN gates each measurement independently and pairs greedily by
//! Mahalanobis distance. JCBB searches for the largest set of pairings
//! that is *jointly* chi-square compatible, which stays correct when the
//! pose error approaches the cone spacing and individual gates start to
//! overlap.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::geometry::Point2;
use crate::stats::chi_square_quantile;

use super::{mahalanobis2, Association};

/// Chi-square confidence levels of the association gates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssociationGates {
    /// Per-pair gate level, applied at 2 degrees of freedom.
    pub individual: f64,
    /// Joint gate level, applied at `2k` degrees of freedom for `k` pairs.
    pub joint: f64,
}

impl Default for AssociationGates {
    fn default() -> Self {
        Self {
            individual: 0.95,
            joint: 0.99,
        }
    }
}

/// JCBB search configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JcbbConfig {
    pub gates: AssociationGates,
    /// Node-expansion budget per frame; beyond it the ICNN result is
    /// returned with the fallback flag set.
    pub max_expansions: usize,
}

impl Default for JcbbConfig {
    fn default() -> Self {
        Self {
            gates: AssociationGates::default(),
            max_expansions: 100_000,
        }
    }
}

/// Predicted body-frame landmark positions together with the joint
/// innovation covariance over all of them (`2M x 2M`).
pub struct JointInnovationModel<'a> {
    pub predicted: &'a [Point2],
    pub joint_cov: &'a DMatrix<f64>,
}

impl JointInnovationModel<'_> {
    fn block(&self, i: usize) -> Matrix2<f64> {
        Matrix2::new(
            self.joint_cov[(2 * i, 2 * i)],
            self.joint_cov[(2 * i, 2 * i + 1)],
            self.joint_cov[(2 * i + 1, 2 * i)],
            self.joint_cov[(2 * i + 1, 2 * i + 1)],
        )
    }
}

/// Individual Compatibility Nearest Neighbor association.
///
/// Every gate-compatible `(measurement, landmark)` pair is ranked by
/// Mahalanobis distance and accepted greedily one-to-one; ties resolve to
/// the lower landmark index, then the lower measurement index.
pub fn icnn_associate(
    predicted: &[Point2],
    measured: &[Point2],
    innovation_covs: &[Matrix2<f64>],
    gate: f64,
) -> Association {
    assert!(gate > 0.0 && gate < 1.0, "gate must be a confidence level");
    assert_eq!(predicted.len(), innovation_covs.len());
    let threshold = chi_square_quantile(gate, 2);

    let mut ranked: Vec<(f64, usize, usize)> = Vec::new(); // (d2, landmark, measurement)
    for (a, z) in measured.iter().enumerate() {
        for (b, pred) in predicted.iter().enumerate() {
            let nu = Vector2::new(z.x - pred.x, z.y - pred.y);
            if let Some(d2) = mahalanobis2(&nu, &innovation_covs[b]) {
                if d2 <= threshold {
                    ranked.push((d2, b, a));
                }
            }
        }
    }
    ranked.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .expect("finite distances")
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });

    let mut meas_used = alloc::vec![false; measured.len()];
    let mut lm_used = alloc::vec![false; predicted.len()];
    let mut pairs = Vec::new();
    for (_, b, a) in ranked {
        if !meas_used[a] && !lm_used[b] {
            meas_used[a] = true;
            lm_used[b] = true;
            pairs.push((a, b));
        }
    }
    pairs.sort_unstable();
    let unmatched = (0..measured.len()).filter(|&a| !meas_used[a]).collect();
    Association {
        pairs,
        unmatched,
        used_fallback: false,
    }
}

/// Joint Compatibility Branch and Bound association.
///
/// Returns the association with the most jointly compatible pairings,
/// ties broken by the smaller joint Mahalanobis distance. If the node
/// budget is exhausted the ICNN result is returned with
/// `used_fallback = true`.
pub fn jcbb_associate(
    model: &JointInnovationModel<'_>,
    measured: &[Point2],
    config: &JcbbConfig,
) -> Association {
    let n_landmarks = model.predicted.len();
    let n_meas = measured.len();
    if n_meas == 0 {
        return Association::default();
    }
    debug_assert_eq!(model.joint_cov.nrows(), 2 * n_landmarks);

    let individual_threshold = chi_square_quantile(config.gates.individual, 2);

    // candidate landmarks per measurement, individually gated, nearest first
    let mut candidates: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_meas);
    for z in measured {
        let mut list = Vec::new();
        for b in 0..n_landmarks {
            let pred = model.predicted[b];
            let nu = Vector2::new(z.x - pred.x, z.y - pred.y);
            if let Some(d2) = mahalanobis2(&nu, &model.block(b)) {
                if d2 <= individual_threshold {
                    list.push((b, d2));
                }
            }
        }
        list.sort_by(|x, y| x.1.partial_cmp(&y.1).expect("finite").then(x.0.cmp(&y.0)));
        candidates.push(list);
    }

    let mut search = JcbbSearch {
        model,
        measured,
        candidates,
        joint_thresholds: (0..=n_meas)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    chi_square_quantile(config.gates.joint, 2 * k)
                }
            })
            .collect(),
        best_pairs: Vec::new(),
        best_d2: 0.0,
        expansions: 0,
        budget: config.max_expansions,
        exhausted: false,
        lm_used: alloc::vec![false; n_landmarks],
        current: Vec::new(),
    };
    search.recurse(0, 0.0);

    if search.exhausted {
        let covs: Vec<Matrix2<f64>> = (0..n_landmarks).map(|b| model.block(b)).collect();
        let mut assoc = icnn_associate(
            model.predicted,
            measured,
            &covs,
            config.gates.individual,
        );
        assoc.used_fallback = true;
        return assoc;
    }

    let mut pairs = search.best_pairs;
    pairs.sort_unstable();
    let matched: alloc::collections::BTreeSet<usize> = pairs.iter().map(|&(a, _)| a).collect();
    let unmatched = (0..n_meas).filter(|a| !matched.contains(a)).collect();
    Association {
        pairs,
        unmatched,
        used_fallback: false,
    }
}

struct JcbbSearch<'a> {
    model: &'a JointInnovationModel<'a>,
    measured: &'a [Point2],
    candidates: Vec<Vec<(usize, f64)>>,
    joint_thresholds: Vec<f64>,
    best_pairs: Vec<(usize, usize)>,
    best_d2: f64,
    expansions: usize,
    budget: usize,
    exhausted: bool,
    lm_used: Vec<bool>,
    current: Vec<(usize, usize)>,
}

impl JcbbSearch<'_> {
    fn recurse(&mut self, level: usize, current_d2: f64) {
        if self.exhausted {
            return;
        }
        self.expansions += 1;
        if self.expansions > self.budget {
            self.exhausted = true;
            return;
        }
        let n_meas = self.measured.len();
        // bound: even matching every remaining measurement cannot beat the
        // incumbent (equality is kept alive for the distance tie-break)
        if self.current.len() + (n_meas - level) < self.best_pairs.len() {
            return;
        }
        if level == n_meas {
            let better = self.current.len() > self.best_pairs.len()
                || (self.current.len() == self.best_pairs.len()
                    && !self.best_pairs.is_empty()
                    && current_d2 < self.best_d2 - 1e-12);
            if better || (self.best_pairs.is_empty() && !self.current.is_empty()) {
                self.best_pairs = self.current.clone();
                self.best_d2 = current_d2;
            }
            return;
        }

        let cands = self.candidates[level].clone();
        for (b, _) in cands {
            if self.lm_used[b] {
                continue;
            }
            self.current.push((level, b));
            if let Some(d2) = self.joint_distance() {
                if d2 <= self.joint_thresholds[self.current.len()] {
                    self.lm_used[b] = true;
                    self.recurse(level + 1, d2);
                    self.lm_used[b] = false;
                }
            }
            self.current.pop();
            if self.exhausted {
                return;
            }
        }
        // leave this measurement unmatched
        self.recurse(level + 1, current_d2);
    }

    /// Joint Mahalanobis distance of the current pairing set.
    fn joint_distance(&self) -> Option<f64> {
        let k = self.current.len();
        if k == 0 {
            return Some(0.0);
        }
        let mut nu = DVector::zeros(2 * k);
        let mut s = DMatrix::zeros(2 * k, 2 * k);
        for (row, &(a, b)) in self.current.iter().enumerate() {
            let pred = self.model.predicted[b];
            nu[2 * row] = self.measured[a].x - pred.x;
            nu[2 * row + 1] = self.measured[a].y - pred.y;
            for (col, &(_, b2)) in self.current.iter().enumerate() {
                for i in 0..2 {
                    for j in 0..2 {
                        s[(2 * row + i, 2 * col + j)] =
                            self.model.joint_cov[(2 * b + i, 2 * b2 + j)];
                    }
                }
            }
        }
        let chol = s.cholesky()?;
        let x = chol.solve(&nu);
        Some(nu.dot(&x))
    }
}
