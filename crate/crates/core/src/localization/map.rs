//! Landmark map with color-confirmed entries.
//!
//! Proposals first accumulate as candidates; a candidate becomes a
//! confirmed landmark once it has been tracked `n_confirm` times in the
//! same color. Confirmed positions are frozen — the pose estimate is
//! accurate enough that the map needs no later correction, which keeps the
//! landmarks out of the filter state.

use alloc::vec::Vec;

use crate::camera::ClassLabel;
use crate::geometry::Point2;

/// Mapping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MapConfig {
    /// Same-color sightings needed to confirm a landmark (`> 1`).
    pub n_confirm: u32,
    /// Matching radius between a proposal and an existing entry, meters.
    pub gate_radius: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            n_confirm: 2,
            gate_radius: 0.5,
        }
    }
}

/// A confirmed, immutable map entry.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Landmark {
    pub position: Point2,
    pub color: ClassLabel,
    pub observation_count: u32,
}

/// A colored proposal in world coordinates; `color == None` when no camera
/// could validate it (such sightings keep the candidate alive but cannot
/// confirm it).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldProposal {
    pub position: Point2,
    pub color: Option<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Running average over all sightings.
    pub mean: Point2,
    pub total: u32,
    /// Sightings per cone class, indexed like [`ClassLabel::CONES`].
    pub color_counts: [u32; 4],
}

fn cone_index(label: ClassLabel) -> Option<usize> {
    ClassLabel::CONES.iter().position(|&c| c == label)
}

/// The landmark map: confirmed cones plus tracked candidates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LandmarkMap {
    pub landmarks: Vec<Landmark>,
    candidates: Vec<Candidate>,
    pub config: MapConfig,
}

impl LandmarkMap {
    pub fn new(config: MapConfig) -> Self {
        assert!(config.n_confirm >= 1);
        assert!(config.gate_radius > 0.0);
        Self {
            landmarks: Vec::new(),
            candidates: Vec::new(),
            config,
        }
    }

    pub fn confirmed_positions(&self) -> Vec<Point2> {
        self.landmarks.iter().map(|l| l.position).collect()
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    /// Folds validated world-frame proposals into the map.
    ///
    /// A proposal within the gate radius of a confirmed landmark only bumps
    /// its observation count. Otherwise it updates the nearest candidate
    /// within the gate (running-average position, same-color count), opening
    /// a new candidate if none is close enough. A candidate whose same-color
    /// count reaches `n_confirm` is promoted; its position freezes at the
    /// running average of that moment.
    pub fn update(&mut self, proposals: &[WorldProposal]) {
        for proposal in proposals {
            if !proposal.position.is_finite() {
                continue;
            }
            let gate2 = self.config.gate_radius * self.config.gate_radius;

            if let Some(lm) = nearest_within(
                self.landmarks.iter().map(|l| l.position),
                proposal.position,
                gate2,
            ) {
                self.landmarks[lm].observation_count += 1;
                continue;
            }

            let slot = nearest_within(
                self.candidates.iter().map(|c| c.mean),
                proposal.position,
                gate2,
            );
            let idx = match slot {
                Some(i) => {
                    let c = &mut self.candidates[i];
                    let n = c.total as f64;
                    c.mean = Point2::new(
                        (c.mean.x * n + proposal.position.x) / (n + 1.0),
                        (c.mean.y * n + proposal.position.y) / (n + 1.0),
                    );
                    c.total += 1;
                    i
                }
                None => {
                    self.candidates.push(Candidate {
                        mean: proposal.position,
                        total: 1,
                        color_counts: [0; 4],
                    });
                    self.candidates.len() - 1
                }
            };

            if let Some(color) = proposal.color {
                if let Some(ci) = cone_index(color) {
                    let c = &mut self.candidates[idx];
                    c.color_counts[ci] += 1;
                    if c.color_counts[ci] >= self.config.n_confirm {
                        let promoted = self.candidates.remove(idx);
                        self.landmarks.push(Landmark {
                            position: promoted.mean,
                            color,
                            observation_count: promoted.total,
                        });
                    }
                }
            }
        }
    }
}

fn nearest_within(
    positions: impl Iterator<Item = Point2>,
    p: Point2,
    gate2: f64,
) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, q) in positions.enumerate() {
        let d2 = p.distance_squared(&q);
        if d2 <= gate2 && best.map_or(true, |(bd, _)| d2 < bd) {
            best = Some((d2, i));
        }
    }
    best.map(|(_, i)| i)
}
