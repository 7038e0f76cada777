//! Scan-stream alignment for multiple lidars.
//!
//! All lidars are started by a common sync pulse, but their scan counters
//! differ at power-up and the Ethernet transport adds a non-deterministic
//! latency. The counter offsets are recovered by searching, per lidar, for
//! a run of consecutive scans whose latency stays below the average; the
//! start timestamps of those scans are trustworthy enough to match scans
//! across lidars and derive the per-lidar counter offsets. Afterwards,
//! scans group by aligned counter.

use alloc::collections::BTreeMap;
use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

/// Metadata of one received scan.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScanHeader {
    pub lidar_id: usize,
    /// Scan counter of the emitting lidar, free-running from power-up.
    pub counter: u64,
    /// Sync-pulse timestamp published for the start of the scan, seconds.
    pub start_time: f64,
    /// Arrival time at the compute unit, seconds.
    pub receive_time: f64,
}

/// Recovered per-lidar counter offsets; `offsets[0] == 0` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncState {
    pub offsets: Vec<i64>,
    pub mean_latency: f64,
    pub initialized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyncError {
    /// `receive_time` earlier than `start_time`.
    NegativeLatency { lidar_id: usize, latency: f64 },
    /// No run of `run_length` below-average-latency scans in this stream
    /// yet; the caller should buffer more data and retry.
    NoQualifyingRun { lidar_id: usize },
    /// Streams whose qualifying runs cannot be matched in time.
    UnmatchedRun { lidar_id: usize },
    EmptyStream { lidar_id: usize },
}

impl fmt::Display for SyncError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyncError::NegativeLatency { lidar_id, latency } => {
                write!(f, "lidar {lidar_id}: negative latency {latency}")
            }
            SyncError::NoQualifyingRun { lidar_id } => {
                write!(f, "lidar {lidar_id}: no low-latency run found yet")
            }
            SyncError::UnmatchedRun { lidar_id } => {
                write!(f, "lidar {lidar_id}: qualifying run cannot be matched in time")
            }
            SyncError::EmptyStream { lidar_id } => write!(f, "lidar {lidar_id}: empty stream"),
        }
    }
}

impl core::error::Error for SyncError {}

/// Transport latency of a scan: receive minus start time.
pub fn latency(header: &ScanHeader) -> Result<f64, SyncError> {
    let l = header.receive_time - header.start_time;
    if l < 0.0 {
        return Err(SyncError::NegativeLatency {
            lidar_id: header.lidar_id,
            latency: l,
        });
    }
    Ok(l)
}

/// Running mean of the last `window` latencies per lidar, used to seed the
/// average latency before initialization.
#[derive(Debug, Clone)]
pub struct LatencyTracker {
    window: usize,
    samples: Vec<VecDeque<f64>>,
}

impl LatencyTracker {
    pub fn new(n_lidars: usize, window: usize) -> Self {
        Self {
            window,
            samples: alloc::vec![VecDeque::new(); n_lidars],
        }
    }

    pub fn push(&mut self, header: &ScanHeader) -> Result<(), SyncError> {
        let l = latency(header)?;
        let buf = &mut self.samples[header.lidar_id];
        if buf.len() == self.window {
            buf.pop_front();
        }
        buf.push_back(l);
        Ok(())
    }

    /// Mean latency across all lidars, or `None` until every lidar
    /// contributed at least one sample.
    pub fn mean(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for buf in &self.samples {
            if buf.is_empty() {
                return None;
            }
            sum += buf.iter().sum::<f64>();
            count += buf.len();
        }
        Some(sum / count as f64)
    }
}

/// Searches each stream for the first run of `run_length` consecutive
/// headers whose latency is strictly below `mean_latency`, then derives
/// counter offsets so that start-time-matched scans of those runs share
/// one aligned counter. The scan period is estimated from consecutive
/// start times of the reference stream.
///
/// Requires the average latency to be below the scan period, otherwise
/// receive-order and counter-order diverge too often for runs to exist.
pub fn find_counter_offsets(
    streams: &[Vec<ScanHeader>],
    mean_latency: f64,
    run_length: usize,
) -> Result<SyncState, SyncError> {
    assert!(run_length >= 1, "run_length must be at least 1");
    let mut run_starts = Vec::with_capacity(streams.len());
    for (id, stream) in streams.iter().enumerate() {
        if stream.is_empty() {
            return Err(SyncError::EmptyStream { lidar_id: id });
        }
        let run = find_low_latency_run(stream, mean_latency, run_length)
            .ok_or(SyncError::NoQualifyingRun { lidar_id: id })?;
        run_starts.push(stream[run]);
    }

    // scan period from the reference stream
    let reference = &streams[0];
    let period = estimate_period(reference);

    let (c0, t0) = (run_starts[0].counter as i64, run_starts[0].start_time);
    let mut offsets = Vec::with_capacity(streams.len());
    for (id, anchor) in run_starts.iter().enumerate() {
        if id == 0 {
            offsets.push(0);
            continue;
        }
        // counter ticks once per period; translate the time gap between the
        // two anchors into counts
        let steps = (anchor.start_time - t0) / period;
        let rounded = steps.round();
        if (steps - rounded).abs() > 0.25 {
            return Err(SyncError::UnmatchedRun { lidar_id: id });
        }
        offsets.push(anchor.counter as i64 - rounded as i64 - c0);
    }
    Ok(SyncState {
        offsets,
        mean_latency,
        initialized: true,
    })
}

fn find_low_latency_run(
    stream: &[ScanHeader],
    mean_latency: f64,
    run_length: usize,
) -> Option<usize> {
    let mut run = 0usize;
    for (i, h) in stream.iter().enumerate() {
        let l = h.receive_time - h.start_time;
        if l >= 0.0 && l < mean_latency {
            run += 1;
            if run == run_length {
                return Some(i + 1 - run_length);
            }
        } else {
            run = 0;
        }
    }
    None
}

fn estimate_period(stream: &[ScanHeader]) -> f64 {
    let mut diffs: Vec<f64> = stream
        .windows(2)
        .map(|w| w[1].start_time - w[0].start_time)
        .filter(|d| *d > 0.0)
        .collect();
    if diffs.is_empty() {
        return 1.0;
    }
    diffs.sort_by(|a, b| a.partial_cmp(b).expect("finite start times"));
    diffs[diffs.len() / 2]
}

/// Scans of one time step, at most one per lidar.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGroup {
    pub aligned_counter: i64,
    /// Slot per lidar; `None` where the scan never arrived.
    pub headers: Vec<Option<ScanHeader>>,
    /// True when every lidar contributed; false for timeout partials.
    pub complete: bool,
}

/// Streaming grouper: assign each incoming header to the group of its
/// aligned counter, emit groups when complete or a scan period after their
/// newest member. Scans whose start time disagrees with an existing group
/// by more than a quarter period open a parallel group instead (this keeps
/// asynchronously triggered lidars in groups of their own phase).
#[derive(Debug)]
pub struct ScanGrouper {
    state: SyncState,
    period: f64,
    pending: BTreeMap<i64, Vec<PendingGroup>>,
    /// Duplicate headers rejected so far.
    pub duplicates_rejected: usize,
}

#[derive(Debug)]
struct PendingGroup {
    headers: Vec<Option<ScanHeader>>,
    filled: usize,
    start_time: f64,
}

impl ScanGrouper {
    pub fn new(state: SyncState, period: f64) -> Self {
        assert!(state.initialized, "sync state must be initialized");
        assert!(period > 0.0, "period must be positive");
        Self {
            state,
            period,
            pending: BTreeMap::new(),
            duplicates_rejected: 0,
        }
    }

    pub fn n_lidars(&self) -> usize {
        self.state.offsets.len()
    }

    /// Feeds one header; returns any groups completed or timed out by it.
    pub fn push(&mut self, header: ScanHeader) -> Vec<ScanGroup> {
        let n = self.n_lidars();
        assert!(header.lidar_id < n, "unknown lidar id {}", header.lidar_id);
        let aligned = header.counter as i64 - self.state.offsets[header.lidar_id];

        let groups = self.pending.entry(aligned).or_default();
        let slot = groups.iter_mut().find(|g| {
            (g.start_time - header.start_time).abs() <= 0.25 * self.period
        });
        let group = match slot {
            Some(g) => g,
            None => {
                groups.push(PendingGroup {
                    headers: alloc::vec![None; n],
                    filled: 0,
                    start_time: header.start_time,
                });
                groups.last_mut().expect("just pushed")
            }
        };
        if group.headers[header.lidar_id].is_some() {
            self.duplicates_rejected += 1;
        } else {
            group.headers[header.lidar_id] = Some(header);
            group.filled += 1;
        }

        let mut out = Vec::new();
        // completed group?
        if let Some(pos) = self
            .pending
            .get(&aligned)
            .and_then(|gs| gs.iter().position(|g| g.filled == n))
        {
            let g = self.pending.get_mut(&aligned).expect("exists").remove(pos);
            out.push(ScanGroup {
                aligned_counter: aligned,
                headers: g.headers,
                complete: true,
            });
        }
        // timeout: everything a full period older than this start emits partial
        let deadline = header.start_time - self.period;
        let stale: Vec<i64> = self
            .pending
            .iter()
            .filter(|(_, gs)| gs.iter().any(|g| g.start_time < deadline))
            .map(|(&k, _)| k)
            .collect();
        for key in stale {
            let groups = self.pending.get_mut(&key).expect("exists");
            let mut kept = Vec::new();
            for g in groups.drain(..) {
                if g.start_time < deadline {
                    out.push(ScanGroup {
                        aligned_counter: key,
                        headers: g.headers,
                        complete: false,
                    });
                } else {
                    kept.push(g);
                }
            }
            if kept.is_empty() {
                self.pending.remove(&key);
            } else {
                *self.pending.get_mut(&key).expect("exists") = kept;
            }
        }
        out.sort_by_key(|g| g.aligned_counter);
        out
    }

    /// Emits everything still pending as partial groups.
    pub fn flush(&mut self) -> Vec<ScanGroup> {
        let mut out = Vec::new();
        for (key, groups) in core::mem::take(&mut self.pending) {
            for g in groups {
                let complete = g.filled == self.state.offsets.len();
                out.push(ScanGroup {
                    aligned_counter: key,
                    headers: g.headers,
                    complete,
                });
            }
        }
        out
    }
}

/// One-shot convenience over [`ScanGrouper`] for replaying a recorded
/// header stream.
pub fn group_scans(headers: &[ScanHeader], state: &SyncState, period: f64) -> Vec<ScanGroup> {
    let mut grouper = ScanGrouper::new(state.clone(), period);
    let mut out = Vec::new();
    for &h in headers {
        out.extend(grouper.push(h));
    }
    out.extend(grouper.flush());
    out
}
