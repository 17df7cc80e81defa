use serde::{Deserialize, Serialize};

/// Time-stamped sequence of states, the common output of every simulator
/// and solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSeries<S> {
    pub snapshots: Vec<S>,
}

impl<S> SnapshotSeries<S> {
    pub fn new() -> Self {
        Self { snapshots: Vec::new() }
    }

    pub fn push(&mut self, s: S) {
        self.snapshots.push(s);
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn last(&self) -> Option<&S> {
        self.snapshots.last()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, S> {
        self.snapshots.iter()
    }
}

impl<S> Default for SnapshotSeries<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Summary of a particle ensemble at one time.
///
/// `events` is cumulative: resamplings for Fleming–Viot, branch/birth
/// events for the selection systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSnapshot {
    pub t: f64,
    pub n: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub events: u64,
    /// Sorted positions, present on full-dump snapshots.
    pub positions: Option<Vec<f64>>,
}

impl ParticleSnapshot {
    pub fn from_positions(t: f64, positions: &[f64], events: u64, keep_positions: bool) -> Self {
        let mut sorted = positions.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n == 0 {
            f64::NAN
        } else if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Self {
            t,
            n,
            min: sorted.first().copied().unwrap_or(f64::NAN),
            median,
            max: sorted.last().copied().unwrap_or(f64::NAN),
            events,
            positions: keep_positions.then_some(sorted),
        }
    }
}

pub type ParticleSeries = SnapshotSeries<ParticleSnapshot>;
