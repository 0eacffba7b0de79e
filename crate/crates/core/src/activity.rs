//! Activity bookkeeping shared by every hardware model of a run. Each model
//! instance registers its peak rate; work is recorded as amounts spread
//! over `[t0, t1)` reference-cycle intervals.

use crate::clock::ClockClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivityUnit {
    /// MACs (DPU) or elementary operations (DSP).
    Ops,
    Bytes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelInfo {
    /// Instance path such as `tile0/dpu0`, `dma/ch1`, `noc/ddr` or `ddr`.
    pub path: String,
    pub class: ClockClass,
    /// Peak activity per reference cycle.
    pub peak_per_cycle: f64,
    pub unit: ActivityUnit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub t0: u64,
    pub t1: u64,
    pub amount: f64,
}

pub type ModelId = usize;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivityLog {
    pub models: Vec<ModelInfo>,
    pub intervals: Vec<Vec<Interval>>,
}

impl ActivityLog {
    pub fn register(&mut self, info: ModelInfo) -> ModelId {
        self.models.push(info);
        self.intervals.push(Vec::new());
        self.models.len() - 1
    }

    pub fn record(&mut self, id: ModelId, t0: u64, t1: u64, amount: f64) {
        debug_assert!(t1 >= t0);
        if amount > 0.0 {
            self.intervals[id].push(Interval { t0, t1, amount });
        }
    }

    pub fn find(&self, path: &str) -> Option<ModelId> {
        self.models.iter().position(|m| m.path == path)
    }

    pub fn total(&self, id: ModelId) -> f64 {
        self.intervals[id].iter().map(|i| i.amount).sum()
    }
}
