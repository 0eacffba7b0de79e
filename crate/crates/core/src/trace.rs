use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Compute,
    Dma,
    BarrierFire,
    Stall,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Compute => "compute",
            EventKind::Dma => "dma",
            EventKind::BarrierFire => "barrier-fire",
            EventKind::Stall => "stall",
        }
    }
}

/// One interval on one engine's timeline, in reference cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_start: u64,
    pub t_end: u64,
    pub engine: String,
    pub task: Option<String>,
    pub kind: EventKind,
    #[serde(default)]
    pub meta: BTreeMap<String, Value>,
}

/// Engine name used for barrier-fire events.
pub const SCOREBOARD: &str = "scoreboard";
