//! Workload interchange: operators, compute and DMA tasks, barriers.
//!
//! A task graph is a JSON document (format `neusim-taskgraph/1`). Operator
//! lists (`neusim-oplist/1`) describe a network without tiling and are turned
//! into task graphs by [`compile_reference`].

mod compile;
mod geometry;
pub mod models;
mod types;
mod validate;

use std::path::{Path, PathBuf};

pub use compile::compile_reference;
pub use geometry::{op_compute_count, GeomKind, OpCount, OpGeometry};
pub use types::*;
pub use validate::{validate_descriptor, validate_graph};

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unsupported format `{found}` (expected {expected})")]
    Format { found: String, expected: String },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{owner} references undefined {kind} `{id}`")]
    Dangling {
        owner: String,
        kind: String,
        id: String,
    },
    #[error("{owner}: {reason}")]
    Invalid { owner: String, reason: String },
    #[error("barrier {barrier} declares {declared} {role} but {actual} tasks {verb} it")]
    BarrierCount {
        barrier: BarrierId,
        role: &'static str,
        verb: &'static str,
        declared: u32,
        actual: u32,
    },
    #[error("cyclic dependency among tasks [{}] through barriers {barriers:?}", tasks.join(", "))]
    Cyclic {
        tasks: Vec<String>,
        barriers: Vec<BarrierId>,
    },
    #[error(
        "task `{task}` waits on barrier {barrier}, which is updated by later task `{producer}`"
    )]
    Order {
        task: String,
        barrier: BarrierId,
        producer: String,
    },
    #[error("tasks of operator `{operator}` do not partition its output: {reason}")]
    Partition { operator: String, reason: String },
    #[error("operator `{operator}` is unschedulable: {reason}")]
    Unschedulable { operator: String, reason: String },
}

/// A workload file: either a compiled task graph or an operator list.
#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Graph(TaskGraph),
    Ops(OpList),
}

fn read(path: &Path) -> Result<String, WorkloadError> {
    std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, WorkloadError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| WorkloadError::Parse {
        path: path.to_path_buf(),
        message: if e.path().to_string() == "." {
            e.inner().to_string()
        } else {
            format!("at {}: {}", e.path(), e.inner())
        },
    })
}

/// Parses and validates a task graph document.
pub fn task_graph_from_str(text: &str) -> Result<TaskGraph, WorkloadError> {
    let g: TaskGraph = parse_json(text, Path::new("<string>"))?;
    validate_graph(&g)?;
    Ok(g)
}

/// Reads, parses and validates a task graph file.
pub fn parse_task_graph(path: impl AsRef<Path>) -> Result<TaskGraph, WorkloadError> {
    let path = path.as_ref();
    let g: TaskGraph = parse_json(&read(path)?, path)?;
    validate_graph(&g)?;
    Ok(g)
}

/// Reads a workload file of either kind, telling them apart by `format`.
/// Task graphs are validated; operator lists are checked when compiled.
pub fn load_workload(path: impl AsRef<Path>) -> Result<Workload, WorkloadError> {
    let path = path.as_ref();
    let text = read(path)?;
    #[derive(serde::Deserialize)]
    struct Probe {
        format: String,
    }
    let probe: Probe = parse_json(&text, path)?;
    match probe.format.as_str() {
        TASKGRAPH_FORMAT => {
            let g: TaskGraph = parse_json(&text, path)?;
            validate_graph(&g)?;
            Ok(Workload::Graph(g))
        }
        OPLIST_FORMAT => Ok(Workload::Ops(parse_json(&text, path)?)),
        other => Err(WorkloadError::Format {
            found: other.to_string(),
            expected: format!("{TASKGRAPH_FORMAT} or {OPLIST_FORMAT}"),
        }),
    }
}

impl TaskGraph {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task graph serializes")
    }
}

impl OpList {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("operator list serializes")
    }
}
