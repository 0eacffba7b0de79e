use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_yaml::Value;

use super::summarize;
use crate::config::Config;
use crate::error::Error;
use crate::workload::{compile_reference, load_workload, Workload};
use crate::{engine_paths, simulate};

/// One sweep dimension. `keys` moves several config keys together, e.g. all
/// clock frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    #[serde(default)]
    pub key: Option<String>,
    #[serde(default)]
    pub keys: Vec<String>,
    pub values: Vec<Value>,
}

impl SweepAxis {
    fn keys(&self) -> Vec<&str> {
        self.key
            .iter()
            .map(String::as_str)
            .chain(self.keys.iter().map(String::as_str))
            .collect()
    }

    fn label(&self) -> String {
        self.keys().join("+")
    }
}

/// A sweep file. Relative paths are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub configs: Vec<PathBuf>,
    #[serde(default)]
    pub overrides: Vec<String>,
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
    pub workloads: Vec<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<SweepSpec, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Sweep(format!("cannot read {}: {e}", path.display())))?;
        let mut spec: SweepSpec = serde_yaml::from_str(&text)
            .map_err(|e| Error::Sweep(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        spec.configs.iter_mut().for_each(fix);
        spec.workloads.iter_mut().for_each(fix);
        if let Some(o) = spec.output_dir.as_mut() {
            fix(o);
        }
        Ok(spec)
    }

    fn validate(&self) -> Result<(), Error> {
        if self.workloads.is_empty() {
            return Err(Error::Sweep("no workloads listed".into()));
        }
        for (i, a) in self.axes.iter().enumerate() {
            if a.keys().is_empty() {
                return Err(Error::Sweep(format!("axis {i} names no key")));
            }
            if a.values.is_empty() {
                return Err(Error::Sweep(format!("axis `{}` has no values", a.label())));
            }
        }
        Ok(())
    }

    /// Every axis combination, first axis outermost, as override lists.
    fn points(&self) -> Vec<Vec<(String, String)>> {
        let mut points = vec![Vec::new()];
        for axis in &self.axes {
            let mut next = Vec::new();
            for p in &points {
                for v in &axis.values {
                    let text = value_text(v);
                    let mut q = p.clone();
                    q.push((axis.label(), text));
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => serde_yaml::to_string(other)
            .unwrap_or_default()
            .trim()
            .to_string(),
    }
}

pub const SWEEP_METRICS: [&str; 6] = [
    "latency_cycles",
    "latency_ms",
    "fps",
    "ddr_bw_achieved",
    "avg_power_w",
    "energy_per_inference_j",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub workload: String,
    /// `(axis label, value)` in axis order.
    pub point: Vec<(String, String)>,
    /// Metrics in [`SWEEP_METRICS`] order, or the failure message.
    pub result: Result<Vec<Option<f64>>, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axes: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn metric(&self, row: usize, metric: &str) -> Option<f64> {
        let i = SWEEP_METRICS.iter().position(|m| *m == metric)?;
        self.rows[row]
            .result
            .as_ref()
            .ok()?
            .get(i)
            .copied()
            .flatten()
    }

    /// One row per workload and point: workload, axis values, status,
    /// error, then the metrics.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["workload".to_string()];
        head.extend(self.axes.iter().cloned());
        head.extend(["status".into(), "error".into()]);
        head.extend(SWEEP_METRICS.iter().map(|m| m.to_string()));
        w.write_record(&head).unwrap();
        for r in &self.rows {
            let mut rec = vec![r.workload.clone()];
            rec.extend(r.point.iter().map(|(_, v)| v.clone()));
            match &r.result {
                Ok(m) => {
                    rec.extend(["ok".to_string(), String::new()]);
                    rec.extend(
                        m.iter()
                            .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
                    );
                }
                Err(e) => {
                    rec.extend(["failed".to_string(), e.clone()]);
                    rec.extend(SWEEP_METRICS.iter().map(|_| String::new()));
                }
            }
            w.write_record(&rec).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

fn run_point(
    spec: &SweepSpec,
    workload: &Path,
    point: &[(String, String)],
) -> Result<Vec<Option<f64>>, Error> {
    let mut overrides = spec.overrides.clone();
    for (axis, (_, value)) in spec.axes.iter().zip(point) {
        for k in axis.keys() {
            overrides.push(format!("{k}={value}"));
        }
    }
    let mut config = Config::load_with_overrides(&spec.configs, &overrides)?;
    // Sweeps report through the table only.
    config.sim.trace_path = None;
    config.sim.report_path = None;
    config.sim.power_trace_path = None;
    let graph = match load_workload(workload)? {
        Workload::Graph(g) => g,
        Workload::Ops(ops) => compile_reference(&ops, &config.platform)?,
    };
    let run = simulate(&config, &graph)?;
    let summary = summarize(&run, &engine_paths(&config.platform));
    Ok(SWEEP_METRICS.iter().map(|m| summary.get(m)).collect())
}

/// Runs every workload at every point of the sweep. Points run in parallel
/// on `jobs` threads (0 picks the machine's default); row order is fixed.
/// A failing point becomes a failed row.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepTable, Error> {
    spec.validate()?;
    let points = spec.points();
    let work: Vec<(&PathBuf, &Vec<(String, String)>)> = spec
        .workloads
        .iter()
        .flat_map(|w| points.iter().map(move |p| (w, p)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Sweep(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        work.par_iter()
            .map(|(w, p)| {
                let result = run_point(spec, w, p).map_err(|e| format!("[{}] {e}", e.code()));
                if let Err(e) = &result {
                    log::warn!("sweep point {} {:?} failed: {e}", w.display(), p);
                }
                SweepRow {
                    workload: w.display().to_string(),
                    point: (*p).clone(),
                    result,
                }
            })
            .collect()
    });
    let table = SweepTable {
        axes: spec.axes.iter().map(SweepAxis::label).collect(),
        rows,
    };
    if let Some(dir) = &spec.output_dir {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        let path = dir.join("sweep.csv");
        std::fs::write(&path, table.to_csv()).map_err(|source| Error::Io { path, source })?;
    }
    Ok(table)
}
