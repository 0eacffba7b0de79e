//! Run artifacts: the browser timeline, the summary and power CSVs, and the
//! parameter sweep harness.

mod sweep;

pub use sweep::{run_sweep, SweepAxis, SweepRow, SweepSpec, SweepTable};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::SimOptions;
use crate::error::Error;
use crate::power::PowerTrace;
use crate::trace::TraceEvent;
use crate::RunResult;

pub const SUMMARY_FORMAT: &str = "neusim-summary/1";

/// Chrome trace-event JSON: one complete (`X`) event per trace entry, one
/// thread per engine (sorted by path), timestamps in microseconds of the
/// reference clock.
pub fn export_timeline(trace: &[TraceEvent], ref_mhz: f64) -> String {
    let engines: BTreeMap<&str, usize> = {
        let mut names: Vec<&str> = trace.iter().map(|e| e.engine.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names.into_iter().enumerate().map(|(i, n)| (n, i)).collect()
    };
    let us = |c: u64| c as f64 / ref_mhz;
    let mut events: Vec<Value> = engines
        .iter()
        .map(|(name, tid)| {
            json!({"name": "thread_name", "ph": "M", "pid": 0, "tid": tid, "args": {"name": name}})
        })
        .collect();
    for e in trace {
        let mut args = serde_json::Map::new();
        for (k, v) in &e.meta {
            args.insert(k.clone(), v.clone());
        }
        args.insert("t_start_cycles".into(), Value::from(e.t_start));
        args.insert("t_end_cycles".into(), Value::from(e.t_end));
        events.push(json!({
            "name": e.task.clone().unwrap_or_else(|| e.kind.name().to_string()),
            "cat": e.kind.name(),
            "ph": "X",
            "ts": us(e.t_start),
            "dur": us(e.t_end - e.t_start),
            "pid": 0,
            "tid": engines[e.engine.as_str()],
            "args": args,
        }));
    }
    let doc = json!({"traceEvents": events, "displayTimeUnit": "ns"});
    serde_json::to_string_pretty(&doc).expect("trace is serializable") + "\n"
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: String,
    pub value: f64,
    pub unit: &'static str,
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric)
            .map(|r| r.value)
    }

    /// `metric,value,unit` with a leading format row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value", "unit"]).unwrap();
        w.write_record(["format", SUMMARY_FORMAT, ""]).unwrap();
        for r in &self.rows {
            w.write_record([r.metric.as_str(), &r.value.to_string(), r.unit])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Latency, per-engine busy fractions, achieved DDR bandwidth, frame rate
/// and, with a power trace, average/peak power and energy per inference.
pub fn summarize(run: &RunResult, engines: &[String]) -> Summary {
    let mut rows = Vec::new();
    let mut push = |metric: String, value: f64, unit: &'static str| {
        rows.push(SummaryRow {
            metric,
            value,
            unit,
        })
    };
    let secs = run.seconds();
    push("latency_cycles".into(), run.cycles as f64, "cycles");
    push("latency_ms".into(), secs * 1e3, "ms");
    push(
        "fps".into(),
        if secs > 0.0 { 1.0 / secs } else { 0.0 },
        "1/s",
    );
    push("tasks".into(), run.tasks as f64, "count");
    let ddr = run.activity_total("ddr");
    push("ddr_bytes".into(), ddr, "bytes");
    push(
        "ddr_bw_achieved".into(),
        if secs > 0.0 { ddr / secs / 1e9 } else { 0.0 },
        "GB/s",
    );
    push("dpu_ops".into(), run.activity_total("tile*/dpu*"), "MACs");
    push("dsp_ops".into(), run.activity_total("tile*/dsp*"), "ops");
    for e in engines {
        push(
            format!("busy_fraction.{e}"),
            run.busy_fraction(e),
            "fraction",
        );
    }
    if let Some(p) = &run.power {
        let avg = p.mean_power_w(0);
        let peak = p.series(0).into_iter().fold(0.0, f64::max);
        let per_inf = avg * secs;
        push("avg_power_w".into(), avg, "W");
        push("peak_power_w".into(), peak, "W");
        push("energy_trace_j".into(), p.energy_j(0), "J");
        push("energy_per_inference_j".into(), per_inf, "J");
        push(
            "inferences_per_j".into(),
            if per_inf > 0.0 { 1.0 / per_inf } else { 0.0 },
            "1/J",
        );
    }
    Summary { rows }
}

/// `pti_index,node_path,p_lkg_w,p_dyn_w,p_total_w`; node values include
/// their descendants.
pub fn power_csv(trace: &PowerTrace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pti_index", "node_path", "p_lkg_w", "p_dyn_w", "p_total_w"])
        .unwrap();
    for r in &trace.rows {
        w.write_record([
            r.pti.to_string(),
            trace.nodes[r.node].clone(),
            r.p_lkg_w.to_string(),
            r.p_dyn_w.to_string(),
            r.p_total_w.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes every artifact whose path is set in `opts`; returns the paths.
pub fn write_artifacts(
    run: &RunResult,
    engines: &[String],
    opts: &SimOptions,
) -> Result<Vec<PathBuf>, Error> {
    let mut out = Vec::new();
    if let Some(p) = &opts.trace_path {
        write(p, &export_timeline(&run.trace, run.ref_mhz))?;
        out.push(p.clone());
    }
    if let Some(p) = &opts.report_path {
        write(p, &summarize(run, engines).to_csv())?;
        out.push(p.clone());
    }
    if let (Some(p), Some(tr)) = (&opts.power_trace_path, &run.power) {
        write(p, &power_csv(tr))?;
        out.push(p.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::EventKind;

    #[test]
    fn timeline_units_are_microseconds() {
        let ev = TraceEvent {
            t_start: 0,
            t_end: 1300,
            engine: "tile0/dpu0".into(),
            task: Some("a".into()),
            kind: EventKind::Compute,
            meta: BTreeMap::new(),
        };
        let doc: Value = serde_json::from_str(&export_timeline(&[ev], 1300.0)).unwrap();
        let x = doc["traceEvents"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["ph"] == "X")
            .unwrap();
        assert_eq!(x["dur"].as_f64().unwrap(), 1.0);
        assert_eq!(x["name"], "a");
    }

    #[test]
    fn empty_timeline_is_valid_json() {
        let doc: Value = serde_json::from_str(&export_timeline(&[], 1000.0)).unwrap();
        assert_eq!(doc["traceEvents"].as_array().unwrap().len(), 0);
    }
}
