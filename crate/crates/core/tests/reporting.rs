mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;

use common::{compile, data_dir, platform, with_power};
use neusim::activity::ActivityLog;
use neusim::power::{PowerRow, PowerTrace};
use neusim::report::{
    export_timeline, power_csv, run_sweep, summarize, write_artifacts, SweepAxis, SweepSpec,
};
use neusim::trace::{EventKind, TraceEvent};
use neusim::workload::models;
use neusim::{engine_paths, simulate, RunResult};

fn event(engine: &str, t0: u64, t1: u64) -> TraceEvent {
    TraceEvent {
        t_start: t0,
        t_end: t1,
        engine: engine.into(),
        task: Some(format!("{engine}@{t0}")),
        kind: EventKind::Compute,
        meta: BTreeMap::new(),
    }
}

fn flat_power(watts: f64, ptis: usize, pti_seconds: f64) -> PowerTrace {
    PowerTrace {
        pti_cycles: 1,
        pti_seconds,
        n_ptis: ptis,
        nodes: vec!["npu".into()],
        rows: (0..ptis)
            .map(|k| PowerRow {
                pti: k,
                node: 0,
                own_lkg_w: 0.0,
                own_dyn_w: watts,
                p_lkg_w: 0.0,
                p_dyn_w: watts,
                p_total_w: watts,
            })
            .collect(),
        samples: vec![],
    }
}

fn synthetic_run(cycles: u64, ref_mhz: f64, busy: &[(&str, u64)]) -> RunResult {
    RunResult {
        cycles,
        ref_mhz,
        trace: vec![],
        activity: ActivityLog::default(),
        power: None,
        busy: busy.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        tasks: 1,
        digest: 0,
    }
}

#[test]
fn summary_hand_examples() {
    let mut run = synthetic_run(1000, 100.0, &[("tile0/dpu0", 500)]);
    let s = summarize(&run, &["tile0/dpu0".into()]);
    assert_eq!(s.get("busy_fraction.tile0/dpu0"), Some(0.5));

    // 1e6 cycles at 100 MHz is 10 ms.
    run.cycles = 1_000_000;
    run.power = Some(flat_power(0.5, 4, 0.0025));
    let s = summarize(&run, &[]);
    assert!((s.get("latency_ms").unwrap() - 10.0).abs() < 1e-9);
    assert!((s.get("fps").unwrap() - 100.0).abs() < 1e-9);
    assert!((s.get("energy_per_inference_j").unwrap() - 5e-3).abs() < 1e-12);
    assert!((s.get("inferences_per_j").unwrap() - 200.0).abs() < 1e-6);
    assert_eq!(s.get("avg_power_w"), Some(0.5));
    assert_eq!(s.get("peak_power_w"), Some(0.5));
}

#[test]
fn summary_csv_is_versioned() {
    let run = synthetic_run(10, 1.0, &[]);
    let csv = summarize(&run, &[]).to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("metric,value,unit"));
    assert!(lines.next().unwrap().starts_with("format,neusim-summary/"));
    assert!(csv.contains("latency_cycles,10,cycles"));
}

#[test]
fn timeline_has_one_track_per_engine() {
    let trace = vec![
        event("tile0/dpu0", 0, 1300),
        event("dma/ch0", 0, 650),
        event("tile0/dpu0", 1300, 2600),
    ];
    let doc: serde_json::Value = serde_json::from_str(&export_timeline(&trace, 1300.0)).unwrap();
    let evs = doc["traceEvents"].as_array().unwrap();
    let names: Vec<_> = evs.iter().filter(|e| e["ph"] == "M").collect();
    assert_eq!(names.len(), 2);
    let xs: Vec<_> = evs.iter().filter(|e| e["ph"] == "X").collect();
    assert_eq!(xs.len(), 3);
    let dpu_tid = xs[0]["tid"].clone();
    assert_eq!(xs.iter().filter(|e| e["tid"] == dpu_tid).count(), 2);
    assert!(xs.iter().all(|e| e["dur"].as_f64().unwrap() > 0.0));
    assert_eq!(
        xs.iter()
            .map(|e| e["ts"].as_f64().unwrap())
            .fold(0.0, f64::max),
        1.0
    );
}

#[test]
fn busy_cycles_match_task_durations() {
    let cfg = platform(&[]);
    let r = simulate(&cfg, &compile(&models::conv_act(48, 48, 32), &cfg)).unwrap();
    let mut sums: BTreeMap<String, u64> = BTreeMap::new();
    for e in &r.trace {
        assert!(e.t_end >= e.t_start);
        if matches!(e.kind, EventKind::Compute | EventKind::Dma) {
            *sums.entry(e.engine.clone()).or_default() += e.t_end - e.t_start;
        }
    }
    assert_eq!(sums, r.busy);
    for e in engine_paths(&cfg.platform) {
        let f = r.busy_fraction(&e);
        assert!((0.0..=1.0).contains(&f), "{e}: {f}");
    }
    // Engines run one task at a time.
    let mut by_engine: BTreeMap<&str, Vec<(u64, u64)>> = BTreeMap::new();
    for e in r
        .trace
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Compute | EventKind::Dma))
    {
        by_engine
            .entry(&e.engine)
            .or_default()
            .push((e.t_start, e.t_end));
    }
    for spans in by_engine.values_mut() {
        spans.sort();
        assert!(spans.windows(2).all(|w| w[0].1 <= w[1].0));
    }
}

#[test]
fn artifacts_are_written_where_configured() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = with_power(&[]);
    cfg.sim.trace_path = Some(dir.path().join("out/timeline.json"));
    cfg.sim.report_path = Some(dir.path().join("out/summary.csv"));
    cfg.sim.power_trace_path = Some(dir.path().join("power.csv"));
    let r = simulate(&cfg, &compile(&models::conv_act(32, 32, 16), &cfg)).unwrap();
    let written = write_artifacts(&r, &engine_paths(&cfg.platform), &cfg.sim).unwrap();
    assert_eq!(written.len(), 3);
    let power = std::fs::read_to_string(dir.path().join("power.csv")).unwrap();
    assert!(power.starts_with("pti_index,node_path,p_lkg_w,p_dyn_w,p_total_w\n"));
    assert_eq!(power, power_csv(r.power.as_ref().unwrap()));
    let rows = power.lines().count() - 1;
    let tr = r.power.as_ref().unwrap();
    assert_eq!(rows, tr.n_ptis * tr.nodes.len());
}

fn sweep_spec(dir: &std::path::Path, workloads: Vec<PathBuf>) -> SweepSpec {
    SweepSpec {
        configs: vec![
            data_dir().join("platform.yaml"),
            data_dir().join("power.yaml"),
        ],
        overrides: vec![],
        axes: vec![SweepAxis {
            key: Some("ddr.bw_bytes_per_cycle".into()),
            keys: vec![],
            values: vec![8.into(), 64.into()],
        }],
        workloads,
        output_dir: Some(dir.to_path_buf()),
    }
}

#[test]
fn sweep_rows_are_cartesian_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    std::fs::write(&a, models::conv_act(32, 32, 16).to_json()).unwrap();
    std::fs::write(&b, models::conv_stack(2, 16, 16, 32).to_json()).unwrap();
    let spec = sweep_spec(dir.path(), vec![a, b]);
    let t1 = run_sweep(&spec, 2).unwrap();
    assert_eq!(t1.rows.len(), 4);
    assert!(t1.rows.iter().all(|r| r.result.is_ok()));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv, t1.to_csv());
    let t2 = run_sweep(&spec, 1).unwrap();
    assert_eq!(t1.to_csv(), t2.to_csv());
    // Lower bandwidth never helps.
    assert!(t1.metric(0, "latency_cycles").unwrap() >= t1.metric(1, "latency_cycles").unwrap());
}

#[test]
fn failing_points_become_failed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, models::conv_act(16, 16, 16).to_json()).unwrap();
    let missing = dir.path().join("missing.json");
    let spec = sweep_spec(dir.path(), vec![good, missing]);
    let t = run_sweep(&spec, 0).unwrap();
    assert_eq!(t.rows.len(), 4);
    assert!(t.rows[0].result.is_ok() && t.rows[1].result.is_ok());
    let err = t.rows[2].result.as_ref().unwrap_err();
    assert!(
        err.starts_with("[E_IO]") && err.contains("missing.json"),
        "{err}"
    );
    assert!(t.to_csv().contains(",failed,"));
}

#[test]
fn shipped_sweep_file_loads() {
    let spec = SweepSpec::load(&data_dir().join("sweep_example.yaml")).unwrap();
    assert!(
        spec.workloads.iter().all(|w| w.exists()),
        "{:?}",
        spec.workloads
    );
    assert!(spec.configs.iter().all(|c| c.exists()));
}
