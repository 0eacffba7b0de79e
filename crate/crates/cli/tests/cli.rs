use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn neusim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neusim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn platform() -> String {
    data().join("platform.yaml").display().to_string()
}

fn tensor(id: &str, loc: &str, addr: u64) -> serde_json::Value {
    json!({"id": id, "dims": [1, 4096], "elem_bytes": 1, "location": loc, "base_addr": addr})
}

fn copy_task(id: &str, src: &str, dst: &str, wait: &[u32], update: &[u32]) -> serde_json::Value {
    json!({
        "kind": "dma", "id": id, "channel": 0,
        "descriptors": [{"src": {"tensor": src, "offset": 0}, "dst": {"tensor": dst, "offset": 0}, "shape": [4096]}],
        "wait": wait, "update": update,
    })
}

fn write_json(dir: &Path, name: &str, v: &serde_json::Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.display().to_string()
}

fn one_copy_graph(dir: &Path) -> String {
    let g = json!({
        "format": "neusim-taskgraph/1",
        "tensors": [tensor("a", "ddr", 0), tensor("b", "ddr", 65536)],
        "operators": [],
        "tasks": [copy_task("copy", "a", "b", &[], &[])],
        "barriers": [],
    });
    write_json(dir, "one.graph.json", &g)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let g = one_copy_graph(dir.path());
    let (t, r, p) = (
        dir.path().join("t.json"),
        dir.path().join("r.csv"),
        dir.path().join("p.csv"),
    );
    let o = neusim(&[
        "run",
        "-c",
        &platform(),
        "-c",
        &data().join("power.yaml").display().to_string(),
        "-w",
        &g,
        "--power",
        "--trace",
        t.to_str().unwrap(),
        "--report",
        r.to_str().unwrap(),
        "--power-trace",
        p.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [&t, &r, &p] {
        assert!(f.metadata().unwrap().len() > 0, "{}", f.display());
    }
    assert!(stdout(&o).contains("latency_cycles"));
}

#[test]
fn missing_workload_names_the_path() {
    let o = neusim(&["run", "-c", &platform(), "-w", "/no/such/graph.json"]);
    assert_eq!(o.status.code(), Some(4));
    let e = stderr(&o);
    assert!(
        e.contains("error[E_IO]") && e.contains("/no/such/graph.json"),
        "{e}"
    );
}

#[test]
fn bad_arguments_are_usage_errors() {
    let o = neusim(&["run", "-w", "x.json"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).starts_with("error[E_USAGE]"));
}

#[test]
fn override_changes_the_result() {
    let w = data()
        .join("workloads/conv_act.ops.json")
        .display()
        .to_string();
    let base = neusim(&[
        "run",
        "-c",
        &platform(),
        "-w",
        &w,
        "--override",
        "ddr.bw_bytes_per_cycle=4",
    ]);
    let fast = neusim(&[
        "run",
        "-c",
        &platform(),
        "-w",
        &w,
        "--override",
        "ddr.bw_bytes_per_cycle=64",
    ]);
    assert!(
        base.status.success() && fast.status.success(),
        "{}",
        stderr(&base)
    );
    assert_ne!(stdout(&base), stdout(&fast));
}

#[test]
fn compile_then_validate_then_run() {
    let dir = tempfile::tempdir().unwrap();
    let ops = json!({
        "format": "neusim-oplist/1",
        "tensors": [
            {"id": "x", "dims": [1, 16, 16, 16], "elem_bytes": 1, "location": "ddr", "base_addr": 0},
            {"id": "y", "dims": [1, 16, 16, 16], "elem_bytes": 1, "location": "ddr", "base_addr": 0},
            {"id": "z", "dims": [1, 16, 16, 16], "elem_bytes": 1, "location": "ddr", "base_addr": 0},
        ],
        "operators": [
            {"id": "a", "op": {"activation": "relu"}, "inputs": ["x"], "outputs": ["y"]},
            {"id": "b", "op": {"activation": "tanh"}, "inputs": ["y"], "outputs": ["z"]},
        ],
    });
    let ops = write_json(dir.path(), "chain.ops.json", &ops);
    let graph = dir.path().join("chain.graph.json");
    let o = neusim(&[
        "compile",
        "-c",
        &platform(),
        "-o",
        "tiles=2",
        "-w",
        &ops,
        "--output",
        graph.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = neusim(&["validate", "-w", graph.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok:"));
    let o = neusim(&[
        "run",
        "-c",
        &platform(),
        "-o",
        "tiles=2",
        "-w",
        graph.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn cyclic_barriers_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let g = json!({
        "format": "neusim-taskgraph/1",
        "tensors": [tensor("a", "ddr", 0), tensor("b", "ddr", 65536)],
        "operators": [],
        "tasks": [
            copy_task("first", "a", "b", &[1], &[0]),
            copy_task("second", "b", "a", &[0], &[1]),
        ],
        "barriers": [
            {"id": 0, "producers": 1, "consumers": 1},
            {"id": 1, "producers": 1, "consumers": 1},
        ],
    });
    let g = write_json(dir.path(), "cycle.graph.json", &g);
    let o = neusim(&["validate", "-w", &g]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(
        stderr(&o).starts_with("error[E_WORKLOAD]"),
        "{}",
        stderr(&o)
    );
}
