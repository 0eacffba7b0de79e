//! One simulation run: builds the hardware models for a platform, schedules
//! a task graph on them and collects the trace, activity and power.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use neusim_kernel::{Env, SimError, SimTime};
use serde_json::Value;

use crate::activity::{ActivityLog, ActivityUnit, ModelId, ModelInfo};
use crate::clock::{ClockClass, Clocks};
use crate::config::Config;
use crate::engines::{dpu_block_costs, dsp_block_costs, BlockCost, CurveTable};
use crate::error::Error;
use crate::memory::MemorySystem;
use crate::power::{PowerModel, PowerTrace};
use crate::sched::{ExecFuture, ExecRecord, SchedError, Schedule, TaskExecutor};
use crate::trace::{EventKind, TraceEvent};
use crate::workload::{
    validate_graph, EngineClass, Location, OpGeometry, Task, TaskGraph, WorkloadError,
};

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    /// End of the last task, in reference cycles.
    pub cycles: u64,
    pub ref_mhz: f64,
    pub trace: Vec<TraceEvent>,
    pub activity: ActivityLog,
    pub power: Option<PowerTrace>,
    /// Busy cycles per engine path (tasks only, stalls excluded).
    pub busy: BTreeMap<String, u64>,
    pub tasks: usize,
    /// Digest of the kernel's event sequence.
    pub digest: u64,
}

impl RunResult {
    pub fn seconds(&self) -> f64 {
        self.cycles as f64 / (self.ref_mhz * 1e6)
    }

    pub fn busy_fraction(&self, engine: &str) -> f64 {
        if self.cycles == 0 {
            return 0.0;
        }
        self.busy.get(engine).copied().unwrap_or(0) as f64 / self.cycles as f64
    }

    /// Total activity recorded by every model whose path matches `pattern`.
    pub fn activity_total(&self, pattern: &str) -> f64 {
        self.activity
            .models
            .iter()
            .enumerate()
            .filter(|(_, m)| crate::power::glob_match(pattern, &m.path))
            .map(|(i, _)| self.activity.total(i))
            .sum()
    }
}

/// Engine paths of a platform: compute units, then DMA channels.
pub fn engine_paths(cfg: &crate::config::PlatformConfig) -> Vec<String> {
    let mut out = Vec::new();
    for t in 0..cfg.tiles {
        for u in 0..cfg.dpus_per_tile {
            out.push(format!("tile{t}/dpu{u}"));
        }
        for u in 0..cfg.dsps_per_tile {
            out.push(format!("tile{t}/dsp{u}"));
        }
    }
    for c in 0..cfg.dma.channels {
        out.push(format!("dma/ch{c}"));
    }
    out
}

/// Checks that a validated graph fits the platform it will run on.
fn check_fit(graph: &TaskGraph, config: &Config, curves: &CurveTable) -> Result<(), Error> {
    let p = &config.platform;
    for t in &graph.tensors {
        if let Location::Cb(tile) = t.location {
            if tile >= p.tiles {
                return Err(WorkloadError::Invalid {
                    owner: format!("tensor {}", t.id),
                    reason: format!(
                        "placed in tile {tile} but the platform has {} tiles",
                        p.tiles
                    ),
                }
                .into());
            }
            if t.base_addr + t.footprint() > p.cb.size {
                return Err(WorkloadError::Invalid {
                    owner: format!("tensor {}", t.id),
                    reason: format!("ends past the {}-byte compute buffer", p.cb.size),
                }
                .into());
            }
        }
    }
    for task in &graph.tasks {
        if let Task::Dma(d) = task {
            for desc in &d.descriptors {
                if let Some(&bad) = desc.broadcast.iter().find(|&&b| b >= p.tiles) {
                    return Err(WorkloadError::Invalid {
                        owner: format!("task {}", d.id),
                        reason: format!(
                            "broadcast to tile {bad} but the platform has {} tiles",
                            p.tiles
                        ),
                    }
                    .into());
                }
            }
        }
    }
    for op in &graph.operators {
        if op.engine_class() == EngineClass::Dsp {
            curves.get(&op.kernel_name().unwrap_or_default())?;
        }
    }
    Ok(())
}

struct Executor {
    env: Env,
    graph: Rc<TaskGraph>,
    mem: Rc<MemorySystem>,
    costs: Vec<Option<Rc<Vec<BlockCost>>>>,
    engine_ids: HashMap<String, ModelId>,
    activity: Rc<RefCell<ActivityLog>>,
    tensors: Rc<HashMap<String, usize>>,
}

impl TaskExecutor for Executor {
    fn execute(&self, index: usize) -> ExecFuture {
        let env = self.env.clone();
        let mem = Rc::clone(&self.mem);
        match &self.graph.tasks[index] {
            Task::Compute(t) => {
                let blocks = Rc::clone(self.costs[index].as_ref().expect("compute task has costs"));
                let model = self.engine_ids[&t.engine.path()];
                let activity = Rc::clone(&self.activity);
                let tile = t.engine.tile;
                Box::pin(async move {
                    let mut ops = 0;
                    if let Some(first) = blocks.first() {
                        let fill =
                            first.stages.iter().sum::<u64>() - first.stages.iter().max().unwrap();
                        env.timeout(fill).await;
                    }
                    for b in blocks.iter() {
                        let now = env.now().0;
                        let slot = *b.stages.iter().max().unwrap();
                        let (_, load_end) = mem.cb_reserve(tile, now, b.load_bytes);
                        let (_, store_end) = mem.cb_reserve(tile, now, b.store_bytes);
                        let end = (now + slot).max(load_end).max(store_end);
                        activity.borrow_mut().record(model, now, end, b.ops as f64);
                        ops += b.ops;
                        env.wait_until(SimTime(end)).await;
                    }
                    let mut meta = BTreeMap::new();
                    meta.insert("blocks".into(), Value::from(blocks.len()));
                    meta.insert("ops".into(), Value::from(ops));
                    Ok(ExecRecord {
                        kind: EventKind::Compute,
                        meta,
                    })
                })
            }
            Task::Dma(_) => {
                let tensors = Rc::clone(&self.tensors);
                let graph = Rc::clone(&self.graph);
                Box::pin(async move {
                    let Task::Dma(task) = &graph.tasks[index] else {
                        unreachable!()
                    };
                    let lookup = |id: &str| tensors.get(id).map(|&i| &graph.tensors[i]);
                    let out = mem.run_dma(task, &lookup).await?;
                    let mut meta = BTreeMap::new();
                    meta.insert("bytes".into(), Value::from(out.bytes));
                    meta.insert("requests".into(), Value::from(out.requests));
                    meta.insert("first_issue".into(), Value::from(out.first_issue));
                    meta.insert("last_completion".into(), Value::from(out.last_completion));
                    Ok(ExecRecord {
                        kind: EventKind::Dma,
                        meta,
                    })
                })
            }
        }
    }
}

/// Simulates `graph` on the platform described by `config`.
pub fn simulate(config: &Config, graph: &TaskGraph) -> Result<RunResult, Error> {
    validate_graph(graph)?;
    simulate_unvalidated(config, graph)
}

/// Like [`simulate`] but skips the static graph checks, so barrier count
/// mistakes surface as a runtime deadlock instead of a workload error.
/// Tensor and operator references must still resolve.
pub fn simulate_unvalidated(config: &Config, graph: &TaskGraph) -> Result<RunResult, Error> {
    config.validate()?;
    let p = &config.platform;
    let curves = CurveTable::load(&p.dsp.curves)?;
    curves.check_platform(p)?;
    check_fit(graph, config, &curves)?;
    let clocks = Clocks::new(&p.freq_mhz);

    let tensors: HashMap<String, usize> = graph
        .tensors
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.clone(), i))
        .collect();
    let lookup = |id: &str| tensors.get(id).map(|&i| &graph.tensors[i]);
    let mut geoms = HashMap::new();
    for op in &graph.operators {
        geoms.insert(op.id.as_str(), (op, OpGeometry::resolve(op, lookup)?));
    }
    let mut costs = Vec::with_capacity(graph.tasks.len());
    for task in &graph.tasks {
        costs.push(match task {
            Task::Compute(t) => {
                let (op, g) = &geoms[t.operator.as_str()];
                Some(Rc::new(match t.engine.class {
                    EngineClass::Dpu => dpu_block_costs(op, g, &t.region, p, &clocks),
                    EngineClass::Dsp => dsp_block_costs(op, g, &t.region, p, &clocks, &curves)?,
                }))
            }
            Task::Dma(_) => None,
        });
    }

    let env = Env::new();
    let activity = Rc::new(RefCell::new(ActivityLog::default()));
    let mut engine_ids = HashMap::new();
    {
        let mut log = activity.borrow_mut();
        let dpu_peak = p.dpu_array.peak_macs_per_cycle() as f64 * clocks.dpu.ratio();
        let dsp_peak = p.dsp_peak_elems_per_cycle() as f64 * clocks.dsp.ratio();
        for path in engine_paths(p) {
            let (class, peak) = if path.contains("/dpu") {
                (ClockClass::Dpu, dpu_peak)
            } else if path.contains("/dsp") {
                (ClockClass::Dsp, dsp_peak)
            } else {
                continue;
            };
            let id = log.register(ModelInfo {
                path: path.clone(),
                class,
                peak_per_cycle: peak,
                unit: ActivityUnit::Ops,
            });
            engine_ids.insert(path, id);
        }
    }
    let mem = MemorySystem::new(&env, p, Rc::clone(&activity));
    let power_model = if config.sim.power_enabled {
        let pc = config.power.as_ref().ok_or_else(|| {
            Error::Sim("power is enabled but no power section is configured".into())
        })?;
        Some(PowerModel::build(pc, &p.freq_mhz, &activity.borrow())?)
    } else {
        None
    };

    let graph_rc = Rc::new(graph.clone());
    let trace = Rc::new(RefCell::new(Vec::new()));
    let exec = Rc::new(Executor {
        env: env.clone(),
        graph: Rc::clone(&graph_rc),
        mem,
        costs,
        engine_ids,
        activity: Rc::clone(&activity),
        tensors: Rc::new(tensors.clone()),
    });
    let schedule = Schedule::start(
        &env,
        graph_rc,
        &engine_paths(p),
        &p.scheduler,
        exec,
        Rc::clone(&trace),
    )?;
    log::debug!("running {} tasks", graph.tasks.len());

    let outcome = match config.sim.run_limit {
        Some(limit) => env.run_until(SimTime(limit)).map(|_| ()),
        None => env.run().map(|_| ()),
    };
    let finished = schedule.finish();
    let digest = env.digest();
    env.shutdown();
    if let Err(e) = outcome {
        return Err(process_error(e));
    }
    if let Err(e) = finished {
        if let (Some(limit), SchedError::Deadlock { incomplete, .. }) = (config.sim.run_limit, &e) {
            return Err(Error::Sim(format!(
                "run limit of {limit} cycles reached with {incomplete} task(s) unfinished"
            )));
        }
        return Err(e.into());
    }

    let mut trace = std::mem::take(&mut *trace.borrow_mut());
    trace.sort_by(|a, b| {
        (a.t_start, &a.engine, a.t_end, &a.task, a.kind)
            .cmp(&(b.t_start, &b.engine, b.t_end, &b.task, b.kind))
    });
    let mut busy = BTreeMap::new();
    let mut cycles = 0;
    for e in &trace {
        if matches!(e.kind, EventKind::Compute | EventKind::Dma) {
            *busy.entry(e.engine.clone()).or_insert(0) += e.t_end - e.t_start;
            cycles = cycles.max(e.t_end);
        }
    }
    let activity = activity.borrow().clone();
    let power = match power_model {
        Some(m) => Some(m.trace(
            &activity,
            config.sim.pti_cycles,
            cycles,
            p.freq_mhz.reference,
        )?),
        None => None,
    };
    Ok(RunResult {
        cycles,
        ref_mhz: p.freq_mhz.reference,
        trace,
        activity,
        power,
        busy,
        tasks: graph.tasks.len(),
        digest,
    })
}

fn process_error(e: SimError) -> Error {
    match e {
        SimError::ProcessFailed {
            source, name, time, ..
        } => match source.downcast::<SchedError>() {
            Ok(s) => Error::Sched(*s),
            Err(source) => match source.downcast::<WorkloadError>() {
                Ok(w) => Error::Workload(*w),
                Err(source) => {
                    Error::Sim(format!("process `{name}` failed at cycle {time}: {source}"))
                }
            },
        },
        other => Error::Sim(other.to_string()),
    }
}
