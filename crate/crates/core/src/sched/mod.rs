//! Central task scheduler: tasks are handed out in list order to bounded
//! per-engine FIFOs, and engines synchronize through a barrier scoreboard.

mod scoreboard;

pub use scoreboard::Scoreboard;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;

use neusim_kernel::{Env, Fifo, ProcessError};
use serde_json::Value;

use crate::config::SchedulerConfig;
use crate::trace::{EventKind, TraceEvent, SCOREBOARD};
use crate::workload::{BarrierId, TaskGraph};

#[derive(Debug, thiserror::Error)]
pub enum SchedError {
    #[error("task `{task}` targets engine `{engine}`, which the platform does not have")]
    UnknownEngine { task: String, engine: String },
    #[error("barrier {barrier}: {reason}")]
    Protocol { barrier: BarrierId, reason: String },
    #[error(
        "deadlock: {} task(s) never completed; blocked: [{}]; unfired barriers: {:?}",
        incomplete,
        blocked.join(", "),
        unfired
    )]
    Deadlock {
        incomplete: usize,
        /// `task (waiting on barriers ...)` for every task stuck on a barrier.
        blocked: Vec<String>,
        unfired: Vec<BarrierId>,
    },
}

/// What an engine reports about one executed task.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecRecord {
    pub kind: EventKind,
    pub meta: BTreeMap<String, Value>,
}

pub type ExecFuture = Pin<Box<dyn Future<Output = Result<ExecRecord, ProcessError>>>>;

/// Runs the body of a task on its engine.
pub trait TaskExecutor {
    fn execute(&self, task: usize) -> ExecFuture;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TaskState {
    Pending,
    Queued,
    Waiting,
    Running,
    Done,
}

/// Progress of one scheduled run; inspect it after the environment drains.
pub struct Schedule {
    graph: Rc<TaskGraph>,
    scoreboard: Rc<Scoreboard>,
    states: Rc<RefCell<Vec<TaskState>>>,
    trace: Rc<RefCell<Vec<TraceEvent>>>,
}

impl Schedule {
    /// Spawns the scheduler and one process per engine. `engines` lists every
    /// engine path of the platform.
    pub fn start(
        env: &Env,
        graph: Rc<TaskGraph>,
        engines: &[String],
        cfg: &SchedulerConfig,
        exec: Rc<dyn TaskExecutor>,
        trace: Rc<RefCell<Vec<TraceEvent>>>,
    ) -> Result<Schedule, SchedError> {
        let mut fifos: BTreeMap<String, Fifo<Option<usize>>> = BTreeMap::new();
        for e in engines {
            fifos.insert(e.clone(), Fifo::new(env, cfg.fifo_depth.max(1) as usize));
        }
        let targets: Vec<Fifo<Option<usize>>> = graph
            .tasks
            .iter()
            .map(|t| {
                let path = t.engine_path();
                fifos.get(&path).cloned().ok_or(SchedError::UnknownEngine {
                    task: t.id().to_string(),
                    engine: path,
                })
            })
            .collect::<Result<_, _>>()?;
        let scoreboard = Rc::new(Scoreboard::new(env, cfg.barrier_slots, &graph.barriers));
        let states = Rc::new(RefCell::new(vec![TaskState::Pending; graph.tasks.len()]));

        let (st, all) = (
            Rc::clone(&states),
            fifos.values().cloned().collect::<Vec<_>>(),
        );
        env.spawn("scheduler", async move {
            for (i, fifo) in targets.into_iter().enumerate() {
                fifo.put(Some(i)).await;
                st.borrow_mut()[i] = TaskState::Queued;
            }
            for fifo in all {
                fifo.put(None).await;
            }
            Ok(())
        })
        .expect("environment is running");

        for (path, fifo) in fifos {
            let ctx = EngineCtx {
                env: env.clone(),
                path: path.clone(),
                graph: Rc::clone(&graph),
                scoreboard: Rc::clone(&scoreboard),
                states: Rc::clone(&states),
                trace: Rc::clone(&trace),
                exec: Rc::clone(&exec),
            };
            env.spawn(path, async move { ctx.run(fifo).await })
                .expect("environment is running");
        }
        Ok(Schedule {
            graph,
            scoreboard,
            states,
            trace,
        })
    }

    pub fn scoreboard(&self) -> &Scoreboard {
        &self.scoreboard
    }

    /// Checks that every task completed; otherwise reports the deadlock.
    pub fn finish(&self) -> Result<(), SchedError> {
        flush_fires(&self.scoreboard, &self.trace);
        let states = self.states.borrow();
        let incomplete = states.iter().filter(|s| **s != TaskState::Done).count();
        if incomplete == 0 {
            return Ok(());
        }
        let mut blocked = Vec::new();
        for (i, s) in states.iter().enumerate() {
            if *s == TaskState::Waiting {
                let t = &self.graph.tasks[i];
                let waits: Vec<String> = t
                    .wait()
                    .iter()
                    .filter(|b| !self.scoreboard.is_fired(**b))
                    .map(|b| b.to_string())
                    .collect();
                blocked.push(format!(
                    "{} (waiting on barriers {})",
                    t.id(),
                    waits.join(", ")
                ));
            }
        }
        Err(SchedError::Deadlock {
            incomplete,
            blocked,
            unfired: self.scoreboard.unfired(),
        })
    }
}

fn flush_fires(sb: &Scoreboard, trace: &RefCell<Vec<TraceEvent>>) {
    let mut tr = trace.borrow_mut();
    for (id, t) in sb.take_fires() {
        let mut meta = BTreeMap::new();
        meta.insert("barrier".into(), Value::from(id));
        tr.push(TraceEvent {
            t_start: t,
            t_end: t,
            engine: SCOREBOARD.into(),
            task: None,
            kind: EventKind::BarrierFire,
            meta,
        });
    }
}

struct EngineCtx {
    env: Env,
    path: String,
    graph: Rc<TaskGraph>,
    scoreboard: Rc<Scoreboard>,
    states: Rc<RefCell<Vec<TaskState>>>,
    trace: Rc<RefCell<Vec<TraceEvent>>>,
    exec: Rc<dyn TaskExecutor>,
}

impl EngineCtx {
    async fn run(self, fifo: Fifo<Option<usize>>) -> Result<(), ProcessError> {
        while let Some(i) = fifo.get().await {
            let task = &self.graph.tasks[i];
            let ready = self.env.now().0;
            self.states.borrow_mut()[i] = TaskState::Waiting;
            // A task may list a barrier once; consuming it is wait-then-count.
            let waits: BTreeSet<BarrierId> = task.wait().iter().copied().collect();
            for &b in &waits {
                self.scoreboard.consume(b).await?;
            }
            let start = self.env.now().0;
            self.states.borrow_mut()[i] = TaskState::Running;
            if start > ready {
                self.trace.borrow_mut().push(TraceEvent {
                    t_start: ready,
                    t_end: start,
                    engine: self.path.clone(),
                    task: Some(task.id().to_string()),
                    kind: EventKind::Stall,
                    meta: BTreeMap::new(),
                });
            }
            let rec = self.exec.execute(i).await?;
            let end = self.env.now().0;
            self.trace.borrow_mut().push(TraceEvent {
                t_start: start,
                t_end: end,
                engine: self.path.clone(),
                task: Some(task.id().to_string()),
                kind: rec.kind,
                meta: rec.meta,
            });
            for &b in task.update() {
                self.scoreboard.produce(b)?;
            }
            flush_fires(&self.scoreboard, &self.trace);
            self.states.borrow_mut()[i] = TaskState::Done;
        }
        Ok(())
    }
}

/// A task that started before one of its wait barriers fired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyViolation {
    pub task: String,
    pub barrier: BarrierId,
    pub start: u64,
    /// Fire time, or `None` if the barrier never fired.
    pub fired: Option<u64>,
}

/// Checks from the trace alone that every task started no earlier than the
/// fire time of each barrier it waits on.
pub fn check_trace_safety(graph: &TaskGraph, trace: &[TraceEvent]) -> Vec<SafetyViolation> {
    let mut fired: BTreeMap<BarrierId, u64> = BTreeMap::new();
    let mut starts: BTreeMap<&str, u64> = BTreeMap::new();
    for e in trace {
        match e.kind {
            EventKind::BarrierFire => {
                if let Some(id) = e.meta.get("barrier").and_then(Value::as_u64) {
                    fired.insert(id as BarrierId, e.t_start);
                }
            }
            EventKind::Compute | EventKind::Dma => {
                if let Some(t) = &e.task {
                    starts.insert(t.as_str(), e.t_start);
                }
            }
            EventKind::Stall => {}
        }
    }
    let mut out = Vec::new();
    for t in &graph.tasks {
        let Some(&start) = starts.get(t.id()) else {
            continue;
        };
        for &b in t.wait() {
            let f = fired.get(&b).copied();
            if f.is_none_or(|f| f > start) {
                out.push(SafetyViolation {
                    task: t.id().to_string(),
                    barrier: b,
                    start,
                    fired: f,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{
        BarrierDef, ComputeTask, EngineClass, EngineRef, Region, Task, TASKGRAPH_FORMAT,
    };

    struct Fixed {
        env: Env,
        cycles: Vec<u64>,
    }

    impl TaskExecutor for Fixed {
        fn execute(&self, task: usize) -> ExecFuture {
            let (env, c) = (self.env.clone(), self.cycles[task]);
            Box::pin(async move {
                env.timeout(c).await;
                Ok(ExecRecord {
                    kind: EventKind::Compute,
                    meta: BTreeMap::new(),
                })
            })
        }
    }

    fn task(id: &str, tile: u32, wait: &[u32], update: &[u32]) -> Task {
        Task::Compute(ComputeTask {
            id: id.into(),
            engine: EngineRef {
                class: EngineClass::Dpu,
                tile,
                unit: 0,
            },
            operator: "op".into(),
            region: Region::full([1, 1, 1, 1]),
            wait: wait.to_vec(),
            update: update.to_vec(),
        })
    }

    fn graph(tasks: Vec<Task>, barriers: Vec<BarrierDef>) -> Rc<TaskGraph> {
        Rc::new(TaskGraph {
            format: TASKGRAPH_FORMAT.into(),
            tensors: vec![],
            operators: vec![],
            tasks,
            barriers,
        })
    }

    fn run(
        g: Rc<TaskGraph>,
        cycles: Vec<u64>,
        depth: u32,
    ) -> (Result<(), SchedError>, Vec<TraceEvent>) {
        let env = Env::new();
        let trace = Rc::new(RefCell::new(Vec::new()));
        let engines = vec!["tile0/dpu0".to_string(), "tile1/dpu0".to_string()];
        let cfg = SchedulerConfig {
            fifo_depth: depth,
            barrier_slots: 64,
        };
        let exec = Rc::new(Fixed {
            env: env.clone(),
            cycles,
        });
        let s = Schedule::start(&env, g, &engines, &cfg, exec, Rc::clone(&trace)).unwrap();
        env.run().unwrap();
        let r = s.finish();
        env.shutdown();
        let t = trace.borrow().clone();
        (r, t)
    }

    fn span(trace: &[TraceEvent], id: &str) -> (u64, u64) {
        let e = trace
            .iter()
            .find(|e| e.task.as_deref() == Some(id) && e.kind == EventKind::Compute)
            .unwrap();
        (e.t_start, e.t_end)
    }

    #[test]
    fn independent_tasks_overlap() {
        let g = graph(vec![task("a", 0, &[], &[]), task("b", 1, &[], &[])], vec![]);
        let (r, tr) = run(g, vec![10, 10], 4);
        r.unwrap();
        assert_eq!(span(&tr, "a"), (0, 10));
        assert_eq!(span(&tr, "b"), (0, 10));
    }

    #[test]
    fn shallow_fifo_still_completes() {
        let g = graph(
            vec![
                task("a", 0, &[], &[]),
                task("b", 0, &[], &[]),
                task("c", 0, &[], &[]),
            ],
            vec![],
        );
        let (r, tr) = run(g, vec![3, 3, 3], 1);
        r.unwrap();
        assert_eq!(span(&tr, "c"), (6, 9));
    }

    #[test]
    fn barrier_orders_and_trace_is_safe() {
        let g = graph(
            vec![task("a", 0, &[], &[0]), task("b", 1, &[0], &[])],
            vec![BarrierDef {
                id: 0,
                producers: 1,
                consumers: 1,
            }],
        );
        let (r, tr) = run(Rc::clone(&g), vec![5, 2], 4);
        r.unwrap();
        assert_eq!(span(&tr, "b"), (5, 7));
        assert!(tr
            .iter()
            .any(|e| e.kind == EventKind::Stall && e.t_end == 5));
        assert!(check_trace_safety(&g, &tr).is_empty());
        // Moving the start earlier than the fire is caught.
        let mut bad = tr.clone();
        for e in &mut bad {
            if e.task.as_deref() == Some("b") && e.kind == EventKind::Compute {
                e.t_start = 1;
            }
        }
        assert_eq!(check_trace_safety(&g, &bad).len(), 1);
    }

    #[test]
    fn unproduced_barrier_deadlocks() {
        let g = graph(
            vec![task("a", 0, &[7], &[])],
            vec![BarrierDef {
                id: 7,
                producers: 1,
                consumers: 1,
            }],
        );
        let (r, _) = run(g, vec![1], 4);
        match r {
            Err(SchedError::Deadlock {
                blocked, unfired, ..
            }) => {
                assert_eq!(unfired, vec![7]);
                assert!(blocked[0].contains("a (waiting on barriers 7)"));
            }
            other => panic!("expected deadlock, got {other:?}"),
        }
    }

    #[test]
    fn unknown_engine_rejected() {
        let g = graph(vec![task("a", 5, &[], &[])], vec![]);
        let env = Env::new();
        let exec = Rc::new(Fixed {
            env: env.clone(),
            cycles: vec![1],
        });
        let cfg = SchedulerConfig {
            fifo_depth: 1,
            barrier_slots: 1,
        };
        let r = Schedule::start(&env, g, &["tile0/dpu0".into()], &cfg, exec, Rc::default());
        assert!(matches!(r, Err(SchedError::UnknownEngine { .. })));
    }
}
