use std::cell::{Cell, RefCell};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::future::Future;
use std::hash::{DefaultHasher, Hasher};
use std::ops::{Add, Sub};
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use crate::signal::{Signal, SignalState};

/// Simulated time in cycles of the reference clock.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn cycles(self) -> u64 {
        self.0
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: u64) -> SimTime {
        SimTime(self.0 + rhs)
    }
}

impl Sub for SimTime {
    type Output = u64;
    fn sub(self, rhs: SimTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Error type a process body may fail with.
pub type ProcessError = Box<dyn std::error::Error + 'static>;
/// Output of every process body.
pub type ProcessResult = Result<(), ProcessError>;

type Body = Pin<Box<dyn Future<Output = ProcessResult>>>;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("cannot spawn process `{0}`: the simulation has already finished")]
    Finished(String),
    #[error("process `{name}` failed at cycle {time}: {source}")]
    ProcessFailed {
        name: String,
        pid: usize,
        time: u64,
        #[source]
        source: ProcessError,
    },
}

/// Why a process was resumed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WakeKind {
    Start,
    Timeout,
    Signal,
    FifoPut,
    FifoGet,
    Counter,
    Settle,
}

impl WakeKind {
    fn code(self) -> u8 {
        match self {
            WakeKind::Start => 0,
            WakeKind::Timeout => 1,
            WakeKind::Signal => 2,
            WakeKind::FifoPut => 3,
            WakeKind::FifoGet => 4,
            WakeKind::Counter => 5,
            WakeKind::Settle => 6,
        }
    }
}

/// One entry of the fired-event log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FiredEvent {
    pub time: u64,
    pub pid: usize,
    pub kind: WakeKind,
}

#[derive(PartialEq, Eq)]
struct Entry {
    time: u64,
    // Late entries fire after every normal entry of the same cycle.
    late: bool,
    seq: u64,
    pid: usize,
    kind: WakeKind,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first.
        (other.time, other.late, other.seq).cmp(&(self.time, self.late, self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct ProcSlot {
    name: String,
    body: Option<Body>,
    done: Rc<RefCell<SignalState>>,
    finished: bool,
}

struct Kernel {
    now: Cell<u64>,
    seq: Cell<u64>,
    queue: RefCell<BinaryHeap<Entry>>,
    procs: RefCell<Vec<ProcSlot>>,
    current: Cell<Option<usize>>,
    finished: Cell<bool>,
    fired: Cell<u64>,
    digest: RefCell<DefaultHasher>,
    log: RefCell<Option<Vec<FiredEvent>>>,
}

/// Handle to a simulation environment. Cloning is cheap and every clone
/// refers to the same environment.
#[derive(Clone)]
pub struct Env {
    k: Rc<Kernel>,
}

impl Default for Env {
    fn default() -> Self {
        Env::new()
    }
}

impl fmt::Debug for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Env")
            .field("now", &self.k.now.get())
            .field("pending", &self.k.queue.borrow().len())
            .field("processes", &self.k.procs.borrow().len())
            .finish()
    }
}

/// Handle to a spawned process.
#[derive(Clone)]
pub struct ProcessHandle {
    pid: usize,
    done: Signal,
}

impl fmt::Debug for ProcessHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessHandle")
            .field("pid", &self.pid)
            .field("finished", &self.is_finished())
            .finish()
    }
}

impl ProcessHandle {
    pub fn pid(&self) -> usize {
        self.pid
    }

    pub fn is_finished(&self) -> bool {
        self.done.is_fired()
    }

    /// Resolves once the process body has returned successfully.
    pub fn join(&self) -> impl Future<Output = ()> + 'static {
        self.done.wait()
    }
}

impl Env {
    pub fn new() -> Self {
        Env {
            k: Rc::new(Kernel {
                now: Cell::new(0),
                seq: Cell::new(0),
                queue: RefCell::new(BinaryHeap::new()),
                procs: RefCell::new(Vec::new()),
                current: Cell::new(None),
                finished: Cell::new(false),
                fired: Cell::new(0),
                digest: RefCell::new(DefaultHasher::new()),
                log: RefCell::new(None),
            }),
        }
    }

    pub fn now(&self) -> SimTime {
        SimTime(self.k.now.get())
    }

    /// Starts recording every fired event; see [`Env::event_log`].
    pub fn enable_log(&self) {
        self.k.log.borrow_mut().get_or_insert_with(Vec::new);
    }

    pub fn event_log(&self) -> Vec<FiredEvent> {
        self.k.log.borrow().clone().unwrap_or_default()
    }

    /// Hash over the ordered `(time, pid, kind)` sequence of fired events.
    pub fn digest(&self) -> u64 {
        self.k.digest.borrow().finish()
    }

    pub fn fired_events(&self) -> u64 {
        self.k.fired.get()
    }

    pub fn pending_events(&self) -> usize {
        self.k.queue.borrow().len()
    }

    pub fn is_finished(&self) -> bool {
        self.k.finished.get()
    }

    /// Registers a new process that starts at the current time.
    pub fn spawn<F>(&self, name: impl Into<String>, body: F) -> Result<ProcessHandle, SimError>
    where
        F: Future<Output = ProcessResult> + 'static,
    {
        let name = name.into();
        if self.k.finished.get() {
            return Err(SimError::Finished(name));
        }
        let done = Signal::new(self);
        let pid = {
            let mut procs = self.k.procs.borrow_mut();
            procs.push(ProcSlot {
                name,
                body: Some(Box::pin(body)),
                done: done.state(),
                finished: false,
            });
            procs.len() - 1
        };
        self.schedule(self.k.now.get(), false, pid, WakeKind::Start);
        Ok(ProcessHandle { pid, done })
    }

    pub fn process_name(&self, pid: usize) -> Option<String> {
        self.k.procs.borrow().get(pid).map(|p| p.name.clone())
    }

    /// Names of processes that have started but not returned.
    pub fn unfinished_processes(&self) -> Vec<String> {
        self.k
            .procs
            .borrow()
            .iter()
            .filter(|p| !p.finished)
            .map(|p| p.name.clone())
            .collect()
    }

    /// Suspends the calling process for `cycles`. A zero-cycle timeout still
    /// yields, letting other processes scheduled for the same cycle run.
    pub fn timeout(&self, cycles: u64) -> Timeout {
        Timeout {
            env: self.clone(),
            deadline: self.k.now.get() + cycles,
            late: false,
            armed: false,
        }
    }

    /// Suspends until absolute time `t` (or yields if `t` is not in the future).
    pub fn wait_until(&self, t: SimTime) -> Timeout {
        Timeout {
            env: self.clone(),
            deadline: t.0.max(self.k.now.get()),
            late: false,
            armed: false,
        }
    }

    /// Suspends until every normal-priority event of the current cycle has fired.
    pub fn settle(&self) -> Timeout {
        Timeout {
            env: self.clone(),
            deadline: self.k.now.get(),
            late: true,
            armed: false,
        }
    }

    /// Runs until no events are left and marks the environment finished.
    pub fn run(&self) -> Result<SimTime, SimError> {
        while self.step()? {}
        self.k.finished.set(true);
        Ok(self.now())
    }

    /// Fires every event with time `<= limit`, then sets the clock to `limit`.
    pub fn run_until(&self, limit: SimTime) -> Result<SimTime, SimError> {
        loop {
            let next = self.k.queue.borrow().peek().map(|e| e.time);
            match next {
                Some(t) if t <= limit.0 => {
                    self.step()?;
                }
                _ => break,
            }
        }
        if limit.0 > self.k.now.get() {
            self.k.now.set(limit.0);
        }
        Ok(self.now())
    }

    /// Drops all pending events and suspended process bodies. Breaks the
    /// reference cycles that blocked processes hold on the environment.
    pub fn shutdown(&self) {
        self.k.queue.borrow_mut().clear();
        let bodies: Vec<Body> = self
            .k
            .procs
            .borrow_mut()
            .iter_mut()
            .filter_map(|p| p.body.take())
            .collect();
        drop(bodies);
        self.k.finished.set(true);
    }

    pub(crate) fn current_pid(&self) -> usize {
        self.k
            .current
            .get()
            .expect("simulation primitive awaited outside of a process")
    }

    pub(crate) fn wake(&self, pid: usize, kind: WakeKind) {
        self.schedule(self.k.now.get(), false, pid, kind);
    }

    fn schedule(&self, time: u64, late: bool, pid: usize, kind: WakeKind) {
        let seq = self.k.seq.get();
        self.k.seq.set(seq + 1);
        self.k.queue.borrow_mut().push(Entry {
            time,
            late,
            seq,
            pid,
            kind,
        });
    }

    fn step(&self) -> Result<bool, SimError> {
        let Some(entry) = self.k.queue.borrow_mut().pop() else {
            return Ok(false);
        };
        debug_assert!(entry.time >= self.k.now.get(), "time went backwards");
        self.k.now.set(entry.time);
        self.k.fired.set(self.k.fired.get() + 1);
        {
            let mut h = self.k.digest.borrow_mut();
            h.write_u64(entry.time);
            h.write_usize(entry.pid);
            h.write_u8(entry.kind.code());
        }
        if let Some(log) = self.k.log.borrow_mut().as_mut() {
            log.push(FiredEvent {
                time: entry.time,
                pid: entry.pid,
                kind: entry.kind,
            });
        }

        let body = self.k.procs.borrow_mut()[entry.pid].body.take();
        let Some(mut body) = body else {
            return Ok(true);
        };
        self.k.current.set(Some(entry.pid));
        let mut cx = Context::from_waker(Waker::noop());
        let polled = body.as_mut().poll(&mut cx);
        self.k.current.set(None);

        match polled {
            Poll::Pending => {
                self.k.procs.borrow_mut()[entry.pid].body = Some(body);
                Ok(true)
            }
            Poll::Ready(Ok(())) => {
                drop(body);
                let done = {
                    let mut procs = self.k.procs.borrow_mut();
                    procs[entry.pid].finished = true;
                    procs[entry.pid].done.clone()
                };
                Signal::from_state(self, done).fire();
                Ok(true)
            }
            Poll::Ready(Err(source)) => {
                drop(body);
                let name = self.k.procs.borrow()[entry.pid].name.clone();
                Err(SimError::ProcessFailed {
                    name,
                    pid: entry.pid,
                    time: entry.time,
                    source,
                })
            }
        }
    }
}

/// Future returned by [`Env::timeout`], [`Env::wait_until`] and [`Env::settle`].
pub struct Timeout {
    env: Env,
    deadline: u64,
    late: bool,
    armed: bool,
}

impl Future for Timeout {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        if !self.armed {
            self.armed = true;
            let pid = self.env.current_pid();
            let kind = if self.late {
                WakeKind::Settle
            } else {
                WakeKind::Timeout
            };
            self.env.schedule(self.deadline, self.late, pid, kind);
            return Poll::Pending;
        }
        if self.env.k.now.get() >= self.deadline {
            Poll::Ready(())
        } else {
            Poll::Pending
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;
    use std::rc::Rc;

    #[test]
    fn empty_environment_ends_at_zero() {
        let env = Env::new();
        assert_eq!(env.run().unwrap(), SimTime(0));
    }

    #[test]
    fn single_delay() {
        let env = Env::new();
        let e = env.clone();
        env.spawn("p", async move {
            e.timeout(5).await;
            Ok(())
        })
        .unwrap();
        assert_eq!(env.run().unwrap(), SimTime(5));
    }

    #[test]
    fn completion_order_follows_delay() {
        let order = Rc::new(RefCell::new(Vec::new()));
        let env = Env::new();
        for (name, d) in [("slow", 7u64), ("fast", 3)] {
            let e = env.clone();
            let o = order.clone();
            env.spawn(name, async move {
                e.timeout(d).await;
                o.borrow_mut().push(name);
                Ok(())
            })
            .unwrap();
        }
        env.run().unwrap();
        assert_eq!(*order.borrow(), vec!["fast", "slow"]);
    }

    #[test]
    fn run_until_fires_ties_in_insertion_order() {
        let order = Rc::new(RefCell::new(Vec::new()));
        let env = Env::new();
        for (name, d) in [("a", 2u64), ("b", 2), ("c", 9)] {
            let e = env.clone();
            let o = order.clone();
            env.spawn(name, async move {
                e.timeout(d).await;
                o.borrow_mut().push(name);
                Ok(())
            })
            .unwrap();
        }
        assert_eq!(env.run_until(SimTime(5)).unwrap(), SimTime(5));
        assert_eq!(*order.borrow(), vec!["a", "b"]);
        assert_eq!(env.run().unwrap(), SimTime(9));
        assert_eq!(*order.borrow(), vec!["a", "b", "c"]);
    }

    #[test]
    fn spawn_after_finish_is_rejected() {
        let env = Env::new();
        env.run().unwrap();
        let err = env.spawn("late", async { Ok(()) }).unwrap_err();
        assert!(matches!(err, SimError::Finished(ref n) if n == "late"));
    }

    #[test]
    fn failing_process_names_itself() {
        let env = Env::new();
        let e = env.clone();
        env.spawn("dpu0", async move {
            e.timeout(4).await;
            Err("bad block".into())
        })
        .unwrap();
        let err = env.run().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dpu0") && msg.contains("cycle 4"), "{msg}");
    }

    #[test]
    fn fixed_step_loop_is_bounded_by_limit() {
        for step in [1u64, 2, 5] {
            let env = Env::new();
            let e = env.clone();
            let count = Rc::new(Cell::new(0u64));
            let c = count.clone();
            env.spawn("ticker", async move {
                loop {
                    e.timeout(step).await;
                    c.set(c.get() + 1);
                }
            })
            .unwrap();
            assert_eq!(env.run_until(SimTime(10)).unwrap(), SimTime(10));
            assert_eq!(count.get(), 10 / step);
            env.shutdown();
        }
    }

    #[test]
    fn zero_delay_yields_interleave() {
        let order = Rc::new(RefCell::new(Vec::new()));
        let env = Env::new();
        for name in ["x", "y"] {
            let e = env.clone();
            let o = order.clone();
            env.spawn(name, async move {
                for i in 0..3 {
                    o.borrow_mut().push(format!("{name}{i}"));
                    e.timeout(0).await;
                }
                Ok(())
            })
            .unwrap();
        }
        assert_eq!(env.run().unwrap(), SimTime(0));
        assert_eq!(*order.borrow(), vec!["x0", "y0", "x1", "y1", "x2", "y2"]);
    }

    #[test]
    fn settle_runs_after_same_cycle_events() {
        let order = Rc::new(RefCell::new(Vec::new()));
        let env = Env::new();
        let (e, o) = (env.clone(), order.clone());
        env.spawn("late", async move {
            e.settle().await;
            o.borrow_mut().push("late");
            Ok(())
        })
        .unwrap();
        let (e, o) = (env.clone(), order.clone());
        env.spawn("normal", async move {
            e.timeout(0).await;
            o.borrow_mut().push("normal");
            Ok(())
        })
        .unwrap();
        env.run().unwrap();
        assert_eq!(*order.borrow(), vec!["normal", "late"]);
    }

    #[test]
    fn join_waits_for_child() {
        let env = Env::new();
        let e = env.clone();
        let child = env
            .spawn("child", async move {
                e.timeout(6).await;
                Ok(())
            })
            .unwrap();
        let e = env.clone();
        let seen = Rc::new(Cell::new(0));
        let s = seen.clone();
        let c2 = child.clone();
        env.spawn("parent", async move {
            c2.join().await;
            s.set(e.now().0);
            Ok(())
        })
        .unwrap();
        env.run().unwrap();
        assert!(child.is_finished());
        assert_eq!(seen.get(), 6);
    }
}
