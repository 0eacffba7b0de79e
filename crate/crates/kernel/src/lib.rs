//! A small deterministic discrete-event simulation kernel.
//!
//! Processes are plain `async` blocks driven by a single-threaded executor
//! that advances a cycle-granular clock. The kernel offers the usual
//! building blocks of hardware-style system simulation:
//!
//! * [`Env::timeout`] to let a process consume simulated time,
//! * [`Fifo`], a bounded first-in first-out queue with blocking put/get,
//! * [`Counter`], a shared level with optional capacity (a semaphore/container),
//! * [`Signal`], a one-shot level-sensitive event used for handshakes.
//!
//! Events scheduled for the same cycle fire in insertion order, so a run is
//! fully reproducible. Every fired event is folded into a digest (and, if
//! enabled, appended to a log) so that two runs can be compared cheaply.
//!
//! ```
//! use neusim_kernel::{Env, SimTime};
//!
//! let env = Env::new();
//! let e = env.clone();
//! env.spawn("worker", async move {
//!     e.timeout(5).await;
//!     Ok(())
//! })
//! .unwrap();
//! assert_eq!(env.run().unwrap(), SimTime(5));
//! ```

mod counter;
mod env;
mod fifo;
mod signal;

pub use counter::Counter;
pub use env::{
    Env, FiredEvent, ProcessError, ProcessHandle, ProcessResult, SimError, SimTime, Timeout,
    WakeKind,
};
pub use fifo::Fifo;
pub use signal::Signal;
