use std::cell::{Cell, RefCell};
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll};

use crate::env::{Env, SimTime, WakeKind};

#[derive(Default)]
pub(crate) struct SignalState {
    fired_at: Option<u64>,
    waiters: Vec<(usize, Rc<Cell<bool>>)>,
}

/// One-shot, level-sensitive event. Waiting on a fired signal completes
/// immediately; waiters registered before the fire resume in registration
/// order. [`Signal::rearm`] makes the signal fire-able again.
#[derive(Clone)]
pub struct Signal {
    env: Env,
    st: Rc<RefCell<SignalState>>,
}

impl Signal {
    pub fn new(env: &Env) -> Self {
        Signal {
            env: env.clone(),
            st: Rc::default(),
        }
    }

    pub(crate) fn from_state(env: &Env, st: Rc<RefCell<SignalState>>) -> Self {
        Signal {
            env: env.clone(),
            st,
        }
    }

    pub(crate) fn state(&self) -> Rc<RefCell<SignalState>> {
        self.st.clone()
    }

    pub fn is_fired(&self) -> bool {
        self.st.borrow().fired_at.is_some()
    }

    pub fn fired_at(&self) -> Option<SimTime> {
        self.st.borrow().fired_at.map(SimTime)
    }

    /// Fires the signal. Returns `false` (and does nothing) if it already fired.
    pub fn fire(&self) -> bool {
        let waiters = {
            let mut st = self.st.borrow_mut();
            if st.fired_at.is_some() {
                return false;
            }
            st.fired_at = Some(self.env.now().0);
            std::mem::take(&mut st.waiters)
        };
        for (pid, flag) in waiters {
            flag.set(true);
            self.env.wake(pid, WakeKind::Signal);
        }
        true
    }

    pub fn rearm(&self) {
        self.st.borrow_mut().fired_at = None;
    }

    pub fn wait(&self) -> SignalWait {
        SignalWait {
            sig: self.clone(),
            flag: None,
        }
    }
}

pub struct SignalWait {
    sig: Signal,
    flag: Option<Rc<Cell<bool>>>,
}

impl Future for SignalWait {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        if let Some(flag) = &self.flag {
            return if flag.get() {
                Poll::Ready(())
            } else {
                Poll::Pending
            };
        }
        if self.sig.is_fired() {
            return Poll::Ready(());
        }
        let pid = self.sig.env.current_pid();
        let flag = Rc::new(Cell::new(false));
        self.sig.st.borrow_mut().waiters.push((pid, flag.clone()));
        self.flag = Some(flag);
        Poll::Pending
    }
}
