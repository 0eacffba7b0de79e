use std::cell::{Cell, RefCell};
use std::collections::VecDeque;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll};

use crate::env::{Env, WakeKind};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    Put,
    Get,
}

struct Request {
    pid: usize,
    amount: u64,
    done: Rc<Cell<bool>>,
}

struct CounterState {
    level: u64,
    capacity: Option<u64>,
    puts: VecDeque<Request>,
    gets: VecDeque<Request>,
}

impl CounterState {
    fn admits(&self, dir: Dir, amount: u64) -> bool {
        match dir {
            Dir::Get => self.level >= amount,
            Dir::Put => self.capacity.is_none_or(|c| self.level + amount <= c),
        }
    }

    fn queue(&mut self, dir: Dir) -> &mut VecDeque<Request> {
        match dir {
            Dir::Put => &mut self.puts,
            Dir::Get => &mut self.gets,
        }
    }

    fn apply(&mut self, dir: Dir, amount: u64) {
        match dir {
            Dir::Get => self.level -= amount,
            Dir::Put => self.level += amount,
        }
    }
}

/// Shared nonnegative level with an optional capacity. `put` blocks while it
/// would overflow the capacity, `get` blocks while the level is too low.
/// Blocked requests of each direction are granted strictly in arrival order.
#[derive(Clone)]
pub struct Counter {
    env: Env,
    st: Rc<RefCell<CounterState>>,
}

impl Counter {
    pub fn new(env: &Env, initial: u64, capacity: Option<u64>) -> Self {
        if let Some(c) = capacity {
            assert!(initial <= c, "initial level exceeds capacity");
        }
        Counter {
            env: env.clone(),
            st: Rc::new(RefCell::new(CounterState {
                level: initial,
                capacity,
                puts: VecDeque::new(),
                gets: VecDeque::new(),
            })),
        }
    }

    pub fn level(&self) -> u64 {
        self.st.borrow().level
    }

    pub fn capacity(&self) -> Option<u64> {
        self.st.borrow().capacity
    }

    pub fn put(&self, amount: u64) -> CounterOp {
        self.op(Dir::Put, amount)
    }

    pub fn get(&self, amount: u64) -> CounterOp {
        self.op(Dir::Get, amount)
    }

    fn op(&self, dir: Dir, amount: u64) -> CounterOp {
        if let (Dir::Put, Some(c)) = (dir, self.capacity()) {
            assert!(
                amount <= c,
                "put larger than counter capacity can never complete"
            );
        }
        CounterOp {
            counter: self.clone(),
            dir,
            amount,
            done: None,
        }
    }

    fn drain(&self) {
        let mut st = self.st.borrow_mut();
        loop {
            let mut progressed = false;
            for dir in [Dir::Get, Dir::Put] {
                while let Some(amount) = st.queue(dir).front().map(|r| r.amount) {
                    if !st.admits(dir, amount) {
                        break;
                    }
                    let req = st.queue(dir).pop_front().unwrap();
                    st.apply(dir, req.amount);
                    req.done.set(true);
                    self.env.wake(req.pid, WakeKind::Counter);
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
    }
}

pub struct CounterOp {
    counter: Counter,
    dir: Dir,
    amount: u64,
    done: Option<Rc<Cell<bool>>>,
}

impl Future for CounterOp {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        if let Some(done) = &self.done {
            return if done.get() {
                Poll::Ready(())
            } else {
                Poll::Pending
            };
        }
        let granted = {
            let mut st = self.counter.st.borrow_mut();
            if st.queue(self.dir).is_empty() && st.admits(self.dir, self.amount) {
                st.apply(self.dir, self.amount);
                true
            } else {
                let done = Rc::new(Cell::new(false));
                let pid = self.counter.env.current_pid();
                st.queue(self.dir).push_back(Request {
                    pid,
                    amount: self.amount,
                    done: done.clone(),
                });
                drop(st);
                self.done = Some(done);
                false
            }
        };
        if granted {
            // A change of level may unblock queued requests of the other direction.
            self.counter.drain();
            Poll::Ready(())
        } else {
            Poll::Pending
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semaphore_limits_concurrency() {
        let env = Env::new();
        let slots = Counter::new(&env, 2, Some(2));
        let active = Rc::new(Cell::new(0u32));
        let peak = Rc::new(Cell::new(0u32));
        for i in 0..5 {
            let (s, e, a, p) = (slots.clone(), env.clone(), active.clone(), peak.clone());
            env.spawn(format!("req{i}"), async move {
                s.get(1).await;
                a.set(a.get() + 1);
                p.set(p.get().max(a.get()));
                e.timeout(10).await;
                a.set(a.get() - 1);
                s.put(1).await;
                Ok(())
            })
            .unwrap();
        }
        assert_eq!(env.run().unwrap().0, 30);
        assert_eq!(peak.get(), 2);
        assert_eq!(slots.level(), 2);
    }

    #[test]
    fn put_blocks_at_capacity() {
        let env = Env::new();
        let c = Counter::new(&env, 3, Some(4));
        let (cc, e) = (c.clone(), env.clone());
        env.spawn("filler", async move {
            cc.put(2).await;
            assert_eq!(e.now().0, 6);
            Ok(())
        })
        .unwrap();
        let (cc, e) = (c.clone(), env.clone());
        env.spawn("drainer", async move {
            e.timeout(6).await;
            cc.get(3).await;
            Ok(())
        })
        .unwrap();
        env.run().unwrap();
        assert_eq!(c.level(), 2);
    }
}
