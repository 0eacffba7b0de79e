use std::cell::{Cell, RefCell};
use std::collections::VecDeque;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll};

use crate::env::{Env, WakeKind};

struct Waiter<T> {
    pid: usize,
    slot: RefCell<Option<T>>,
    done: Cell<bool>,
}

struct FifoState<T> {
    capacity: usize,
    items: VecDeque<T>,
    putters: VecDeque<Rc<Waiter<T>>>,
    getters: VecDeque<Rc<Waiter<T>>>,
}

/// Bounded FIFO with blocking `put` and `get`.
///
/// Blocked putters and getters are served strictly in arrival order.
pub struct Fifo<T> {
    env: Env,
    st: Rc<RefCell<FifoState<T>>>,
}

impl<T> Clone for Fifo<T> {
    fn clone(&self) -> Self {
        Fifo {
            env: self.env.clone(),
            st: self.st.clone(),
        }
    }
}

impl<T: 'static> Fifo<T> {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(env: &Env, capacity: usize) -> Self {
        assert!(capacity > 0, "fifo capacity must be positive");
        Fifo {
            env: env.clone(),
            st: Rc::new(RefCell::new(FifoState {
                capacity,
                items: VecDeque::new(),
                putters: VecDeque::new(),
                getters: VecDeque::new(),
            })),
        }
    }

    pub fn capacity(&self) -> usize {
        self.st.borrow().capacity
    }

    pub fn len(&self) -> usize {
        self.st.borrow().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(&self, item: T) -> Put<T> {
        Put {
            fifo: self.clone(),
            item: Some(item),
            waiter: None,
        }
    }

    pub fn get(&self) -> Get<T> {
        Get {
            fifo: self.clone(),
            waiter: None,
        }
    }
}

pub struct Put<T> {
    fifo: Fifo<T>,
    item: Option<T>,
    waiter: Option<Rc<Waiter<T>>>,
}

impl<T> Unpin for Put<T> {}

impl<T: 'static> Future for Put<T> {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        if let Some(w) = &self.waiter {
            return if w.done.get() {
                Poll::Ready(())
            } else {
                Poll::Pending
            };
        }
        let item = self.item.take().expect("put polled after completion");
        let mut st = self.fifo.st.borrow_mut();
        if let Some(getter) = st.getters.pop_front() {
            debug_assert!(st.items.is_empty());
            *getter.slot.borrow_mut() = Some(item);
            getter.done.set(true);
            drop(st);
            self.fifo.env.wake(getter.pid, WakeKind::FifoGet);
            return Poll::Ready(());
        }
        if st.items.len() < st.capacity {
            st.items.push_back(item);
            return Poll::Ready(());
        }
        let w = Rc::new(Waiter {
            pid: self.fifo.env.current_pid(),
            slot: RefCell::new(Some(item)),
            done: Cell::new(false),
        });
        st.putters.push_back(w.clone());
        drop(st);
        self.waiter = Some(w);
        Poll::Pending
    }
}

pub struct Get<T> {
    fifo: Fifo<T>,
    waiter: Option<Rc<Waiter<T>>>,
}

impl<T> Unpin for Get<T> {}

impl<T: 'static> Future for Get<T> {
    type Output = T;

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<T> {
        if let Some(w) = &self.waiter {
            return if w.done.get() {
                Poll::Ready(
                    w.slot
                        .borrow_mut()
                        .take()
                        .expect("fifo item delivered twice"),
                )
            } else {
                Poll::Pending
            };
        }
        let mut st = self.fifo.st.borrow_mut();
        if let Some(item) = st.items.pop_front() {
            if let Some(putter) = st.putters.pop_front() {
                let moved = putter
                    .slot
                    .borrow_mut()
                    .take()
                    .expect("blocked put lost its item");
                st.items.push_back(moved);
                putter.done.set(true);
                drop(st);
                self.fifo.env.wake(putter.pid, WakeKind::FifoPut);
            }
            return Poll::Ready(item);
        }
        let w = Rc::new(Waiter {
            pid: self.fifo.env.current_pid(),
            slot: RefCell::new(None),
            done: Cell::new(false),
        });
        st.getters.push_back(w.clone());
        drop(st);
        self.waiter = Some(w);
        Poll::Pending
    }
}
