use std::cell::RefCell;
use std::collections::{BTreeMap, VecDeque};

use neusim_kernel::{Env, Signal};

use super::SchedError;
use crate::workload::{BarrierDef, BarrierId};

struct Barrier {
    producers: u32,
    producers_left: u32,
    consumers_left: u32,
    slot: Option<usize>,
    live: bool,
    deferred: u32,
    fired: Signal,
}

#[derive(Debug, Default)]
struct Slot {
    occupant: Option<BarrierId>,
    queue: VecDeque<BarrierId>,
}

struct State {
    barriers: BTreeMap<BarrierId, Barrier>,
    slots: Vec<Slot>,
    next_slot: usize,
    fires: Vec<(BarrierId, u64)>,
    occupancy: Vec<(usize, BarrierId, u64)>,
}

/// Logical barriers multiplexed onto a fixed number of physical slots.
///
/// A barrier is bound to the next slot in round-robin order the first time
/// it is touched and becomes live once every earlier occupant of that slot
/// has been fully consumed. Produces issued before that are held and
/// applied when it goes live.
pub struct Scoreboard {
    env: Env,
    st: RefCell<State>,
}

impl Scoreboard {
    pub fn new(env: &Env, slots: u32, barriers: &[BarrierDef]) -> Self {
        let barriers = barriers
            .iter()
            .map(|b| {
                (
                    b.id,
                    Barrier {
                        producers: b.producers,
                        producers_left: b.producers,
                        consumers_left: b.consumers,
                        slot: None,
                        live: false,
                        deferred: 0,
                        fired: Signal::new(env),
                    },
                )
            })
            .collect();
        Scoreboard {
            env: env.clone(),
            st: RefCell::new(State {
                barriers,
                slots: (0..slots.max(1)).map(|_| Slot::default()).collect(),
                next_slot: 0,
                fires: Vec::new(),
                occupancy: Vec::new(),
            }),
        }
    }

    fn bind(&self, st: &mut State, id: BarrierId) -> Result<(), SchedError> {
        let b = st.barriers.get(&id).ok_or(SchedError::Protocol {
            barrier: id,
            reason: "barrier is not declared".into(),
        })?;
        if b.slot.is_some() {
            return Ok(());
        }
        let slot = st.next_slot;
        st.next_slot = (slot + 1) % st.slots.len();
        st.barriers.get_mut(&id).unwrap().slot = Some(slot);
        if st.slots[slot].occupant.is_none() {
            self.go_live(st, slot, id);
        } else {
            st.slots[slot].queue.push_back(id);
        }
        Ok(())
    }

    fn go_live(&self, st: &mut State, slot: usize, id: BarrierId) {
        let now = self.env.now().0;
        st.slots[slot].occupant = Some(id);
        st.occupancy.push((slot, id, now));
        let b = st.barriers.get_mut(&id).unwrap();
        b.live = true;
        b.producers_left -= b.deferred;
        b.deferred = 0;
        if b.producers_left == 0 && b.fired.fire() {
            st.fires.push((id, now));
        }
    }

    /// Counts one producer completion. Never blocks.
    pub fn produce(&self, id: BarrierId) -> Result<(), SchedError> {
        let mut st = self.st.borrow_mut();
        self.bind(&mut st, id)?;
        let now = self.env.now().0;
        let b = st.barriers.get_mut(&id).unwrap();
        let producers = b.producers;
        let over = || SchedError::Protocol {
            barrier: id,
            reason: format!("produced more than its {producers} producer count"),
        };
        if !b.live {
            if b.deferred + (b.producers - b.producers_left) >= b.producers {
                return Err(over());
            }
            b.deferred += 1;
            return Ok(());
        }
        if b.producers_left == 0 {
            return Err(over());
        }
        b.producers_left -= 1;
        if b.producers_left == 0 && b.fired.fire() {
            st.fires.push((id, now));
        }
        Ok(())
    }

    /// Suspends until the barrier has fired.
    pub async fn wait(&self, id: BarrierId) -> Result<(), SchedError> {
        let sig = {
            let mut st = self.st.borrow_mut();
            self.bind(&mut st, id)?;
            st.barriers[&id].fired.clone()
        };
        sig.wait().await;
        Ok(())
    }

    /// Waits for the barrier, then counts one consumer. The last consumer
    /// frees the slot for the next queued barrier.
    pub async fn consume(&self, id: BarrierId) -> Result<(), SchedError> {
        self.wait(id).await?;
        let mut st = self.st.borrow_mut();
        let b = st.barriers.get_mut(&id).unwrap();
        if b.consumers_left == 0 {
            return Err(SchedError::Protocol {
                barrier: id,
                reason: "consumed more often than its consumer count".into(),
            });
        }
        b.consumers_left -= 1;
        if b.consumers_left == 0 {
            let slot = b.slot.unwrap();
            b.live = false;
            st.slots[slot].occupant = None;
            if let Some(next) = st.slots[slot].queue.pop_front() {
                self.go_live(&mut st, slot, next);
            }
        }
        Ok(())
    }

    pub fn is_fired(&self, id: BarrierId) -> bool {
        self.st
            .borrow()
            .barriers
            .get(&id)
            .is_some_and(|b| b.fired.is_fired())
    }

    /// Barriers that have not fired, in id order.
    pub fn unfired(&self) -> Vec<BarrierId> {
        self.st
            .borrow()
            .barriers
            .iter()
            .filter(|(_, b)| !b.fired.is_fired())
            .map(|(&id, _)| id)
            .collect()
    }

    /// Drains the `(barrier, cycle)` fire records collected so far.
    pub fn take_fires(&self) -> Vec<(BarrierId, u64)> {
        std::mem::take(&mut self.st.borrow_mut().fires)
    }

    /// Every `(slot, barrier, cycle)` at which a barrier took a slot.
    pub fn occupancy_log(&self) -> Vec<(usize, BarrierId, u64)> {
        self.st.borrow().occupancy.clone()
    }

    pub fn slot_of(&self, id: BarrierId) -> Option<usize> {
        self.st.borrow().barriers.get(&id).and_then(|b| b.slot)
    }
}
