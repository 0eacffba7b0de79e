use std::cell::{Cell, RefCell};
use std::rc::Rc;

use neusim_kernel::{Env, Signal, SimTime};

use crate::activity::{ActivityLog, ModelId};
use crate::clock::{ceil_div, Clock};
use crate::config::NocConfig;

/// Requester side of the router; DMA channel `c` is slave `c`.
pub type SlaveId = u32;

/// Memory-side ports of the router.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MasterPort {
    Cb(u32),
    Ddr,
}

impl MasterPort {
    pub fn path(self) -> String {
        match self {
            MasterPort::Cb(t) => format!("noc/tile{t}"),
            MasterPort::Ddr => "noc/ddr".into(),
        }
    }
}

type Grant = Rc<Cell<Option<u64>>>;

struct Pending {
    slave: SlaveId,
    bytes: u64,
    grant: Grant,
    granted: Signal,
}

struct PortState {
    queue: Vec<Pending>,
    wake: Signal,
    last: Option<SlaveId>,
    model: Option<ModelId>,
}

/// Single-hop crossbar. Each master port forwards one transfer at a time;
/// when several slaves compete the port grants them round-robin.
pub struct NocModel {
    env: Env,
    tiles: u32,
    latency: u64,
    bw: u64,
    clock: Clock,
    ports: Vec<RefCell<PortState>>,
    activity: Option<Rc<RefCell<ActivityLog>>>,
}

/// Handle to a submitted transfer.
pub struct NocTicket {
    env: Env,
    grant: Grant,
    granted: Signal,
}

impl NocTicket {
    /// Resolves at delivery and returns the delivery time.
    pub async fn delivered(self) -> u64 {
        self.granted.wait().await;
        let t = self
            .grant
            .get()
            .expect("granted transfer has a delivery time");
        self.env.wait_until(SimTime(t)).await;
        t
    }
}

impl NocModel {
    /// Builds the router and spawns one arbiter process per master port.
    pub fn new(
        env: &Env,
        cfg: &NocConfig,
        tiles: u32,
        clock: Clock,
        activity: Option<Rc<RefCell<ActivityLog>>>,
    ) -> Rc<Self> {
        let ports = (0..=tiles)
            .map(|_| {
                RefCell::new(PortState {
                    queue: Vec::new(),
                    wake: Signal::new(env),
                    last: None,
                    model: None,
                })
            })
            .collect();
        let noc = Rc::new(NocModel {
            env: env.clone(),
            tiles,
            latency: clock.to_ref(cfg.port_latency),
            bw: cfg.port_bw_bytes_per_cycle,
            clock,
            ports,
            activity,
        });
        for i in 0..=tiles as usize {
            let port = noc.port_of(i);
            if let Some(log) = &noc.activity {
                noc.ports[i].borrow_mut().model = log.borrow().find(&port.path());
            }
            let n = Rc::clone(&noc);
            env.spawn(port.path(), async move {
                n.arbitrate(i).await;
                Ok(())
            })
            .expect("environment is running");
        }
        noc
    }

    pub fn port_of(&self, index: usize) -> MasterPort {
        if index as u32 == self.tiles {
            MasterPort::Ddr
        } else {
            MasterPort::Cb(index as u32)
        }
    }

    pub fn index(&self, port: MasterPort) -> usize {
        match port {
            MasterPort::Cb(t) => {
                assert!(t < self.tiles, "no NOC port for tile {t}");
                t as usize
            }
            MasterPort::Ddr => self.tiles as usize,
        }
    }

    /// Port occupancy of one transfer in reference cycles.
    pub fn occupancy(&self, bytes: u64) -> u64 {
        self.clock.to_ref(ceil_div(bytes, self.bw))
    }

    pub fn latency(&self) -> u64 {
        self.latency
    }

    /// Queues a transfer of `bytes` from `slave` through `port`.
    pub fn submit(&self, port: MasterPort, slave: SlaveId, bytes: u64) -> NocTicket {
        let grant: Grant = Rc::new(Cell::new(None));
        let granted = Signal::new(&self.env);
        let mut st = self.ports[self.index(port)].borrow_mut();
        st.queue.push(Pending {
            slave,
            bytes,
            grant: Rc::clone(&grant),
            granted: granted.clone(),
        });
        st.wake.fire();
        NocTicket {
            env: self.env.clone(),
            grant,
            granted,
        }
    }

    async fn arbitrate(&self, index: usize) {
        loop {
            let wake = {
                let st = self.ports[index].borrow();
                st.queue.is_empty().then(|| st.wake.clone())
            };
            if let Some(w) = wake {
                w.wait().await;
                w.rearm();
                continue;
            }
            // Let every request of this cycle arrive before choosing.
            self.env.settle().await;
            let now = self.env.now().0;
            let (req, model) = {
                let mut st = self.ports[index].borrow_mut();
                let pick = pick_round_robin(&st.queue, st.last);
                let req = st.queue.remove(pick);
                st.last = Some(req.slave);
                (req, st.model)
            };
            let occ = self.occupancy(req.bytes);
            req.grant.set(Some(now + self.latency + occ));
            req.granted.fire();
            if let (Some(log), Some(id)) = (&self.activity, model) {
                log.borrow_mut()
                    .record(id, now, now + occ, req.bytes as f64);
            }
            self.env.timeout(occ).await;
        }
    }
}

/// Next slave after `last` in cyclic id order that has a request; among its
/// requests the oldest wins.
fn pick_round_robin(queue: &[Pending], last: Option<SlaveId>) -> usize {
    let key = |s: SlaveId| match last {
        Some(l) if s > l => (0, s),
        Some(_) => (1, s),
        None => (0, s),
    };
    let mut best = 0;
    for (i, p) in queue.iter().enumerate() {
        if key(p.slave) < key(queue[best].slave) {
            best = i;
        }
    }
    best
}

/// Global address map used for address-routed transfers.
pub const DDR_SPACE: u64 = 1 << 36;
pub const CB_BASE: u64 = 1 << 40;
pub const CB_STRIDE: u64 = 1 << 32;

/// Resolves a global address to the master port that owns it.
pub fn port_for_address(addr: u64, tiles: u32, cb_size: u64) -> Option<MasterPort> {
    if addr < DDR_SPACE {
        return Some(MasterPort::Ddr);
    }
    if addr < CB_BASE {
        return None;
    }
    let tile = (addr - CB_BASE) / CB_STRIDE;
    let off = (addr - CB_BASE) % CB_STRIDE;
    (tile < tiles as u64 && off < cb_size).then_some(MasterPort::Cb(tile as u32))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NocDest {
    /// ID-routed; more than one port makes a multicast.
    Ports(Vec<MasterPort>),
    /// Address-routed unicast.
    Addr(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NocRequest {
    pub at: u64,
    pub slave: SlaveId,
    pub dest: NocDest,
    pub bytes: u64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum NocError {
    #[error("address {addr:#x} is not mapped to any NOC port")]
    Unmapped { addr: u64 },
    #[error("request to unknown port {0:?}")]
    UnknownPort(MasterPort),
}

/// Routes a batch of requests through an otherwise idle router and returns
/// the delivery time of each destination of each request.
pub fn noc_route(
    cfg: &NocConfig,
    tiles: u32,
    cb_size: u64,
    requests: &[NocRequest],
) -> Result<Vec<Vec<u64>>, NocError> {
    let mut resolved = Vec::with_capacity(requests.len());
    for r in requests {
        let ports = match &r.dest {
            NocDest::Ports(p) => p.clone(),
            NocDest::Addr(a) => {
                vec![port_for_address(*a, tiles, cb_size).ok_or(NocError::Unmapped { addr: *a })?]
            }
        };
        for p in &ports {
            if let MasterPort::Cb(t) = p {
                if *t >= tiles {
                    return Err(NocError::UnknownPort(*p));
                }
            }
        }
        resolved.push(ports);
    }
    let env = Env::new();
    let noc = NocModel::new(&env, cfg, tiles, Clock::identity(), None);
    let out: Vec<Rc<RefCell<Vec<u64>>>> = requests.iter().map(|_| Rc::default()).collect();
    for (i, (r, ports)) in requests.iter().zip(resolved).enumerate() {
        for (j, p) in ports.into_iter().enumerate() {
            let (e, n, o, slave, bytes, at) = (
                env.clone(),
                Rc::clone(&noc),
                Rc::clone(&out[i]),
                r.slave,
                r.bytes,
                r.at,
            );
            o.borrow_mut().push(0);
            env.spawn(format!("req{i}.{j}"), async move {
                e.wait_until(SimTime(at)).await;
                let t = n.submit(p, slave, bytes).delivered().await;
                o.borrow_mut()[j] = t;
                Ok(())
            })
            .expect("fresh environment");
        }
    }
    env.run().expect("router processes do not fail");
    env.shutdown();
    Ok(out.iter().map(|o| o.borrow().clone()).collect())
}
