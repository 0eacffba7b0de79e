use std::cell::{Cell, RefCell};
use std::rc::Rc;

use neusim_kernel::{Counter, Env, SimTime};

use super::cb::CbModel;
use super::ddr::{AccessKind, DdrModel};
use super::noc::{MasterPort, NocModel};
use super::split::{dma_split_descriptor, DmaRequest};
use crate::activity::{ActivityLog, ActivityUnit, ModelId, ModelInfo};
use crate::clock::{ceil_div, ClockClass, Clocks};
use crate::config::PlatformConfig;
use crate::workload::{DmaTask, Location, TensorDesc, WorkloadError};

/// Timing of one executed DMA task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DmaOutcome {
    pub requests: u64,
    pub first_issue: u64,
    pub last_completion: u64,
    /// Bytes delivered, counting each multicast write once.
    pub bytes: u64,
}

impl DmaOutcome {
    pub fn cycles(&self) -> u64 {
        self.last_completion - self.first_issue
    }

    /// Bytes per reference cycle.
    pub fn achieved_bw(&self) -> f64 {
        if self.cycles() == 0 {
            0.0
        } else {
            self.bytes as f64 / self.cycles() as f64
        }
    }
}

/// Compute buffers, DDR, the router and the DMA channels of one run.
pub struct MemorySystem {
    env: Env,
    cfg: PlatformConfig,
    clocks: Clocks,
    cb: Vec<RefCell<CbModel>>,
    ddr: RefCell<DdrModel>,
    noc: Rc<NocModel>,
    outstanding: Vec<Counter>,
    activity: Rc<RefCell<ActivityLog>>,
    cb_ids: Vec<ModelId>,
    ddr_id: ModelId,
    dma_ids: Vec<ModelId>,
}

impl MemorySystem {
    /// Registers every memory-side model in `activity` and spawns the router.
    pub fn new(env: &Env, cfg: &PlatformConfig, activity: Rc<RefCell<ActivityLog>>) -> Rc<Self> {
        let clocks = Clocks::new(&cfg.freq_mhz);
        let (cb_ids, ddr_id, dma_ids) = {
            let mut log = activity.borrow_mut();
            let mut reg = |path: String, class: ClockClass, bytes_per_cycle: f64| {
                let ratio = clocks.get(class).ratio();
                log.register(ModelInfo {
                    path,
                    class,
                    peak_per_cycle: bytes_per_cycle * ratio,
                    unit: ActivityUnit::Bytes,
                })
            };
            let cb_bw = (cfg.cb.ports as u64 * cfg.cb.bw_bytes_per_cycle) as f64;
            let cb_ids: Vec<_> = (0..cfg.tiles)
                .map(|t| reg(format!("tile{t}/cb"), ClockClass::Cb, cb_bw))
                .collect();
            let ddr_id = reg(
                "ddr".into(),
                ClockClass::Ddr,
                cfg.ddr.bw_bytes_per_cycle as f64,
            );
            let dma_ids: Vec<_> = (0..cfg.dma.channels)
                .map(|c| {
                    reg(
                        format!("dma/ch{c}"),
                        ClockClass::Dma,
                        cfg.dma.bw_bytes_per_cycle as f64,
                    )
                })
                .collect();
            let noc_bw = cfg.noc.port_bw_bytes_per_cycle as f64;
            for t in 0..cfg.tiles {
                reg(MasterPort::Cb(t).path(), ClockClass::Noc, noc_bw);
            }
            reg(MasterPort::Ddr.path(), ClockClass::Noc, noc_bw);
            (cb_ids, ddr_id, dma_ids)
        };
        let noc = NocModel::new(
            env,
            &cfg.noc,
            cfg.tiles,
            clocks.noc,
            Some(Rc::clone(&activity)),
        );
        Rc::new(MemorySystem {
            env: env.clone(),
            cfg: cfg.clone(),
            clocks,
            cb: (0..cfg.tiles)
                .map(|_| RefCell::new(CbModel::new(&cfg.cb, clocks.cb)))
                .collect(),
            ddr: RefCell::new(DdrModel::new(&cfg.ddr, clocks.ddr)),
            noc,
            outstanding: (0..cfg.dma.channels)
                .map(|_| {
                    Counter::new(
                        env,
                        cfg.dma.outstanding as u64,
                        Some(cfg.dma.outstanding as u64),
                    )
                })
                .collect(),
            activity,
            cb_ids,
            ddr_id,
            dma_ids,
        })
    }

    /// Books a compute-buffer port of `tile` and records the bytes moved.
    pub fn cb_reserve(&self, tile: u32, earliest: u64, bytes: u64) -> (u64, u64) {
        let (s, e) = self.cb[tile as usize].borrow_mut().reserve(earliest, bytes);
        self.activity
            .borrow_mut()
            .record(self.cb_ids[tile as usize], s, e, bytes as f64);
        (s, e)
    }

    /// Time at which a memory access issued at `now` has completed.
    fn service(&self, loc: Location, addr: u64, bytes: u64, kind: AccessKind) -> u64 {
        let now = self.env.now().0;
        if bytes == 0 {
            return now;
        }
        match loc {
            Location::Ddr => {
                let (_, e, xfers) = self
                    .ddr
                    .borrow_mut()
                    .serve_transfers(now, addr, bytes, kind);
                let mut log = self.activity.borrow_mut();
                for (t0, t1, b) in xfers {
                    log.record(self.ddr_id, t0, t1, b as f64);
                }
                e
            }
            Location::Cb(t) => {
                let (_, e) = self.cb_reserve(t, now, bytes);
                e + self.cb[t as usize].borrow().latency()
            }
        }
    }

    fn port(loc: Location) -> MasterPort {
        match loc {
            Location::Ddr => MasterPort::Ddr,
            Location::Cb(t) => MasterPort::Cb(t),
        }
    }

    /// Source read, one router traversal per destination, destination write.
    async fn transfer(self: Rc<Self>, channel: u32, req: DmaRequest) -> u64 {
        let ready = self.service(req.src, req.src_addr, req.src_bytes, AccessKind::Read);
        self.env.wait_until(SimTime(ready)).await;
        if req.dsts.len() == 1 {
            let (loc, addr) = req.dsts[0];
            return Rc::clone(&self)
                .write(channel, loc, addr, req.dst_bytes)
                .await;
        }
        let last = Rc::new(Cell::new(0));
        let mut joins = Vec::new();
        for &(loc, addr) in &req.dsts {
            let (me, last, bytes) = (Rc::clone(&self), Rc::clone(&last), req.dst_bytes);
            let h = self
                .env
                .spawn(format!("dma/ch{channel}.mcast"), async move {
                    let t = me.write(channel, loc, addr, bytes).await;
                    last.set(last.get().max(t));
                    Ok(())
                })
                .expect("environment is running");
            joins.push(h);
        }
        for h in joins {
            h.join().await;
        }
        last.get()
    }

    async fn write(self: Rc<Self>, channel: u32, loc: Location, addr: u64, bytes: u64) -> u64 {
        if bytes == 0 {
            return self.env.now().0;
        }
        self.noc
            .submit(Self::port(loc), channel, bytes)
            .delivered()
            .await;
        let done = self.service(loc, addr, bytes, AccessKind::Write);
        self.env.wait_until(SimTime(done)).await;
        done
    }

    /// Executes a DMA task on its channel. Requests are issued in order, one
    /// issue slot of `ceil(payload / channel bw)` each, with at most
    /// `outstanding` requests in flight.
    pub async fn run_dma<'a>(
        self: Rc<Self>,
        task: &DmaTask,
        lookup: &impl Fn(&str) -> Option<&'a TensorDesc>,
    ) -> Result<DmaOutcome, WorkloadError> {
        let mut requests = Vec::new();
        for d in &task.descriptors {
            requests.extend(dma_split_descriptor(
                d,
                lookup,
                self.cfg.dma.max_request_bytes,
            )?);
        }
        let ch = task.channel;
        let slots = self.outstanding[ch as usize].clone();
        let done = Counter::new(&self.env, 0, None);
        let last = Rc::new(Cell::new(self.env.now().0));
        let mut out = DmaOutcome {
            requests: requests.len() as u64,
            first_issue: self.env.now().0,
            ..Default::default()
        };
        for (i, req) in requests.into_iter().enumerate() {
            slots.get(1).await;
            let now = self.env.now().0;
            if i == 0 {
                out.first_issue = now;
            }
            let payload = req.payload();
            out.bytes += req.dst_bytes;
            let issue = self
                .clocks
                .dma
                .to_ref(ceil_div(payload, self.cfg.dma.bw_bytes_per_cycle));
            self.activity.borrow_mut().record(
                self.dma_ids[ch as usize],
                now,
                now + issue,
                payload as f64,
            );
            self.env.timeout(issue).await;
            let (me, slots, done, last) = (
                Rc::clone(&self),
                slots.clone(),
                done.clone(),
                Rc::clone(&last),
            );
            self.env
                .spawn(format!("dma/ch{ch}.req"), async move {
                    let t = me.transfer(ch, req).await;
                    last.set(last.get().max(t));
                    slots.put(1).await;
                    done.put(1).await;
                    Ok(())
                })
                .expect("environment is running");
        }
        done.get(out.requests).await;
        out.last_completion = last.get();
        Ok(out)
    }
}

/// Runs one DMA task on an otherwise idle memory system.
pub fn dma_execute(
    task: &DmaTask,
    tensors: &[TensorDesc],
    cfg: &PlatformConfig,
) -> Result<(DmaOutcome, ActivityLog), WorkloadError> {
    let env = Env::new();
    let activity = Rc::new(RefCell::new(ActivityLog::default()));
    let mem = MemorySystem::new(&env, cfg, Rc::clone(&activity));
    let result = Rc::new(RefCell::new(None));
    let (r, task, tensors) = (Rc::clone(&result), task.clone(), tensors.to_vec());
    env.spawn("dma", async move {
        let lookup = |id: &str| tensors.iter().find(|t| t.id == id);
        *r.borrow_mut() = Some(mem.run_dma(&task, &lookup).await);
        Ok(())
    })
    .expect("fresh environment");
    env.run().expect("memory processes do not fail");
    env.shutdown();
    let out = result
        .borrow_mut()
        .take()
        .expect("dma process ran to completion")?;
    let log = activity.borrow().clone();
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::workload::DmaDescriptor;

    fn platform() -> PlatformConfig {
        Config::from_yaml_str(include_str!("../../../../data/platform.yaml"))
            .unwrap()
            .platform
    }

    fn setup(bytes: u64) -> (DmaTask, Vec<TensorDesc>) {
        let src = TensorDesc::new("src", [1, 1, 1, bytes], 1);
        let mut dst = TensorDesc::new("dst", [1, 1, 1, bytes], 1);
        dst.location = Location::Cb(0);
        let task = DmaTask {
            id: "t".into(),
            channel: 0,
            descriptors: vec![DmaDescriptor::contiguous("src", 0, "dst", 0, bytes)],
            wait: vec![],
            update: vec![],
        };
        (task, vec![src, dst])
    }

    // DDR runs at 1600 MHz against a 1300 MHz reference.
    fn ddr_ref(cycles: u64) -> u64 {
        (cycles * 1300).div_ceil(1600)
    }

    #[test]
    fn single_request_latency() {
        let cfg = platform();
        let (task, tensors) = setup(1024);
        let (out, log) = dma_execute(&task, &tensors, &cfg).unwrap();
        let issue = 1024 / 64;
        // Each DDR timing component is converted to reference cycles on its own.
        let ddr = ddr_ref(14) + ddr_ref(14) + ddr_ref(1024 / 32);
        let noc = 4 + 1024 / 64;
        let cb = 1024 / 64 + 2;
        assert_eq!(out.requests, 1);
        assert_eq!(out.cycles(), issue + ddr + noc + cb);
        assert_eq!(out.bytes, 1024);
        let ddr_id = log.find("ddr").unwrap();
        assert_eq!(log.total(ddr_id), 1024.0);
    }

    #[test]
    fn one_outstanding_serializes_requests() {
        let mut cfg = platform();
        cfg.dma.outstanding = 1;
        let (task, tensors) = setup(3 * 4096);
        let (out, _) = dma_execute(&task, &tensors, &cfg).unwrap();
        // Each 4 KB request opens two fresh banks; the second activate hides
        // behind the first page's transfer.
        let per = 4096 / 64
            + ddr_ref(14)
            + ddr_ref(14)
            + 2 * ddr_ref(2048 / 32)
            + (4 + 4096 / 64)
            + (4096 / 64 + 2);
        assert_eq!(out.requests, 3);
        assert_eq!(out.cycles(), 3 * per);
    }

    #[test]
    fn overlapping_requests_beat_the_serial_chain() {
        let mut cfg = platform();
        let (task, tensors) = setup(8 * 4096);
        let (fast, _) = dma_execute(&task, &tensors, &cfg).unwrap();
        cfg.dma.outstanding = 1;
        let (slow, _) = dma_execute(&task, &tensors, &cfg).unwrap();
        assert!(fast.cycles() < slow.cycles());
        assert!(fast.achieved_bw() <= 64.0);
    }
}
