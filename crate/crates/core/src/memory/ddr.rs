use crate::clock::{ceil_div, Clock};
use crate::config::{DdrConfig, PagePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DdrAddr {
    pub bank: u32,
    pub row: u64,
    pub col: u64,
}

/// Page-granular bank interleaving: consecutive pages go to consecutive banks.
pub fn ddr_map_address(addr: u64, cfg: &DdrConfig) -> DdrAddr {
    let page = addr / cfg.page_bytes;
    DdrAddr {
        bank: (page % cfg.banks as u64) as u32,
        row: page / cfg.banks as u64,
        col: addr % cfg.page_bytes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

/// Outcome of one access, in DDR clock cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DdrAccess {
    /// Service time on an otherwise idle device.
    pub cycles: u64,
    pub bursts: u64,
    pub hits: u64,
    pub closed: u64,
    pub misses: u64,
}

/// Run of bursts inside one page.
#[derive(Debug, Clone, Copy)]
struct Segment {
    bank: usize,
    /// Row command cycles before the column access (0 on a page hit).
    overhead: u64,
    bytes: u64,
}

/// DDR device with per-bank open-row state.
///
/// A request is cut into page segments. Each segment activates its row if
/// needed (tRCD, plus tRP when another row is open), waits the CAS latency
/// and then streams its bursts over the shared data bus at peak bandwidth.
/// Segments are issued in order; a bank is busy until its data has left and
/// the bus carries one segment at a time, so row commands to other banks
/// overlap with transfers in flight.
#[derive(Debug, Clone)]
pub struct DdrModel {
    cfg: DdrConfig,
    open: Vec<Option<u64>>,
    clock: Clock,
    bank_free: Vec<u64>,
    bus_free: u64,
    refresh_interval: u64,
    refresh_penalty: u64,
}

impl DdrModel {
    pub fn new(cfg: &DdrConfig, clock: Clock) -> Self {
        DdrModel {
            cfg: cfg.clone(),
            open: vec![None; cfg.banks as usize],
            clock,
            bank_free: vec![0; cfg.banks as usize],
            bus_free: 0,
            refresh_interval: clock.to_ref(cfg.refresh_interval),
            refresh_penalty: clock.to_ref(cfg.refresh_penalty),
        }
    }

    pub fn open_row(&self, bank: u32) -> Option<u64> {
        self.open[bank as usize]
    }

    /// Classifies every page segment of the request and updates row state.
    fn segments(&mut self, addr: u64, bytes: u64, a: &mut DdrAccess) -> Vec<Segment> {
        let c = &self.cfg;
        let burst = c.burst_bytes;
        let end = addr + bytes;
        let mut out = Vec::new();
        let mut at = addr / burst * burst;
        while at < end {
            let page_end = (at / c.page_bytes + 1) * c.page_bytes;
            let seg_end = page_end.min(end);
            let nbursts = (seg_end - at).div_ceil(burst);
            let m = ddr_map_address(at, c);
            let slot = &mut self.open[m.bank as usize];
            let overhead = match *slot {
                Some(r) if r == m.row => {
                    a.hits += nbursts;
                    0
                }
                Some(_) => {
                    a.misses += 1;
                    a.hits += nbursts - 1;
                    c.t_rp + c.t_rcd
                }
                None => {
                    a.closed += 1;
                    a.hits += nbursts - 1;
                    c.t_rcd
                }
            };
            *slot = Some(m.row);
            a.bursts += nbursts;
            out.push(Segment {
                bank: m.bank as usize,
                overhead,
                bytes: seg_end - at.max(addr),
            });
            at = page_end;
        }
        if c.page_policy == PagePolicy::Closed {
            for s in &out {
                self.open[s.bank] = None;
            }
        }
        out
    }

    /// Times `segs` from `t`; durations in DDR cycles go through `conv`.
    fn schedule(
        &self,
        t: u64,
        segs: &[Segment],
        bank_free: &mut [u64],
        bus_free: &mut u64,
        conv: impl Fn(u64) -> u64,
        refresh: bool,
        mut transfers: Option<&mut Vec<(u64, u64, u64)>>,
    ) -> u64 {
        let adv = |t: u64, d: u64| if refresh { self.advance(t, d) } else { t + d };
        let mut issue = t;
        let mut end = t;
        for s in segs {
            let act = issue.max(bank_free[s.bank]);
            let cas = adv(act, conv(s.overhead));
            let ready = adv(cas, conv(self.cfg.t_cl)).max(*bus_free);
            let ready = if refresh {
                self.skip_refresh(ready)
            } else {
                ready
            };
            end = adv(ready, conv(ceil_div(s.bytes, self.cfg.bw_bytes_per_cycle)));
            *bus_free = end;
            bank_free[s.bank] = end;
            if let Some(v) = transfers.as_deref_mut() {
                v.push((ready, end, s.bytes));
            }
            issue = cas;
        }
        end
    }

    /// Services `bytes` starting at `addr` on an idle device and updates the
    /// row buffers. Bursts of one request are pipelined, so the CAS latency
    /// is exposed once per page segment at most.
    pub fn access(&mut self, addr: u64, bytes: u64, _kind: AccessKind) -> DdrAccess {
        let mut a = DdrAccess::default();
        if bytes == 0 {
            return a;
        }
        let segs = self.segments(addr, bytes, &mut a);
        let mut banks = vec![0; self.bank_free.len()];
        let mut bus = 0;
        a.cycles = self.schedule(0, &segs, &mut banks, &mut bus, |d| d, false, None);
        a
    }

    /// Timed access in reference cycles, first come first served behind
    /// earlier requests and paused by refresh windows. Returns `(start, end)`.
    pub fn serve(&mut self, now: u64, addr: u64, bytes: u64, kind: AccessKind) -> (u64, u64) {
        let (s, e, _) = self.serve_transfers(now, addr, bytes, kind);
        (s, e)
    }

    /// Like [`serve`](Self::serve), also returning the data bus interval and
    /// byte count of each page segment.
    pub fn serve_transfers(
        &mut self,
        now: u64,
        addr: u64,
        bytes: u64,
        _kind: AccessKind,
    ) -> (u64, u64, Vec<(u64, u64, u64)>) {
        if bytes == 0 {
            return (now, now, Vec::new());
        }
        let mut a = DdrAccess::default();
        let segs = self.segments(addr, bytes, &mut a);
        let start = self.skip_refresh(now);
        let mut banks = std::mem::take(&mut self.bank_free);
        let mut bus = self.bus_free;
        let clock = self.clock;
        let mut xfers = Vec::with_capacity(segs.len());
        let end = self.schedule(
            start,
            &segs,
            &mut banks,
            &mut bus,
            |d| clock.to_ref(d),
            true,
            Some(&mut xfers),
        );
        self.bank_free = banks;
        self.bus_free = bus;
        (start, end, xfers)
    }

    fn in_window(&self, t: u64) -> Option<u64> {
        let i = self.refresh_interval;
        if i == 0 || self.refresh_penalty == 0 {
            return None;
        }
        let k = t / i;
        (k >= 1 && t < k * i + self.refresh_penalty).then_some(k * i + self.refresh_penalty)
    }

    fn skip_refresh(&self, t: u64) -> u64 {
        self.in_window(t).unwrap_or(t)
    }

    /// End time of `work` busy cycles started at `t`, skipping refresh.
    fn advance(&self, mut t: u64, mut work: u64) -> u64 {
        let i = self.refresh_interval;
        if i == 0 || self.refresh_penalty == 0 {
            return t + work;
        }
        loop {
            t = self.skip_refresh(t);
            let next = (t / i + 1) * i;
            if t + work <= next {
                return t + work;
            }
            work -= next - t;
            t = next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DdrConfig {
        DdrConfig {
            bw_bytes_per_cycle: 32,
            banks: 8,
            page_bytes: 1024,
            t_cl: 14,
            t_rcd: 14,
            t_rp: 14,
            burst_bytes: 64,
            refresh_interval: 0,
            refresh_penalty: 0,
            page_policy: PagePolicy::Open,
        }
    }

    #[test]
    fn mapping_examples() {
        let c = cfg();
        assert_eq!(
            ddr_map_address(0, &c),
            DdrAddr {
                bank: 0,
                row: 0,
                col: 0
            }
        );
        assert_eq!(
            ddr_map_address(1024, &c),
            DdrAddr {
                bank: 1,
                row: 0,
                col: 0
            }
        );
        assert_eq!(
            ddr_map_address(8192, &c),
            DdrAddr {
                bank: 0,
                row: 1,
                col: 0
            }
        );
    }

    #[test]
    fn hit_closed_and_miss_costs() {
        let mut d = DdrModel::new(&cfg(), Clock::identity());
        // 64 B at 32 B/cycle: 2 transfer cycles.
        assert_eq!(d.access(0, 64, AccessKind::Read).cycles, 14 + 14 + 2);
        assert_eq!(d.access(64, 64, AccessKind::Read).cycles, 14 + 2);
        let miss = d.access(8192, 64, AccessKind::Read);
        assert_eq!((miss.cycles, miss.misses), (14 + 28 + 2, 1));
        // Alternating rows of bank 0 keep missing.
        assert_eq!(d.access(0, 64, AccessKind::Write).misses, 1);
        assert_eq!(d.access(8192, 64, AccessKind::Write).misses, 1);
    }

    #[test]
    fn closed_policy_precharges() {
        let mut c = cfg();
        c.page_policy = PagePolicy::Closed;
        let mut d = DdrModel::new(&c, Clock::identity());
        d.access(0, 64, AccessKind::Read);
        assert_eq!(d.open_row(0), None);
        assert_eq!(d.access(64, 64, AccessKind::Read).closed, 1);
    }

    #[test]
    fn multi_page_request_opens_each_bank() {
        let mut d = DdrModel::new(&cfg(), Clock::identity());
        let a = d.access(512, 2048, AccessKind::Read);
        // Pages 0, 1 and 2 are touched: three activates, of which only the
        // first is exposed; the others overlap with earlier transfers.
        assert_eq!((a.closed, a.bursts), (3, 32));
        assert_eq!(a.cycles, 14 + 14 + 64);
    }

    #[test]
    fn refresh_pauses_service() {
        let mut c = cfg();
        c.refresh_interval = 100;
        c.refresh_penalty = 10;
        let mut d = DdrModel::new(&c, Clock::identity());
        // 30 cycles of service starting at 90 straddle the window [100, 110).
        let need = d.access(0, 64, AccessKind::Read).cycles;
        let mut d = DdrModel::new(&c, Clock::identity());
        let (s, e) = d.serve(90, 0, 64, AccessKind::Read);
        assert_eq!(s, 90);
        assert_eq!(e, 90 + need + 10);
        // Back-to-back requests to another bank overlap their row commands.
        let mut d = DdrModel::new(&c, Clock::identity());
        assert_eq!(d.serve(0, 0, 64, AccessKind::Read), (0, 30));
        assert_eq!(d.serve(0, 1024, 64, AccessKind::Read), (0, 32));
        let (s, _) = d.serve(205, 4096, 64, AccessKind::Read);
        assert_eq!(s, 210);
    }
}
