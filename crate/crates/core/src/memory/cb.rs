use crate::clock::{ceil_div, Clock};
use crate::config::CbConfig;

/// One tile's compute buffer: `ports` independent ports, each moving
/// `bw_bytes_per_cycle` per CB cycle. A transfer holds one port for
/// `ceil(bytes / bw)` cycles; data is visible `latency` cycles after that.
#[derive(Debug, Clone)]
pub struct CbModel {
    busy_until: Vec<u64>,
    bw: u64,
    latency: u64,
    clock: Clock,
    pub capacity: u64,
}

impl CbModel {
    pub fn new(cfg: &CbConfig, clock: Clock) -> Self {
        CbModel {
            busy_until: vec![0; cfg.ports as usize],
            bw: cfg.bw_bytes_per_cycle,
            latency: clock.to_ref(cfg.latency),
            clock,
            capacity: cfg.size,
        }
    }

    /// Access latency in reference cycles.
    pub fn latency(&self) -> u64 {
        self.latency
    }

    /// Port occupancy of `bytes`, in reference cycles.
    pub fn occupancy(&self, bytes: u64) -> u64 {
        self.clock.to_ref(ceil_div(bytes, self.bw))
    }

    /// Books the earliest-free port (lowest index on ties) for a transfer
    /// that may not start before `earliest`. Returns `(start, end)`.
    pub fn reserve(&mut self, earliest: u64, bytes: u64) -> (u64, u64) {
        if bytes == 0 {
            return (earliest, earliest);
        }
        let (port, free) = self
            .busy_until
            .iter()
            .copied()
            .enumerate()
            .min_by_key(|&(i, t)| (t.max(earliest), i))
            .expect("at least one port");
        let start = free.max(earliest);
        let end = start + self.occupancy(bytes);
        self.busy_until[port] = end;
        (start, end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ports_serve_in_parallel_then_queue() {
        let cfg = CbConfig {
            size: 1 << 20,
            ports: 2,
            bw_bytes_per_cycle: 64,
            latency: 2,
        };
        let mut cb = CbModel::new(&cfg, Clock::identity());
        assert_eq!(cb.reserve(0, 640), (0, 10));
        assert_eq!(cb.reserve(0, 640), (0, 10));
        assert_eq!(cb.reserve(3, 64), (10, 11));
        assert_eq!(cb.reserve(20, 1), (20, 21));
        assert_eq!(cb.latency(), 2);
    }
}
