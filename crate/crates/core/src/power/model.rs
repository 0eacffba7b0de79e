use std::collections::BTreeSet;

use super::{dynamic_power, leakage_power, LeakageLut, PowerError, VfCurve};
use crate::activity::{ActivityLog, ModelId};
use crate::clock::ClockClass;
use crate::config::{FreqConfig, PowerConfig, PowerNodeSpec};

/// Matches a `/`-separated path against a pattern whose `*` stands for any
/// run of characters within one segment.
pub fn glob_match(pattern: &str, path: &str) -> bool {
    let (ps, xs): (Vec<_>, Vec<_>) = (pattern.split('/').collect(), path.split('/').collect());
    ps.len() == xs.len()
        && ps
            .iter()
            .zip(&xs)
            .all(|(p, x)| segment_match(p.as_bytes(), x.as_bytes()))
}

fn segment_match(p: &[u8], x: &[u8]) -> bool {
    match p.split_first() {
        None => x.is_empty(),
        Some((b'*', rest)) => (0..=x.len()).any(|k| segment_match(rest, &x[k..])),
        Some((c, rest)) => x.first() == Some(c) && segment_match(rest, &x[1..]),
    }
}

/// A resolved power node at the run's operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNode {
    /// Slash-joined names from the root, e.g. `npu/dpu`.
    pub path: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub models: Vec<ModelId>,
    pub freq_hz: f64,
    pub voltage_v: f64,
    pub p_lkg_w: f64,
    pub cdyn_idle_f: f64,
    pub cdyn_active_f: f64,
}

/// Per-interval activity of one bound node, summed over its models.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivitySample {
    pub pti: usize,
    pub node: String,
    pub measured: f64,
    pub max: f64,
}

impl ActivitySample {
    pub fn utilization(&self) -> f64 {
        if self.max > 0.0 {
            self.measured / self.max
        } else {
            0.0
        }
    }
}

/// Power of one node in one PTI. `own_*` is the node's own contribution;
/// the other fields include every descendant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRow {
    pub pti: usize,
    pub node: usize,
    pub own_lkg_w: f64,
    pub own_dyn_w: f64,
    pub p_lkg_w: f64,
    pub p_dyn_w: f64,
    pub p_total_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub pti_cycles: u64,
    pub pti_seconds: f64,
    pub n_ptis: usize,
    pub nodes: Vec<String>,
    /// Rows ordered by PTI, then by node in tree pre-order.
    pub rows: Vec<PowerRow>,
    pub samples: Vec<ActivitySample>,
}

impl PowerTrace {
    pub fn row(&self, pti: usize, node: usize) -> &PowerRow {
        &self.rows[pti * self.nodes.len() + node]
    }

    /// Total power of `node` per PTI.
    pub fn series(&self, node: usize) -> Vec<f64> {
        (0..self.n_ptis)
            .map(|k| self.row(k, node).p_total_w)
            .collect()
    }

    pub fn energy_j(&self, node: usize) -> f64 {
        self.series(node).iter().map(|p| p * self.pti_seconds).sum()
    }

    pub fn mean_power_w(&self, node: usize) -> f64 {
        if self.n_ptis == 0 {
            return 0.0;
        }
        self.series(node).iter().sum::<f64>() / self.n_ptis as f64
    }

    pub fn duration_s(&self) -> f64 {
        self.n_ptis as f64 * self.pti_seconds
    }
}

/// Activity of every model apportioned into PTIs of `pti_cycles` reference
/// cycles, linearly by time overlap. Returns `[model][pti]`.
pub fn collect_activity(log: &ActivityLog, pti_cycles: u64, n_ptis: usize) -> Vec<Vec<f64>> {
    let pti = pti_cycles.max(1);
    log.intervals
        .iter()
        .map(|ivs| {
            let mut acc = vec![0.0; n_ptis];
            if n_ptis == 0 {
                return acc;
            }
            for iv in ivs {
                let first = ((iv.t0 / pti) as usize).min(n_ptis - 1);
                if iv.t1 <= iv.t0 {
                    acc[first] += iv.amount;
                    continue;
                }
                let last = (((iv.t1 - 1) / pti) as usize).min(n_ptis - 1);
                if first == last {
                    acc[first] += iv.amount;
                    continue;
                }
                let len = (iv.t1 - iv.t0) as f64;
                let mut given = 0.0;
                for (k, slot) in acc.iter_mut().enumerate().take(last).skip(first) {
                    let lo = iv.t0.max(k as u64 * pti);
                    let hi = iv.t1.min((k as u64 + 1) * pti);
                    let part = iv.amount * (hi - lo) as f64 / len;
                    *slot += part;
                    given += part;
                }
                // The last interval takes the remainder so nothing is lost.
                acc[last] += iv.amount - given;
            }
            acc
        })
        .collect()
}

impl PowerModel {
    /// Resolves the node tree against the run's models and frequencies.
    pub fn build(
        cfg: &PowerConfig,
        freq: &FreqConfig,
        log: &ActivityLog,
    ) -> Result<Self, PowerError> {
        let mut m = PowerModel {
            nodes: Vec::new(),
            peaks: log.models.iter().map(|i| i.peak_per_cycle).collect(),
        };
        let ctx = Inherited {
            lut: None,
            curve: None,
            temp0: None,
            voltage0: None,
            clock: ClockClass::Reference,
        };
        m.add(cfg, freq, log, &cfg.root, None, "", &ctx)?;
        Ok(m)
    }

    #[allow(clippy::too_many_arguments)]
    fn add(
        &mut self,
        cfg: &PowerConfig,
        freq: &FreqConfig,
        log: &ActivityLog,
        spec: &PowerNodeSpec,
        parent: Option<usize>,
        prefix: &str,
        up: &Inherited,
    ) -> Result<usize, PowerError> {
        let path = if prefix.is_empty() {
            spec.name.clone()
        } else {
            format!("{prefix}/{}", spec.name)
        };
        let err = |reason: String| PowerError::Node {
            node: path.clone(),
            reason,
        };
        let lut = spec.lkg_lut.clone().or(up.lut.clone());
        let curve = spec.vf_curve.clone().or(up.curve.clone());
        let temp0 = spec.temp0_c.or(up.temp0);
        let voltage0 = spec.voltage0_v.or(up.voltage0);

        let mut models = Vec::new();
        let mut clock = spec.clock.unwrap_or(up.clock);
        if let Some(pat) = &spec.binding {
            let classes: BTreeSet<ClockClass> = log
                .models
                .iter()
                .enumerate()
                .filter(|(_, info)| glob_match(pat, &info.path))
                .map(|(id, info)| {
                    models.push(id);
                    info.class
                })
                .collect();
            if models.is_empty() {
                return Err(err(format!("binding `{pat}` matches no hardware model")));
            }
            if classes.len() > 1 {
                return Err(err(format!("binding `{pat}` spans several clock domains")));
            }
            clock = *classes.first().unwrap();
        }
        let freq_hz = freq.hz(clock);
        let voltage_v = match (spec.voltage_v, &curve) {
            (Some(v), _) => v,
            (None, Some(c)) => VfCurve::from(&cfg.vf_curves[c])
                .f2v(freq_hz, cfg.temp_c)
                .map_err(|e| err(e.to_string()))?,
            (None, None) => return Err(err("needs a vf_curve or a fixed voltage_v".into())),
        };
        let p_lkg_w = match &lut {
            Some(name) if spec.p_lkg0_w > 0.0 => {
                let (Some(t0), Some(v0)) = (temp0, voltage0) else {
                    return Err(err("leakage table needs temp0_c and voltage0_v".into()));
                };
                let table = LeakageLut::from(&cfg.lkg_luts[name]);
                leakage_power(spec.p_lkg0_w, &table, (t0, v0), cfg.temp_c, voltage_v)
                    .map_err(|e| err(e.to_string()))?
            }
            _ => spec.p_lkg0_w,
        };
        let index = self.nodes.len();
        self.nodes.push(PowerNode {
            path: path.clone(),
            parent,
            children: Vec::new(),
            models,
            freq_hz,
            voltage_v,
            p_lkg_w,
            cdyn_idle_f: spec.cdyn_idle_f,
            cdyn_active_f: spec.cdyn_active_f,
        });
        let ctx = Inherited {
            lut,
            curve,
            temp0,
            voltage0,
            clock,
        };
        for c in &spec.children {
            let ci = self.add(cfg, freq, log, c, Some(index), &path, &ctx)?;
            self.nodes[index].children.push(ci);
        }
        Ok(index)
    }

    /// Computes per-PTI power for a run of `makespan` reference cycles. The
    /// last PTI is padded to full length.
    pub fn trace(
        &self,
        log: &ActivityLog,
        pti_cycles: u64,
        makespan: u64,
        ref_mhz: f64,
    ) -> Result<PowerTrace, PowerError> {
        let pti = pti_cycles.max(1);
        let n_ptis = makespan.div_ceil(pti).max(1) as usize;
        let per_model = collect_activity(log, pti, n_ptis);
        let n = self.nodes.len();
        let mut rows = Vec::with_capacity(n * n_ptis);
        let mut samples = Vec::new();
        for k in 0..n_ptis {
            let mut own = Vec::with_capacity(n);
            for node in &self.nodes {
                let u = if node.models.is_empty() {
                    0.0
                } else {
                    let measured: f64 = node.models.iter().map(|&m| per_model[m][k]).sum();
                    let max: f64 =
                        node.models.iter().map(|&m| self.peaks[m]).sum::<f64>() * pti as f64;
                    let s = ActivitySample {
                        pti: k,
                        node: node.path.clone(),
                        measured,
                        max,
                    };
                    let u = s.utilization();
                    samples.push(s);
                    // Apportioning can leave a rounding residue above 1.
                    if u > 1.0 + 1e-9 {
                        return Err(PowerError::Utilization { value: u });
                    }
                    u.min(1.0)
                };
                let dyn_w = dynamic_power(
                    node.cdyn_idle_f,
                    node.cdyn_active_f,
                    u,
                    node.freq_hz,
                    node.voltage_v,
                )?;
                own.push((node.p_lkg_w, dyn_w));
            }
            for i in 0..n {
                // Pre-order: a node's subtree is the contiguous run that
                // follows it until the next node that is not a descendant.
                let (mut lkg, mut dyn_w) = (0.0, 0.0);
                for (j, o) in own.iter().enumerate().skip(i) {
                    if j > i && !self.descends(j, i) {
                        break;
                    }
                    lkg += o.0;
                    dyn_w += o.1;
                }
                rows.push(PowerRow {
                    pti: k,
                    node: i,
                    own_lkg_w: own[i].0,
                    own_dyn_w: own[i].1,
                    p_lkg_w: lkg,
                    p_dyn_w: dyn_w,
                    p_total_w: lkg + dyn_w,
                });
            }
        }
        Ok(PowerTrace {
            pti_cycles: pti,
            pti_seconds: pti as f64 / (ref_mhz * 1e6),
            n_ptis,
            nodes: self.nodes.iter().map(|n| n.path.clone()).collect(),
            rows,
            samples,
        })
    }

    fn descends(&self, mut j: usize, ancestor: usize) -> bool {
        while let Some(p) = self.nodes[j].parent {
            if p == ancestor {
                return true;
            }
            j = p;
        }
        false
    }

    pub fn node_index(&self, path: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.path == path)
    }
}

/// The resolved tree, in pre-order (root first).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerModel {
    pub nodes: Vec<PowerNode>,
    peaks: Vec<f64>,
}

struct Inherited {
    lut: Option<String>,
    curve: Option<String>,
    temp0: Option<f64>,
    voltage0: Option<f64>,
    clock: ClockClass,
}
