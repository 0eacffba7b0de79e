//! Operator geometry: op counts and the bytes an output region needs.

use super::types::{Opcode, Operator, Region, TensorDesc};
use super::WorkloadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeomKind {
    Conv,
    Depthwise,
    Matmul,
    /// Elementwise over the output (eltwise, activation, softmax).
    Elementwise,
    Pool,
}

/// Operator shape information resolved against its tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct OpGeometry {
    pub kind: GeomKind,
    /// N,H,W,C of the first input.
    pub input: [u64; 4],
    pub output: [u64; 4],
    pub kx: u64,
    pub ky: u64,
    pub sx: u64,
    pub sy: u64,
    pub px: u64,
    pub py: u64,
    /// Element bytes of every input tensor (weights excluded).
    pub input_elem_bytes: Vec<u64>,
    pub weight_elem_bytes: u64,
    pub output_elem_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCount {
    pub macs: u64,
    pub elems: u64,
}

impl OpGeometry {
    pub fn resolve<'a>(
        op: &Operator,
        lookup: impl Fn(&str) -> Option<&'a TensorDesc>,
    ) -> Result<OpGeometry, WorkloadError> {
        let get = |id: &str, what: &str| {
            lookup(id).ok_or_else(|| WorkloadError::Dangling {
                owner: format!("operator {}", op.id),
                kind: what.to_string(),
                id: id.to_string(),
            })
        };
        let bad = |reason: String| WorkloadError::Invalid {
            owner: format!("operator {}", op.id),
            reason,
        };
        if op.inputs.is_empty() || op.outputs.len() != 1 {
            return Err(bad("needs at least one input and exactly one output".into()));
        }
        let inputs = op
            .inputs
            .iter()
            .map(|i| get(i, "tensor"))
            .collect::<Result<Vec<_>, _>>()?;
        let out = get(&op.outputs[0], "tensor")?;
        let kind = match op.op {
            Opcode::Conv2d => GeomKind::Conv,
            Opcode::DepthwiseConv2d => GeomKind::Depthwise,
            Opcode::Matmul => GeomKind::Matmul,
            Opcode::Pool(_) => GeomKind::Pool,
            Opcode::Eltwise(_) | Opcode::Activation(_) | Opcode::Softmax => GeomKind::Elementwise,
        };
        let [kx, ky] = op.kernel.map(u64::from);
        let [sx, sy] = op.stride.map(u64::from);
        let [px, py] = op.pad.map(u64::from);
        if kx == 0 || ky == 0 || sx == 0 || sy == 0 {
            return Err(bad("kernel and stride must be >= 1".into()));
        }
        let g = OpGeometry {
            kind,
            input: inputs[0].shape4(),
            output: out.shape4(),
            kx,
            ky,
            sx,
            sy,
            px,
            py,
            input_elem_bytes: inputs.iter().map(|t| t.elem_bytes).collect(),
            weight_elem_bytes: 0,
            output_elem_bytes: out.elem_bytes,
        };
        let mut g = g;
        let [n, ih, iw, ic] = g.input;
        let [on, oh, ow, oc] = g.output;
        if n != on {
            return Err(bad(format!("batch mismatch: input {n}, output {on}")));
        }
        let weights_needed = matches!(
            kind,
            GeomKind::Conv | GeomKind::Depthwise | GeomKind::Matmul
        );
        match (&op.weights, weights_needed) {
            (Some(w), true) => {
                let wt = get(w, "tensor")?;
                let expect = match kind {
                    GeomKind::Conv => kx * ky * ic * oc,
                    GeomKind::Depthwise => kx * ky * oc,
                    _ => ic * oc,
                };
                if wt.elems() != expect {
                    return Err(bad(format!(
                        "weights `{w}` hold {} elements, expected {expect}",
                        wt.elems()
                    )));
                }
                g.weight_elem_bytes = wt.elem_bytes;
            }
            (None, true) => return Err(bad("missing weights".into())),
            (Some(_), false) => return Err(bad("weights given for a weightless opcode".into())),
            (None, false) => {}
        }
        match kind {
            GeomKind::Conv | GeomKind::Depthwise | GeomKind::Pool => {
                let eh = conv_out(ih, ky, sy, py);
                let ew = conv_out(iw, kx, sx, px);
                if (eh, ew) != (Some(oh), Some(ow)) {
                    return Err(bad(format!(
                        "output {oh}x{ow} inconsistent with input {ih}x{iw}, kernel {kx}x{ky}, stride {sx}x{sy}, pad {px}x{py}"
                    )));
                }
                if kind != GeomKind::Conv && ic != oc {
                    return Err(bad(format!("channel mismatch: input {ic}, output {oc}")));
                }
            }
            GeomKind::Matmul | GeomKind::Elementwise => {
                if (kx, ky, sx, sy, px, py) != (1, 1, 1, 1, 0, 0) {
                    return Err(bad("kernel/stride/pad not supported for this opcode".into()));
                }
                if (ih, iw) != (oh, ow) {
                    return Err(bad("input and output spatial extents differ".into()));
                }
                if kind == GeomKind::Elementwise {
                    for (t, id) in inputs.iter().zip(&op.inputs) {
                        if t.shape4() != g.output {
                            return Err(bad(format!("input `{id}` shape differs from output")));
                        }
                    }
                }
            }
        }
        Ok(g)
    }

    /// Multiply-accumulates per output element.
    pub fn macs_per_output(&self) -> u64 {
        match self.kind {
            GeomKind::Conv => self.kx * self.ky * self.input[3],
            GeomKind::Depthwise => self.kx * self.ky,
            GeomKind::Matmul => self.input[3],
            GeomKind::Elementwise | GeomKind::Pool => 0,
        }
    }

    /// Elementary DSP operations per output element.
    pub fn elems_per_output(&self) -> u64 {
        match self.kind {
            GeomKind::Pool => self.kx * self.ky,
            _ => 1,
        }
    }

    pub fn is_dpu(&self) -> bool {
        matches!(
            self.kind,
            GeomKind::Conv | GeomKind::Depthwise | GeomKind::Matmul
        )
    }

    /// Input rows `[lo, hi)` needed to produce output rows `rows`.
    pub fn input_rows(&self, rows: [u64; 2]) -> [u64; 2] {
        window(rows, self.ky, self.sy, self.py, self.input[1])
    }

    pub fn input_cols(&self, cols: [u64; 2]) -> [u64; 2] {
        window(cols, self.kx, self.sx, self.px, self.input[2])
    }

    /// Bytes of all inputs needed to compute `r`.
    pub fn input_bytes(&self, r: &Region) -> u64 {
        if r.is_empty() {
            return 0;
        }
        let [n, _, _, c] = r.extents();
        let [h0, h1] = self.input_rows(r.h);
        let [w0, w1] = self.input_cols(r.w);
        let chans = match self.kind {
            GeomKind::Conv | GeomKind::Matmul => self.input[3],
            _ => c,
        };
        let elems = n * (h1 - h0) * (w1 - w0) * chans;
        self.input_elem_bytes.iter().map(|eb| elems * eb).sum()
    }

    /// Weight bytes for the output channels of `r`.
    pub fn weight_bytes(&self, r: &Region) -> u64 {
        if r.is_empty() {
            return 0;
        }
        let oc = r.extents()[3];
        let per_oc = match self.kind {
            GeomKind::Conv => self.kx * self.ky * self.input[3],
            GeomKind::Depthwise => self.kx * self.ky,
            GeomKind::Matmul => self.input[3],
            _ => 0,
        };
        per_oc * oc * self.weight_elem_bytes
    }

    pub fn output_bytes(&self, r: &Region) -> u64 {
        r.elems() * self.output_elem_bytes
    }

    pub fn total_weight_bytes(&self) -> u64 {
        self.weight_bytes(&Region::full(self.output))
    }

    /// True when output row `h` depends only on input row `h`.
    pub fn row_aligned(&self) -> bool {
        self.ky == 1 && self.sy == 1 && self.py == 0 && self.input[1] == self.output[1]
    }
}

fn conv_out(i: u64, k: u64, s: u64, p: u64) -> Option<u64> {
    (i + 2 * p).checked_sub(k).map(|v| v / s + 1)
}

fn window([a, b]: [u64; 2], k: u64, s: u64, p: u64, limit: u64) -> [u64; 2] {
    if a >= b {
        return [0, 0];
    }
    let lo = (a * s).saturating_sub(p);
    let hi = ((b - 1) * s + k).saturating_sub(p).min(limit);
    [lo.min(hi), hi]
}

/// Ideal operation count of `g` restricted to output region `r`.
pub fn op_compute_count(g: &OpGeometry, r: &Region) -> OpCount {
    let out = r.elems();
    OpCount {
        macs: out * g.macs_per_output(),
        elems: out * g.elems_per_output(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn geom(op: &Operator, ts: &[TensorDesc]) -> OpGeometry {
        let m: HashMap<_, _> = ts.iter().map(|t| (t.id.as_str(), t)).collect();
        OpGeometry::resolve(op, |id| m.get(id).copied()).unwrap()
    }

    #[test]
    fn conv_1x1_macs() {
        let ts = [
            TensorDesc::new("x", [1, 56, 56, 64], 1),
            TensorDesc::new("w", [1, 1, 64, 64], 1),
            TensorDesc::new("y", [1, 56, 56, 64], 1),
        ];
        let mut op = Operator::new("c", Opcode::Conv2d, &["x"], "y");
        op.weights = Some("w".into());
        let g = geom(&op, &ts);
        let c = op_compute_count(&g, &Region::full(g.output));
        // 56 * 56 * 64 output elements, 64 input channels each.
        assert_eq!(c.macs, 12_845_056);
        let empty = Region {
            h: [3, 3],
            ..Region::full(g.output)
        };
        assert_eq!(op_compute_count(&g, &empty), OpCount::default());
    }

    #[test]
    fn eltwise_elems() {
        let ts = [
            TensorDesc::new("a", [1, 8, 8, 16], 1),
            TensorDesc::new("b", [1, 8, 8, 16], 1),
            TensorDesc::new("y", [1, 8, 8, 16], 1),
        ];
        let op = Operator::new("e", Opcode::Eltwise("add".into()), &["a", "b"], "y");
        let g = geom(&op, &ts);
        let c = op_compute_count(&g, &Region::full(g.output));
        assert_eq!(
            c,
            OpCount {
                macs: 0,
                elems: 1024
            }
        );
        assert_eq!(g.input_bytes(&Region::full(g.output)), 2048);
    }

    #[test]
    fn strided_conv_window() {
        let ts = [
            TensorDesc::new("x", [1, 56, 56, 8], 1),
            TensorDesc::new("w", [3, 3, 8, 8], 1),
            TensorDesc::new("y", [1, 28, 28, 8], 1),
        ];
        let mut op = Operator::new("c", Opcode::Conv2d, &["x"], "y");
        op.weights = Some("w".into());
        op.kernel = [3, 3];
        op.stride = [2, 2];
        op.pad = [1, 1];
        let g = geom(&op, &ts);
        assert_eq!(g.input_rows([0, 14]), [0, 28]);
        assert_eq!(g.input_rows([14, 28]), [27, 56]);
        assert!(!g.row_aligned());
    }

    #[test]
    fn inconsistent_output_rejected() {
        let ts = [
            TensorDesc::new("x", [1, 10, 10, 4], 1),
            TensorDesc::new("w", [3, 3, 4, 4], 1),
            TensorDesc::new("y", [1, 10, 10, 4], 1),
        ];
        let mut op = Operator::new("c", Opcode::Conv2d, &["x"], "y");
        op.weights = Some("w".into());
        op.kernel = [3, 3];
        let m: HashMap<_, _> = ts.iter().map(|t| (t.id.as_str(), t)).collect();
        assert!(OpGeometry::resolve(&op, |id| m.get(id).copied()).is_err());
    }
}
