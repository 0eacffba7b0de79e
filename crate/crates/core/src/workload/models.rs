//! Synthetic networks used by tests, benchmarks and the shipped examples.
//! All tensors are int8 with batch 1.

use super::types::*;

struct Builder {
    tensors: Vec<TensorDesc>,
    ops: Vec<Operator>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            tensors: Vec::new(),
            ops: Vec::new(),
        }
    }

    fn tensor(&mut self, id: &str, dims: [u64; 4]) -> String {
        self.tensors.push(TensorDesc::new(id, dims, 1));
        id.to_string()
    }

    fn shape(&self, id: &str) -> [u64; 4] {
        self.tensors.iter().find(|t| t.id == id).unwrap().shape4()
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, id: &str, input: &str, oc: u64, k: u32, stride: u32, relu: bool) -> String {
        let [n, h, w, ic] = self.shape(input);
        let pad = k / 2;
        let oh = (h + 2 * pad as u64 - k as u64) / stride as u64 + 1;
        let ow = (w + 2 * pad as u64 - k as u64) / stride as u64 + 1;
        let wt = self.tensor(&format!("{id}.weights"), [k as u64, k as u64, ic, oc]);
        let out = self.tensor(&format!("{id}.out"), [n, oh, ow, oc]);
        let mut op = Operator::new(id, Opcode::Conv2d, &[input], &out);
        op.weights = Some(wt);
        op.kernel = [k, k];
        op.stride = [stride, stride];
        op.pad = [pad, pad];
        if relu {
            op.fused_post = Some(FusedPost::Activation);
        }
        self.ops.push(op);
        out
    }

    fn dsp(&mut self, id: &str, op: Opcode, inputs: &[&str]) -> String {
        let shape = self.shape(inputs[0]);
        let out = self.tensor(&format!("{id}.out"), shape);
        self.ops.push(Operator::new(id, op, inputs, &out));
        out
    }

    fn finish(self) -> OpList {
        OpList::new(self.tensors, self.ops)
    }
}

/// `layers` 3x3 convolutions with fused activation, `c` channels throughout.
/// Operators are named `conv0`, `conv1`, ...
pub fn conv_stack(layers: usize, h: u64, w: u64, c: u64) -> OpList {
    let mut b = Builder::new();
    let mut x = b.tensor("input", [1, h, w, c]);
    for i in 0..layers {
        x = b.conv(&format!("conv{i}"), &x, c, 3, 1, true);
    }
    b.finish()
}

/// A 3x3 convolution (`conv`) followed by a tanh activation (`act`) on the DSP.
pub fn conv_act(h: u64, w: u64, c: u64) -> OpList {
    let mut b = Builder::new();
    let x = b.tensor("input", [1, h, w, c]);
    let y = b.conv("conv", &x, c, 3, 1, false);
    b.dsp("act", Opcode::Activation("tanh".into()), &[&y]);
    b.finish()
}

/// ResNet-50 shaped network at 224x224: 53 convolutions (stem, 16 bottleneck
/// blocks of three, 4 projection shortcuts), DSP max pool, residual adds,
/// global average pool and the classifier as a matrix multiply.
pub fn resnet50() -> OpList {
    let mut b = Builder::new();
    let x = b.tensor("image", [1, 224, 224, 3]);
    let x = b.conv("stem", &x, 64, 7, 2, true);
    let mut pool = Operator::new(
        "stem.pool",
        Opcode::Pool("max".into()),
        &[&x],
        "stem.pool.out",
    );
    pool.kernel = [3, 3];
    pool.stride = [2, 2];
    pool.pad = [1, 1];
    b.tensor("stem.pool.out", [1, 56, 56, 64]);
    b.ops.push(pool);
    let mut x = "stem.pool.out".to_string();
    for (s, (blocks, width)) in [(3, 64u64), (4, 128), (6, 256), (3, 512)]
        .into_iter()
        .enumerate()
    {
        for blk in 0..blocks {
            let id = format!("res{}{}", s + 2, (b'a' + blk as u8) as char);
            let stride = if blk == 0 && s > 0 { 2 } else { 1 };
            let a = b.conv(&format!("{id}.reduce"), &x, width, 1, 1, true);
            let m = b.conv(&format!("{id}.conv3"), &a, width, 3, stride, true);
            let e = b.conv(&format!("{id}.expand"), &m, width * 4, 1, 1, false);
            let short = if blk == 0 {
                b.conv(&format!("{id}.proj"), &x, width * 4, 1, stride, false)
            } else {
                x.clone()
            };
            x = b.dsp(
                &format!("{id}.add"),
                Opcode::Eltwise("add".into()),
                &[&e, &short],
            );
        }
    }
    let mut gap = Operator::new("gap", Opcode::Pool("avg".into()), &[&x], "gap.out");
    gap.kernel = [7, 7];
    gap.stride = [7, 7];
    b.tensor("gap.out", [1, 1, 1, 2048]);
    b.ops.push(gap);
    let wt = b.tensor("fc.weights", [1, 1, 2048, 1000]);
    let out = b.tensor("fc.out", [1, 1, 1, 1000]);
    let mut fc = Operator::new("fc", Opcode::Matmul, &["gap.out"], &out);
    fc.weights = Some(wt);
    b.ops.push(fc);
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resnet50_shape() {
        let net = resnet50();
        let convs = net
            .operators
            .iter()
            .filter(|o| o.op == Opcode::Conv2d)
            .count();
        assert_eq!(convs, 53);
        let last = net
            .tensors
            .iter()
            .find(|t| t.id == "res5c.add.out")
            .unwrap();
        assert_eq!(last.shape4(), [1, 7, 7, 2048]);
    }
}
