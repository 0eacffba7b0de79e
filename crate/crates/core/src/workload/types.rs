use serde::{Deserialize, Serialize};

pub const TASKGRAPH_FORMAT: &str = "neusim-taskgraph/1";
pub const OPLIST_FORMAT: &str = "neusim-oplist/1";

pub type BarrierId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    #[default]
    Ddr,
    Cb(u32),
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// A tensor stored in DDR or in one tile's compute buffer. Dimensions are
/// given in N,H,W,C order; fewer than four extents are the trailing ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDesc {
    pub id: String,
    pub dims: Vec<u64>,
    pub elem_bytes: u64,
    #[serde(default)]
    pub location: Location,
    #[serde(default)]
    pub base_addr: u64,
    /// Byte stride of each dimension; contiguous when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strides: Option<Vec<u64>>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub sparsity_density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compression_ratio: Option<f64>,
}

impl TensorDesc {
    pub fn new(id: impl Into<String>, dims: [u64; 4], elem_bytes: u64) -> Self {
        TensorDesc {
            id: id.into(),
            dims: dims.to_vec(),
            elem_bytes,
            location: Location::Ddr,
            base_addr: 0,
            strides: None,
            sparsity_density: 1.0,
            compression_ratio: None,
        }
    }

    /// Extents padded to N,H,W,C.
    pub fn shape4(&self) -> [u64; 4] {
        let mut s = [1u64; 4];
        let k = self.dims.len().min(4);
        s[4 - k..].copy_from_slice(&self.dims[self.dims.len() - k..]);
        s
    }

    pub fn elems(&self) -> u64 {
        self.dims.iter().product()
    }

    /// Byte strides padded to N,H,W,C.
    pub fn strides4(&self) -> [u64; 4] {
        let shape = self.shape4();
        match &self.strides {
            Some(st) => {
                let mut s = [0u64; 4];
                let k = st.len().min(4);
                s[4 - k..].copy_from_slice(&st[st.len() - k..]);
                for i in (0..4 - k).rev() {
                    s[i] = s[i + 1] * shape[i + 1];
                }
                s
            }
            None => {
                let mut s = [self.elem_bytes; 4];
                for i in (0..3).rev() {
                    s[i] = s[i + 1] * shape[i + 1];
                }
                s
            }
        }
    }

    /// Bytes spanned in memory (the extent of the layout).
    pub fn footprint(&self) -> u64 {
        let shape = self.shape4();
        let st = self.strides4();
        (0..4).map(|i| (shape[i] - 1) * st[i]).sum::<u64>() + self.elem_bytes
    }

    pub fn bytes(&self) -> u64 {
        self.elems() * self.elem_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Opcode {
    Conv2d,
    DepthwiseConv2d,
    Matmul,
    Eltwise(String),
    Activation(String),
    Pool(String),
    Softmax,
}

impl Opcode {
    pub fn affinity(&self) -> EngineClass {
        match self {
            Opcode::Conv2d | Opcode::DepthwiseConv2d | Opcode::Matmul => EngineClass::Dpu,
            _ => EngineClass::Dsp,
        }
    }

    /// Kernel looked up in the DSP cost table for DSP-resident opcodes.
    pub fn dsp_kernel(&self) -> Option<String> {
        match self {
            Opcode::Eltwise(k) => Some(format!("eltwise_{k}")),
            Opcode::Activation(k) => Some(k.clone()),
            Opcode::Pool(k) => Some(format!("pool_{k}")),
            Opcode::Softmax => Some("softmax".into()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusedPost {
    Activation,
    EltwiseAdd,
    BatchNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineClass {
    Dpu,
    Dsp,
}

fn unit_pair() -> [u32; 2] {
    [1, 1]
}

fn is_unit_pair(v: &[u32; 2]) -> bool {
    *v == [1, 1]
}

fn is_zero_pair(v: &[u32; 2]) -> bool {
    *v == [0, 0]
}

/// One network layer. `kernel`, `stride` and `pad` are `[x, y]` pairs; padding
/// is symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Operator {
    pub id: String,
    pub op: Opcode,
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    pub outputs: Vec<String>,
    #[serde(default = "unit_pair", skip_serializing_if = "is_unit_pair")]
    pub kernel: [u32; 2],
    #[serde(default = "unit_pair", skip_serializing_if = "is_unit_pair")]
    pub stride: [u32; 2],
    #[serde(default, skip_serializing_if = "is_zero_pair")]
    pub pad: [u32; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused_post: Option<FusedPost>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineClass>,
    /// Overrides the DSP kernel name derived from the opcode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsp_kernel: Option<String>,
}

impl Operator {
    pub fn new(id: impl Into<String>, op: Opcode, inputs: &[&str], output: &str) -> Self {
        Operator {
            id: id.into(),
            op,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            weights: None,
            outputs: vec![output.to_string()],
            kernel: [1, 1],
            stride: [1, 1],
            pad: [0, 0],
            fused_post: None,
            engine: None,
            dsp_kernel: None,
        }
    }

    pub fn engine_class(&self) -> EngineClass {
        self.engine.unwrap_or_else(|| self.op.affinity())
    }

    pub fn kernel_name(&self) -> Option<String> {
        self.dsp_kernel.clone().or_else(|| self.op.dsp_kernel())
    }

    pub fn output(&self) -> &str {
        &self.outputs[0]
    }
}

/// Half-open output sub-range `[lo, hi)` per N,H,W,C dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub n: [u64; 2],
    pub h: [u64; 2],
    pub w: [u64; 2],
    pub c: [u64; 2],
}

impl Region {
    pub fn full(shape: [u64; 4]) -> Self {
        Region {
            n: [0, shape[0]],
            h: [0, shape[1]],
            w: [0, shape[2]],
            c: [0, shape[3]],
        }
    }

    pub fn dims(&self) -> [[u64; 2]; 4] {
        [self.n, self.h, self.w, self.c]
    }

    pub fn extents(&self) -> [u64; 4] {
        self.dims().map(|[a, b]| b.saturating_sub(a))
    }

    pub fn elems(&self) -> u64 {
        self.extents().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.elems() == 0
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        !self.is_empty()
            && !other.is_empty()
            && self
                .dims()
                .iter()
                .zip(other.dims())
                .all(|(a, b)| a[0] < b[1] && b[0] < a[1])
    }

    pub fn within(&self, shape: [u64; 4]) -> bool {
        self.dims()
            .iter()
            .zip(shape)
            .all(|(d, s)| d[0] <= d[1] && d[1] <= s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineRef {
    pub class: EngineClass,
    pub tile: u32,
    pub unit: u32,
}

impl EngineRef {
    pub fn path(&self) -> String {
        let class = match self.class {
            EngineClass::Dpu => "dpu",
            EngineClass::Dsp => "dsp",
        };
        format!("tile{}/{class}{}", self.tile, self.unit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeTask {
    pub id: String,
    pub engine: EngineRef,
    pub operator: String,
    pub region: Region,
    #[serde(default)]
    pub wait: Vec<BarrierId>,
    #[serde(default)]
    pub update: Vec<BarrierId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmaTask {
    pub id: String,
    pub channel: u32,
    pub descriptors: Vec<DmaDescriptor>,
    #[serde(default)]
    pub wait: Vec<BarrierId>,
    #[serde(default)]
    pub update: Vec<BarrierId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    Compute(ComputeTask),
    Dma(DmaTask),
}

impl Task {
    pub fn id(&self) -> &str {
        match self {
            Task::Compute(t) => &t.id,
            Task::Dma(t) => &t.id,
        }
    }

    pub fn wait(&self) -> &[BarrierId] {
        match self {
            Task::Compute(t) => &t.wait,
            Task::Dma(t) => &t.wait,
        }
    }

    pub fn update(&self) -> &[BarrierId] {
        match self {
            Task::Compute(t) => &t.update,
            Task::Dma(t) => &t.update,
        }
    }

    /// Engine instance path the task runs on, e.g. `tile0/dpu0` or `dma/ch1`.
    pub fn engine_path(&self) -> String {
        match self {
            Task::Compute(t) => t.engine.path(),
            Task::Dma(t) => format!("dma/ch{}", t.channel),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRef {
    pub tensor: String,
    #[serde(default)]
    pub offset: u64,
}

/// Data transformation applied on the fly by the DMA engine.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InlineOp {
    #[default]
    None,
    /// Source holds a compressed stream of `ratio` times the written bytes.
    Decompress(f64),
    /// Destination receives a compressed stream of `ratio` times the read bytes.
    Compress(f64),
    Transpose,
}

fn is_none_op(op: &InlineOp) -> bool {
    *op == InlineOp::None
}

/// A strided block transfer. `shape[0]` is the contiguous inner run in bytes,
/// `shape[1..]` are repeat counts with the matching `*_strides` in bytes.
/// Shape and strides describe the uncompressed side of the transfer; a
/// compressed side is a contiguous stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmaDescriptor {
    pub src: TensorRef,
    pub dst: TensorRef,
    pub shape: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub src_strides: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dst_strides: Vec<u64>,
    /// Destination tiles written with identical data; empty means the
    /// destination tensor's own location only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub broadcast: Vec<u32>,
    #[serde(default, skip_serializing_if = "is_none_op")]
    pub inline_op: InlineOp,
}

impl DmaDescriptor {
    pub fn contiguous(src: &str, src_off: u64, dst: &str, dst_off: u64, bytes: u64) -> Self {
        DmaDescriptor {
            src: TensorRef {
                tensor: src.into(),
                offset: src_off,
            },
            dst: TensorRef {
                tensor: dst.into(),
                offset: dst_off,
            },
            shape: vec![bytes],
            src_strides: vec![],
            dst_strides: vec![],
            broadcast: vec![],
            inline_op: InlineOp::None,
        }
    }

    /// Bytes of the uncompressed side.
    pub fn logical_bytes(&self) -> u64 {
        self.shape.iter().product()
    }

    pub fn src_bytes(&self) -> u64 {
        match self.inline_op {
            InlineOp::Decompress(r) => scaled(self.logical_bytes(), r),
            _ => self.logical_bytes(),
        }
    }

    /// Bytes written to each destination.
    pub fn dst_bytes(&self) -> u64 {
        match self.inline_op {
            InlineOp::Compress(r) => scaled(self.logical_bytes(), r),
            _ => self.logical_bytes(),
        }
    }

    /// Strides padded for the given side; missing entries mean contiguous.
    pub fn strides(&self, src_side: bool) -> Vec<u64> {
        let given = if src_side {
            &self.src_strides
        } else {
            &self.dst_strides
        };
        let mut out = Vec::with_capacity(self.shape.len().saturating_sub(1));
        let mut run = self.shape.first().copied().unwrap_or(0);
        for i in 1..self.shape.len() {
            let s = given.get(i - 1).copied().unwrap_or(run);
            out.push(s);
            run = s * self.shape[i];
        }
        out
    }
}

/// `ceil(bytes * ratio)`, the size of a compressed stream.
pub fn scaled(bytes: u64, ratio: f64) -> u64 {
    ((bytes as f64 * ratio) - 1e-9).ceil().max(0.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierDef {
    pub id: BarrierId,
    pub producers: u32,
    pub consumers: u32,
}

/// A compiled workload. Tasks are listed in an executable order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskGraph {
    pub format: String,
    pub tensors: Vec<TensorDesc>,
    pub operators: Vec<Operator>,
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub barriers: Vec<BarrierDef>,
}

/// A network as a list of operators, input to the reference compiler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpList {
    pub format: String,
    pub tensors: Vec<TensorDesc>,
    pub operators: Vec<Operator>,
}

impl OpList {
    pub fn new(tensors: Vec<TensorDesc>, operators: Vec<Operator>) -> Self {
        OpList {
            format: OPLIST_FORMAT.into(),
            tensors,
            operators,
        }
    }
}
