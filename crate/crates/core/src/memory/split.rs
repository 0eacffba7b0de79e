use crate::workload::{
    scaled, validate_descriptor, DmaDescriptor, InlineOp, Location, TensorDesc, WorkloadError,
};

/// One pipelined transfer produced from a descriptor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DmaRequest {
    pub src: Location,
    pub src_addr: u64,
    pub src_bytes: u64,
    /// Every destination receives the same `dst_bytes`.
    pub dsts: Vec<(Location, u64)>,
    pub dst_bytes: u64,
}

impl DmaRequest {
    /// Bytes handled by the channel's issue stage.
    pub fn payload(&self) -> u64 {
        self.src_bytes.max(self.dst_bytes)
    }
}

/// Splits a descriptor into requests: each contiguous run (inner dimensions
/// merged while both strided sides stay contiguous) is cut into chunks of at
/// most `max_request` bytes. A compressed side is a contiguous stream whose
/// chunk sizes follow the cumulative scaled offset.
pub fn dma_split_descriptor<'a>(
    d: &DmaDescriptor,
    lookup: &impl Fn(&str) -> Option<&'a TensorDesc>,
    max_request: u64,
) -> Result<Vec<DmaRequest>, WorkloadError> {
    validate_descriptor(d, "descriptor", lookup)?;
    let src_t = lookup(&d.src.tensor).expect("validated");
    let dst_t = lookup(&d.dst.tensor).expect("validated");
    let (src_stream, dst_stream, ratio) = match d.inline_op {
        InlineOp::Decompress(r) => (true, false, r),
        InlineOp::Compress(r) => (false, true, r),
        // A transpose writes its destination linearly.
        InlineOp::Transpose => (false, true, 1.0),
        InlineOp::None => (false, false, 1.0),
    };
    let src_st = d.strides(true);
    let dst_st = d.strides(false);

    // Merge repeat dimensions into the inner run while every strided side
    // is contiguous across them.
    let mut run = d.shape[0];
    let mut first_outer = 1;
    while first_outer < d.shape.len() {
        let i = first_outer - 1;
        let ok = (src_stream || src_st[i] == run) && (dst_stream || dst_st[i] == run);
        if !ok {
            break;
        }
        run *= d.shape[first_outer];
        first_outer += 1;
    }

    let dsts: Vec<Location> = if d.broadcast.is_empty() {
        vec![dst_t.location]
    } else {
        d.broadcast.iter().map(|&t| Location::Cb(t)).collect()
    };
    let stream_off = |logical: u64| {
        if ratio == 1.0 {
            logical
        } else {
            scaled(logical, ratio)
        }
    };

    let outer: Vec<u64> = d.shape[first_outer..].to_vec();
    let n_runs: u64 = outer.iter().product();
    let mut out = Vec::new();
    let mut idx = vec![0u64; outer.len()];
    for r in 0..n_runs {
        let (mut so, mut dof) = (0, 0);
        for (k, &i) in idx.iter().enumerate() {
            so += i * src_st[first_outer - 1 + k];
            dof += i * dst_st[first_outer - 1 + k];
        }
        let logical0 = r * run;
        let mut done = 0;
        while done < run {
            let len = (run - done).min(max_request);
            let l0 = logical0 + done;
            let l1 = l0 + len;
            let (src_addr, src_bytes) = if src_stream {
                (stream_off(l0), stream_off(l1) - stream_off(l0))
            } else {
                (so + done, len)
            };
            let (dst_addr, dst_bytes) = if dst_stream {
                (stream_off(l0), stream_off(l1) - stream_off(l0))
            } else {
                (dof + done, len)
            };
            out.push(DmaRequest {
                src: src_t.location,
                src_addr: src_t.base_addr + d.src.offset + src_addr,
                src_bytes,
                dsts: dsts
                    .iter()
                    .map(|&l| (l, dst_t.base_addr + d.dst.offset + dst_addr))
                    .collect(),
                dst_bytes,
            });
            done += len;
        }
        for k in 0..idx.len() {
            idx[k] += 1;
            if idx[k] < outer[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}
