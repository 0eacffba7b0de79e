use std::collections::{BTreeMap, BTreeSet, HashMap};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::geometry::OpGeometry;
use super::types::*;
use super::WorkloadError;

fn invalid(owner: impl Into<String>, reason: impl Into<String>) -> WorkloadError {
    WorkloadError::Invalid {
        owner: owner.into(),
        reason: reason.into(),
    }
}

fn unique<'a>(kind: &'static str, ids: impl Iterator<Item = &'a str>) -> Result<(), WorkloadError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(WorkloadError::DuplicateId {
                kind,
                id: id.to_string(),
            });
        }
    }
    Ok(())
}

pub(crate) fn validate_tensor(t: &TensorDesc) -> Result<(), WorkloadError> {
    let owner = format!("tensor {}", t.id);
    if t.dims.is_empty() || t.dims.len() > 4 {
        return Err(invalid(owner, "needs 1 to 4 dimensions"));
    }
    if t.dims.contains(&0) {
        return Err(invalid(owner, "extents must be >= 1"));
    }
    if t.elem_bytes == 0 {
        return Err(invalid(owner, "elem_bytes must be >= 1"));
    }
    if !(t.sparsity_density > 0.0 && t.sparsity_density <= 1.0) {
        return Err(invalid(owner, "sparsity_density must be in (0, 1]"));
    }
    if let Some(r) = t.compression_ratio {
        if !(r > 0.0 && r <= 1.0) {
            return Err(invalid(owner, "compression_ratio must be in (0, 1]"));
        }
    }
    if let Some(st) = &t.strides {
        if st.len() != t.dims.len() {
            return Err(invalid(owner, "strides must have one entry per dimension"));
        }
        let shape = t.shape4();
        let s = t.strides4();
        if s[3] < t.elem_bytes || (0..3).any(|i| s[i] < s[i + 1] * shape[i + 1]) {
            return Err(invalid(owner, "strides overlap (layout is not injective)"));
        }
    }
    Ok(())
}

/// Checks a DMA descriptor against the tensors it moves.
pub fn validate_descriptor<'a>(
    d: &DmaDescriptor,
    owner: &str,
    lookup: &impl Fn(&str) -> Option<&'a TensorDesc>,
) -> Result<(), WorkloadError> {
    if d.shape.is_empty() || d.shape.len() > 4 {
        return Err(invalid(owner, "descriptor shape needs 1 to 4 entries"));
    }
    if d.shape.contains(&0) {
        return Err(invalid(owner, "zero-byte descriptor"));
    }
    let reps = d.shape.len() - 1;
    if d.src_strides.len() > reps || d.dst_strides.len() > reps {
        return Err(invalid(owner, "more strides than repeat dimensions"));
    }
    let ratio = match d.inline_op {
        InlineOp::Decompress(r) | InlineOp::Compress(r) => Some(r),
        _ => None,
    };
    if let Some(r) = ratio {
        if !(r > 0.0 && r <= 1.0) {
            return Err(invalid(owner, "inline compression ratio must be in (0, 1]"));
        }
    }
    let src = lookup(&d.src.tensor).ok_or_else(|| WorkloadError::Dangling {
        owner: owner.to_string(),
        kind: "tensor".into(),
        id: d.src.tensor.clone(),
    })?;
    let dst = lookup(&d.dst.tensor).ok_or_else(|| WorkloadError::Dangling {
        owner: owner.to_string(),
        kind: "tensor".into(),
        id: d.dst.tensor.clone(),
    })?;
    if !d.broadcast.is_empty() {
        if !matches!(dst.location, Location::Cb(_)) {
            return Err(invalid(
                owner,
                "broadcast requires a compute-buffer destination",
            ));
        }
        let set: BTreeSet<_> = d.broadcast.iter().collect();
        if set.len() != d.broadcast.len() {
            return Err(invalid(owner, "broadcast lists a tile twice"));
        }
    }
    let span = |src_side: bool| -> u64 {
        let compressed = matches!(
            (src_side, d.inline_op),
            (true, InlineOp::Decompress(_)) | (false, InlineOp::Compress(_))
        );
        if compressed {
            return if src_side {
                d.src_bytes()
            } else {
                d.dst_bytes()
            };
        }
        let st = d.strides(src_side);
        d.shape[0]
            + d.shape[1..]
                .iter()
                .zip(&st)
                .map(|(n, s)| (n - 1) * s)
                .sum::<u64>()
    };
    for (side, t, r, src_side) in [
        ("source", src, &d.src, true),
        ("destination", dst, &d.dst, false),
    ] {
        let end = r.offset + span(src_side);
        if end > t.footprint() {
            return Err(invalid(
                owner,
                format!(
                    "{side} range ends at byte {end}, past the {} bytes of `{}`",
                    t.footprint(),
                    t.id
                ),
            ));
        }
    }
    Ok(())
}

/// Checks every structural invariant of a task graph.
pub fn validate_graph(g: &TaskGraph) -> Result<(), WorkloadError> {
    if g.format != TASKGRAPH_FORMAT {
        return Err(WorkloadError::Format {
            found: g.format.clone(),
            expected: TASKGRAPH_FORMAT.into(),
        });
    }
    unique("tensor", g.tensors.iter().map(|t| t.id.as_str()))?;
    unique("operator", g.operators.iter().map(|o| o.id.as_str()))?;
    unique("task", g.tasks.iter().map(|t| t.id()))?;
    let barrier_ids: Vec<String> = g.barriers.iter().map(|b| b.id.to_string()).collect();
    unique("barrier", barrier_ids.iter().map(String::as_str))?;

    for t in &g.tensors {
        validate_tensor(t)?;
    }
    let tensors: HashMap<&str, &TensorDesc> =
        g.tensors.iter().map(|t| (t.id.as_str(), t)).collect();
    let lookup = |id: &str| tensors.get(id).copied();

    let mut geoms = HashMap::new();
    for op in &g.operators {
        let geom = OpGeometry::resolve(op, lookup)?;
        check_operator(op)?;
        geoms.insert(op.id.as_str(), geom);
    }

    let barriers: BTreeMap<BarrierId, &BarrierDef> = g.barriers.iter().map(|b| (b.id, b)).collect();
    for b in &g.barriers {
        if b.producers < 1 || b.consumers < 1 {
            return Err(invalid(
                format!("barrier {}", b.id),
                "producer and consumer counts must be >= 1",
            ));
        }
    }

    let mut producers: BTreeMap<BarrierId, Vec<usize>> = BTreeMap::new();
    let mut consumers: BTreeMap<BarrierId, Vec<usize>> = BTreeMap::new();
    let mut regions: HashMap<&str, Vec<(usize, Region)>> = HashMap::new();
    for (i, task) in g.tasks.iter().enumerate() {
        let owner = format!("task {}", task.id());
        for (list, map) in [
            (task.wait(), &mut consumers),
            (task.update(), &mut producers),
        ] {
            let mut seen = BTreeSet::new();
            for b in list {
                if !barriers.contains_key(b) {
                    return Err(WorkloadError::Dangling {
                        owner: owner.clone(),
                        kind: "barrier".into(),
                        id: b.to_string(),
                    });
                }
                if !seen.insert(*b) {
                    return Err(invalid(owner.clone(), format!("barrier {b} listed twice")));
                }
                map.entry(*b).or_default().push(i);
            }
        }
        match task {
            Task::Compute(c) => {
                let op = g
                    .operators
                    .iter()
                    .find(|o| o.id == c.operator)
                    .ok_or_else(|| WorkloadError::Dangling {
                        owner: owner.clone(),
                        kind: "operator".into(),
                        id: c.operator.clone(),
                    })?;
                if c.engine.class != op.engine_class() {
                    return Err(invalid(
                        owner,
                        format!("operator `{}` must run on {:?}", op.id, op.engine_class()),
                    ));
                }
                let out = geoms[op.id.as_str()].output;
                if !c.region.within(out) {
                    return Err(invalid(owner, "region exceeds the operator output"));
                }
                regions
                    .entry(op.id.as_str())
                    .or_default()
                    .push((i, c.region));
            }
            Task::Dma(d) => {
                if d.descriptors.is_empty() {
                    return Err(invalid(owner, "dma task without descriptors"));
                }
                for (k, desc) in d.descriptors.iter().enumerate() {
                    validate_descriptor(desc, &format!("{owner} descriptor {k}"), &lookup)?;
                }
            }
        }
    }

    for b in &g.barriers {
        let np = producers.get(&b.id).map_or(0, Vec::len) as u32;
        let nc = consumers.get(&b.id).map_or(0, Vec::len) as u32;
        if np != b.producers {
            return Err(WorkloadError::BarrierCount {
                barrier: b.id,
                role: "producers",
                verb: "update",
                declared: b.producers,
                actual: np,
            });
        }
        if nc != b.consumers {
            return Err(WorkloadError::BarrierCount {
                barrier: b.id,
                role: "consumers",
                verb: "wait on",
                declared: b.consumers,
                actual: nc,
            });
        }
    }

    for op in &g.operators {
        let out = geoms[op.id.as_str()].output;
        check_partition(
            &op.id,
            out,
            regions.get(op.id.as_str()).map_or(&[], |v| v),
            g,
        )?;
    }

    check_acyclic(g, &producers, &consumers)?;

    for (i, task) in g.tasks.iter().enumerate() {
        for b in task.wait() {
            if let Some(&p) = producers[b].iter().find(|&&p| p >= i) {
                return Err(WorkloadError::Order {
                    task: task.id().to_string(),
                    barrier: *b,
                    producer: g.tasks[p].id().to_string(),
                });
            }
        }
    }
    Ok(())
}

fn check_operator(op: &Operator) -> Result<(), WorkloadError> {
    let owner = format!("operator {}", op.id);
    let natural = op.op.affinity();
    if let Some(e) = op.engine {
        if e != natural {
            return Err(invalid(
                owner,
                format!("{:?} must run on {natural:?}", op.op),
            ));
        }
    }
    if op.fused_post.is_some() && natural != EngineClass::Dpu {
        return Err(invalid(
            owner,
            "fused_post is only allowed on DPU operators",
        ));
    }
    if natural == EngineClass::Dpu && op.dsp_kernel.is_some() {
        return Err(invalid(owner, "dsp_kernel given for a DPU operator"));
    }
    Ok(())
}

fn check_partition(
    op: &str,
    out: [u64; 4],
    regions: &[(usize, Region)],
    g: &TaskGraph,
) -> Result<(), WorkloadError> {
    let err = |reason: String| WorkloadError::Partition {
        operator: op.to_string(),
        reason,
    };
    for (a, (ia, ra)) in regions.iter().enumerate() {
        for (ib, rb) in &regions[a + 1..] {
            if ra.overlaps(rb) {
                return Err(err(format!(
                    "regions of `{}` and `{}` overlap",
                    g.tasks[*ia].id(),
                    g.tasks[*ib].id()
                )));
            }
        }
    }
    let covered: u64 = regions.iter().map(|(_, r)| r.elems()).sum();
    let total: u64 = out.iter().product();
    if covered != total {
        return Err(err(format!("{covered} of {total} output elements covered")));
    }
    Ok(())
}

fn check_acyclic(
    g: &TaskGraph,
    producers: &BTreeMap<BarrierId, Vec<usize>>,
    consumers: &BTreeMap<BarrierId, Vec<usize>>,
) -> Result<(), WorkloadError> {
    let mut dg = DiGraph::<usize, BarrierId>::new();
    let nodes: Vec<_> = (0..g.tasks.len()).map(|i| dg.add_node(i)).collect();
    for (b, ps) in producers {
        for &p in ps {
            for &c in consumers.get(b).map_or(&[][..], |v| v) {
                dg.add_edge(nodes[p], nodes[c], *b);
            }
        }
    }
    for scc in tarjan_scc(&dg) {
        let cyclic = scc.len() > 1 || dg.contains_edge(scc[0], scc[0]);
        if !cyclic {
            continue;
        }
        let members: BTreeSet<_> = scc.iter().copied().collect();
        let mut tasks: Vec<usize> = scc.iter().map(|n| dg[*n]).collect();
        tasks.sort_unstable();
        let barriers: BTreeSet<BarrierId> = dg
            .edge_indices()
            .filter_map(|e| {
                let (a, b) = dg.edge_endpoints(e)?;
                (members.contains(&a) && members.contains(&b)).then(|| dg[e])
            })
            .collect();
        return Err(WorkloadError::Cyclic {
            tasks: tasks.iter().map(|&i| g.tasks[i].id().to_string()).collect(),
            barriers: barriers.into_iter().collect(),
        });
    }
    Ok(())
}
