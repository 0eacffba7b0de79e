//! Reference tiler: splits every operator into equal output-row slabs, one
//! per tile, inserts the DMA transfers between DDR and the compute buffers
//! and the barriers that order them.
//!
//! An intermediate tensor stays in the compute buffer when every consumer
//! reads exactly the rows its producer wrote on the same tile; otherwise it
//! is written back to DDR and reloaded.

use std::collections::{BTreeMap, HashMap};

use super::geometry::OpGeometry;
use super::types::*;
use super::validate::{validate_graph, validate_tensor};
use super::WorkloadError;
use crate::config::PlatformConfig;

struct OpPlan<'a> {
    op: &'a Operator,
    geom: OpGeometry,
    /// Output row range per slab; slab `i` runs on tile `i % tiles`.
    slabs: Vec<[u64; 2]>,
}

#[derive(Default)]
struct Emitter {
    tasks: Vec<Task>,
    tensors: Vec<TensorDesc>,
    next_barrier: BarrierId,
    next_channel: u32,
    channels: u32,
}

impl Emitter {
    fn barrier(&mut self) -> BarrierId {
        self.next_barrier += 1;
        self.next_barrier - 1
    }

    fn channel(&mut self) -> u32 {
        let c = self.next_channel;
        self.next_channel = (c + 1) % self.channels;
        c
    }

    fn dma(&mut self, id: String, desc: DmaDescriptor, wait: Vec<BarrierId>) -> usize {
        let channel = self.channel();
        self.tasks.push(Task::Dma(DmaTask {
            id,
            channel,
            descriptors: vec![desc],
            wait,
            update: vec![],
        }));
        self.tasks.len() - 1
    }

    fn update(&mut self, task: usize, b: BarrierId) {
        match &mut self.tasks[task] {
            Task::Compute(t) => t.update.push(b),
            Task::Dma(t) => t.update.push(b),
        }
    }

    fn cb_tensor(&mut self, id: String, dims: [u64; 4], eb: u64, tile: u32, addr: u64) -> String {
        let mut t = TensorDesc::new(id.clone(), dims, eb);
        t.location = Location::Cb(tile);
        t.base_addr = addr;
        self.tensors.push(t);
        id
    }
}

fn split_rows(h: u64, n: u64) -> Vec<[u64; 2]> {
    (0..n).map(|i| [i * h / n, (i + 1) * h / n]).collect()
}

fn slab_region(out: [u64; 4], rows: [u64; 2]) -> Region {
    Region {
        h: rows,
        ..Region::full(out)
    }
}

/// Rows `[r0, r1)` of an NHWC tensor as a (possibly batched) descriptor.
fn row_descriptor(
    src: &str,
    src_shape: [u64; 4],
    src_rows: [u64; 2],
    dst: &str,
    dst_shape: [u64; 4],
    dst_rows: [u64; 2],
    eb: u64,
) -> DmaDescriptor {
    let row = src_shape[2] * src_shape[3] * eb;
    let rows = src_rows[1] - src_rows[0];
    let mut d =
        DmaDescriptor::contiguous(src, src_rows[0] * row, dst, dst_rows[0] * row, rows * row);
    if src_shape[0] > 1 {
        d.shape.push(src_shape[0]);
        d.src_strides = vec![src_shape[1] * row];
        d.dst_strides = vec![dst_shape[1] * row];
    }
    d
}

/// Tiles `ops` onto the platform and returns a validated task graph.
pub fn compile_reference(ops: &OpList, cfg: &PlatformConfig) -> Result<TaskGraph, WorkloadError> {
    if ops.format != OPLIST_FORMAT {
        return Err(WorkloadError::Format {
            found: ops.format.clone(),
            expected: OPLIST_FORMAT.into(),
        });
    }
    let mut tensors: Vec<TensorDesc> = ops.tensors.clone();
    for t in &tensors {
        validate_tensor(t)?;
    }
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, t) in tensors.iter().enumerate() {
        if index.insert(t.id.clone(), i).is_some() {
            return Err(WorkloadError::DuplicateId {
                kind: "tensor",
                id: t.id.clone(),
            });
        }
    }
    // Network tensors live in DDR, page aligned and packed in list order.
    let page = cfg.ddr.page_bytes;
    let mut addr = 0u64;
    for t in &mut tensors {
        t.location = Location::Ddr;
        t.strides = None;
        t.base_addr = addr;
        addr += t.bytes().div_ceil(page) * page;
    }
    let lookup = |id: &str| index.get(id).map(|&i| &tensors[i]);

    let tiles = cfg.tiles as u64;
    let mut producer: HashMap<&str, usize> = HashMap::new();
    let mut consumers: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut plans = Vec::with_capacity(ops.operators.len());
    for (k, op) in ops.operators.iter().enumerate() {
        let geom = OpGeometry::resolve(op, lookup)?;
        for inp in op.inputs.iter().chain(&op.weights) {
            let later = ops.operators[k..].iter().any(|o| o.outputs.contains(inp));
            if !producer.contains_key(inp.as_str()) && later {
                return Err(WorkloadError::Invalid {
                    owner: format!("operator {}", op.id),
                    reason: format!("consumes `{inp}` before the operator producing it"),
                });
            }
        }
        for inp in &op.inputs {
            consumers.entry(inp.as_str()).or_default().push(k);
        }
        if producer.insert(op.output(), k).is_some() {
            return Err(WorkloadError::Invalid {
                owner: format!("operator {}", op.id),
                reason: format!("tensor `{}` has two producers", op.output()),
            });
        }
        let slabs = plan_slabs(op, &geom, tiles, cfg.cb.size)?;
        plans.push(OpPlan { op, geom, slabs });
    }

    let resident: HashMap<&str, bool> = producer
        .iter()
        .map(|(&t, &p)| {
            let cs = consumers.get(t).map_or(&[][..], |v| v);
            let keep = !cs.is_empty()
                && cs
                    .iter()
                    .all(|&c| plans[c].geom.row_aligned() && plans[c].slabs == plans[p].slabs);
            (t, keep)
        })
        .collect();

    let mut em = Emitter {
        channels: cfg.dma.channels,
        ..Default::default()
    };
    // Per operator: compute task indices, CB tensor id per slab of its output,
    // and output DMA task indices when spilled.
    let mut computes: Vec<Vec<usize>> = Vec::new();
    let mut out_dmas: Vec<Vec<usize>> = Vec::new();
    for (k, plan) in plans.iter().enumerate() {
        let op = plan.op;
        let g = &plan.geom;
        let out_id = op.output();
        let units = match op.engine_class() {
            EngineClass::Dpu => cfg.dpus_per_tile,
            EngineClass::Dsp => cfg.dsps_per_tile,
        } as u64;
        let nslabs = plan.slabs.len() as u64;
        let used_tiles = nslabs.min(tiles) as u32;
        let tile_of = |i: usize| (i as u64 % tiles) as u32;
        let unit_of = |i: usize| ((i as u64 / tiles) % units) as u32;

        let mut loads = Vec::new();
        let mut compute_wait: Vec<BarrierId> = Vec::new();
        let mut cb_addr = vec![0u64; tiles as usize];

        if let Some(w) = &op.weights {
            let wt = lookup(w).expect("weights resolved");
            let bytes = wt.bytes();
            let dst = em.cb_tensor(format!("{}.w", op.id), wt.shape4(), wt.elem_bytes, 0, 0);
            let mut d = DmaDescriptor::contiguous(w, 0, &dst, 0, bytes);
            if used_tiles > 1 {
                d.broadcast = (0..used_tiles).collect();
            }
            for a in cb_addr.iter_mut().take(used_tiles as usize) {
                *a = bytes;
            }
            loads.push(em.dma(format!("{}.w.load", op.id), d, vec![]));
        }

        for (j, inp) in op.inputs.iter().enumerate() {
            let src = lookup(inp).expect("input resolved");
            let src_shape = src.shape4();
            let from = producer.get(inp.as_str()).copied();
            if from.is_some_and(|p| resident[plans[p].op.output()]) {
                let p = from.unwrap();
                let b = em.barrier();
                for &t in &computes[p] {
                    em.update(t, b);
                }
                compute_wait.push(b);
                continue;
            }
            let spill = from.map(|p| {
                let b = em.barrier();
                for &t in &out_dmas[p] {
                    em.update(t, b);
                }
                b
            });
            for (i, rows) in plan.slabs.iter().enumerate() {
                let in_rows = g.input_rows(*rows);
                if in_rows[0] == in_rows[1] {
                    continue;
                }
                let tile = tile_of(i);
                let shape = [
                    src_shape[0],
                    in_rows[1] - in_rows[0],
                    src_shape[2],
                    src_shape[3],
                ];
                let bytes: u64 = shape.iter().product::<u64>() * src.elem_bytes;
                let at = cb_addr[tile as usize];
                let dst = em.cb_tensor(
                    format!("{}.in{j}.s{i}", op.id),
                    shape,
                    src.elem_bytes,
                    tile,
                    at,
                );
                cb_addr[tile as usize] += bytes;
                let d = row_descriptor(
                    inp,
                    src_shape,
                    in_rows,
                    &dst,
                    shape,
                    [0, shape[1]],
                    src.elem_bytes,
                );
                loads.push(em.dma(
                    format!("{}.in{j}.s{i}.load", op.id),
                    d,
                    spill.into_iter().collect(),
                ));
            }
        }
        if !loads.is_empty() {
            let b = em.barrier();
            for &t in &loads {
                em.update(t, b);
            }
            compute_wait.push(b);
        }

        let out_t = lookup(out_id).expect("output resolved");
        let out_shape = out_t.shape4();
        let mut cts = Vec::new();
        let mut cbs = Vec::new();
        for (i, rows) in plan.slabs.iter().enumerate() {
            let tile = tile_of(i);
            let shape = [out_shape[0], rows[1] - rows[0], out_shape[2], out_shape[3]];
            let at = cb_addr[tile as usize];
            cbs.push(em.cb_tensor(
                format!("{}.out.s{i}", op.id),
                shape,
                out_t.elem_bytes,
                tile,
                at,
            ));
            cb_addr[tile as usize] += shape.iter().product::<u64>() * out_t.elem_bytes;
            em.tasks.push(Task::Compute(ComputeTask {
                id: format!("{}.s{i}", op.id),
                engine: EngineRef {
                    class: op.engine_class(),
                    tile,
                    unit: unit_of(i),
                },
                operator: op.id.clone(),
                region: slab_region(out_shape, *rows),
                wait: compute_wait.clone(),
                update: vec![],
            }));
            cts.push(em.tasks.len() - 1);
        }

        let mut stores = Vec::new();
        if !resident[out_id] {
            let b = em.barrier();
            for &t in &cts {
                em.update(t, b);
            }
            for (i, rows) in plan.slabs.iter().enumerate() {
                let shape = [out_shape[0], rows[1] - rows[0], out_shape[2], out_shape[3]];
                let d = row_descriptor(
                    &cbs[i],
                    shape,
                    [0, shape[1]],
                    out_id,
                    out_shape,
                    *rows,
                    out_t.elem_bytes,
                );
                stores.push(em.dma(format!("{}.out.s{i}.store", op.id), d, vec![b]));
            }
        }
        debug_assert_eq!(computes.len(), k);
        computes.push(cts);
        out_dmas.push(stores);
    }

    let mut counts: BTreeMap<BarrierId, (u32, u32)> = BTreeMap::new();
    for t in &em.tasks {
        for b in t.update() {
            counts.entry(*b).or_default().0 += 1;
        }
        for b in t.wait() {
            counts.entry(*b).or_default().1 += 1;
        }
    }
    let barriers = counts
        .into_iter()
        .map(|(id, (producers, consumers))| BarrierDef {
            id,
            producers,
            consumers,
        })
        .collect();
    tensors.extend(em.tensors);
    let graph = TaskGraph {
        format: TASKGRAPH_FORMAT.into(),
        tensors,
        operators: ops.operators.clone(),
        tasks: em.tasks,
        barriers,
    };
    validate_graph(&graph)?;
    Ok(graph)
}

/// Smallest multiple of `tiles` slabs (capped at one row each) whose
/// per-slab working set fits the compute buffer.
fn plan_slabs(
    op: &Operator,
    g: &OpGeometry,
    tiles: u64,
    cb_size: u64,
) -> Result<Vec<[u64; 2]>, WorkloadError> {
    let oh = g.output[1];
    let weights = g.total_weight_bytes();
    let fits = |slabs: &[[u64; 2]]| {
        slabs.iter().all(|rows| {
            let r = slab_region(g.output, *rows);
            weights + g.input_bytes(&r) + g.output_bytes(&r) <= cb_size
        })
    };
    let mut k = 1;
    loop {
        let n = (tiles * k).min(oh);
        let slabs = split_rows(oh, n);
        if fits(&slabs) {
            return Ok(slabs);
        }
        if n == oh {
            return Err(WorkloadError::Unschedulable {
                operator: op.id.clone(),
                reason: format!(
                    "weights ({weights} B) plus a single output row do not fit the {cb_size} B compute buffer"
                ),
            });
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::workload::models;

    fn platform(tiles: u32) -> PlatformConfig {
        let cfg = Config::from_yaml_str(include_str!("../../../../data/platform.yaml")).unwrap();
        cfg.with_overrides(&[format!("tiles={tiles}")])
            .unwrap()
            .platform
    }

    fn count(g: &TaskGraph) -> (usize, usize) {
        let c = g
            .tasks
            .iter()
            .filter(|t| matches!(t, Task::Compute(_)))
            .count();
        (c, g.tasks.len() - c)
    }

    #[test]
    fn single_conv_two_tiles() {
        let ops = models::conv_stack(1, 16, 16, 32);
        let g = compile_reference(&ops, &platform(2)).unwrap();
        // 2 computes; weight broadcast + 2 input loads + 2 output stores.
        assert_eq!(count(&g), (2, 5));
        let w = g.tasks.iter().find(|t| t.id() == "conv0.w.load").unwrap();
        let Task::Dma(w) = w else { panic!() };
        assert_eq!(w.descriptors[0].broadcast, vec![0, 1]);
        for t in &g.tasks {
            if let Task::Compute(c) = t {
                let load = g
                    .tasks
                    .iter()
                    .position(|x| x.id() == "conv0.w.load")
                    .unwrap();
                assert!(c.wait.iter().all(|b| g.tasks[load].update().contains(b)));
            }
        }
    }

    #[test]
    fn activation_gets_one_task_per_tile() {
        for tiles in [1, 2, 4] {
            let x = TensorDesc::new("x", [1, 16, 16, 8], 1);
            let y = TensorDesc::new("y", [1, 16, 16, 8], 1);
            let op = Operator::new("act", Opcode::Activation("tanh".into()), &["x"], "y");
            let g =
                compile_reference(&OpList::new(vec![x, y], vec![op]), &platform(tiles)).unwrap();
            assert_eq!(count(&g).0, tiles as usize);
        }
    }

    #[test]
    fn conv_then_act_chain() {
        let ops = models::conv_act(8, 8, 16);
        let g = compile_reference(&ops, &platform(2)).unwrap();
        let conv_updates: Vec<BarrierId> = g
            .tasks
            .iter()
            .filter(|t| matches!(t, Task::Compute(c) if c.operator == "conv"))
            .flat_map(|t| t.update().to_vec())
            .collect();
        for t in &g.tasks {
            if let Task::Compute(c) = t {
                if c.operator == "act" {
                    assert!(c.wait.iter().any(|b| conv_updates.contains(b)));
                }
            }
        }
        // The 1x1-aligned activation consumes the conv output in place.
        assert!(!g.tasks.iter().any(|t| t.id().starts_with("conv.out")));
    }

    #[test]
    fn chain_yields_n_times_t_computes() {
        for tiles in [1, 2, 3] {
            let g =
                compile_reference(&models::conv_stack(5, 24, 24, 16), &platform(tiles)).unwrap();
            assert_eq!(count(&g).0, 5 * tiles as usize);
        }
    }

    #[test]
    fn oversized_weights_are_unschedulable() {
        let x = TensorDesc::new("x", [1, 4, 4, 2048], 1);
        let w = TensorDesc::new("w", [3, 3, 2048, 2048], 1);
        let y = TensorDesc::new("y", [1, 4, 4, 2048], 1);
        let mut op = Operator::new("big", Opcode::Conv2d, &["x"], "y");
        op.weights = Some("w".into());
        op.kernel = [3, 3];
        op.pad = [1, 1];
        let err =
            compile_reference(&OpList::new(vec![x, w, y], vec![op]), &platform(1)).unwrap_err();
        assert!(matches!(err, WorkloadError::Unschedulable { .. }), "{err}");
    }

    #[test]
    fn big_activation_splits_further() {
        let x = TensorDesc::new("x", [1, 128, 128, 512], 1);
        let y = TensorDesc::new("y", [1, 128, 128, 512], 1);
        let op = Operator::new("act", Opcode::Activation("relu".into()), &["x"], "y");
        let g = compile_reference(&OpList::new(vec![x, y], vec![op]), &platform(2)).unwrap();
        // 4 MiB in + 4 MiB out per slab budget: 2 slabs do not fit, 4 do.
        assert_eq!(count(&g).0, 4);
    }
}
