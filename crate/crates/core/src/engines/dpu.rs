use crate::clock::ceil_div;
use crate::config::{DpuArrayConfig, PlatformConfig, StencilConfig};
use crate::workload::{OpGeometry, Region};

/// Picks the stencil with the highest PE utilization for an `ox` x `oy`
/// output, preferring the larger `tile_oc` and then the earlier entry on ties.
///
/// # Panics
/// If `stencils` is empty (validated configs never are).
pub fn select_stencil(ox: u64, oy: u64, stencils: &[StencilConfig]) -> StencilConfig {
    let score = |s: &StencilConfig| (s.tile_x as u64).min(ox) * (s.tile_y as u64).min(oy);
    let mut best = stencils[0];
    for s in &stencils[1..] {
        let (a, b) = (score(s), score(&best));
        if a > b || (a == b && s.tile_oc > best.tile_oc) {
            best = *s;
        }
    }
    best
}

/// Utilization of the array for a stencil on an `ox` x `oy` output.
pub fn stencil_utilization(s: &StencilConfig, ox: u64, oy: u64, array: &DpuArrayConfig) -> f64 {
    ((s.tile_x as u64).min(ox) * (s.tile_y as u64).min(oy)) as f64 / array.cells() as f64
}

/// One unit of DPU work: an output sub-range and the data it moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataBlock {
    pub region: Region,
    pub input_bytes: u64,
    /// Weights fetched for this block; zero when the previous block already
    /// holds the same output-channel slice.
    pub weight_bytes: u64,
    pub output_bytes: u64,
    pub macs: u64,
    /// Stencil passes along x and y needed to cover the block.
    pub passes: u64,
}

impl DataBlock {
    pub fn out_elems(&self) -> u64 {
        self.region.elems()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpuStage {
    Load,
    Mac,
    Post,
    Store,
}

/// Splits `region` into stencil-multiple blocks that fit the block buffer,
/// listed in loop order (batch, output channel, y, x).
pub fn dpu_blocks(
    g: &OpGeometry,
    region: &Region,
    array: &DpuArrayConfig,
    stencils: &[StencilConfig],
) -> (StencilConfig, Vec<DataBlock>) {
    let [rn, rh, rw, rc] = region.extents();
    let st = select_stencil(rw, rh, stencils);
    if region.is_empty() {
        return (st, Vec::new());
    }
    let (tx, ty, toc) = (st.tile_x as u64, st.tile_y as u64, st.tile_oc as u64);
    let sub = |bx: u64, by: u64, boc: u64| Region {
        n: [region.n[0], region.n[0] + 1],
        h: [region.h[0], region.h[0] + by],
        w: [region.w[0], region.w[0] + bx],
        c: [region.c[0], region.c[0] + boc],
    };
    let fits = |bx, by, boc| {
        let r = sub(bx, by, boc);
        g.input_bytes(&r) + g.output_bytes(&r) <= array.block_buffer_bytes
    };
    let (mut bx, mut by, mut boc) = (tx.min(rw), ty.min(rh), toc.min(rc));
    loop {
        let next = (bx + tx).min(rw);
        if next == bx || !fits(next, by, boc) {
            break;
        }
        bx = next;
    }
    loop {
        let next = (by + ty).min(rh);
        if next == by || !fits(bx, next, boc) {
            break;
        }
        by = next;
    }
    loop {
        let next = (boc + toc).min(rc);
        if next == boc || !fits(bx, by, next) {
            break;
        }
        boc = next;
    }

    let mut blocks = Vec::new();
    for n in region.n[0]..region.n[1] {
        for c0 in (region.c[0]..region.c[1]).step_by(boc as usize) {
            let c1 = (c0 + boc).min(region.c[1]);
            let mut first_of_slice = true;
            for y0 in (region.h[0]..region.h[1]).step_by(by as usize) {
                let y1 = (y0 + by).min(region.h[1]);
                for x0 in (region.w[0]..region.w[1]).step_by(bx as usize) {
                    let x1 = (x0 + bx).min(region.w[1]);
                    let r = Region {
                        n: [n, n + 1],
                        h: [y0, y1],
                        w: [x0, x1],
                        c: [c0, c1],
                    };
                    let passes = (x1 - x0).div_ceil(tx) * (y1 - y0).div_ceil(ty);
                    blocks.push(DataBlock {
                        region: r,
                        input_bytes: g.input_bytes(&r),
                        weight_bytes: if first_of_slice {
                            g.weight_bytes(&r)
                        } else {
                            0
                        },
                        output_bytes: g.output_bytes(&r),
                        macs: r.elems() * g.macs_per_output(),
                        passes,
                    });
                    first_of_slice = false;
                }
            }
        }
    }
    debug_assert_eq!(
        blocks.iter().map(|b| b.region.elems()).sum::<u64>(),
        rn * rh * rw * rc
    );
    (st, blocks)
}

/// Cycles of one pipeline stage in the owning clock: CB cycles for load and
/// store, DPU cycles for the MAC array and post-processing.
///
/// The MAC stage divides by the array peak scaled with the block's
/// utilization `u = (x*y) / (passes * rows*cols)`, so a block covered by
/// `passes` stencil placements takes `passes` array passes per 16-deep dot
/// product.
pub fn dpu_stage_cycles(
    block: &DataBlock,
    stage: DpuStage,
    fused_post: bool,
    cfg: &PlatformConfig,
) -> u64 {
    let a = &cfg.dpu_array;
    match stage {
        DpuStage::Load => ceil_div(
            block.input_bytes + block.weight_bytes,
            cfg.cb.bw_bytes_per_cycle,
        ),
        DpuStage::Mac => {
            let [_, h, w, _] = block.region.extents();
            let pixels = h * w;
            if pixels == 0 {
                return 0;
            }
            // macs / (rows*cols*mpc*u) with rows*cols*u = pixels / passes.
            ceil_div(block.macs * block.passes, a.macs_per_cell as u64 * pixels)
        }
        DpuStage::Post => {
            if fused_post {
                ceil_div(block.out_elems(), a.ppe() as u64)
            } else {
                0
            }
        }
        DpuStage::Store => ceil_div(block.output_bytes, cfg.cb.bw_bytes_per_cycle),
    }
}

/// Pipeline aggregation: the first block's non-bottleneck stages fill the
/// pipe, after which every block costs its slowest stage.
pub fn pipeline_cycles<S: AsRef<[u64]>>(blocks: &[S]) -> u64 {
    let Some(first) = blocks.first() else {
        return 0;
    };
    let first = first.as_ref();
    let fill = first.iter().sum::<u64>() - first.iter().max().copied().unwrap_or(0);
    fill + blocks
        .iter()
        .map(|b| b.as_ref().iter().max().copied().unwrap_or(0))
        .sum::<u64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::workload::{Opcode, Operator, TensorDesc};
    use std::collections::HashMap;

    fn st(x: u32, y: u32, oc: u32) -> StencilConfig {
        StencilConfig {
            tile_x: x,
            tile_y: y,
            tile_oc: oc,
        }
    }

    #[test]
    fn exact_fit_wins() {
        let set = [st(4, 4, 16), st(8, 8, 16), st(16, 16, 16)];
        assert_eq!(select_stencil(16, 16, &set), st(16, 16, 16));
    }

    #[test]
    fn clipped_tie_goes_to_larger_oc() {
        // On an 8x8 output both the 8x8 and the clipped 16x16 stencil cover
        // 64 of 256 cells.
        let set = [st(4, 4, 64), st(8, 8, 32), st(16, 16, 16)];
        assert_eq!(select_stencil(8, 8, &set), st(8, 8, 32));
        let set = [st(4, 4, 64), st(8, 8, 16), st(16, 16, 32)];
        assert_eq!(select_stencil(8, 8, &set), st(16, 16, 32));
    }

    #[test]
    fn degenerate_output_takes_first() {
        let set = [st(4, 4, 16), st(8, 8, 16), st(16, 16, 16)];
        assert_eq!(select_stencil(1, 1, &set), st(4, 4, 16));
    }

    fn platform() -> PlatformConfig {
        Config::from_yaml_str(include_str!("../../../../data/platform.yaml"))
            .unwrap()
            .platform
    }

    fn block(macs: u64, h: u64, w: u64, out: u64, passes: u64) -> DataBlock {
        DataBlock {
            region: Region::full([1, h, w, 1]),
            input_bytes: 0,
            weight_bytes: 0,
            output_bytes: out,
            macs,
            passes,
        }
    }

    #[test]
    fn stage_examples() {
        let mut cfg = platform();
        let cells = cfg.dpu_array.cells();
        let b = block(cells * 16, 16, 16, 1024, 1);
        assert_eq!(dpu_stage_cycles(&b, DpuStage::Mac, false, &cfg), 1);
        assert_eq!(dpu_stage_cycles(&b, DpuStage::Post, false, &cfg), 0);
        cfg.cb.bw_bytes_per_cycle = 256;
        assert_eq!(dpu_stage_cycles(&b, DpuStage::Store, false, &cfg), 4);
    }

    #[test]
    fn pipeline_examples() {
        assert_eq!(pipeline_cycles(&[[4, 10, 2, 4]]), 20);
        let blocks = vec![[3u64, 7, 1, 2]; 5];
        assert_eq!(pipeline_cycles(&blocks), (3 + 1 + 2) + 5 * 7);
        assert_eq!(pipeline_cycles::<[u64; 4]>(&[]), 0);
    }

    #[test]
    fn blocks_partition_region_and_respect_budget() {
        let ts = [
            TensorDesc::new("x", [1, 40, 40, 32], 1),
            TensorDesc::new("w", [3, 3, 32, 96], 1),
            TensorDesc::new("y", [1, 40, 40, 96], 1),
        ];
        let mut op = Operator::new("c", Opcode::Conv2d, &["x"], "y");
        op.weights = Some("w".into());
        op.kernel = [3, 3];
        op.pad = [1, 1];
        let m: HashMap<_, _> = ts.iter().map(|t| (t.id.as_str(), t)).collect();
        let g = OpGeometry::resolve(&op, |id| m.get(id).copied()).unwrap();
        let mut array = platform().dpu_array;
        array.block_buffer_bytes = 32 * 1024;
        let set = [st(16, 16, 64)];
        let region = Region::full(g.output);
        let (_, blocks) = dpu_blocks(&g, &region, &array, &set);
        let macs: u64 = blocks.iter().map(|b| b.macs).sum();
        assert_eq!(macs, region.elems() * 9 * 32);
        for (i, a) in blocks.iter().enumerate() {
            for b in &blocks[i + 1..] {
                assert!(!a.region.overlaps(&b.region));
            }
        }
        let w: u64 = blocks.iter().map(|b| b.weight_bytes).sum();
        // Each output-channel slice fetches its weights once.
        let slices = blocks.iter().filter(|b| b.weight_bytes > 0).count() as u64;
        assert!(slices >= 2);
        assert_eq!(w, g.total_weight_bytes());
    }
}
