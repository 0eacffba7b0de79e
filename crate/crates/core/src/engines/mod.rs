//! Performance models of the compute engines: the DPU MAC array, a
//! four-stage pipeline over stencil-shaped data blocks, and the DSP, a
//! three-stage pipeline whose compute stage follows characterized kernel
//! cost curves.

mod dpu;
mod dsp;

pub use dpu::{
    dpu_blocks, dpu_stage_cycles, pipeline_cycles, select_stencil, stencil_utilization, DataBlock,
    DpuStage,
};
pub use dsp::{dsp_blocks, dsp_kernel_cycles, CurveTable, DspBlock, DspKernelCurve};

use crate::clock::{ceil_div, Clocks};
use crate::config::PlatformConfig;
use crate::workload::{OpGeometry, Operator, Region};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("unknown DSP kernel `{kernel}`; available: {}", available.join(", "))]
    UnknownKernel {
        kernel: String,
        available: Vec<String>,
    },
    #[error("DSP curve `{kernel}`: {reason}")]
    BadCurve { kernel: String, reason: String },
    #[error("DSP curve table: {0}")]
    CurveFile(String),
}

/// Stage durations of one block in reference cycles, plus its activity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockCost {
    pub stages: Vec<u64>,
    /// Index of the load and store stages (subject to CB port contention).
    pub load: usize,
    pub store: usize,
    /// Bytes moved by the load and store stages.
    pub load_bytes: u64,
    pub store_bytes: u64,
    /// MACs for the DPU, elementary operations for the DSP.
    pub ops: u64,
}

/// Result of executing a task on an uncontended engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskCost {
    pub cycles: u64,
    pub activity: u64,
    pub blocks: Vec<BlockCost>,
}

impl TaskCost {
    fn from_blocks(blocks: Vec<BlockCost>) -> Self {
        let stages: Vec<&[u64]> = blocks.iter().map(|b| b.stages.as_slice()).collect();
        TaskCost {
            cycles: pipeline_cycles(&stages),
            activity: blocks.iter().map(|b| b.ops).sum(),
            blocks,
        }
    }
}

/// Per-block stage costs of a DPU task, in reference cycles.
pub fn dpu_block_costs(
    op: &Operator,
    g: &OpGeometry,
    region: &Region,
    cfg: &PlatformConfig,
    clocks: &Clocks,
) -> Vec<BlockCost> {
    let fused = op.fused_post.is_some();
    let (_, blocks) = dpu_blocks(g, region, &cfg.dpu_array, &cfg.stencil_set);
    blocks
        .iter()
        .map(|b| BlockCost {
            stages: vec![
                clocks
                    .cb
                    .to_ref(dpu_stage_cycles(b, DpuStage::Load, fused, cfg)),
                clocks
                    .dpu
                    .to_ref(dpu_stage_cycles(b, DpuStage::Mac, fused, cfg)),
                clocks
                    .dpu
                    .to_ref(dpu_stage_cycles(b, DpuStage::Post, fused, cfg)),
                clocks
                    .cb
                    .to_ref(dpu_stage_cycles(b, DpuStage::Store, fused, cfg)),
            ],
            load: 0,
            store: 3,
            load_bytes: b.input_bytes + b.weight_bytes,
            store_bytes: b.output_bytes,
            ops: b.macs,
        })
        .collect()
}

/// Per-block stage costs of a DSP task, in reference cycles.
pub fn dsp_block_costs(
    op: &Operator,
    g: &OpGeometry,
    region: &Region,
    cfg: &PlatformConfig,
    clocks: &Clocks,
    curves: &CurveTable,
) -> Result<Vec<BlockCost>, EngineError> {
    let name = op.kernel_name().unwrap_or_default();
    let curve = curves.get(&name)?;
    let bw = cfg.cb.bw_bytes_per_cycle;
    Ok(dsp_blocks(g, region, cfg)
        .iter()
        .map(|b| BlockCost {
            stages: vec![
                clocks.cb.to_ref(ceil_div(b.input_bytes, bw)),
                clocks.dsp.to_ref(dsp_kernel_cycles(curve, b.elems)),
                clocks.cb.to_ref(ceil_div(b.output_bytes, bw)),
            ],
            load: 0,
            store: 2,
            load_bytes: b.input_bytes,
            store_bytes: b.output_bytes,
            ops: b.elems,
        })
        .collect())
}

/// Cycles and activity of a DPU task with no compute-buffer contention.
pub fn dpu_execute_task(
    op: &Operator,
    g: &OpGeometry,
    region: &Region,
    cfg: &PlatformConfig,
) -> TaskCost {
    TaskCost::from_blocks(dpu_block_costs(
        op,
        g,
        region,
        cfg,
        &Clocks::new(&cfg.freq_mhz),
    ))
}

/// Cycles and activity of a DSP task with no compute-buffer contention.
pub fn dsp_execute_task(
    op: &Operator,
    g: &OpGeometry,
    region: &Region,
    cfg: &PlatformConfig,
    curves: &CurveTable,
) -> Result<TaskCost, EngineError> {
    Ok(TaskCost::from_blocks(dsp_block_costs(
        op,
        g,
        region,
        cfg,
        &Clocks::new(&cfg.freq_mhz),
        curves,
    )?))
}
