//! Memory-side models: per-tile compute buffers, a banked DDR device, the
//! central router and the multichannel DMA engine that moves data between
//! them.

mod cb;
mod ddr;
mod noc;
mod split;
mod system;

pub use cb::CbModel;
pub use ddr::{ddr_map_address, AccessKind, DdrAccess, DdrAddr, DdrModel};
pub use noc::{
    noc_route, port_for_address, MasterPort, NocDest, NocError, NocModel, NocRequest, NocTicket,
    SlaveId, CB_BASE, CB_STRIDE, DDR_SPACE,
};
pub use split::{dma_split_descriptor, DmaRequest};
pub use system::{dma_execute, DmaOutcome, MemorySystem};
