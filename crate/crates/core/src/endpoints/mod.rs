//! Traffic sources and sinks attached to the interconnect.

pub mod d2d;
pub mod dma;
pub mod hbm;
pub mod instream;
pub mod memory;
pub mod packing;
mod server;

pub use dma::{DmaEngine, DmaJob, Gather, JobRecord, Place};
pub use hbm::{hbm_coalesce, Access, Coalescer, HbmChannel, HbmStats};
pub use instream::{instream_apply, InstreamOp, InstreamOutput, InstreamUnit, ReduceKind};
pub use memory::Memory;
pub use packing::{pack_factor, pack_indices, unpack, NarrowRequest};
pub use server::{response_target, MemServer};
