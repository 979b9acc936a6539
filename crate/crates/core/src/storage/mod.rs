//! Disk and tape storage models.

pub mod disk;
pub mod tape;

pub use disk::{disk_stream_rate, Disk, DiskError};
pub use tape::{
    aggregate_tape_throughput, simulate_tape_reads, CartridgeId, FileId, Placement, TapeError,
    TapeLibrary, TapeRun, TapeSystem,
};
