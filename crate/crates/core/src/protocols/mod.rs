//! Transfer protocols executed on the event engine.
//!
//! * `MoverPdata`: the mover solicits every packet with a header exchange.
//! * `Pftp`: pdata underneath, each packet striped over `pwidth` TCP streams.
//! * `ClientApi`: pdata with the request unit bounded by the API buffer.
//! * `PdataPush`: one round trip of setup, then the sender streams freely.

mod formulas;
mod session;

pub use formulas::{
    pdata_push_transfer_time, pdata_transfer_time, serial_pipeline_rate, Overlap, PipelineStages,
};
pub use session::{
    client_api_sweep, run_pftp_session, run_relay_transfer, run_transfers, run_transfers_traced,
    ApiDirection, ApiPoint, SessionEvent, SessionRun, TransferOutcome,
};

use thiserror::Error;

use crate::des::DesError;
use crate::testbed::{DiskRef, HostId, PathId, TestbedError};

/// Default pdata packet, the 256 kB buffer the movers are tuned for.
pub const DEFAULT_PACKET: u64 = 256 * 1024;
pub const DEFAULT_FILE_SIZE: u64 = 2_000_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("pipeline needs at least one stage")]
    EmptyPipeline,
    #[error("stage rate must be positive (got {0})")]
    StageRate(f64),
    #[error("transfer size must be positive")]
    EmptyTransfer,
    #[error("packet and buffer sizes must be positive")]
    ZeroUnit,
    #[error("stream count must be at least 1")]
    NoStreams,
    #[error("pftp pwidth {pwidth} conflicts with stream count {streams}")]
    StreamMismatch { pwidth: u32, streams: u32 },
    #[error("cannot read from a null device")]
    NullSource,
    #[error("concurrent file count must be at least 1")]
    NoFiles,
    #[error("sweep list is empty")]
    EmptySweep,
    #[error("host {0:?} is not part of the testbed")]
    UnknownHost(HostId),
    #[error("disk {0:?} is not part of the testbed")]
    UnknownDisk(DiskRef),
    #[error("path {0:?} is not part of the testbed")]
    UnknownPath(PathId),
    #[error(transparent)]
    Testbed(#[from] TestbedError),
    #[error(transparent)]
    Des(#[from] DesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    MoverPdata { packet: u64 },
    PdataPush,
    Pftp { pwidth: u32 },
    ClientApi { buffer: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageEndpoint {
    Disk(DiskRef),
    /// Host memory; never a bottleneck.
    Memory(HostId),
    /// `/dev/null`-style sink; never a bottleneck.
    Null(HostId),
}

impl StorageEndpoint {
    pub fn host(&self) -> HostId {
        match *self {
            StorageEndpoint::Disk(d) => d.host,
            StorageEndpoint::Memory(h) | StorageEndpoint::Null(h) => h,
        }
    }

    pub fn disk(&self) -> Option<DiskRef> {
        match *self {
            StorageEndpoint::Disk(d) => Some(d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataPath {
    Direct,
    /// Data is received and re-sent by an intermediate host.
    Relay { via: HostId },
}

/// One file movement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferSpec {
    pub size: u64,
    pub source: StorageEndpoint,
    pub sink: StorageEndpoint,
    pub protocol: ProtocolKind,
    pub path: PathId,
    pub streams: u32,
    pub data_path: DataPath,
    /// pdata unit used by `Pftp` and as the ceiling for `ClientApi`.
    pub packet: u64,
    pub overlap: Overlap,
    /// Overlap header exchanges with data so only the first packet waits a round trip.
    pub pipelined: bool,
}

impl TransferSpec {
    pub fn new(
        source: StorageEndpoint,
        sink: StorageEndpoint,
        protocol: ProtocolKind,
        path: PathId,
    ) -> Self {
        let streams = match protocol {
            ProtocolKind::Pftp { pwidth } => pwidth,
            _ => 1,
        };
        Self {
            size: DEFAULT_FILE_SIZE,
            source,
            sink,
            protocol,
            path,
            streams,
            data_path: DataPath::Direct,
            packet: DEFAULT_PACKET,
            overlap: Overlap::Parallel,
            pipelined: false,
        }
    }

    pub fn with_size(mut self, size: u64) -> Self {
        self.size = size;
        self
    }

    pub fn with_data_path(mut self, data_path: DataPath) -> Self {
        self.data_path = data_path;
        self
    }

    pub fn with_overlap(mut self, overlap: Overlap) -> Self {
        self.overlap = overlap;
        self
    }

    pub fn with_packet(mut self, packet: u64) -> Self {
        self.packet = packet;
        self
    }

    /// Bytes solicited per header exchange, or `None` for streaming protocols.
    pub fn request_unit(&self) -> Option<u64> {
        match self.protocol {
            ProtocolKind::MoverPdata { packet } => Some(packet),
            ProtocolKind::Pftp { .. } => Some(self.packet),
            ProtocolKind::ClientApi { buffer } => Some(buffer.min(self.packet)),
            ProtocolKind::PdataPush => None,
        }
    }

    /// Relaying through the source host itself is a direct transfer.
    pub fn effective_data_path(&self) -> DataPath {
        match self.data_path {
            DataPath::Relay { via } if via == self.source.host() => DataPath::Direct,
            other => other,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.size == 0 {
            return Err(ProtocolError::EmptyTransfer);
        }
        if self.packet == 0 {
            return Err(ProtocolError::ZeroUnit);
        }
        match self.protocol {
            ProtocolKind::MoverPdata { packet: 0 } | ProtocolKind::ClientApi { buffer: 0 } => {
                return Err(ProtocolError::ZeroUnit)
            }
            ProtocolKind::Pftp { pwidth: 0 } => return Err(ProtocolError::NoStreams),
            ProtocolKind::Pftp { pwidth } if pwidth != self.streams => {
                return Err(ProtocolError::StreamMismatch {
                    pwidth,
                    streams: self.streams,
                })
            }
            _ => {}
        }
        if self.streams == 0 {
            return Err(ProtocolError::NoStreams);
        }
        if matches!(self.source, StorageEndpoint::Null(_)) {
            return Err(ProtocolError::NullSource);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(protocol: ProtocolKind) -> TransferSpec {
        TransferSpec::new(
            StorageEndpoint::Memory(HostId(0)),
            StorageEndpoint::Null(HostId(1)),
            protocol,
            PathId(0),
        )
    }

    #[test]
    fn request_unit_rules() {
        assert_eq!(spec(ProtocolKind::MoverPdata { packet: 1000 }).request_unit(), Some(1000));
        assert_eq!(spec(ProtocolKind::Pftp { pwidth: 2 }).request_unit(), Some(DEFAULT_PACKET));
        assert_eq!(spec(ProtocolKind::ClientApi { buffer: 4096 }).request_unit(), Some(4096));
        assert_eq!(
            spec(ProtocolKind::ClientApi { buffer: 64 << 20 }).request_unit(),
            Some(DEFAULT_PACKET)
        );
        assert_eq!(spec(ProtocolKind::PdataPush).request_unit(), None);
    }

    #[test]
    fn validation() {
        assert!(spec(ProtocolKind::Pftp { pwidth: 4 }).validate().is_ok());
        assert_eq!(
            spec(ProtocolKind::Pftp { pwidth: 0 }).validate(),
            Err(ProtocolError::NoStreams)
        );
        assert_eq!(
            spec(ProtocolKind::MoverPdata { packet: 0 }).validate(),
            Err(ProtocolError::ZeroUnit)
        );
        let mut s = spec(ProtocolKind::Pftp { pwidth: 4 });
        s.streams = 2;
        assert!(matches!(s.validate(), Err(ProtocolError::StreamMismatch { .. })));
        assert_eq!(
            spec(ProtocolKind::PdataPush).with_size(0).validate(),
            Err(ProtocolError::EmptyTransfer)
        );
        let mut s = spec(ProtocolKind::PdataPush);
        s.source = StorageEndpoint::Null(HostId(0));
        assert_eq!(s.validate(), Err(ProtocolError::NullSource));
    }

    #[test]
    fn relay_through_source_is_direct() {
        let s = spec(ProtocolKind::PdataPush).with_data_path(DataPath::Relay { via: HostId(0) });
        assert_eq!(s.effective_data_path(), DataPath::Direct);
        let s = spec(ProtocolKind::PdataPush).with_data_path(DataPath::Relay { via: HostId(2) });
        assert_eq!(s.effective_data_path(), DataPath::Relay { via: HostId(2) });
    }
}
