use thiserror::Error;

pub const MOVER_DISK_RATE: f64 = 80e6;
pub const CLIENT_DISK_RATE: f64 = 40e6;
pub const DEFAULT_CONTENTION_ALPHA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiskError {
    #[error("disk sequential rate must be positive (got {0})")]
    Rate(f64),
    #[error("contention alpha must be non-negative (got {0})")]
    Alpha(f64),
    #[error("concurrent stream count must be at least 1")]
    NoStreams,
}

/// A disk (or RAID set) with a sequential rate that degrades under concurrent
/// streams: `n` streams share `seq_rate / (1 + alpha * (n - 1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    seq_rate: f64,
    contention_alpha: f64,
    exclusive: bool,
}

impl Disk {
    pub fn new(seq_rate: f64, contention_alpha: f64) -> Result<Self, DiskError> {
        if !(seq_rate > 0.0) {
            return Err(DiskError::Rate(seq_rate));
        }
        if !(contention_alpha >= 0.0) {
            return Err(DiskError::Alpha(contention_alpha));
        }
        Ok(Self {
            seq_rate,
            contention_alpha,
            exclusive: false,
        })
    }

    /// HPSS mover RAID set: 80 MB/s, one transfer at a time.
    pub fn mover_raid() -> Self {
        Self::new(MOVER_DISK_RATE, DEFAULT_CONTENTION_ALPHA)
            .unwrap()
            .exclusive(true)
    }

    pub fn client() -> Self {
        Self::new(CLIENT_DISK_RATE, DEFAULT_CONTENTION_ALPHA).unwrap()
    }

    /// An exclusive disk serves its queued transfers one after another instead
    /// of interleaving them.
    pub fn exclusive(mut self, exclusive: bool) -> Self {
        self.exclusive = exclusive;
        self
    }

    pub fn seq_rate(&self) -> f64 {
        self.seq_rate
    }

    pub fn contention_alpha(&self) -> f64 {
        self.contention_alpha
    }

    pub fn is_exclusive(&self) -> bool {
        self.exclusive
    }

    /// Total rate delivered to `concurrent` streams.
    pub fn aggregate_rate(&self, concurrent: usize) -> Result<f64, DiskError> {
        if concurrent == 0 {
            return Err(DiskError::NoStreams);
        }
        Ok(self.seq_rate / (1.0 + self.contention_alpha * (concurrent - 1) as f64))
    }
}

/// Per-stream rate of a disk read by `concurrent` streams.
pub fn disk_stream_rate(disk: &Disk, concurrent: usize) -> Result<f64, DiskError> {
    Ok(disk.aggregate_rate(concurrent)? / concurrent as f64)
}
