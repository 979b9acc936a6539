//! Closed-form transfer times for the request/response and push protocols,
//! and the serial vs. overlapped pipeline law.

use alloc::vec::Vec;

use super::ProtocolError;

/// Mover-driven pdata transfer: every packet costs one header round trip and
/// then its bytes at `rate`. A short final packet is charged for its actual
/// length, so for sizes that are a multiple of `packet` this is exactly
/// `ceil(size / packet) * (rtt + packet / rate)`.
pub fn pdata_transfer_time(size: u64, packet: u64, rtt: f64, rate: f64) -> f64 {
    let full = size / packet;
    let rem = size % packet;
    let mut t = full as f64 * (rtt + packet as f64 / rate);
    if rem > 0 {
        t += rtt + rem as f64 / rate;
    }
    t
}

/// Client-driven push: one round trip of setup, then a continuous stream.
pub fn pdata_push_transfer_time(size: u64, rtt: f64, rate: f64) -> f64 {
    rtt + size as f64 / rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overlap {
    /// Each buffer passes through the stages one after another.
    Serial,
    /// All stages stream concurrently.
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineStages {
    rates: Vec<f64>,
    pub overlap: Overlap,
}

impl PipelineStages {
    pub fn new(rates: Vec<f64>, overlap: Overlap) -> Result<Self, ProtocolError> {
        if rates.is_empty() {
            return Err(ProtocolError::EmptyPipeline);
        }
        if let Some(bad) = rates.iter().find(|r| !(**r > 0.0)) {
            return Err(ProtocolError::StageRate(*bad));
        }
        Ok(Self { rates, overlap })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

/// End-to-end rate of a pipeline. Serial stages combine harmonically,
/// overlapped stages run at the slowest one. Infinite stages are free.
pub fn serial_pipeline_rate(stages: &PipelineStages) -> f64 {
    match stages.overlap {
        Overlap::Serial => {
            let inv: f64 = stages.rates.iter().map(|r| 1.0 / r).sum();
            1.0 / inv
        }
        Overlap::Parallel => stages.rates.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    const GB2: u64 = 2_000_000_000;
    const PKT: u64 = 256 * 1024;

    #[test]
    fn pdata_lan_and_wan() {
        let lan = GB2 as f64 / pdata_transfer_time(GB2, PKT, 0.2e-3, 80e6);
        let wan = GB2 as f64 / pdata_transfer_time(GB2, PKT, 3.5e-3, 80e6);
        // Per-packet arithmetic: 262144 / (rtt + 262144 / 80e6).
        assert!((lan / 1e6 - 75.40).abs() < 0.01, "{lan}");
        assert!((wan / 1e6 - 38.68).abs() < 0.01, "{wan}");
        let ratio = wan / lan;
        assert!((0.45..=0.55).contains(&ratio));
    }

    #[test]
    fn pdata_ceil_form_for_whole_packets() {
        let size = 10 * PKT;
        let t = pdata_transfer_time(size, PKT, 1e-3, 50e6);
        assert!((t - 10.0 * (1e-3 + PKT as f64 / 50e6)).abs() < 1e-15);
    }

    #[test]
    fn pdata_approaches_rate_as_rtt_vanishes() {
        let t = pdata_transfer_time(GB2, PKT, 1e-12, 80e6);
        assert!((GB2 as f64 / t / 80e6 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn push_examples() {
        assert!((pdata_push_transfer_time(GB2, 3.5e-3, 80e6) - 25.0035).abs() < 1e-9);
        assert!((pdata_push_transfer_time(GB2, 0.2e-3, 80e6) - 25.0002).abs() < 1e-9);
        let ratio = pdata_push_transfer_time(GB2, 0.2e-3, 80e6) / pdata_push_transfer_time(GB2, 3.5e-3, 80e6);
        assert!((0.99..=1.0).contains(&ratio));
    }

    #[test]
    fn serial_pipeline_examples() {
        let mb = |v: &[f64]| v.iter().map(|x| x * 1e6).collect::<Vec<_>>();
        let serial = PipelineStages::new(mb(&[80.0, 80.0, 40.0]), Overlap::Serial).unwrap();
        assert!((serial_pipeline_rate(&serial) - 20e6).abs() < 1e-6);
        let parallel = PipelineStages::new(mb(&[80.0, 80.0, 40.0]), Overlap::Parallel).unwrap();
        assert_eq!(serial_pipeline_rate(&parallel), 40e6);
        let one = PipelineStages::new(vec![33e6], Overlap::Serial).unwrap();
        assert!((serial_pipeline_rate(&one) - 33e6).abs() < 1e-6);
        assert!(PipelineStages::new(vec![], Overlap::Serial).is_err());
        assert!(PipelineStages::new(vec![1.0, 0.0], Overlap::Serial).is_err());
    }

    proptest! {
        #[test]
        fn pdata_never_beats_push_or_rate(
            size in 1u64..5_000_000_000, packet in 1024u64..8_000_000,
            rtt in 1e-6f64..0.05, rate in 1e6f64..1e9,
        ) {
            let pdata = size as f64 / pdata_transfer_time(size, packet, rtt, rate);
            let push = size as f64 / pdata_push_transfer_time(size, rtt, rate);
            prop_assert!(pdata <= push * (1.0 + 1e-12));
            prop_assert!(push <= rate);
        }

        #[test]
        fn pdata_monotone_in_packet_and_rtt(
            n in 20u64..200, p1 in 1024u64..1_000_000, p2 in 1024u64..1_000_000,
            r1 in 1e-5f64..0.05, r2 in 1e-5f64..0.05,
        ) {
            prop_assume!(p1 != p2 && (r1 - r2).abs() > 1e-9);
            let (plo, phi) = (p1.min(p2), p1.max(p2));
            let (rlo, rhi) = (r1.min(r2), r1.max(r2));
            // Whole packets of the larger size so only the packet count differs.
            let size = n * phi * plo;
            let thr = |p: u64, rtt: f64| size as f64 / pdata_transfer_time(size, p, rtt, 80e6);
            prop_assert!(thr(phi, rlo) > thr(plo, rlo));
            prop_assert!(thr(plo, rhi) < thr(plo, rlo));
        }

        #[test]
        fn serial_rate_below_min_stage(rates in proptest::collection::vec(1e3f64..1e9, 1..6)) {
            let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
            let serial = serial_pipeline_rate(&PipelineStages::new(rates.clone(), Overlap::Serial).unwrap());
            prop_assert!(serial <= min * (1.0 + 1e-12));
            if rates.len() > 1 {
                prop_assert!(serial < min);
            }
        }
    }
}
