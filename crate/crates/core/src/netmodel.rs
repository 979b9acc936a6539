//! Fluid TCP throughput model.
//!
//! A session's steady-state rate is the smallest of its window/RTT bound,
//! both endpoints' processing caps and the path capacity. Sessions sharing a
//! path split the shared capacity by water-filling.

use alloc::vec::Vec;

use thiserror::Error;

use crate::fair::{max_min_allocate, FlowDemand};
use crate::testbed::HostId;

pub const WAN_RTT: f64 = 3.5e-3;
pub const LAN_RTT: f64 = 0.2e-3;
/// Gigabit Ethernet payload capacity, bytes/s.
pub const GBE_CAPACITY: f64 = 125e6;
/// Default `k` in the `1 / (1 + k * loss)` rate penalty.
pub const DEFAULT_LOSS_SENSITIVITY: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("rtt must be positive and finite (got {0})")]
    Rtt(f64),
    #[error("capacity must be positive (got {0})")]
    Capacity(f64),
    #[error("loss rate must lie in [0, 1) (got {0})")]
    Loss(f64),
    #[error("tcp buffer must be positive")]
    Buffer,
    #[error("cpu throughput cap must be positive (got {0})")]
    CpuCap(f64),
    #[error("sweep list is empty")]
    EmptySweep,
    #[error("stream count must be at least 1")]
    NoStreams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetPath {
    rtt: f64,
    capacity: f64,
    loss_rate: f64,
    loss_sensitivity: f64,
}

impl NetPath {
    pub fn new(rtt: f64, capacity: f64) -> Result<Self, NetError> {
        if !(rtt > 0.0 && rtt.is_finite()) {
            return Err(NetError::Rtt(rtt));
        }
        if !(capacity > 0.0) {
            return Err(NetError::Capacity(capacity));
        }
        Ok(Self {
            rtt,
            capacity,
            loss_rate: 0.0,
            loss_sensitivity: DEFAULT_LOSS_SENSITIVITY,
        })
    }

    pub fn wan() -> Self {
        Self::new(WAN_RTT, GBE_CAPACITY).unwrap()
    }

    pub fn lan() -> Self {
        Self::new(LAN_RTT, GBE_CAPACITY).unwrap()
    }

    pub fn with_loss(mut self, loss_rate: f64) -> Result<Self, NetError> {
        if !(0.0..1.0).contains(&loss_rate) {
            return Err(NetError::Loss(loss_rate));
        }
        self.loss_rate = loss_rate;
        Ok(self)
    }

    pub fn with_loss_sensitivity(mut self, k: f64) -> Self {
        self.loss_sensitivity = k.max(0.0);
        self
    }

    pub fn rtt(&self) -> f64 {
        self.rtt
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn loss_rate(&self) -> f64 {
        self.loss_rate
    }

    /// Multiplicative rate penalty; 1.0 on a loss-free path.
    pub fn loss_factor(&self) -> f64 {
        1.0 / (1.0 + self.loss_sensitivity * self.loss_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint {
    pub host: HostId,
    tcp_buffer: u64,
    cpu_cap: f64,
}

impl Endpoint {
    pub fn new(host: HostId, tcp_buffer: u64, cpu_cap: f64) -> Result<Self, NetError> {
        if tcp_buffer == 0 {
            return Err(NetError::Buffer);
        }
        if !(cpu_cap > 0.0) {
            return Err(NetError::CpuCap(cpu_cap));
        }
        Ok(Self {
            host,
            tcp_buffer,
            cpu_cap,
        })
    }

    pub fn tcp_buffer(&self) -> u64 {
        self.tcp_buffer
    }

    pub fn cpu_cap(&self) -> f64 {
        self.cpu_cap
    }

    pub fn with_tcp_buffer(mut self, bytes: u64) -> Result<Self, NetError> {
        if bytes == 0 {
            return Err(NetError::Buffer);
        }
        self.tcp_buffer = bytes;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcpSession {
    pub path: NetPath,
    pub sender: Endpoint,
    pub receiver: Endpoint,
}

impl TcpSession {
    pub fn new(path: NetPath, sender: Endpoint, receiver: Endpoint) -> Self {
        Self {
            path,
            sender,
            receiver,
        }
    }

    pub fn effective_window(&self) -> u64 {
        self.sender.tcp_buffer.min(self.receiver.tcp_buffer)
    }

    /// Window-limited rate, `window / rtt`.
    pub fn window_rate(&self) -> f64 {
        self.effective_window() as f64 / self.path.rtt
    }
}

/// Rate a session reaches alone on its path.
pub fn session_rate_unconstrained(s: &TcpSession) -> f64 {
    let rate = s
        .window_rate()
        .min(s.sender.cpu_cap)
        .min(s.receiver.cpu_cap)
        .min(s.path.capacity);
    rate * s.path.loss_factor()
}

/// Sessions sharing one path.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSet {
    path: NetPath,
    sessions: Vec<TcpSession>,
}

impl FlowSet {
    pub fn new(path: NetPath) -> Self {
        Self {
            path,
            sessions: Vec::new(),
        }
    }

    pub fn push(&mut self, sender: Endpoint, receiver: Endpoint) -> &mut Self {
        self.sessions.push(TcpSession::new(self.path, sender, receiver));
        self
    }

    pub fn sessions(&self) -> &[TcpSession] {
        &self.sessions
    }

    pub fn path(&self) -> &NetPath {
        &self.path
    }

    /// Capacity the sessions compete for: the path, further limited by a host's
    /// processing cap when every session runs through that host.
    pub fn shared_capacity(&self) -> f64 {
        let mut cap = self.path.capacity;
        if let Some(first) = self.sessions.first() {
            if self.sessions.iter().all(|s| s.sender.host == first.sender.host) {
                cap = cap.min(first.sender.cpu_cap);
            }
            if self.sessions.iter().all(|s| s.receiver.host == first.receiver.host) {
                cap = cap.min(first.receiver.cpu_cap);
            }
        }
        cap
    }
}

/// Max-min fair split of the shared capacity; one rate per session, in order.
pub fn water_fill(flows: &FlowSet) -> Vec<f64> {
    let demands: Vec<FlowDemand> = flows
        .sessions
        .iter()
        .map(|s| FlowDemand::new(session_rate_unconstrained(s)).using(0, 1.0))
        .collect();
    max_min_allocate(&demands, &[flows.shared_capacity()])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetperfPoint {
    pub buffer: u64,
    pub streams: u32,
    /// Aggregate over all streams, bytes/s.
    pub throughput: f64,
}

/// Aggregate rate of `streams` parallel sessions with both socket buffers set to `buffer`.
pub fn netperf_point(
    path: NetPath,
    sender: Endpoint,
    receiver: Endpoint,
    buffer: u64,
    streams: u32,
) -> Result<NetperfPoint, NetError> {
    if streams == 0 {
        return Err(NetError::NoStreams);
    }
    let sender = sender.with_tcp_buffer(buffer)?;
    let receiver = receiver.with_tcp_buffer(buffer)?;
    let mut set = FlowSet::new(path);
    for _ in 0..streams {
        set.push(sender, receiver);
    }
    let throughput = water_fill(&set).iter().sum();
    Ok(NetperfPoint {
        buffer,
        streams,
        throughput,
    })
}

/// Throughput versus socket buffer size on one path.
pub fn netperf_sweep(
    path: NetPath,
    sender: Endpoint,
    receiver: Endpoint,
    buffers: &[u64],
    streams: u32,
) -> Result<Vec<NetperfPoint>, NetError> {
    if buffers.is_empty() {
        return Err(NetError::EmptySweep);
    }
    buffers
        .iter()
        .map(|&b| netperf_point(path, sender, receiver, b, streams))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    const MOVER_CPU: f64 = 90e6;

    fn mover(buf: u64) -> Endpoint {
        Endpoint::new(HostId(0), buf, MOVER_CPU).unwrap()
    }

    fn client(buf: u64) -> Endpoint {
        Endpoint::new(HostId(1), buf, 125e6).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn window_bound_at_256k() {
        let s = TcpSession::new(NetPath::wan(), mover(262_144), client(64_000_000));
        let r = session_rate_unconstrained(&s);
        assert!(rel(r, 262_144.0 / 0.0035) < 1e-12);
        assert!((r / 1e6 - 74.9).abs() < 0.05);
    }

    #[test]
    fn cpu_bound_at_64m() {
        let s = TcpSession::new(NetPath::wan(), mover(64_000_000), client(64_000_000));
        assert_eq!(session_rate_unconstrained(&s), 90e6);
    }

    #[test]
    fn huge_window_leaves_min_of_caps() {
        let s = TcpSession::new(NetPath::wan(), mover(u64::MAX), client(u64::MAX));
        assert_eq!(session_rate_unconstrained(&s), 90e6);
    }

    #[test]
    fn invalid_path_and_endpoint_rejected() {
        assert_eq!(NetPath::new(0.0, 1.0), Err(NetError::Rtt(0.0)));
        assert_eq!(NetPath::new(1e-3, 0.0), Err(NetError::Capacity(0.0)));
        assert!(NetPath::wan().with_loss(1.0).is_err());
        assert!(Endpoint::new(HostId(0), 0, 1.0).is_err());
        assert!(Endpoint::new(HostId(0), 1, 0.0).is_err());
    }

    #[test]
    fn loss_penalty_off_by_default() {
        assert_eq!(NetPath::wan().loss_factor(), 1.0);
        let lossy = NetPath::wan().with_loss(0.001).unwrap();
        assert!(rel(lossy.loss_factor(), 1.0 / 1.1) < 1e-12);
    }

    #[test]
    fn four_small_window_streams_fill_the_cpu_cap() {
        let mut set = FlowSet::new(NetPath::wan());
        for _ in 0..4 {
            set.push(mover(100_000), client(100_000));
        }
        let single = session_rate_unconstrained(&set.sessions()[0]);
        assert!((single / 1e6 - 28.57).abs() < 0.01);
        let rates = water_fill(&set);
        for r in &rates {
            assert!(rel(*r, 22.5e6) < 1e-12);
        }
        assert!(rel(rates.iter().sum(), 90e6) < 1e-12);
    }

    #[test]
    fn large_window_streams_do_not_add_up() {
        let mut set = FlowSet::new(NetPath::wan());
        for _ in 0..4 {
            set.push(mover(1 << 20), client(1 << 20));
        }
        let agg: f64 = water_fill(&set).iter().sum();
        assert!(rel(agg, 90e6) < 1e-12);
    }

    #[test]
    fn single_session_gets_its_unconstrained_rate() {
        let mut set = FlowSet::new(NetPath::wan());
        set.push(mover(200_000), client(64_000_000));
        assert_eq!(water_fill(&set), vec![session_rate_unconstrained(&set.sessions()[0])]);
    }

    #[test]
    fn netperf_examples() {
        let wan = netperf_point(NetPath::wan(), mover(1), client(1), 65_536, 1).unwrap();
        assert!(rel(wan.throughput, 65_536.0 / 0.0035) < 1e-12);
        assert!((wan.throughput / 1e6 - 18.7).abs() < 0.05);
        let lan = netperf_point(NetPath::lan(), mover(1), client(1), 65_536, 1).unwrap();
        assert!(lan.throughput >= 90e6);
        let wan2 = netperf_point(NetPath::wan(), mover(1), client(1), 2 << 20, 1).unwrap();
        let lan2 = netperf_point(NetPath::lan(), mover(1), client(1), 2 << 20, 1).unwrap();
        assert!(rel(wan2.throughput, lan2.throughput) < 0.01);
        assert_eq!(
            netperf_sweep(NetPath::wan(), mover(1), client(1), &[], 1),
            Err(NetError::EmptySweep)
        );
    }

    /// Independent oracle: hand out equal shares, freeze every flow whose demand
    /// fits, redistribute what they leave, repeat until nothing changes.
    fn iterative_oracle(demands: &[f64], capacity: f64) -> Vec<f64> {
        let mut alloc = vec![0.0; demands.len()];
        let mut open: Vec<usize> = (0..demands.len()).collect();
        let mut left = capacity;
        for _ in 0..=demands.len() {
            if open.is_empty() {
                break;
            }
            let share = left / open.len() as f64;
            let (fits, rest): (Vec<usize>, Vec<usize>) =
                open.iter().partition(|&&i| demands[i] <= share);
            if fits.is_empty() {
                for &i in &open {
                    alloc[i] = share;
                }
                open.clear();
                break;
            }
            for &i in &fits {
                alloc[i] = demands[i];
                left -= demands[i];
            }
            open = rest;
        }
        alloc
    }

    #[test]
    fn water_fill_matches_oracle_on_all_small_grids() {
        // Per-session window/rtt rates drawn from a grid, shared cap fixed by the
        // common mover: every multiset of up to 6 flows.
        let grid: [u64; 4] = [35_000, 100_000, 262_144, 1 << 20];
        let mut checked = 0;
        for n in 1..=6usize {
            let mut idx = vec![0usize; n];
            loop {
                let mut set = FlowSet::new(NetPath::wan());
                for &g in &idx {
                    set.push(mover(grid[g]), client(64_000_000));
                }
                let demands: Vec<f64> =
                    set.sessions().iter().map(session_rate_unconstrained).collect();
                let got = water_fill(&set);
                let want = iterative_oracle(&demands, set.shared_capacity());
                for (g, w) in got.iter().zip(&want) {
                    assert!(rel(*g, *w) < 1e-9, "{idx:?}: {got:?} vs {want:?}");
                }
                checked += 1;
                // next non-decreasing index tuple
                let mut k = n;
                while k > 0 && idx[k - 1] == grid.len() - 1 {
                    k -= 1;
                }
                if k == 0 {
                    break;
                }
                idx[k - 1] += 1;
                let v = idx[k - 1];
                for slot in idx.iter_mut().skip(k) {
                    *slot = v;
                }
            }
        }
        assert_eq!(checked, 4 + 10 + 20 + 35 + 56 + 84);
    }

    proptest! {
        #[test]
        fn rate_monotone_in_window_and_rtt(
            w1 in 1u64..10_000_000, w2 in 1u64..10_000_000,
            rtt1 in 1e-5f64..0.1, rtt2 in 1e-5f64..0.1,
        ) {
            let (wlo, whi) = (w1.min(w2), w1.max(w2));
            let (rlo, rhi) = (rtt1.min(rtt2), rtt1.max(rtt2));
            let at = |w: u64, rtt: f64| {
                let path = NetPath::new(rtt, GBE_CAPACITY).unwrap();
                session_rate_unconstrained(&TcpSession::new(path, mover(w), client(w)))
            };
            prop_assert!(at(wlo, rlo) <= at(whi, rlo));
            prop_assert!(at(wlo, rhi) <= at(wlo, rlo));
        }

        #[test]
        fn aggregate_never_exceeds_shared_cap(bufs in proptest::collection::vec(1u64..4_000_000, 1..8)) {
            let mut set = FlowSet::new(NetPath::wan());
            for b in &bufs {
                set.push(mover(*b), client(*b));
            }
            let agg: f64 = water_fill(&set).iter().sum();
            prop_assert!(agg <= GBE_CAPACITY.min(MOVER_CPU) * (1.0 + 1e-12));
        }

        #[test]
        fn doubling_rates_doubles_allocation(bufs in proptest::collection::vec(1u64..2_000_000, 1..7)) {
            let build = |scale: u64, cpu: f64, cap: f64| {
                let path = NetPath::new(WAN_RTT, cap).unwrap();
                let mut set = FlowSet::new(path);
                for b in &bufs {
                    set.push(
                        Endpoint::new(HostId(0), b * scale, cpu).unwrap(),
                        Endpoint::new(HostId(1), b * scale, 125e6 * scale as f64).unwrap(),
                    );
                }
                water_fill(&set)
            };
            let base = build(1, MOVER_CPU, GBE_CAPACITY);
            let doubled = build(2, 2.0 * MOVER_CPU, 2.0 * GBE_CAPACITY);
            for (b, d) in base.iter().zip(&doubled) {
                prop_assert!(rel(*d, 2.0 * b) < 1e-9);
            }
        }
    }
}
