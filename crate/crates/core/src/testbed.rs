//! Hosts, disks and network paths of one experiment.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::netmodel::{Endpoint, NetError, NetPath, GBE_CAPACITY, LAN_RTT, WAN_RTT};
use crate::storage::disk::{Disk, DiskError, CLIENT_DISK_RATE, DEFAULT_CONTENTION_ALPHA, MOVER_DISK_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HostId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DiskRef {
    pub host: HostId,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HostRole {
    CoreServer,
    DiskMover,
    Client,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Host {
    pub name: String,
    pub role: HostRole,
    pub tcp_buffer: u64,
    /// Combined NIC/CPU ceiling on network traffic through the host, bytes/s.
    pub cpu_cap: f64,
    pub disks: Vec<Disk>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TestbedError {
    #[error("unknown host `{0}`")]
    UnknownHost(String),
    #[error("duplicate host name `{0}`")]
    DuplicateHost(String),
    #[error("host `{host}` has no disk #{index}")]
    UnknownDisk { host: String, index: usize },
    #[error("unknown path `{0}`")]
    UnknownPath(String),
    #[error("mover `{0}` must have at least one disk")]
    DisklessMover(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Disk(#[from] DiskError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Testbed {
    hosts: Vec<Host>,
    paths: Vec<(String, NetPath)>,
    aliases: BTreeMap<String, HostId>,
    files: BTreeMap<String, DiskRef>,
}

impl Testbed {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_host(&mut self, host: Host) -> Result<HostId, TestbedError> {
        if self.find_host(&host.name).is_some() {
            return Err(TestbedError::DuplicateHost(host.name));
        }
        if host.role == HostRole::DiskMover && host.disks.is_empty() {
            return Err(TestbedError::DisklessMover(host.name));
        }
        self.hosts.push(host);
        Ok(HostId(self.hosts.len() - 1))
    }

    pub fn add_alias(&mut self, alias: &str, target: &str) -> Result<(), TestbedError> {
        let id = self.host_id(target)?;
        self.aliases.insert(alias.to_string(), id);
        Ok(())
    }

    pub fn add_path(&mut self, label: &str, path: NetPath) -> PathId {
        self.paths.push((label.to_string(), path));
        PathId(self.paths.len() - 1)
    }

    pub fn host(&self, id: HostId) -> &Host {
        &self.hosts[id.0]
    }

    pub fn hosts(&self) -> impl Iterator<Item = (HostId, &Host)> {
        self.hosts.iter().enumerate().map(|(i, h)| (HostId(i), h))
    }

    pub fn find_host(&self, name: &str) -> Option<HostId> {
        self.hosts
            .iter()
            .position(|h| h.name == name)
            .map(HostId)
            .or_else(|| self.aliases.get(name).copied())
    }

    pub fn host_id(&self, name: &str) -> Result<HostId, TestbedError> {
        self.find_host(name)
            .ok_or_else(|| TestbedError::UnknownHost(name.to_string()))
    }

    pub fn path(&self, id: PathId) -> &NetPath {
        &self.paths[id.0].1
    }

    pub fn path_label(&self, id: PathId) -> &str {
        &self.paths[id.0].0
    }

    pub fn path_id(&self, label: &str) -> Result<PathId, TestbedError> {
        self.paths
            .iter()
            .position(|(l, _)| l == label)
            .map(PathId)
            .ok_or_else(|| TestbedError::UnknownPath(label.to_string()))
    }

    pub fn path_count(&self) -> usize {
        self.paths.len()
    }

    pub fn disk(&self, r: DiskRef) -> &Disk {
        &self.hosts[r.host.0].disks[r.index]
    }

    pub fn disk_ref(&self, host: HostId, index: usize) -> Result<DiskRef, TestbedError> {
        let h = &self.hosts[host.0];
        if index >= h.disks.len() {
            return Err(TestbedError::UnknownDisk {
                host: h.name.clone(),
                index,
            });
        }
        Ok(DiskRef { host, index })
    }

    pub fn endpoint(&self, id: HostId) -> Endpoint {
        let h = &self.hosts[id.0];
        Endpoint::new(id, h.tcp_buffer, h.cpu_cap).expect("hosts are validated on construction")
    }

    pub fn set_tcp_buffer(&mut self, id: HostId, bytes: u64) {
        self.hosts[id.0].tcp_buffer = bytes;
    }

    pub fn movers(&self) -> Vec<HostId> {
        self.hosts()
            .filter(|(_, h)| h.role == HostRole::DiskMover)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn first_of_role(&self, role: HostRole) -> Option<HostId> {
        self.hosts().find(|(_, h)| h.role == role).map(|(id, _)| id)
    }

    /// Mover disks interleaved across movers: first disk of every mover, then
    /// the second disk of every mover, and so on.
    pub fn mover_disks_round_robin(&self) -> Vec<DiskRef> {
        let movers = self.movers();
        let depth = movers
            .iter()
            .map(|m| self.host(*m).disks.len())
            .max()
            .unwrap_or(0);
        let mut out = Vec::new();
        for index in 0..depth {
            for &host in &movers {
                if index < self.host(host).disks.len() {
                    out.push(DiskRef { host, index });
                }
            }
        }
        out
    }

    pub fn place_file(&mut self, path: &str, disk: DiskRef) {
        self.files.insert(path.to_string(), disk);
    }

    pub fn locate_file(&self, path: &str) -> Option<DiskRef> {
        self.files.get(path).copied()
    }
}

/// Knobs for the default two-site testbed.
#[derive(Debug, Clone, PartialEq)]
pub struct TestbedParams {
    pub lan_rtt: f64,
    pub wan_rtt: f64,
    pub link_capacity: f64,
    pub loss_rate: f64,
    pub mover_names: Vec<String>,
    pub disks_per_mover: usize,
    pub mover_disk_rate: f64,
    pub mover_disk_alpha: f64,
    pub mover_disk_exclusive: bool,
    pub mover_cpu: f64,
    pub mover_tcp_buffer: u64,
    pub core_cpu: f64,
    pub client_cpu: f64,
    pub client_tcp_buffer: u64,
    pub client_disks: usize,
    pub client_disk_rate: f64,
    pub client_disk_alpha: f64,
}

impl Default for TestbedParams {
    fn default() -> Self {
        Self {
            lan_rtt: LAN_RTT,
            wan_rtt: WAN_RTT,
            link_capacity: GBE_CAPACITY,
            loss_rate: 0.0,
            mover_names: ["moverA", "moverB"].iter().map(|s| s.to_string()).collect(),
            disks_per_mover: 2,
            mover_disk_rate: MOVER_DISK_RATE,
            mover_disk_alpha: DEFAULT_CONTENTION_ALPHA,
            mover_disk_exclusive: true,
            mover_cpu: 90e6,
            mover_tcp_buffer: 256 * 1024,
            core_cpu: 90e6,
            client_cpu: 125e6,
            client_tcp_buffer: 64_000_000,
            client_disks: 1,
            client_disk_rate: CLIENT_DISK_RATE,
            client_disk_alpha: DEFAULT_CONTENTION_ALPHA,
        }
    }
}

pub const CORE_HOST: &str = "core";
pub const CLIENT_HOST: &str = "client";
pub const LAN: &str = "LAN";
pub const WAN: &str = "WAN";

impl TestbedParams {
    /// Core server, disk movers, one client and the `LAN` and `WAN` paths.
    pub fn build(&self) -> Result<Testbed, TestbedError> {
        let mut tb = Testbed::new();
        tb.add_host(Host {
            name: CORE_HOST.to_string(),
            role: HostRole::CoreServer,
            tcp_buffer: self.mover_tcp_buffer,
            cpu_cap: self.core_cpu,
            disks: Vec::new(),
        })?;
        let mover_disk = Disk::new(self.mover_disk_rate, self.mover_disk_alpha)?
            .exclusive(self.mover_disk_exclusive);
        for name in &self.mover_names {
            tb.add_host(Host {
                name: name.clone(),
                role: HostRole::DiskMover,
                tcp_buffer: self.mover_tcp_buffer,
                cpu_cap: self.mover_cpu,
                disks: (0..self.disks_per_mover).map(|_| mover_disk).collect(),
            })?;
        }
        let client_disk = Disk::new(self.client_disk_rate, self.client_disk_alpha)?;
        tb.add_host(Host {
            name: CLIENT_HOST.to_string(),
            role: HostRole::Client,
            tcp_buffer: self.client_tcp_buffer,
            cpu_cap: self.client_cpu,
            disks: (0..self.client_disks).map(|_| client_disk).collect(),
        })?;
        for (id, _) in tb.hosts() {
            Endpoint::new(id, tb.host(id).tcp_buffer, tb.host(id).cpu_cap)?;
        }
        let lan = NetPath::new(self.lan_rtt, self.link_capacity)?.with_loss(self.loss_rate)?;
        let wan = NetPath::new(self.wan_rtt, self.link_capacity)?.with_loss(self.loss_rate)?;
        tb.add_path(LAN, lan);
        tb.add_path(WAN, wan);
        Ok(tb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout() {
        let tb = TestbedParams::default().build().unwrap();
        assert_eq!(tb.movers().len(), 2);
        let rr = tb.mover_disks_round_robin();
        assert_eq!(rr.len(), 4);
        assert_ne!(rr[0].host, rr[1].host);
        assert_eq!(rr[0].host, rr[2].host);
        assert_eq!(tb.host(tb.host_id(CLIENT_HOST).unwrap()).disks.len(), 1);
        assert_eq!(tb.path(tb.path_id(WAN).unwrap()).rtt(), 3.5e-3);
    }

    #[test]
    fn aliases_resolve() {
        let mut tb = TestbedParams::default().build().unwrap();
        tb.add_alias("dt05s.cc", "moverA").unwrap();
        assert_eq!(tb.find_host("dt05s.cc"), tb.find_host("moverA"));
        assert_eq!(
            tb.add_alias("x", "nowhere"),
            Err(TestbedError::UnknownHost("nowhere".into()))
        );
    }

    #[test]
    fn duplicate_and_diskless_hosts_rejected() {
        let mut tb = TestbedParams::default().build().unwrap();
        let dup = tb.host(HostId(0)).clone();
        assert!(matches!(tb.add_host(dup), Err(TestbedError::DuplicateHost(_))));
        let bare = Host {
            name: "moverC".into(),
            role: HostRole::DiskMover,
            tcp_buffer: 1,
            cpu_cap: 1.0,
            disks: Vec::new(),
        };
        assert!(matches!(tb.add_host(bare), Err(TestbedError::DisklessMover(_))));
    }
}
