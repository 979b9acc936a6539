//! Scenario files.
//!
//! A scenario is a TOML document with a handful of flat sections. Every
//! section except `[sweep]` is optional and every key inside one has a
//! default, so a file only states what differs from the stock testbed.
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use hsmsim_core::dialect::{Dialect, DialectFeature, PftpdDeployment, Role, SpeakerProfile};
use hsmsim_core::protocols::{Overlap, DEFAULT_FILE_SIZE, DEFAULT_PACKET};
use hsmsim_core::storage::tape::{DEFAULT_ACCESSORS, DEFAULT_DRIVES, EXCHANGE_TIME, TAPE_DRIVE_RATE};
use hsmsim_core::storage::{Placement, TapeLibrary};
use hsmsim_core::testbed::{PathId, Testbed, TestbedParams};
use serde::Deserialize;

use crate::error::{ModelError, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Netperf,
    Streams,
    ClientApi,
    PftpRead,
    Tape,
    PftpWrite,
    Relay,
    XrslStagein,
}

impl Kind {
    /// The sweep variable each kind understands.
    pub fn sweep_variable(self) -> &'static str {
        match self {
            Kind::Netperf | Kind::ClientApi => "buffer",
            Kind::Streams => "streams",
            Kind::PftpRead | Kind::Tape | Kind::PftpWrite | Kind::Relay => "files",
            Kind::XrslStagein => "placement",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl SweepValue {
    pub fn as_positive(&self) -> Option<u64> {
        match *self {
            SweepValue::Int(v) if v > 0 => Some(v as u64),
            _ => None,
        }
    }
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Int(v) => write!(f, "{v}"),
            SweepValue::Float(v) => write!(f, "{v}"),
            SweepValue::Text(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: String,
    pub values: Vec<SweepValue>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub lan_rtt: Option<f64>,
    pub wan_rtt: Option<f64>,
    pub link_capacity: Option<f64>,
    pub loss_rate: Option<f64>,
    pub movers: Option<Vec<String>>,
    pub disks_per_mover: Option<usize>,
    pub mover_disk_rate: Option<f64>,
    pub mover_disk_alpha: Option<f64>,
    pub mover_disk_exclusive: Option<bool>,
    pub mover_cpu: Option<f64>,
    pub mover_tcp_buffer: Option<u64>,
    pub core_cpu: Option<f64>,
    pub client_cpu: Option<f64>,
    pub client_tcp_buffer: Option<u64>,
    pub client_disks: Option<usize>,
    pub client_disk_rate: Option<f64>,
    pub client_disk_alpha: Option<f64>,
    /// Extra names for hosts, e.g. the DNS name used in job descriptions.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    /// File path to `host:disk-index`.
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Pdata,
    Push,
    Pftp,
    ClientApi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientStore {
    Null,
    Memory,
    Disk,
}

impl ClientStore {
    pub fn label(self) -> &'static str {
        match self {
            ClientStore::Null => "null",
            ClientStore::Memory => "memory",
            ClientStore::Disk => "disk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionName {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapName {
    Serial,
    Parallel,
}

impl From<OverlapName> for Overlap {
    fn from(o: OverlapName) -> Self {
        match o {
            OverlapName::Serial => Overlap::Serial,
            OverlapName::Parallel => Overlap::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaySeries {
    /// Control daemon on the core server; data flows mover to client.
    Direct,
    /// GSI daemon on the host that holds the data.
    Colocated,
    /// GSI daemon on another mover, which relays the data.
    Relay,
}

impl RelaySeries {
    pub fn label(self) -> &'static str {
        match self {
            RelaySeries::Direct => "direct",
            RelaySeries::Colocated => "colocated",
            RelaySeries::Relay => "relay",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferCfg {
    pub protocol: Option<ProtocolName>,
    pub paths: Option<Vec<String>>,
    pub file_size: Option<u64>,
    pub packet: Option<u64>,
    pub pwidth: Option<u32>,
    pub streams: Option<u32>,
    pub buffers: Option<Vec<u64>>,
    pub sinks: Option<Vec<ClientStore>>,
    pub sources: Option<Vec<ClientStore>>,
    pub directions: Option<Vec<DirectionName>>,
    pub overlap: Option<OverlapName>,
    pub client_disk_overlap: Option<OverlapName>,
    pub pipelined: Option<bool>,
    pub data_host: Option<String>,
    pub series: Option<Vec<RelaySeries>>,
}

impl TransferCfg {
    pub fn file_size(&self) -> u64 {
        self.file_size.unwrap_or(DEFAULT_FILE_SIZE)
    }

    pub fn packet(&self) -> u64 {
        self.packet.unwrap_or(DEFAULT_PACKET)
    }

    pub fn overlap_for(&self, touches_client_disk: bool) -> Overlap {
        if touches_client_disk {
            self.client_disk_overlap.unwrap_or(OverlapName::Serial).into()
        } else {
            self.overlap.unwrap_or(OverlapName::Parallel).into()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementName {
    Offdrive,
    Premounted,
}

impl PlacementName {
    pub fn label(self) -> &'static str {
        match self {
            PlacementName::Offdrive => "offdrive",
            PlacementName::Premounted => "premounted",
        }
    }
}

impl From<PlacementName> for Placement {
    fn from(p: PlacementName) -> Self {
        match p {
            PlacementName::Offdrive => Placement::OffDrive,
            PlacementName::Premounted => Placement::PreMounted,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryCfg {
    pub drives: Option<usize>,
    pub drive_rate: Option<f64>,
    pub accessors: Option<usize>,
    pub exchange_time: Option<f64>,
    pub placements: Option<Vec<PlacementName>>,
}

impl LibraryCfg {
    pub fn build(&self) -> Result<TapeLibrary, ModelError> {
        Ok(TapeLibrary::new(
            self.drives.unwrap_or(DEFAULT_DRIVES),
            self.drive_rate.unwrap_or(TAPE_DRIVE_RATE),
            self.accessors.unwrap_or(DEFAULT_ACCESSORS),
            self.exchange_time.unwrap_or(EXCHANGE_TIME),
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentName {
    Kerberos,
    Gsi,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialectCfg {
    #[serde(default = "default_client_dialect")]
    pub client: String,
    #[serde(default = "default_server_dialect")]
    pub server: String,
    #[serde(default)]
    pub client_requires: Vec<String>,
    #[serde(default)]
    pub server_requires: Vec<String>,
    #[serde(default = "default_deployment")]
    pub deployment: DeploymentName,
    pub pftpd_host: Option<String>,
    pub client_realm: Option<String>,
    pub server_realm: Option<String>,
    /// Buffer the client asks for with SBUF.
    pub sbuf: Option<u64>,
}

fn default_client_dialect() -> String {
    "gridftp".into()
}

fn default_server_dialect() -> String {
    "gsi-pftp".into()
}

fn default_deployment() -> DeploymentName {
    DeploymentName::Gsi
}

impl Default for DialectCfg {
    fn default() -> Self {
        Self {
            client: default_client_dialect(),
            server: default_server_dialect(),
            client_requires: Vec::new(),
            server_requires: Vec::new(),
            deployment: default_deployment(),
            pftpd_host: None,
            client_realm: None,
            server_realm: None,
            sbuf: None,
        }
    }
}

pub const DEFAULT_PFTPD_HOST: &str = "moverA";
pub const DEFAULT_DATA_HOST: &str = "moverB";

impl DialectCfg {
    fn profile(&self, role: Role, scenario: &str) -> Result<SpeakerProfile, SimError> {
        let (key, dialect, requires, realm) = match role {
            Role::Client => ("dialect.client", &self.client, &self.client_requires, &self.client_realm),
            Role::Server => ("dialect.server", &self.server, &self.server_requires, &self.server_realm),
        };
        let dialect: Dialect = dialect
            .parse()
            .map_err(|_| SimError::invalid(scenario, key, format!("unknown dialect `{dialect}`")))?;
        let mut p = SpeakerProfile::new(role, dialect);
        for r in requires {
            let f: DialectFeature = r
                .parse()
                .map_err(|e| SimError::invalid(scenario, key, format!("{e}")))?;
            p = p.require(f);
        }
        if let Some(realm) = realm {
            p = p.with_realm(realm.clone());
        }
        if role == Role::Client {
            if let Some(b) = self.sbuf {
                p = p.with_sbuf(b);
            }
        }
        Ok(p)
    }

    pub fn profiles(&self, scenario: &str) -> Result<(SpeakerProfile, SpeakerProfile), SimError> {
        Ok((self.profile(Role::Client, scenario)?, self.profile(Role::Server, scenario)?))
    }

    pub fn pftpd_host(&self) -> &str {
        self.pftpd_host.as_deref().unwrap_or(DEFAULT_PFTPD_HOST)
    }

    pub fn deployment(&self, tb: &Testbed) -> Result<PftpdDeployment, hsmsim_core::testbed::TestbedError> {
        Ok(match self.deployment {
            DeploymentName::Kerberos => PftpdDeployment::KerberosOnCore,
            DeploymentName::Gsi => PftpdDeployment::Gsi {
                host: tb.host_id(self.pftpd_host())?,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub kind: Kind,
    #[serde(default)]
    pub description: String,
    /// Free-form provenance such as software versions; copied nowhere.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default = "one")]
    pub repetitions: u32,
    pub sweep: Sweep,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default)]
    pub transfer: TransferCfg,
    #[serde(default)]
    pub library: LibraryCfg,
    pub dialect: Option<DialectCfg>,
    /// Job description file, relative to the scenario file.
    pub job: Option<String>,
    #[serde(skip)]
    pub job_text: Option<String>,
}

fn one() -> u32 {
    1
}

/// Parses `key.path=value` where the value is TOML, or a bare string.
pub fn parse_override(raw: &str) -> Result<(String, toml::Value), SimError> {
    let (key, value) = raw
        .split_once('=')
        .filter(|(k, _)| !k.trim().is_empty())
        .ok_or_else(|| SimError::BadOverride(raw.into()))?;
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.into()));
    Ok((key.trim().into(), parsed))
}

fn apply_override(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), SimError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut table = root;
    for part in parts {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| SimError::BadOverride(format!("{key}: `{part}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl Scenario {
    /// Parses and validates scenario text. `resolve_job` maps the `job` key
    /// to the job description's contents.
    pub fn from_toml(
        text: &str,
        origin: &str,
        overrides: &[(String, toml::Value)],
        resolve_job: &dyn Fn(&str) -> Result<String, SimError>,
    ) -> Result<Self, SimError> {
        let syntax = |message: String| SimError::Syntax {
            origin: origin.into(),
            message,
        };
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| syntax(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v.clone())?;
        }
        let mut scenario: Scenario = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| syntax(e.to_string()))?;
        if let Some(job) = &scenario.job {
            scenario.job_text = Some(resolve_job(job)?);
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn invalid(&self, key: &str, message: impl Into<String>) -> SimError {
        SimError::invalid(&self.id, key, message)
    }

    pub fn model_error(&self, source: impl Into<ModelError>) -> SimError {
        SimError::Model {
            scenario: self.id.clone(),
            source: source.into(),
        }
    }

    pub fn testbed(&self) -> Result<Testbed, SimError> {
        let t = &self.topology;
        let d = TestbedParams::default();
        let params = TestbedParams {
            lan_rtt: t.lan_rtt.unwrap_or(d.lan_rtt),
            wan_rtt: t.wan_rtt.unwrap_or(d.wan_rtt),
            link_capacity: t.link_capacity.unwrap_or(d.link_capacity),
            loss_rate: t.loss_rate.unwrap_or(d.loss_rate),
            mover_names: t.movers.clone().unwrap_or(d.mover_names),
            disks_per_mover: t.disks_per_mover.unwrap_or(d.disks_per_mover),
            mover_disk_rate: t.mover_disk_rate.unwrap_or(d.mover_disk_rate),
            mover_disk_alpha: t.mover_disk_alpha.unwrap_or(d.mover_disk_alpha),
            mover_disk_exclusive: t.mover_disk_exclusive.unwrap_or(d.mover_disk_exclusive),
            mover_cpu: t.mover_cpu.unwrap_or(d.mover_cpu),
            mover_tcp_buffer: t.mover_tcp_buffer.unwrap_or(d.mover_tcp_buffer),
            core_cpu: t.core_cpu.unwrap_or(d.core_cpu),
            client_cpu: t.client_cpu.unwrap_or(d.client_cpu),
            client_tcp_buffer: t.client_tcp_buffer.unwrap_or(d.client_tcp_buffer),
            client_disks: t.client_disks.unwrap_or(d.client_disks),
            client_disk_rate: t.client_disk_rate.unwrap_or(d.client_disk_rate),
            client_disk_alpha: t.client_disk_alpha.unwrap_or(d.client_disk_alpha),
        };
        let mut tb = params.build().map_err(|e| self.model_error(e))?;
        for (alias, host) in &t.aliases {
            tb.add_alias(alias, host)
                .map_err(|e| self.invalid(&format!("topology.aliases.{alias}"), e.to_string()))?;
        }
        for (file, loc) in &t.files {
            let key = format!("topology.files.{file}");
            let (host, index) = loc
                .split_once(':')
                .and_then(|(h, i)| Some((h, i.parse::<usize>().ok()?)))
                .ok_or_else(|| self.invalid(&key, "expected `host:disk-index`"))?;
            let disk = tb
                .host_id(host)
                .and_then(|h| tb.disk_ref(h, index))
                .map_err(|e| self.invalid(&key, e.to_string()))?;
            tb.place_file(file, disk);
        }
        Ok(tb)
    }

    pub fn path_labels(&self) -> Vec<String> {
        match &self.transfer.paths {
            Some(p) => p.clone(),
            None => match self.kind {
                Kind::Streams | Kind::XrslStagein => vec!["WAN".into()],
                Kind::Relay => vec!["LAN".into()],
                _ => vec!["LAN".into(), "WAN".into()],
            },
        }
    }

    pub fn paths(&self, tb: &Testbed) -> Result<Vec<(String, PathId)>, SimError> {
        self.path_labels()
            .into_iter()
            .map(|l| {
                let id = tb
                    .path_id(&l)
                    .map_err(|e| self.invalid("transfer.paths", e.to_string()))?;
                Ok((l, id))
            })
            .collect()
    }

    pub fn dialect_cfg(&self) -> DialectCfg {
        self.dialect.clone().unwrap_or_default()
    }

    pub fn data_host(&self) -> &str {
        self.transfer.data_host.as_deref().unwrap_or(DEFAULT_DATA_HOST)
    }

    fn host_key(&self, tb: &Testbed, key: &str, host: &str) -> Result<(), SimError> {
        tb.host_id(host)
            .map(|_| ())
            .map_err(|_| self.invalid(key, format!("host `{host}` is not in the topology")))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.id.trim().is_empty() {
            return Err(SimError::invalid("<unnamed>", "id", "must not be empty"));
        }
        if self.repetitions == 0 {
            return Err(self.invalid("repetitions", "must be at least 1"));
        }
        let want = self.kind.sweep_variable();
        if self.sweep.variable != want {
            return Err(self.invalid(
                "sweep.variable",
                format!("this kind sweeps `{want}`, not `{}`", self.sweep.variable),
            ));
        }
        if self.sweep.values.is_empty() {
            return Err(self.invalid("sweep.values", "must not be empty"));
        }
        for v in &self.sweep.values {
            let ok = match self.kind {
                Kind::XrslStagein => matches!(v, SweepValue::Text(t) if t == "colocated" || t == "separated"),
                _ => v.as_positive().is_some(),
            };
            if !ok {
                let what = match self.kind {
                    Kind::XrslStagein => "`colocated` or `separated`",
                    _ => "a positive integer",
                };
                return Err(self.invalid("sweep.values", format!("`{v}` is not {what}")));
            }
        }
        let tr = &self.transfer;
        for (key, v) in [("transfer.file_size", tr.file_size), ("transfer.packet", tr.packet)] {
            if v == Some(0) {
                return Err(self.invalid(key, "must be positive"));
            }
        }
        for (key, v) in [("transfer.pwidth", tr.pwidth), ("transfer.streams", tr.streams)] {
            if v == Some(0) {
                return Err(self.invalid(key, "must be at least 1"));
            }
        }
        if tr.buffers.as_ref().is_some_and(|b| b.is_empty() || b.contains(&0)) {
            return Err(self.invalid("transfer.buffers", "must be a non-empty list of positive sizes"));
        }
        if self.kind == Kind::PftpWrite && tr.sources.as_ref().is_some_and(|s| s.contains(&ClientStore::Null)) {
            return Err(self.invalid("transfer.sources", "cannot read from a null device"));
        }
        let tb = self.testbed()?;
        self.paths(&tb)?;
        if let Some(h) = &tr.data_host {
            self.host_key(&tb, "transfer.data_host", h)?;
        }
        if let Some(d) = &self.dialect {
            self.host_key(&tb, "dialect.pftpd_host", d.pftpd_host())?;
            d.profiles(&self.id)?;
        }
        if self.kind == Kind::Relay {
            self.host_key(&tb, "transfer.data_host", self.data_host())?;
            self.host_key(&tb, "dialect.pftpd_host", self.dialect_cfg().pftpd_host())?;
        }
        if self.kind == Kind::Tape {
            self.library.build().map_err(|e| self.invalid("library", e.to_string()))?;
        }
        if self.kind == Kind::XrslStagein && self.job_text.is_none() {
            return Err(self.invalid("job", "stage-in scenarios need a job description"));
        }
        Ok(())
    }
}

/// Loads one scenario file; `job` paths resolve next to it.
pub fn load_scenario(path: &Path, overrides: &[(String, toml::Value)]) -> Result<Scenario, SimError> {
    let io = |p: &Path, source| SimError::Io {
        path: p.to_path_buf(),
        source,
    };
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let resolve = |job: &str| {
        let p = base.join(job);
        fs::read_to_string(&p).map_err(|e| io(&p, e))
    };
    Scenario::from_toml(&text, &path.display().to_string(), overrides, &resolve)
}

/// Scenario sources shipped with the binary.
pub const CANNED: &[(&str, &str)] = &[
    ("fig3_netperf", include_str!("../scenarios/fig3_netperf.toml")),
    ("fig4_streams", include_str!("../scenarios/fig4_streams.toml")),
    ("fig5_client_api", include_str!("../scenarios/fig5_client_api.toml")),
    ("fig6_pftp_read", include_str!("../scenarios/fig6_pftp_read.toml")),
    ("fig7_tape", include_str!("../scenarios/fig7_tape.toml")),
    ("fig8_write", include_str!("../scenarios/fig8_write.toml")),
    ("fig9_relay", include_str!("../scenarios/fig9_relay.toml")),
    ("xrsl_stagein", include_str!("../scenarios/xrsl_stagein.toml")),
];

const CANNED_JOBS: &[(&str, &str)] = &[("stagein.xrsl", include_str!("../scenarios/stagein.xrsl"))];

pub fn canned_scenario(id: &str, overrides: &[(String, toml::Value)]) -> Result<Scenario, SimError> {
    let (_, text) = CANNED
        .iter()
        .find(|(name, _)| *name == id)
        .ok_or_else(|| SimError::UnknownCanned(id.into()))?;
    let resolve = |job: &str| {
        CANNED_JOBS
            .iter()
            .find(|(name, _)| *name == job)
            .map(|(_, t)| t.to_string())
            .ok_or_else(|| SimError::invalid(id, "job", format!("no bundled job description `{job}`")))
    };
    Scenario::from_toml(text, &format!("<canned {id}>"), overrides, &resolve)
}

pub fn canned_suite(overrides: &[(String, toml::Value)]) -> Result<Vec<Scenario>, SimError> {
    CANNED.iter().map(|(id, _)| canned_scenario(id, overrides)).collect()
}

/// Rejects suites where two scenarios share an id.
pub fn check_unique_ids(scenarios: &[Scenario]) -> Result<(), SimError> {
    let mut seen = std::collections::BTreeSet::new();
    for s in scenarios {
        if !seen.insert(s.id.as_str()) {
            return Err(SimError::DuplicateId(s.id.clone()));
        }
    }
    Ok(())
}
