//! Turns validated scenarios into result rows.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use hsmsim_core::dialect::{auth_handshake, negotiate, AuthOutcome, PftpdDeployment, SessionAgreement};
use hsmsim_core::netmodel::netperf_point;
use hsmsim_core::protocols::{
    client_api_sweep, run_pftp_session, run_transfers, ApiDirection, DataPath, ProtocolKind, SessionRun,
    StorageEndpoint, TransferSpec,
};
use hsmsim_core::storage::tape::one_file_per_cartridge;
use hsmsim_core::storage::simulate_tape_reads;
use hsmsim_core::testbed::{DiskRef, HostId, Testbed, CLIENT_HOST};
use hsmsim_core::time::SimTime;
use hsmsim_core::xrsl::{extract_stage_ins, parse_xrsl_with_warnings, stage_in_to_transfers, StageInContext};

use crate::error::SimError;
use crate::scenario::{
    ClientStore, DirectionName, Kind, PlacementName, ProtocolName, RelaySeries, Scenario, SweepValue,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub sweep: SweepValue,
    /// Series label: the network path, optionally qualified by a variant.
    pub path: String,
    pub bytes: u64,
    /// Seconds from start until each transfer finished.
    pub elapsed: Vec<f64>,
    pub makespan: f64,
}

impl ResultRow {
    /// Bytes per second over the makespan.
    pub fn throughput(&self) -> f64 {
        self.bytes as f64 / self.makespan
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub id: String,
    pub kind: Kind,
    pub rows: Vec<ResultRow>,
    /// Non-fatal observations, such as skipped inputs or parser warnings.
    pub notes: Vec<String>,
}

impl ScenarioResult {
    pub fn series(&self, label: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.path == label).collect()
    }

    pub fn row(&self, label: &str, sweep: &SweepValue) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.path == label && &r.sweep == sweep)
    }
}

struct Ctx<'a> {
    s: &'a Scenario,
    tb: Testbed,
    rows: Vec<ResultRow>,
    notes: Vec<String>,
}

fn secs(t: SimTime) -> f64 {
    t.as_secs_f64()
}

impl Ctx<'_> {
    fn push(&mut self, sweep: &SweepValue, label: String, bytes: u64, elapsed: Vec<f64>, makespan: f64) {
        self.rows.push(ResultRow {
            scenario: self.s.id.clone(),
            sweep: sweep.clone(),
            path: label,
            bytes,
            elapsed,
            makespan,
        });
    }

    fn push_run(&mut self, sweep: &SweepValue, label: String, run: &SessionRun) {
        let elapsed = run.outcomes.iter().map(|o| secs(o.completed)).collect();
        self.push(sweep, label, run.total_bytes(), elapsed, secs(run.makespan));
    }

    fn sweep(&self) -> Vec<(SweepValue, u64)> {
        self.s
            .sweep
            .values
            .iter()
            .map(|v| (v.clone(), v.as_positive().expect("validated")))
            .collect()
    }

    fn client(&self) -> Result<HostId, SimError> {
        self.tb.host_id(CLIENT_HOST).map_err(|e| self.s.model_error(e))
    }

    fn client_disk(&self) -> Result<DiskRef, SimError> {
        let c = self.client()?;
        self.tb.disk_ref(c, 0).map_err(|e| self.s.model_error(e))
    }

    fn first_mover_disk(&self) -> Result<DiskRef, SimError> {
        self.tb
            .mover_disks_round_robin()
            .first()
            .copied()
            .ok_or_else(|| self.s.invalid("topology.movers", "at least one mover is needed"))
    }

    fn store(&self, store: ClientStore) -> Result<StorageEndpoint, SimError> {
        Ok(match store {
            ClientStore::Null => StorageEndpoint::Null(self.client()?),
            ClientStore::Memory => StorageEndpoint::Memory(self.client()?),
            ClientStore::Disk => StorageEndpoint::Disk(self.client_disk()?),
        })
    }

    /// Protocol for the pftp read and write kinds.
    fn file_protocol(&self) -> ProtocolKind {
        let t = &self.s.transfer;
        match t.protocol.unwrap_or(ProtocolName::Pftp) {
            ProtocolName::Pftp => ProtocolKind::Pftp {
                pwidth: t.pwidth.unwrap_or(1),
            },
            ProtocolName::Pdata => ProtocolKind::MoverPdata { packet: t.packet() },
            ProtocolName::Push => ProtocolKind::PdataPush,
            ProtocolName::ClientApi => ProtocolKind::ClientApi { buffer: t.packet() },
        }
    }

    fn agreement(&self) -> Result<SessionAgreement, SimError> {
        let cfg = self.s.dialect_cfg();
        let (client, server) = cfg.profiles(&self.s.id)?;
        let agreement = negotiate(&client, &server).map_err(|e| self.s.model_error(e))?;
        match auth_handshake(&agreement).map_err(|e| self.s.model_error(e))? {
            AuthOutcome::Authenticated => Ok(agreement),
            AuthOutcome::Rejected => Err(self.s.invalid("dialect", "authentication rejected: realms differ")),
        }
    }

    fn apply_sbuf(&mut self, agreement: &SessionAgreement) {
        if let Some(bytes) = agreement.tcp_buffer_override() {
            let ids: Vec<HostId> = self.tb.hosts().map(|(id, _)| id).collect();
            for id in ids {
                self.tb.set_tcp_buffer(id, bytes);
            }
        }
    }

    fn netperf(&mut self, streams_from_sweep: bool) -> Result<(), SimError> {
        let sender = self.first_mover_disk()?.host;
        let (snd, rcv) = (self.tb.endpoint(sender), self.tb.endpoint(self.client()?));
        let size = self.s.transfer.file_size();
        let buffers = match (streams_from_sweep, &self.s.transfer.buffers) {
            (true, Some(b)) => b.clone(),
            (true, None) => vec![100_000, 1 << 20],
            (false, _) => vec![0],
        };
        for (label, path) in self.s.paths(&self.tb)? {
            for &fixed_buffer in &buffers {
                let series = if streams_from_sweep {
                    format!("{label}@{fixed_buffer}")
                } else {
                    label.clone()
                };
                for (v, x) in self.sweep() {
                    let (buffer, streams) = if streams_from_sweep {
                        (fixed_buffer, x as u32)
                    } else {
                        (x, self.s.transfer.streams.unwrap_or(1))
                    };
                    let p = netperf_point(*self.tb.path(path), snd, rcv, buffer, streams)
                        .map_err(|e| self.s.model_error(e))?;
                    self.push(&v, series.clone(), size, vec![], size as f64 / p.throughput);
                }
            }
        }
        Ok(())
    }

    fn client_api(&mut self) -> Result<(), SimError> {
        let dirs = self
            .s
            .transfer
            .directions
            .clone()
            .unwrap_or(vec![DirectionName::Read, DirectionName::Write]);
        let buffers: Vec<u64> = self.sweep().iter().map(|(_, b)| *b).collect();
        let values: Vec<SweepValue> = self.sweep().into_iter().map(|(v, _)| v).collect();
        let size = self.s.transfer.file_size();
        for (label, path) in self.s.paths(&self.tb)? {
            for &dir in &dirs {
                let (direction, name) = match dir {
                    DirectionName::Read => (ApiDirection::Read, "read"),
                    DirectionName::Write => (ApiDirection::Write, "write"),
                };
                let pts = client_api_sweep(&self.tb, &buffers, &[path], direction, size)
                    .map_err(|e| self.s.model_error(e))?;
                for (v, p) in values.iter().zip(pts) {
                    self.push(v, format!("{label}-{name}"), size, vec![secs(p.elapsed)], secs(p.elapsed));
                }
            }
        }
        Ok(())
    }

    fn pftp_sessions(&mut self, read: bool) -> Result<(), SimError> {
        let t = &self.s.transfer;
        let stores = if read {
            t.sinks.clone().unwrap_or(vec![ClientStore::Null, ClientStore::Disk])
        } else {
            t.sources.clone().unwrap_or(vec![ClientStore::Disk])
        };
        let mover = StorageEndpoint::Disk(self.first_mover_disk()?);
        for (label, path) in self.s.paths(&self.tb)? {
            for &store in &stores {
                let client = self.store(store)?;
                let (source, sink) = if read { (mover, client) } else { (client, mover) };
                let spec = TransferSpec::new(source, sink, self.file_protocol(), path)
                    .with_size(t.file_size())
                    .with_packet(t.packet())
                    .with_overlap(t.overlap_for(store == ClientStore::Disk));
                let mut spec = spec;
                spec.pipelined = t.pipelined.unwrap_or(false);
                for (v, n) in self.sweep() {
                    let run = run_pftp_session(&self.tb, &spec, n as usize).map_err(|e| self.s.model_error(e))?;
                    self.push_run(&v, format!("{label}-{}", store.label()), &run);
                }
            }
        }
        Ok(())
    }

    fn tape(&mut self) -> Result<(), SimError> {
        let lib = self.s.library.build().map_err(|e| self.s.model_error(e))?;
        let placements = self
            .s
            .library
            .placements
            .clone()
            .unwrap_or(vec![PlacementName::Offdrive, PlacementName::Premounted]);
        let size = self.s.transfer.file_size();
        for p in placements {
            for (v, n) in self.sweep() {
                let (lib, files) =
                    one_file_per_cartridge(&lib, n as usize, size, p.into()).map_err(|e| self.s.model_error(e))?;
                let reqs: Vec<_> = files.iter().map(|f| (*f, SimTime::ZERO)).collect();
                let run = simulate_tape_reads(&lib, &reqs).map_err(|e| self.s.model_error(e))?;
                let elapsed = run.completions.iter().map(|c| secs(c.completed)).collect();
                self.push(&v, p.label().into(), run.total_bytes(), elapsed, secs(run.makespan));
            }
        }
        Ok(())
    }

    fn relay(&mut self) -> Result<(), SimError> {
        let agreement = self.agreement()?;
        self.apply_sbuf(&agreement);
        let t = &self.s.transfer;
        let data_host = self.tb.host_id(self.s.data_host()).map_err(|e| self.s.model_error(e))?;
        let pftpd = self
            .tb
            .host_id(self.s.dialect_cfg().pftpd_host())
            .map_err(|e| self.s.model_error(e))?;
        let disks = self.tb.host(data_host).disks.len();
        if disks == 0 {
            return Err(self.s.invalid("transfer.data_host", "data host has no disks"));
        }
        let series = t
            .series
            .clone()
            .unwrap_or(vec![RelaySeries::Direct, RelaySeries::Colocated, RelaySeries::Relay]);
        let streams = agreement.usable_streams(t.streams.unwrap_or(1));
        let sink = StorageEndpoint::Null(self.client()?);
        for (label, path) in self.s.paths(&self.tb)? {
            for &ser in &series {
                let deployment = match ser {
                    RelaySeries::Direct => PftpdDeployment::KerberosOnCore,
                    RelaySeries::Colocated => PftpdDeployment::Gsi { host: data_host },
                    RelaySeries::Relay => PftpdDeployment::Gsi { host: pftpd },
                };
                let data_path = hsmsim_core::dialect::select_data_path(deployment, data_host);
                for (v, n) in self.sweep() {
                    let specs: Vec<TransferSpec> = (0..n as usize)
                        .map(|i| {
                            let mut s = TransferSpec::new(
                                StorageEndpoint::Disk(DiskRef {
                                    host: data_host,
                                    index: i % disks,
                                }),
                                sink,
                                ProtocolKind::PdataPush,
                                path,
                            )
                            .with_size(t.file_size())
                            .with_data_path(data_path);
                            s.streams = streams;
                            s
                        })
                        .collect();
                    let run = run_transfers(&self.tb, &specs).map_err(|e| self.s.model_error(e))?;
                    self.push_run(&v, format!("{label}-{}", ser.label()), &run);
                }
            }
        }
        Ok(())
    }

    fn stage_in(&mut self) -> Result<(), SimError> {
        let text = self.s.job_text.as_deref().expect("validated");
        let (doc, warnings) = parse_xrsl_with_warnings(text).map_err(|e| self.s.model_error(e))?;
        self.notes.extend(warnings.iter().map(|w| format!("job: {w}")));
        let stage = extract_stage_ins(&doc).map_err(|e| self.s.model_error(e))?;
        self.notes.extend(stage.diagnostics.iter().map(|d| format!("job: {d}")));
        let agreement = self.agreement()?;
        self.apply_sbuf(&agreement);
        let cfg = self.s.dialect_cfg();
        let deployment = cfg.deployment(&self.tb).map_err(|e| self.s.model_error(e))?;
        let pftpd = self.tb.host_id(cfg.pftpd_host()).map_err(|e| self.s.model_error(e))?;
        let other = self
            .tb
            .movers()
            .into_iter()
            .find(|m| *m != pftpd)
            .ok_or_else(|| self.s.invalid("topology.movers", "separated placement needs a second mover"))?;
        let t = &self.s.transfer;
        let mut ctx = StageInContext::new(deployment, self.client_disk()?, self.s.paths(&self.tb)?[0].1);
        ctx.streams = agreement.usable_streams(t.pwidth.unwrap_or(1));
        ctx.overlap = t.overlap_for(true);
        let label = self.s.path_labels()[0].clone();
        for v in self.s.sweep.values.clone() {
            let host = match &v {
                SweepValue::Text(t) if t == "separated" => other,
                _ => pftpd,
            };
            let mut tb = self.tb.clone();
            let disk = tb.disk_ref(host, 0).map_err(|e| self.s.model_error(e))?;
            for r in &stage.requests {
                tb.place_file(&r.url.path, disk);
            }
            let specs: Vec<TransferSpec> = stage_in_to_transfers(&stage.requests, &tb, &ctx)
                .map_err(|e| self.s.model_error(e))?
                .into_iter()
                .map(|s| s.with_size(t.file_size()).with_packet(t.packet()))
                .collect();
            if specs.is_empty() {
                self.notes.push(format!("{v}: no routable stage-in requests"));
                continue;
            }
            let route = match specs[0].effective_data_path() {
                DataPath::Direct => "direct",
                DataPath::Relay { .. } => "relay",
            };
            let run = run_transfers(&tb, &specs).map_err(|e| self.s.model_error(e))?;
            self.push_run(&v, format!("{label}-{route}"), &run);
        }
        Ok(())
    }
}

fn run_once(s: &Scenario) -> Result<ScenarioResult, SimError> {
    let mut ctx = Ctx {
        s,
        tb: s.testbed()?,
        rows: Vec::new(),
        notes: Vec::new(),
    };
    match s.kind {
        Kind::Netperf => ctx.netperf(false)?,
        Kind::Streams => ctx.netperf(true)?,
        Kind::ClientApi => ctx.client_api()?,
        Kind::PftpRead => ctx.pftp_sessions(true)?,
        Kind::PftpWrite => ctx.pftp_sessions(false)?,
        Kind::Tape => ctx.tape()?,
        Kind::Relay => ctx.relay()?,
        Kind::XrslStagein => ctx.stage_in()?,
    }
    Ok(ScenarioResult {
        id: s.id.clone(),
        kind: s.kind,
        rows: ctx.rows,
        notes: ctx.notes,
    })
}

/// Runs a scenario `repetitions` times; all repetitions must agree.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioResult, SimError> {
    let first = run_once(s)?;
    for _ in 1..s.repetitions {
        if run_once(s)? != first {
            return Err(s.invalid("repetitions", "repeated runs disagree"));
        }
    }
    Ok(first)
}

/// Runs scenarios on up to `jobs` threads. Results come back in input order
/// regardless of scheduling.
pub fn run_suite(scenarios: &[Scenario], jobs: usize) -> Result<Vec<ScenarioResult>, SimError> {
    let jobs = jobs.clamp(1, scenarios.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ScenarioResult, SimError>>>> =
        scenarios.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(s) = scenarios.get(i) else { break };
                log::info!("running {}", s.id);
                let r = run_scenario(s);
                *slots[i].lock().expect("no panics while holding the lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("lock not poisoned").expect("every slot filled"))
        .collect()
}
