//! Fluid-flow execution of transfers on the event engine.
//!
//! Each transfer walks a per-packet plan of stages. A header stage is a pure
//! delay of one round trip. Data stages become flows competing for host
//! NIC/CPU caps, path capacity and disks; every time the set of active flows
//! changes, rates are recomputed with the weighted max-min allocator.
//! Reallocation is deferred to a zero-delay event so that all changes at one
//! instant are folded into a single recomputation.

use alloc::vec;
use alloc::vec::Vec;

use crate::des::{Engine, EntityId, Event, EventId, Handler, TraceEntry};
use crate::fair::{max_min_allocate, FlowDemand};
use crate::testbed::{DiskRef, HostId, HostRole, PathId, Testbed};
use crate::time::{SimDuration, SimTime};

use super::{DataPath, Overlap, ProtocolError, ProtocolKind, StorageEndpoint, TransferSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionEvent {
    Admit,
    HeaderDone { transfer: usize },
    FlowsDue,
    Reallocate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferOutcome {
    /// When the transfer got its disks and started; later than zero only when
    /// it queued behind another transfer on an exclusive disk.
    pub admitted: SimTime,
    pub completed: SimTime,
    pub bytes: u64,
    pub packets: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRun {
    pub outcomes: Vec<TransferOutcome>,
    pub makespan: SimTime,
    pub events: u64,
}

impl SessionRun {
    pub fn total_bytes(&self) -> u64 {
        self.outcomes.iter().map(|o| o.bytes).sum()
    }

    /// Bytes over makespan.
    pub fn aggregate_throughput(&self) -> f64 {
        let secs = self.makespan.as_secs_f64();
        if secs == 0.0 {
            f64::INFINITY
        } else {
            self.total_bytes() as f64 / secs
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Header,
    Read,
    Network,
    Write,
    Combined,
}

struct Plan {
    stages: Vec<Stage>,
    unit: u64,
    streams: u32,
    rtt: SimDuration,
    pipelined: bool,
    net_uses: Vec<(usize, f64)>,
    substream_cap: f64,
    src_disk: Option<usize>,
    sink_disk: Option<usize>,
    exclusive: Vec<usize>,
}

struct Progress {
    size: u64,
    sent: u64,
    current: u64,
    stage: usize,
    outstanding: usize,
    packets: u64,
    admitted: Option<SimTime>,
    completed: Option<SimTime>,
}

struct Flow {
    transfer: usize,
    remaining: f64,
    demand: FlowDemand,
    rate: f64,
    /// `None` until the next reallocation has assigned a rate.
    due: Option<SimTime>,
}

struct Resources {
    path_base: usize,
    disk_base: Vec<usize>,
    count: usize,
}

impl Resources {
    fn new(tb: &Testbed) -> Self {
        let hosts = tb.hosts().count();
        let path_base = hosts;
        let mut next = hosts + tb.path_count();
        let disk_base = tb
            .hosts()
            .map(|(_, h)| {
                let base = next;
                next += h.disks.len();
                base
            })
            .collect();
        Self {
            path_base,
            disk_base,
            count: next,
        }
    }

    fn host(&self, h: HostId) -> usize {
        h.0
    }

    fn path(&self, p: PathId) -> usize {
        self.path_base + p.0
    }

    fn disk(&self, d: DiskRef) -> usize {
        self.disk_base[d.host.0] + d.index
    }
}

struct Session<'a> {
    testbed: &'a Testbed,
    res: Resources,
    disk_of: Vec<Option<DiskRef>>,
    plans: Vec<Plan>,
    progress: Vec<Progress>,
    waiting: Vec<usize>,
    open: Vec<usize>,
    busy: Vec<bool>,
    flows: Vec<Flow>,
    last_update: SimTime,
    realloc_pending: bool,
    due_event: Option<EventId>,
    entity: EntityId,
}

fn check_host(tb: &Testbed, h: HostId) -> Result<(), ProtocolError> {
    if h.0 < tb.hosts().count() {
        Ok(())
    } else {
        Err(ProtocolError::UnknownHost(h))
    }
}

fn check_endpoint(tb: &Testbed, e: &StorageEndpoint) -> Result<(), ProtocolError> {
    check_host(tb, e.host())?;
    if let Some(d) = e.disk() {
        if d.index >= tb.host(d.host).disks.len() {
            return Err(ProtocolError::UnknownDisk(d));
        }
    }
    Ok(())
}

impl<'a> Session<'a> {
    fn new(
        testbed: &'a Testbed,
        specs: &[TransferSpec],
        engine: &mut Engine<SessionEvent>,
    ) -> Result<Self, ProtocolError> {
        let res = Resources::new(testbed);
        let mut disk_of = vec![None; res.count];
        for (h, host) in testbed.hosts() {
            for index in 0..host.disks.len() {
                let d = DiskRef { host: h, index };
                disk_of[res.disk(d)] = Some(d);
            }
        }
        let mut plans = Vec::with_capacity(specs.len());
        let mut progress = Vec::with_capacity(specs.len());
        for spec in specs {
            spec.validate()?;
            check_endpoint(testbed, &spec.source)?;
            check_endpoint(testbed, &spec.sink)?;
            if spec.path.0 >= testbed.path_count() {
                return Err(ProtocolError::UnknownPath(spec.path));
            }
            plans.push(Self::plan(testbed, &res, spec)?);
            progress.push(Progress {
                size: spec.size,
                sent: 0,
                current: 0,
                stage: 0,
                outstanding: 0,
                packets: 0,
                admitted: None,
                completed: None,
            });
        }
        let count = res.count;
        Ok(Self {
            testbed,
            res,
            disk_of,
            plans,
            progress,
            waiting: (0..specs.len()).collect(),
            open: vec![0; count],
            busy: vec![false; count],
            flows: Vec::new(),
            last_update: SimTime::ZERO,
            realloc_pending: false,
            due_event: None,
            entity: engine.register("session"),
        })
    }

    fn plan(tb: &Testbed, res: &Resources, spec: &TransferSpec) -> Result<Plan, ProtocolError> {
        let path = tb.path(spec.path);
        let src = spec.source.host();
        let dst = spec.sink.host();
        let mut net_uses = vec![(res.host(src), 1.0), (res.host(dst), 1.0), (res.path(spec.path), 1.0)];
        let sender = match spec.effective_data_path() {
            DataPath::Direct => src,
            DataPath::Relay { via } => {
                check_host(tb, via)?;
                // Inbound and outbound legs both cross the relay's NIC.
                net_uses.push((res.host(via), 2.0));
                via
            }
        };
        let window = tb.host(sender).tcp_buffer.min(tb.host(dst).tcp_buffer);
        let substream_cap = window as f64 / path.rtt() * path.loss_factor();

        let src_disk = spec.source.disk().map(|d| res.disk(d));
        let sink_disk = spec.sink.disk().map(|d| res.disk(d));
        let exclusive = [spec.source.disk(), spec.sink.disk()]
            .into_iter()
            .flatten()
            .filter(|d| tb.disk(*d).is_exclusive())
            .map(|d| res.disk(d))
            .collect();

        let mut stages = vec![Stage::Header];
        let unit = match spec.request_unit() {
            Some(unit) => {
                match spec.overlap {
                    Overlap::Parallel => stages.push(Stage::Combined),
                    Overlap::Serial => {
                        if src_disk.is_some() {
                            stages.push(Stage::Read);
                        }
                        stages.push(Stage::Network);
                        if sink_disk.is_some() {
                            stages.push(Stage::Write);
                        }
                    }
                }
                unit
            }
            None => {
                // Push streams the whole file after one setup round trip.
                stages.push(Stage::Combined);
                spec.size
            }
        };
        let streams = match spec.protocol {
            ProtocolKind::Pftp { pwidth } => pwidth,
            _ => spec.streams,
        };
        Ok(Plan {
            stages,
            unit,
            streams,
            rtt: SimDuration::from_secs_f64(path.rtt()).map_err(crate::des::DesError::from)?,
            pipelined: spec.pipelined,
            net_uses,
            substream_cap,
            src_disk,
            sink_disk,
            exclusive,
        })
    }

    fn try_admit(&mut self, engine: &mut Engine<SessionEvent>) -> Result<(), ProtocolError> {
        let mut claimed = vec![false; self.res.count];
        let mut still_waiting = Vec::new();
        let mut admitted = Vec::new();
        for &t in &self.waiting {
            let plan = &self.plans[t];
            let free = plan.exclusive.iter().all(|&d| !self.busy[d] && !claimed[d]);
            if free {
                for &d in &plan.exclusive {
                    self.busy[d] = true;
                }
                admitted.push(t);
            } else {
                for &d in &plan.exclusive {
                    claimed[d] = true;
                }
                still_waiting.push(t);
            }
        }
        self.waiting = still_waiting;
        for t in admitted {
            let plan = &self.plans[t];
            for d in plan.src_disk.into_iter().chain(plan.sink_disk) {
                self.open[d] += 1;
            }
            let p = &mut self.progress[t];
            p.admitted = Some(engine.now());
            p.current = plan.unit.min(p.size);
            p.stage = 0;
            self.run_stage(engine, t)?;
        }
        Ok(())
    }

    fn run_stage(&mut self, engine: &mut Engine<SessionEvent>, t: usize) -> Result<(), ProtocolError> {
        let plan = &self.plans[t];
        let p = &mut self.progress[t];
        let stage = plan.stages[p.stage];
        let bytes = p.current as f64;
        match stage {
            Stage::Header => {
                engine.schedule(plan.rtt, self.entity, SessionEvent::HeaderDone { transfer: t })?;
                return Ok(());
            }
            Stage::Read | Stage::Write => {
                let disk = if stage == Stage::Read {
                    plan.src_disk
                } else {
                    plan.sink_disk
                };
                let disk = disk.expect("disk stage planned only with a disk");
                self.flows.push(Flow {
                    transfer: t,
                    remaining: bytes,
                    demand: FlowDemand::new(f64::INFINITY).using(disk, 1.0),
                    rate: 0.0,
                    due: None,
                });
                p.outstanding = 1;
            }
            Stage::Network | Stage::Combined => {
                let mut uses = plan.net_uses.clone();
                if stage == Stage::Combined {
                    uses.extend(plan.src_disk.map(|d| (d, 1.0)));
                    uses.extend(plan.sink_disk.map(|d| (d, 1.0)));
                }
                let per_stream = bytes / plan.streams as f64;
                for _ in 0..plan.streams {
                    self.flows.push(Flow {
                        transfer: t,
                        remaining: per_stream,
                        demand: FlowDemand {
                            cap: plan.substream_cap,
                            uses: uses.clone(),
                        },
                        rate: 0.0,
                        due: None,
                    });
                }
                p.outstanding = plan.streams as usize;
            }
        }
        self.request_realloc(engine)
    }

    fn advance_stage(&mut self, engine: &mut Engine<SessionEvent>, t: usize) -> Result<(), ProtocolError> {
        let plan = &self.plans[t];
        let p = &mut self.progress[t];
        p.stage += 1;
        if p.stage < plan.stages.len() {
            return self.run_stage(engine, t);
        }
        p.sent += p.current;
        p.packets += 1;
        if p.sent == p.size {
            return self.complete(engine, t);
        }
        p.current = plan.unit.min(p.size - p.sent);
        p.stage = if plan.pipelined { 1 } else { 0 };
        self.run_stage(engine, t)
    }

    fn complete(&mut self, engine: &mut Engine<SessionEvent>, t: usize) -> Result<(), ProtocolError> {
        self.progress[t].completed = Some(engine.now());
        let plan = &self.plans[t];
        for &d in &plan.exclusive {
            self.busy[d] = false;
        }
        for d in plan.src_disk.into_iter().chain(plan.sink_disk) {
            self.open[d] -= 1;
        }
        self.try_admit(engine)
    }

    fn request_realloc(&mut self, engine: &mut Engine<SessionEvent>) -> Result<(), ProtocolError> {
        if !self.realloc_pending {
            self.realloc_pending = true;
            engine.schedule(SimDuration::ZERO, self.entity, SessionEvent::Reallocate)?;
        }
        Ok(())
    }

    fn advance_flows(&mut self, now: SimTime) {
        let dt = (now - self.last_update).as_secs_f64();
        if dt > 0.0 {
            for f in &mut self.flows {
                if f.rate.is_finite() {
                    f.remaining -= f.rate * dt;
                }
            }
        }
        self.last_update = now;
    }

    fn capacities(&self) -> Vec<f64> {
        let mut caps = vec![f64::INFINITY; self.res.count];
        for (h, host) in self.testbed.hosts() {
            caps[self.res.host(h)] = host.cpu_cap;
        }
        for p in 0..self.testbed.path_count() {
            caps[self.res.path(PathId(p))] = self.testbed.path(PathId(p)).capacity();
        }
        for (i, d) in self.disk_of.iter().enumerate() {
            if let Some(d) = d {
                let disk = self.testbed.disk(*d);
                caps[i] = disk
                    .aggregate_rate(self.open[i].max(1))
                    .expect("stream count clamped to at least one");
            }
        }
        caps
    }

    fn reallocate(&mut self, engine: &mut Engine<SessionEvent>) -> Result<(), ProtocolError> {
        self.realloc_pending = false;
        let now = engine.now();
        self.advance_flows(now);
        if let Some(id) = self.due_event.take() {
            engine.cancel(id);
        }
        if self.flows.is_empty() {
            return Ok(());
        }
        let demands: Vec<FlowDemand> = self.flows.iter().map(|f| f.demand.clone()).collect();
        let rates = max_min_allocate(&demands, &self.capacities());
        let mut next = None::<SimTime>;
        for (f, rate) in self.flows.iter_mut().zip(rates) {
            f.rate = rate;
            let secs = if rate.is_infinite() || f.remaining <= 0.0 {
                0.0
            } else {
                f.remaining / rate
            };
            let due = now + SimDuration::from_secs_f64(secs).map_err(crate::des::DesError::from)?;
            f.due = Some(due);
            next = Some(next.map_or(due, |n| n.min(due)));
        }
        let at = next.expect("non-empty flow set");
        self.due_event = Some(engine.schedule_at(at, self.entity, SessionEvent::FlowsDue)?);
        Ok(())
    }

    fn flows_due(&mut self, engine: &mut Engine<SessionEvent>) -> Result<(), ProtocolError> {
        self.due_event = None;
        let now = engine.now();
        self.advance_flows(now);
        let mut finished = Vec::new();
        self.flows.retain(|f| {
            if f.due.is_some_and(|d| d <= now) {
                finished.push(f.transfer);
                false
            } else {
                true
            }
        });
        for t in finished {
            let p = &mut self.progress[t];
            p.outstanding -= 1;
            if p.outstanding == 0 {
                self.advance_stage(engine, t)?;
            }
        }
        self.request_realloc(engine)
    }

    fn finish(self, engine: &Engine<SessionEvent>) -> SessionRun {
        let outcomes: Vec<TransferOutcome> = self
            .progress
            .iter()
            .map(|p| {
                debug_assert_eq!(p.sent, p.size, "bytes delivered must equal file size");
                TransferOutcome {
                    admitted: p.admitted.expect("every transfer is admitted"),
                    completed: p.completed.expect("every transfer completes"),
                    bytes: p.sent,
                    packets: p.packets,
                }
            })
            .collect();
        let makespan = outcomes
            .iter()
            .map(|o| o.completed)
            .max()
            .unwrap_or(SimTime::ZERO);
        SessionRun {
            outcomes,
            makespan,
            events: engine.stats().delivered,
        }
    }
}

impl Handler<SessionEvent> for Session<'_> {
    type Error = ProtocolError;

    fn handle(
        &mut self,
        engine: &mut Engine<SessionEvent>,
        event: Event<SessionEvent>,
    ) -> Result<(), ProtocolError> {
        match event.payload {
            SessionEvent::Admit => self.try_admit(engine),
            SessionEvent::HeaderDone { transfer } => self.advance_stage(engine, transfer),
            SessionEvent::Reallocate => self.reallocate(engine),
            SessionEvent::FlowsDue => self.flows_due(engine),
        }
    }
}

fn execute(
    testbed: &Testbed,
    specs: &[TransferSpec],
    mut engine: Engine<SessionEvent>,
) -> Result<(SessionRun, Engine<SessionEvent>), ProtocolError> {
    let mut session = Session::new(testbed, specs, &mut engine)?;
    engine.schedule(SimDuration::ZERO, session.entity, SessionEvent::Admit)?;
    engine.run_until_idle(&mut session)?;
    let run = session.finish(&engine);
    Ok((run, engine))
}

/// Runs every transfer from time zero until all complete.
pub fn run_transfers(testbed: &Testbed, specs: &[TransferSpec]) -> Result<SessionRun, ProtocolError> {
    execute(testbed, specs, Engine::new()).map(|(run, _)| run)
}

/// [`run_transfers`] plus the delivered event trace.
pub fn run_transfers_traced(
    testbed: &Testbed,
    specs: &[TransferSpec],
) -> Result<(SessionRun, Vec<TraceEntry>), ProtocolError> {
    let (run, engine) = execute(testbed, specs, Engine::new().with_trace())?;
    Ok((run, engine.trace().to_vec()))
}

/// `concurrent_files` copies of `spec`, with whichever endpoint sits on a
/// mover disk spread round-robin over all mover disks.
pub fn run_pftp_session(
    testbed: &Testbed,
    spec: &TransferSpec,
    concurrent_files: usize,
) -> Result<SessionRun, ProtocolError> {
    if concurrent_files == 0 {
        return Err(ProtocolError::NoFiles);
    }
    let pool = testbed.mover_disks_round_robin();
    let on_mover = |e: &StorageEndpoint| {
        e.disk()
            .is_some_and(|d| testbed.host(d.host).role == HostRole::DiskMover)
    };
    let specs: Vec<TransferSpec> = (0..concurrent_files)
        .map(|i| {
            let mut s = *spec;
            let disk = StorageEndpoint::Disk(pool[i % pool.len()]);
            if on_mover(&s.source) {
                s.source = disk;
            } else if on_mover(&s.sink) {
                s.sink = disk;
            }
            s
        })
        .collect();
    run_transfers(testbed, &specs)
}

/// One relayed transfer; a relay through the source host runs direct.
pub fn run_relay_transfer(testbed: &Testbed, spec: &TransferSpec) -> Result<SessionRun, ProtocolError> {
    run_transfers(testbed, core::slice::from_ref(spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApiDirection {
    /// Mover disk to client memory.
    Read,
    /// Client memory to mover disk.
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApiPoint {
    pub buffer: u64,
    pub path: PathId,
    pub direction: ApiDirection,
    pub throughput: f64,
    pub elapsed: SimTime,
}

/// Client-API transfers of `size` bytes for every (path, buffer) pair.
pub fn client_api_sweep(
    testbed: &Testbed,
    buffers: &[u64],
    paths: &[PathId],
    direction: ApiDirection,
    size: u64,
) -> Result<Vec<ApiPoint>, ProtocolError> {
    if buffers.is_empty() || paths.is_empty() {
        return Err(ProtocolError::EmptySweep);
    }
    let client = testbed
        .first_of_role(HostRole::Client)
        .ok_or_else(|| crate::testbed::TestbedError::UnknownHost("client".into()))?;
    let disk = *testbed
        .mover_disks_round_robin()
        .first()
        .ok_or_else(|| crate::testbed::TestbedError::UnknownHost("mover".into()))?;
    let mut out = Vec::with_capacity(buffers.len() * paths.len());
    for &path in paths {
        for &buffer in buffers {
            let (source, sink) = match direction {
                ApiDirection::Read => (StorageEndpoint::Disk(disk), StorageEndpoint::Memory(client)),
                ApiDirection::Write => (StorageEndpoint::Memory(client), StorageEndpoint::Disk(disk)),
            };
            let spec = TransferSpec::new(source, sink, ProtocolKind::ClientApi { buffer }, path).with_size(size);
            let run = run_transfers(testbed, &[spec])?;
            out.push(ApiPoint {
                buffer,
                path,
                direction,
                throughput: run.aggregate_throughput(),
                elapsed: run.makespan,
            });
        }
    }
    Ok(out)
}
