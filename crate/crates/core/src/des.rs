//! Deterministic discrete-event engine.
//!
//! The engine owns the virtual clock and the pending-event queue. Model state
//! lives in a separate [`Handler`] so that handlers can schedule follow-up
//! events while they run. Events are totally ordered by `(fire_at, seq)`;
//! `seq` is assigned from a per-engine counter, so events due at the same
//! instant are delivered in the order they were scheduled.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::time::{SimDuration, SimTime, TimeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesError {
    #[error("invalid delay: {0}")]
    Delay(#[from] TimeError),
    #[error("event scheduled at {at} but the clock already reads {now}")]
    ScheduledInPast { at: SimTime, now: SimTime },
    #[error("engine has been finalized")]
    Finalized,
    #[error("unknown entity {0:?}")]
    UnknownEntity(EntityId),
}

/// Identifies a registered simulation entity (a mover, a drive, a transfer...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(u32);

impl EntityId {
    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

/// Unique per-run identifier of a scheduled event. Doubles as the FIFO tiebreaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(u64);

impl EventId {
    pub const fn seq(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub id: EventId,
    pub fire_at: SimTime,
    pub target: EntityId,
    pub payload: P,
}

/// One delivered event, as recorded when tracing is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: EntityId,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub scheduled: u64,
    pub delivered: u64,
    pub cancelled: u64,
}

// Min-heap adapter: BinaryHeap is a max-heap, so the ordering is reversed.
struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.id == other.0.id
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .fire_at
            .cmp(&self.0.fire_at)
            .then_with(|| other.0.id.cmp(&self.0.id))
    }
}

/// Model state driven by an [`Engine`].
pub trait Handler<P> {
    type Error: From<DesError>;

    fn handle(&mut self, engine: &mut Engine<P>, event: Event<P>) -> Result<(), Self::Error>;
}

pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<P>>,
    pending: BTreeSet<u64>,
    entities: Vec<String>,
    stats: EngineStats,
    trace: Option<Vec<TraceEntry>>,
    finalized: bool,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            pending: BTreeSet::new(),
            entities: Vec::new(),
            stats: EngineStats::default(),
            trace: None,
            finalized: false,
        }
    }

    /// Records every delivered event; used by replay tests.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn register(&mut self, name: impl Into<String>) -> EntityId {
        let id = EntityId(u32::try_from(self.entities.len()).expect("too many entities"));
        self.entities.push(name.into());
        id
    }

    pub fn entity_name(&self, id: EntityId) -> Option<&str> {
        self.entities.get(id.index()).map(String::as_str)
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn stats(&self) -> EngineStats {
        self.stats
    }

    pub fn trace(&self) -> &[TraceEntry] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn schedule(
        &mut self,
        delay: SimDuration,
        target: EntityId,
        payload: P,
    ) -> Result<EventId, DesError> {
        let at = self.now + delay;
        self.schedule_at(at, target, payload)
    }

    /// Like [`Engine::schedule`] with the delay given in seconds. Negative or
    /// non-finite delays are rejected.
    pub fn schedule_secs(
        &mut self,
        delay_secs: f64,
        target: EntityId,
        payload: P,
    ) -> Result<EventId, DesError> {
        let delay = SimDuration::from_secs_f64(delay_secs)?;
        self.schedule(delay, target, payload)
    }

    pub fn schedule_at(
        &mut self,
        at: SimTime,
        target: EntityId,
        payload: P,
    ) -> Result<EventId, DesError> {
        if self.finalized {
            return Err(DesError::Finalized);
        }
        if at < self.now {
            return Err(DesError::ScheduledInPast { at, now: self.now });
        }
        if target.index() >= self.entities.len() {
            return Err(DesError::UnknownEntity(target));
        }
        let id = EventId(self.next_seq);
        self.next_seq += 1;
        self.pending.insert(id.0);
        self.stats.scheduled += 1;
        self.queue.push(Queued(Event {
            id,
            fire_at: at,
            target,
            payload,
        }));
        Ok(id)
    }

    /// Cancels a pending event. Returns `false` if it was already delivered or cancelled.
    pub fn cancel(&mut self, id: EventId) -> bool {
        let was_pending = self.pending.remove(&id.0);
        if was_pending {
            self.stats.cancelled += 1;
        }
        was_pending
    }

    /// Removes the next live event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event<P>> {
        while let Some(Queued(event)) = self.queue.pop() {
            if !self.pending.remove(&event.id.0) {
                continue;
            }
            debug_assert!(event.fire_at >= self.now);
            self.now = event.fire_at;
            self.stats.delivered += 1;
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceEntry {
                    fire_at: event.fire_at,
                    seq: event.id.0,
                    target: event.target,
                });
            }
            return Some(event);
        }
        None
    }

    /// Delivers events until the queue is empty and returns the final clock value.
    /// The first handler error aborts the run.
    pub fn run_until_idle<H: Handler<P>>(&mut self, handler: &mut H) -> Result<SimTime, H::Error> {
        while let Some(event) = self.pop() {
            handler.handle(self, event)?;
        }
        Ok(self.now)
    }

    /// Rejects any further scheduling.
    pub fn finalize(&mut self) {
        self.finalized = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[derive(Default)]
    struct Recorder {
        seen: Vec<(SimTime, u32)>,
    }

    impl Handler<u32> for Recorder {
        type Error = DesError;

        fn handle(&mut self, _: &mut Engine<u32>, event: Event<u32>) -> Result<(), DesError> {
            self.seen.push((event.fire_at, event.payload));
            Ok(())
        }
    }

    #[test]
    fn empty_queue_returns_zero() {
        let mut engine = Engine::<u32>::new();
        assert_eq!(engine.run_until_idle(&mut Recorder::default()).unwrap(), SimTime::ZERO);
    }

    #[test]
    fn single_event_advances_clock() {
        let mut engine = Engine::new();
        let e = engine.register("e");
        engine.schedule_secs(1.0, e, 7).unwrap();
        let end = engine.run_until_idle(&mut Recorder::default()).unwrap();
        assert_eq!(end, SimTime::from_micros(1_000_000));
    }

    #[test]
    fn delivery_reads_scheduled_time() {
        let mut engine = Engine::new();
        let mover = engine.register("mover");
        engine.schedule_secs(3.5e-3, mover, 1).unwrap();
        let mut rec = Recorder::default();
        engine.run_until_idle(&mut rec).unwrap();
        assert_eq!(rec.seen, vec![(SimTime::from_micros(3_500), 1)]);
    }

    #[test]
    fn equal_timestamps_are_fifo() {
        let mut engine = Engine::new();
        let e = engine.register("e");
        engine.schedule(SimDuration::ZERO, e, 1).unwrap();
        engine.schedule(SimDuration::ZERO, e, 2).unwrap();
        engine.schedule(SimDuration::ZERO, e, 3).unwrap();
        let mut rec = Recorder::default();
        engine.run_until_idle(&mut rec).unwrap();
        let order: Vec<u32> = rec.seen.iter().map(|s| s.1).collect();
        assert_eq!(order, vec![1, 2, 3]);
    }

    #[test]
    fn negative_delay_is_rejected() {
        let mut engine = Engine::new();
        let e = engine.register("e");
        assert!(matches!(engine.schedule_secs(-0.5, e, 0), Err(DesError::Delay(_))));
        assert_eq!(engine.stats().scheduled, 0);
    }

    struct PastScheduler(EntityId);

    impl Handler<u32> for PastScheduler {
        type Error = DesError;

        fn handle(&mut self, engine: &mut Engine<u32>, event: Event<u32>) -> Result<(), DesError> {
            let earlier = SimTime::from_micros(event.fire_at.as_micros() - 1);
            engine.schedule_at(earlier, self.0, 0)?;
            Ok(())
        }
    }

    #[test]
    fn scheduling_into_the_past_aborts_the_run() {
        let mut engine = Engine::new();
        let e = engine.register("e");
        engine.schedule_secs(1.0, e, 0).unwrap();
        let err = engine.run_until_idle(&mut PastScheduler(e)).unwrap_err();
        assert!(matches!(err, DesError::ScheduledInPast { .. }));
    }

    #[test]
    fn cancelled_events_are_not_delivered() {
        let mut engine = Engine::new();
        let e = engine.register("e");
        let a = engine.schedule_secs(1.0, e, 1).unwrap();
        engine.schedule_secs(2.0, e, 2).unwrap();
        assert!(engine.cancel(a));
        assert!(!engine.cancel(a));
        let mut rec = Recorder::default();
        engine.run_until_idle(&mut rec).unwrap();
        assert_eq!(rec.seen.len(), 1);
        let stats = engine.stats();
        assert_eq!(stats.scheduled, stats.delivered + stats.cancelled);
    }

    #[test]
    fn finalized_engine_rejects_scheduling() {
        let mut engine = Engine::new();
        let e = engine.register("e");
        engine.finalize();
        assert_eq!(engine.schedule_secs(0.0, e, 0), Err(DesError::Finalized));
    }

    #[test]
    fn unknown_target_is_rejected() {
        let mut other = Engine::<u32>::new();
        let foreign = other.register("x");
        let mut engine = Engine::<u32>::new();
        assert_eq!(
            engine.schedule_secs(0.0, foreign, 0),
            Err(DesError::UnknownEntity(foreign))
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        // Oracle: stable sort of (time, insertion index) over the same inputs.
        #[test]
        fn delivery_order_matches_sorted_list(times in proptest::collection::vec(0u64..20, 1..40)) {
            let mut engine = Engine::new();
            let e = engine.register("e");
            for (i, t) in times.iter().enumerate() {
                engine.schedule(SimDuration::from_micros(*t), e, i as u32).unwrap();
            }
            let mut rec = Recorder::default();
            engine.run_until_idle(&mut rec).unwrap();

            let mut oracle: Vec<(u64, u32)> =
                times.iter().enumerate().map(|(i, t)| (*t, i as u32)).collect();
            oracle.sort_by_key(|&(t, _)| t);
            let got: Vec<(u64, u32)> =
                rec.seen.iter().map(|(t, p)| (t.as_micros(), *p)).collect();
            prop_assert_eq!(got, oracle);
            prop_assert!(rec.seen.windows(2).all(|w| w[0].0 <= w[1].0));
        }
    }
}
