//! Simulated component middleware: a typed publish/subscribe bus.
//!
//! Every message carries its source name and a per-source sequence number.
//! Publishing takes the bus lock for the whole fan-out, so all subscribers
//! observe one global order and per-source FIFO holds everywhere.

mod message;
pub mod robot;
pub mod tcp;
pub mod ws;

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;

pub use message::{
    validate_payload, BusMessage, ErrorPayload, MessageType, PoseCommandPayload, RatingPayload,
    RegisterPayload, StateUpdatePayload,
};

/// Name the bus uses as the source of its own ERROR replies.
pub const BUS_SOURCE: &str = "bus";
pub const DEFAULT_PORT: u16 = 7451;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// A clock stuck at one instant. Used for reproducible offline runs.
#[derive(Debug, Default, Clone, Copy)]
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_ms(&self) -> u64 {
        self.0
    }
}

/// Number of subscribers a message reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub delivered: usize,
}

/// A rejected publish. [`BusError::reply`] holds the ERROR message sent back
/// to the publisher.
#[derive(Debug, Clone, PartialEq)]
pub struct BusError {
    pub reason: String,
    pub reply: BusMessage,
}

impl std::fmt::Display for BusError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.reason)
    }
}

impl std::error::Error for BusError {}

struct Subscriber {
    id: u64,
    types: BTreeSet<MessageType>,
    tx: Sender<BusMessage>,
}

struct BusInner {
    // source -> last accepted seq
    sources: HashMap<String, Option<u64>>,
    subscribers: Vec<Subscriber>,
    next_sub_id: u64,
    error_seq: u64,
    log: Option<Box<dyn Write + Send>>,
}

pub struct Bus {
    inner: Mutex<BusInner>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Bus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bus").finish_non_exhaustive()
    }
}

impl Default for Bus {
    fn default() -> Self {
        Self::new(Arc::new(SystemClock))
    }
}

impl Bus {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self {
            inner: Mutex::new(BusInner {
                sources: HashMap::new(),
                subscribers: Vec::new(),
                next_sub_id: 0,
                error_seq: 0,
                log: None,
            }),
            clock,
        }
    }

    /// Appends every accepted message and every ERROR reply to `sink` as one
    /// JSON line. The log is not a subscriber and does not count toward
    /// receipts.
    pub fn set_log(&self, sink: Box<dyn Write + Send>) {
        self.lock().log = Some(sink);
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    fn lock(&self) -> MutexGuard<'_, BusInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn is_registered(&self, source: &str) -> bool {
        self.lock().sources.contains_key(source)
    }

    /// Registers a source and returns a handle that stamps its messages.
    /// A REGISTER message is published on its behalf with seq 0.
    pub fn publisher(self: &Arc<Self>, name: impl Into<String>) -> Result<Publisher, BusError> {
        let mut p = Publisher {
            bus: Arc::clone(self),
            name: name.into(),
            next_seq: 0,
        };
        p.send(MessageType::Register, RegisterPayload::default())?;
        Ok(p)
    }

    pub fn subscribe(&self, types: &[MessageType]) -> Subscription {
        let (tx, rx) = mpsc::channel();
        let mut inner = self.lock();
        let id = inner.next_sub_id;
        inner.next_sub_id += 1;
        inner.subscribers.push(Subscriber {
            id,
            types: types.iter().copied().collect(),
            tx,
        });
        Subscription { id, rx }
    }

    pub fn unsubscribe(&self, sub: &Subscription) {
        self.lock().subscribers.retain(|s| s.id != sub.id);
    }

    pub fn subscriber_count(&self, kind: MessageType) -> usize {
        self.lock()
            .subscribers
            .iter()
            .filter(|s| s.types.contains(&kind))
            .count()
    }

    /// Validates and delivers `msg` to every subscriber of its type.
    ///
    /// REGISTER messages register their source and restart its sequence.
    /// Anything else from an
    /// unregistered source, with a non-increasing seq, or with a malformed
    /// payload is rejected and answered with an ERROR message.
    pub fn publish(&self, msg: BusMessage) -> Result<Receipt, BusError> {
        let mut inner = self.lock();
        if let Err(reason) = Self::admit(&mut inner, &msg) {
            let reply = self.error_reply(&mut inner, Some(&msg), &reason);
            Self::deliver(&mut inner, &reply);
            return Err(BusError { reason, reply });
        }
        inner.sources.insert(msg.source.clone(), Some(msg.seq));
        Ok(Receipt {
            delivered: Self::deliver(&mut inner, &msg),
        })
    }

    /// Builds, logs and broadcasts an ERROR reply that is not tied to a
    /// publish call, e.g. for a line that failed to parse.
    pub fn reject(&self, reason: &str, answering: Option<&BusMessage>) -> BusMessage {
        let mut inner = self.lock();
        let reply = self.error_reply(&mut inner, answering, reason);
        Self::deliver(&mut inner, &reply);
        reply
    }

    fn admit(inner: &mut BusInner, msg: &BusMessage) -> Result<(), String> {
        if msg.source.is_empty() {
            return Err("empty source".into());
        }
        match inner.sources.get(&msg.source) {
            // REGISTER (re)starts the source's sequence
            _ if msg.kind == MessageType::Register => {}
            None => {
                return Err(format!("unregistered source: {}", msg.source));
            }
            Some(Some(last)) if msg.seq <= *last => {
                return Err(format!(
                    "out-of-order seq from {}: {} after {}",
                    msg.source, msg.seq, last
                ));
            }
            _ => {}
        }
        validate_payload(msg.kind, &msg.payload)
    }

    fn error_reply(
        &self,
        inner: &mut BusInner,
        msg: Option<&BusMessage>,
        reason: &str,
    ) -> BusMessage {
        inner.error_seq += 1;
        BusMessage {
            kind: MessageType::Error,
            source: BUS_SOURCE.into(),
            seq: inner.error_seq,
            timestamp_ms: self.clock.now_ms(),
            payload: serde_json::to_value(ErrorPayload {
                reason: reason.to_string(),
                source: msg.map(|m| m.source.clone()),
                seq: msg.map(|m| m.seq),
            })
            .expect("error payload serializes"),
        }
    }

    fn deliver(inner: &mut BusInner, msg: &BusMessage) -> usize {
        if let Some(log) = inner.log.as_mut() {
            let line = serde_json::to_string(msg).expect("bus message serializes");
            if writeln!(log, "{line}").and_then(|_| log.flush()).is_err() {
                log::warn!("session log write failed");
            }
        }
        let mut delivered = 0;
        inner.subscribers.retain(|s| {
            if !s.types.contains(&msg.kind) {
                return true;
            }
            match s.tx.send(msg.clone()) {
                Ok(()) => {
                    delivered += 1;
                    true
                }
                // receiver gone
                Err(_) => false,
            }
        });
        delivered
    }
}

/// A registered source. Stamps outgoing messages with consecutive sequence
/// numbers and the bus clock.
pub struct Publisher {
    bus: Arc<Bus>,
    name: String,
    next_seq: u64,
}

impl std::fmt::Debug for Publisher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Publisher")
            .field("name", &self.name)
            .field("next_seq", &self.next_seq)
            .finish()
    }
}

impl Publisher {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bus(&self) -> &Arc<Bus> {
        &self.bus
    }

    pub fn send<P: Serialize>(
        &mut self,
        kind: MessageType,
        payload: P,
    ) -> Result<Receipt, BusError> {
        let msg = BusMessage {
            kind,
            source: self.name.clone(),
            seq: self.next_seq,
            timestamp_ms: self.bus.now_ms(),
            payload: serde_json::to_value(payload).expect("payload serializes"),
        };
        self.next_seq += 1;
        self.bus.publish(msg)
    }
}

/// The bus no longer delivers to a subscription.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unsubscribed;

/// Receiving end of a subscription. Messages arrive in bus order.
pub struct Subscription {
    id: u64,
    rx: Receiver<BusMessage>,
}

impl std::fmt::Debug for Subscription {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Subscription")
            .field("id", &self.id)
            .finish()
    }
}

impl Subscription {
    pub fn try_recv(&self) -> Option<BusMessage> {
        self.rx.try_recv().ok()
    }

    /// `Ok(None)` on timeout, `Err` once the bus has dropped this
    /// subscription.
    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<BusMessage>, Unsubscribed> {
        match self.rx.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(Unsubscribed),
        }
    }

    /// Everything queued right now.
    pub fn drain(&self) -> Vec<BusMessage> {
        std::iter::from_fn(|| self.try_recv()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::thread;

    fn bus() -> Arc<Bus> {
        Arc::new(Bus::new(Arc::new(FixedClock(0))))
    }

    fn raw(kind: MessageType, source: &str, seq: u64, payload: serde_json::Value) -> BusMessage {
        BusMessage {
            kind,
            source: source.into(),
            seq,
            timestamp_ms: 0,
            payload,
        }
    }

    #[test]
    fn broadcast_reaches_every_subscriber() {
        let bus = bus();
        let subs: Vec<_> = (0..5)
            .map(|_| bus.subscribe(&[MessageType::Recommendation]))
            .collect();
        let other = bus.subscribe(&[MessageType::StateUpdate]);
        let mut p = bus.publisher("recommender").unwrap();
        let r = p
            .send(
                MessageType::Recommendation,
                json!({"priority": 6, "item_id": "b1"}),
            )
            .unwrap();
        assert_eq!(r.delivered, 5);
        for s in &subs {
            assert_eq!(s.drain().len(), 1);
        }
        assert!(other.drain().is_empty());
    }

    #[test]
    fn per_source_order_is_preserved() {
        let bus = bus();
        let sub = bus.subscribe(&[MessageType::Recommendation]);
        bus.publish(raw(MessageType::Register, "rec", 6, json!({})))
            .unwrap();
        for seq in [7, 8] {
            bus.publish(raw(
                MessageType::Recommendation,
                "rec",
                seq,
                json!({"priority": 2, "item_id": "x"}),
            ))
            .unwrap();
        }
        let seqs: Vec<u64> = sub.drain().iter().map(|m| m.seq).collect();
        assert_eq!(seqs, vec![7, 8]);
        let stale = bus
            .publish(raw(
                MessageType::Recommendation,
                "rec",
                8,
                json!({"priority": 2, "item_id": "x"}),
            ))
            .unwrap_err();
        assert!(stale.reason.contains("out-of-order"));
    }

    #[test]
    fn unregistered_source_gets_error_reply() {
        let bus = bus();
        let errors = bus.subscribe(&[MessageType::Error]);
        let err = bus
            .publish(raw(
                MessageType::Recommendation,
                "ghost",
                1,
                json!({"priority": 2, "item_id": "x"}),
            ))
            .unwrap_err();
        assert_eq!(err.reply.kind, MessageType::Error);
        assert_eq!(err.reply.source, BUS_SOURCE);
        assert_eq!(err.reply.payload["reason"], "unregistered source: ghost");
        assert_eq!(errors.drain().len(), 1);
    }

    #[test]
    fn missing_priority_is_reported() {
        let bus = bus();
        let mut p = bus.publisher("rec").unwrap();
        let err = p
            .send(MessageType::Recommendation, json!({"item_id": "b1"}))
            .unwrap_err();
        assert_eq!(err.reason, "missing field: priority");
        assert_eq!(err.reply.payload["reason"], "missing field: priority");
        // the rejected seq is not consumed on the bus side; the next one still goes through
        assert!(p
            .send(
                MessageType::Recommendation,
                json!({"priority": 1, "item_id": "b1"})
            )
            .is_ok());
    }

    #[test]
    fn dropped_subscriptions_stop_counting() {
        let bus = bus();
        let a = bus.subscribe(&[MessageType::RatingSubmit]);
        let b = bus.subscribe(&[MessageType::RatingSubmit]);
        drop(b);
        let mut p = bus.publisher("ui").unwrap();
        let r = p
            .send(
                MessageType::RatingSubmit,
                json!({"trial_index": 0, "grade": 6}),
            )
            .unwrap();
        assert_eq!(r.delivered, 1);
        bus.unsubscribe(&a);
        assert_eq!(bus.subscriber_count(MessageType::RatingSubmit), 0);
    }

    #[derive(Clone, Default)]
    struct SharedBuf(Arc<Mutex<Vec<u8>>>);

    impl Write for SharedBuf {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn log_records_accepted_and_rejected_messages() {
        let bus = bus();
        let buf = SharedBuf::default();
        bus.set_log(Box::new(buf.clone()));
        let mut p = bus.publisher("rec").unwrap();
        let _ = p.send(
            MessageType::Recommendation,
            json!({"priority": 9, "item_id": "x"}),
        );
        let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
        let kinds: Vec<String> = text
            .lines()
            .map(|l| {
                serde_json::from_str::<BusMessage>(l)
                    .unwrap()
                    .kind
                    .as_str()
                    .to_string()
            })
            .collect();
        assert_eq!(kinds, vec!["REGISTER", "ERROR"]);
    }

    #[test]
    fn concurrent_publishers_keep_fifo_per_source() {
        let bus = bus();
        let sub = bus.subscribe(&[MessageType::SpeechCategory]);
        let handles: Vec<_> = (0..4)
            .map(|i| {
                let bus = Arc::clone(&bus);
                thread::spawn(move || {
                    let mut p = bus.publisher(format!("mic-{i}")).unwrap();
                    for _ in 0..200 {
                        p.send(MessageType::SpeechCategory, json!({"category": "approval"}))
                            .unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let msgs = sub.drain();
        assert_eq!(msgs.len(), 800);
        let mut last: HashMap<String, u64> = HashMap::new();
        for m in msgs {
            if let Some(prev) = last.insert(m.source.clone(), m.seq) {
                assert!(m.seq > prev);
            }
        }
    }
}
