//! Newline-delimited JSON transport for the bus.
//!
//! Every line is one [`BusMessage`]. A client announces itself with a
//! REGISTER message; its optional `subscribe` list selects which message
//! types the server forwards back down the same connection. Rejected lines
//! are answered with an ERROR line. Accepted messages get no reply.

use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::bus::{Bus, BusMessage, Clock, MessageType, RegisterPayload, Subscription, SystemClock};

const POLL: Duration = Duration::from_millis(50);

/// What one inbound line produced.
#[derive(Default)]
pub(crate) struct LineOutcome {
    pub reply: Option<BusMessage>,
    pub subscription: Option<Subscription>,
}

/// Parses and publishes one inbound line on behalf of a remote client.
pub(crate) fn process_line(bus: &Bus, line: &str, subscribed: bool) -> LineOutcome {
    let line = line.trim();
    if line.is_empty() {
        return LineOutcome::default();
    }
    let msg: BusMessage = match serde_json::from_str(line) {
        Ok(m) => m,
        Err(e) => {
            return LineOutcome {
                reply: Some(bus.reject(&format!("malformed message: {e}"), None)),
                subscription: None,
            }
        }
    };
    let wants = if msg.kind == MessageType::Register && !subscribed {
        msg.decode::<RegisterPayload>()
            .map(|p| p.subscribe)
            .unwrap_or_default()
    } else {
        Vec::new()
    };
    match bus.publish(msg) {
        Ok(_) => LineOutcome {
            reply: None,
            subscription: (!wants.is_empty()).then(|| bus.subscribe(&wants)),
        },
        Err(e) => LineOutcome {
            reply: Some(e.reply),
            subscription: None,
        },
    }
}

fn write_line(out: &Mutex<TcpStream>, msg: &BusMessage) -> io::Result<()> {
    let mut line = serde_json::to_vec(msg).map_err(io::Error::other)?;
    line.push(b'\n');
    let mut s = out.lock().unwrap_or_else(|e| e.into_inner());
    s.write_all(&line)?;
    s.flush()
}

/// Accepts bus clients over TCP.
pub struct BusServer {
    listener: TcpListener,
    bus: Arc<Bus>,
}

impl BusServer {
    pub fn bind(bus: Arc<Bus>, addr: impl ToSocketAddrs) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Self { listener, bus })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves connections until `stop` is set.
    pub fn run(self, stop: Arc<AtomicBool>) {
        let mut workers = Vec::new();
        while !stop.load(Ordering::Relaxed) {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    log::info!("bus client connected from {peer}");
                    let bus = Arc::clone(&self.bus);
                    let stop = Arc::clone(&stop);
                    workers.push(thread::spawn(move || {
                        if let Err(e) = serve_connection(&bus, stream, &stop) {
                            log::debug!("connection from {peer} ended: {e}");
                        }
                    }));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    thread::sleep(POLL);
                }
            }
            workers.retain(|h| !h.is_finished());
        }
        for h in workers {
            let _ = h.join();
        }
    }

    pub fn spawn(self, stop: Arc<AtomicBool>) -> thread::JoinHandle<()> {
        thread::spawn(move || self.run(stop))
    }
}

fn serve_connection(bus: &Arc<Bus>, stream: TcpStream, stop: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    let out = Arc::new(Mutex::new(stream.try_clone()?));
    let done = Arc::new(AtomicBool::new(false));
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    let mut forwarder: Option<thread::JoinHandle<()>> = None;
    let result = loop {
        if stop.load(Ordering::Relaxed) {
            break Ok(());
        }
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => break Ok(()),
            Ok(_) => {
                if buf.last() != Some(&b'\n') {
                    continue;
                }
                let line = String::from_utf8_lossy(&buf).into_owned();
                buf.clear();
                let outcome = process_line(bus, &line, forwarder.is_some());
                if let Some(reply) = outcome.reply {
                    write_line(&out, &reply)?;
                }
                if let Some(sub) = outcome.subscription {
                    let out = Arc::clone(&out);
                    let done = Arc::clone(&done);
                    let bus = Arc::clone(bus);
                    forwarder = Some(thread::spawn(move || {
                        while !done.load(Ordering::Relaxed) {
                            match sub.recv_timeout(POLL) {
                                Ok(Some(m)) => {
                                    if write_line(&out, &m).is_err() {
                                        break;
                                    }
                                }
                                Ok(None) => {}
                                Err(_) => break,
                            }
                        }
                        bus.unsubscribe(&sub);
                    }));
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => break Err(e),
        }
    };
    done.store(true, Ordering::Relaxed);
    if let Some(f) = forwarder {
        let _ = f.join();
    }
    result
}

/// A bus component on the far side of a TCP connection.
pub struct BusClient {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
    buf: Vec<u8>,
    name: String,
    next_seq: u64,
}

impl BusClient {
    /// Connects and registers as `name`, asking for `subscribe` to be
    /// forwarded.
    pub fn connect(
        addr: impl ToSocketAddrs,
        name: &str,
        subscribe: &[MessageType],
    ) -> io::Result<Self> {
        let writer = TcpStream::connect(addr)?;
        writer.set_nodelay(true)?;
        let reader = BufReader::new(writer.try_clone()?);
        let mut client = Self {
            writer,
            reader,
            buf: Vec::new(),
            name: name.to_string(),
            next_seq: 0,
        };
        client.send(
            MessageType::Register,
            RegisterPayload {
                subscribe: subscribe.to_vec(),
            },
        )?;
        Ok(client)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn send<P: Serialize>(&mut self, kind: MessageType, payload: P) -> io::Result<()> {
        let msg = BusMessage {
            kind,
            source: self.name.clone(),
            seq: self.next_seq,
            timestamp_ms: SystemClock.now_ms(),
            payload: serde_json::to_value(payload).map_err(io::Error::other)?,
        };
        self.next_seq += 1;
        self.send_raw(&msg)
    }

    pub fn send_raw(&mut self, msg: &BusMessage) -> io::Result<()> {
        let mut line = serde_json::to_vec(msg).map_err(io::Error::other)?;
        line.push(b'\n');
        self.writer.write_all(&line)?;
        self.writer.flush()
    }

    /// Next message from the server, or `None` if nothing arrives within
    /// `timeout`.
    pub fn recv(&mut self, timeout: Duration) -> io::Result<Option<BusMessage>> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            self.reader
                .get_ref()
                .set_read_timeout(Some(left.min(POLL)))?;
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => {
                    return Err(io::Error::new(
                        ErrorKind::UnexpectedEof,
                        "bus closed the connection",
                    ))
                }
                Ok(_) if self.buf.last() == Some(&b'\n') => {
                    let msg = serde_json::from_slice(&self.buf).map_err(io::Error::other);
                    self.buf.clear();
                    return msg.map(Some);
                }
                Ok(_) => {}
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::robot::Fleet;
    use crate::bus::FixedClock;
    use crate::intent::IntentConfig;
    use serde_json::json;

    fn start(robots: usize) -> (SocketAddr, Arc<AtomicBool>) {
        let bus = Arc::new(Bus::new(Arc::new(FixedClock(0))));
        let stop = Arc::new(AtomicBool::new(false));
        let fleet = Fleet::attach(&bus, robots, Arc::new(IntentConfig::default_v1())).unwrap();
        fleet.spawn(Arc::clone(&stop));
        let server = BusServer::bind(bus, "127.0.0.1:0").unwrap();
        let addr = server.local_addr().unwrap();
        server.spawn(Arc::clone(&stop));
        (addr, stop)
    }

    fn recv_kind(c: &mut BusClient, n: usize) -> Vec<BusMessage> {
        let mut out = Vec::new();
        while out.len() < n {
            match c.recv(Duration::from_secs(5)).unwrap() {
                Some(m) => out.push(m),
                None => panic!("timed out after {} messages", out.len()),
            }
        }
        out
    }

    #[test]
    fn remote_event_drives_robots() {
        let (addr, stop) = start(5);
        let mut ui = BusClient::connect(
            addr,
            "console",
            &[MessageType::StateUpdate, MessageType::PoseCommand],
        )
        .unwrap();
        // registration is processed before the recommender connects
        thread::sleep(Duration::from_millis(100));
        let mut rec = BusClient::connect(addr, "recommender", &[]).unwrap();
        rec.send(
            MessageType::Recommendation,
            json!({"priority": 6, "item_id": "b"}),
        )
        .unwrap();
        let msgs = recv_kind(&mut ui, 10);
        assert_eq!(
            msgs.iter()
                .filter(|m| m.kind == MessageType::StateUpdate)
                .count(),
            5
        );
        assert_eq!(
            msgs.iter()
                .filter(|m| m.kind == MessageType::PoseCommand)
                .count(),
            5
        );
        stop.store(true, Ordering::Relaxed);
    }

    #[test]
    fn bad_lines_get_error_replies() {
        let (addr, stop) = start(1);
        let mut c = BusClient::connect(addr, "rec", &[]).unwrap();
        c.send(MessageType::Recommendation, json!({"item_id": "b"}))
            .unwrap();
        let reply = recv_kind(&mut c, 1).remove(0);
        assert_eq!(reply.kind, MessageType::Error);
        assert_eq!(reply.payload["reason"], "missing field: priority");

        c.writer.write_all(b"{not json}\n").unwrap();
        let reply = recv_kind(&mut c, 1).remove(0);
        assert!(reply.payload["reason"]
            .as_str()
            .unwrap()
            .starts_with("malformed message"));

        let mut ghost = TcpStream::connect(addr).unwrap();
        ghost
            .write_all(b"{\"type\":\"EVENT.RECOMMENDATION\",\"source\":\"ghost\",\"seq\":1,\"timestamp_ms\":0,\"payload\":{\"priority\":3,\"item_id\":\"x\"}}\n")
            .unwrap();
        let mut r = BufReader::new(ghost);
        let mut line = String::new();
        r.read_line(&mut line).unwrap();
        let reply: BusMessage = serde_json::from_str(&line).unwrap();
        assert_eq!(reply.payload["reason"], "unregistered source: ghost");
        stop.store(true, Ordering::Relaxed);
    }
}
