//! WebSocket bridge for browser clients.
//!
//! Each text frame carries exactly one [`BusMessage`] in the same JSON form
//! as a line of the TCP protocol.

use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use tungstenite::{Message, WebSocket};

use crate::bus::tcp::process_line;
use crate::bus::{Bus, BusMessage, Subscription};

const POLL: Duration = Duration::from_millis(20);

pub struct WsBridge {
    listener: TcpListener,
    bus: Arc<Bus>,
}

impl WsBridge {
    pub fn bind(bus: Arc<Bus>, addr: impl ToSocketAddrs) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Self { listener, bus })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn run(self, stop: Arc<AtomicBool>) {
        while !stop.load(Ordering::Relaxed) {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    let bus = Arc::clone(&self.bus);
                    let stop = Arc::clone(&stop);
                    thread::spawn(move || {
                        if let Err(e) = serve_socket(&bus, stream, &stop) {
                            log::debug!("websocket client {peer}: {e}");
                        }
                    });
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) => {
                    log::warn!("websocket accept failed: {e}");
                    thread::sleep(POLL);
                }
            }
        }
    }

    pub fn spawn(self, stop: Arc<AtomicBool>) -> thread::JoinHandle<()> {
        thread::spawn(move || self.run(stop))
    }
}

#[allow(clippy::result_large_err)]
fn send(ws: &mut WebSocket<TcpStream>, msg: &BusMessage) -> Result<(), tungstenite::Error> {
    let text = serde_json::to_string(msg).expect("bus message serializes");
    ws.send(Message::Text(text))
}

#[allow(clippy::result_large_err)]
fn serve_socket(
    bus: &Arc<Bus>,
    stream: TcpStream,
    stop: &AtomicBool,
) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::Io(io::Error::new(
            ErrorKind::WouldBlock,
            "handshake interrupted",
        )),
    })?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let mut sub: Option<Subscription> = None;
    let result = loop {
        if stop.load(Ordering::Relaxed) {
            let _ = ws.close(None);
            break Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let outcome = process_line(bus, &text, sub.is_some());
                if let Some(reply) = outcome.reply {
                    send(&mut ws, &reply)?;
                }
                if outcome.subscription.is_some() {
                    sub = outcome.subscription;
                }
            }
            Ok(Message::Close(_)) => break Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed) => break Ok(()),
            Err(e) => break Err(e),
        }
        if let Some(s) = &sub {
            for m in s.drain() {
                send(&mut ws, &m)?;
            }
        }
    };
    if let Some(s) = sub {
        bus.unsubscribe(&s);
    }
    result
}
