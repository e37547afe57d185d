//! TCP front end for [`Session`]. One client at a time; a second connection
//! gets an error frame and is closed.
//!
//! A reader thread turns frames into a queue. The stepping loop drains the
//! queue at step boundaries, so the world has a single writer.

use std::io::{BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};

use crate::protocol::{read_frame, write_frame, ServerMessage};
use crate::session::Session;

pub type SessionFactory = Arc<dyn Fn() -> Session + Send + Sync>;

pub struct SessionServer {
    listener: TcpListener,
    factory: SessionFactory,
    active: Arc<AtomicBool>,
    /// Pace stepping to the wall clock. Off, the world runs as fast as the
    /// machine allows (tests).
    realtime: bool,
}

enum Incoming {
    Text(String),
    Bad(String),
    Closed,
}

impl SessionServer {
    pub fn bind(addr: impl ToSocketAddrs, factory: SessionFactory, realtime: bool) -> Result<Self> {
        let listener = TcpListener::bind(addr).context("binding session socket")?;
        Ok(Self {
            listener,
            factory,
            active: Arc::new(AtomicBool::new(false)),
            realtime,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections forever.
    pub fn run(self) -> Result<()> {
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(_) => continue,
            };
            if self.active.swap(true, Ordering::SeqCst) {
                let mut s = stream;
                let _ = write_frame(&mut s, &ServerMessage::error("another session is active").to_json());
                continue;
            }
            let session = (self.factory)();
            let active = Arc::clone(&self.active);
            let realtime = self.realtime;
            thread::spawn(move || {
                let _ = serve_connection(stream, session, realtime);
                active.store(false, Ordering::SeqCst);
            });
        }
        Ok(())
    }
}

fn send(w: &mut impl Write, msgs: &[ServerMessage]) -> std::io::Result<()> {
    for m in msgs {
        write_frame(w, &m.to_json())?;
    }
    if !msgs.is_empty() {
        w.flush()?;
    }
    Ok(())
}

fn serve_connection(stream: TcpStream, mut session: Session, realtime: bool) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || loop {
        let msg = match read_frame(&mut reader) {
            Ok(Some(bytes)) => match String::from_utf8(bytes) {
                Ok(t) => Incoming::Text(t),
                Err(_) => Incoming::Bad("message is not valid UTF-8".into()),
            },
            Ok(None) => Incoming::Closed,
            Err(e) => {
                let _ = tx.send(Incoming::Bad(e.to_string()));
                Incoming::Closed
            }
        };
        let closed = matches!(msg, Incoming::Closed);
        if tx.send(msg).is_err() || closed {
            break;
        }
    });

    let mut w = BufWriter::new(stream);
    send(&mut w, &[session.frame()])?;
    let dt = session.simulator().dt();
    let start = Instant::now();
    let mut steps: u64 = 0;
    loop {
        loop {
            match rx.try_recv() {
                Ok(Incoming::Text(t)) => send(&mut w, &session.handle_text(&t))?,
                Ok(Incoming::Bad(e)) => send(&mut w, &[ServerMessage::error(e)])?,
                Ok(Incoming::Closed) | Err(TryRecvError::Disconnected) => return Ok(()),
                Err(TryRecvError::Empty) => break,
            }
        }
        send(&mut w, &session.tick())?;
        steps += 1;
        if realtime {
            let due = start + Duration::from_secs_f64(steps as f64 * dt);
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        } else if !session.world().is_valid() {
            // nothing advances until a reset; avoid spinning
            thread::sleep(Duration::from_millis(1));
        }
    }
}
