//! Live service: a paced simulation loop with newline-delimited JSON clients
//! over TCP.
//!
//! Connection threads only parse and forward. Every mutation goes through a
//! command queue that the loop drains between ticks; clients receive copies
//! of snapshots through their own outbound channel.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::{self, ServerMessage};
use super::{Decimator, Session, SessionConfig, StreamChange};
use crate::error::Result;

type ClientId = u64;

enum Event {
    Connected(ClientId, Sender<String>),
    Line(ClientId, String),
    Disconnected(ClientId),
}

struct Client {
    outbound: Sender<String>,
    stream: Option<Decimator>,
}

/// Most ticks run in one catch-up burst after a stall.
const MAX_CATCH_UP_TICKS: u64 = 100;

pub struct Server {
    listener: TcpListener,
    config: SessionConfig,
    shutdown: Arc<AtomicBool>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            config,
            shutdown: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Setting the flag stops `run` within a few milliseconds.
    pub fn shutdown_handle(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    /// Serve until the shutdown flag is raised.
    pub fn run(self) -> Result<()> {
        let (events, inbox) = mpsc::channel();
        self.listener.set_nonblocking(true)?;
        let shutdown = self.shutdown.clone();
        let listener = self.listener;
        let acceptor = {
            let shutdown = shutdown.clone();
            thread::spawn(move || accept_loop(listener, events, shutdown))
        };
        let result = simulation_loop(Session::new(self.config)?, inbox, &shutdown);
        shutdown.store(true, Ordering::SeqCst);
        let _ = acceptor.join();
        result
    }
}

fn accept_loop(listener: TcpListener, events: Sender<Event>, shutdown: Arc<AtomicBool>) {
    let mut next_id: ClientId = 0;
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                next_id += 1;
                spawn_client(next_id, stream, events.clone(), shutdown.clone());
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
}

fn spawn_client(id: ClientId, stream: TcpStream, events: Sender<Event>, shutdown: Arc<AtomicBool>) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_nodelay(true);
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    let (outbound, outbox) = mpsc::channel::<String>();
    if events.send(Event::Connected(id, outbound)).is_err() {
        return;
    }
    thread::spawn(move || {
        for mut line in outbox {
            line.push('\n');
            if writer.write_all(line.as_bytes()).is_err() {
                break;
            }
        }
    });
    thread::spawn(move || {
        let _ = stream.set_read_timeout(Some(Duration::from_millis(50)));
        let mut reader = BufReader::new(stream);
        let mut line = String::new();
        while !shutdown.load(Ordering::SeqCst) {
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    let trimmed = line.trim();
                    if !trimmed.is_empty() && events.send(Event::Line(id, trimmed.to_string())).is_err() {
                        break;
                    }
                    line.clear();
                }
                Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
                Err(_) => break,
            }
        }
        let _ = events.send(Event::Disconnected(id));
    });
}

fn simulation_loop(mut session: Session, inbox: Receiver<Event>, shutdown: &AtomicBool) -> Result<()> {
    let loop_rate = session.config().loop_rate_hz;
    let mut clients: HashMap<ClientId, Client> = HashMap::new();
    let started = Instant::now();
    let mut dropped: u64 = 0;
    while !shutdown.load(Ordering::SeqCst) {
        // Commands take effect at tick boundaries only.
        while let Ok(event) = inbox.try_recv() {
            match event {
                Event::Connected(id, outbound) => {
                    clients.insert(id, Client { outbound, stream: None });
                }
                Event::Disconnected(id) => {
                    clients.remove(&id);
                }
                Event::Line(id, line) => {
                    let Some(client) = clients.get_mut(&id) else { continue };
                    let reply = match protocol::parse_request(&line) {
                        Ok(request) => {
                            let (reply, change) = session.execute(request);
                            match change {
                                StreamChange::Subscribe(rate) => client.stream = Some(Decimator::new(rate, loop_rate)),
                                StreamChange::Unsubscribe => client.stream = None,
                                StreamChange::None => {}
                            }
                            reply
                        }
                        Err(rejection) => ServerMessage::Error(rejection),
                    };
                    let _ = client.outbound.send(reply.to_line());
                }
            }
        }

        let due = ((started.elapsed().as_secs_f64() * loop_rate) as u64).saturating_sub(dropped);
        let mut behind = due.saturating_sub(session.ticks());
        if behind > MAX_CATCH_UP_TICKS {
            // Drop the backlog after a long stall instead of spiralling.
            dropped += behind - MAX_CATCH_UP_TICKS;
            behind = MAX_CATCH_UP_TICKS;
        }
        for _ in 0..behind {
            let snapshot = session.tick_live()?;
            let mut line = None;
            for client in clients.values_mut() {
                if client.stream.as_mut().is_some_and(Decimator::fire) {
                    let text = line.get_or_insert_with(|| ServerMessage::Snapshot(snapshot.clone()).to_line());
                    let _ = client.outbound.send(text.clone());
                }
            }
        }
        thread::sleep(Duration::from_micros(500));
    }
    Ok(())
}
