//! Per-session request queue with latest-wins semantics.

use std::sync::mpsc::Sender;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};

use crate::protocol::{FrameHeader, PoseRequest, ServerMessage};
use crate::render::Renderer;

/// Something the connection must send to its client.
#[derive(Debug)]
pub enum Outgoing {
    Message(ServerMessage),
    Frame(FrameHeader, Vec<u8>),
}

#[derive(Default)]
struct SlotState {
    pending: Option<PoseRequest>,
    closed: bool,
}

/// Holds at most one request waiting to be rendered.
#[derive(Default)]
pub struct Slot {
    state: Mutex<SlotState>,
    ready: Condvar,
}

impl Slot {
    /// Queues `req`, returning the request it replaced.
    pub fn submit(&self, req: PoseRequest) -> Option<PoseRequest> {
        let mut s = self.state.lock().expect("slot lock");
        let old = s.pending.replace(req);
        self.ready.notify_one();
        old
    }

    /// Blocks until a request is queued; `None` once the slot is closed.
    pub fn take(&self) -> Option<PoseRequest> {
        let mut s = self.state.lock().expect("slot lock");
        loop {
            if s.closed {
                return None;
            }
            if let Some(r) = s.pending.take() {
                return Some(r);
            }
            s = self.ready.wait(s).expect("slot lock");
        }
    }

    /// Drops any queued request and wakes the worker.
    pub fn close(&self) {
        let mut s = self.state.lock().expect("slot lock");
        s.closed = true;
        s.pending = None;
        self.ready.notify_all();
    }
}

/// Sequential session state: a queue slot and the rendering worker.
pub struct Session {
    slot: Arc<Slot>,
    out: Sender<Outgoing>,
    worker: Option<JoinHandle<()>>,
}

impl Session {
    pub fn start(renderer: Arc<Renderer>, out: Sender<Outgoing>) -> Self {
        let slot = Arc::new(Slot::default());
        let worker = {
            let slot = Arc::clone(&slot);
            let out = out.clone();
            thread::spawn(move || {
                let mut sequence = 0u64;
                while let Some(req) = slot.take() {
                    let msg = match renderer.render(&req) {
                        Ok(r) => {
                            sequence += 1;
                            Outgoing::Frame(
                                FrameHeader {
                                    sequence,
                                    request_id: req.request_id,
                                    latency_ms: r.latency_ms,
                                    hole_fraction: r.hole_fraction,
                                    width: r.width,
                                    height: r.height,
                                    png_bytes: r.png.len(),
                                },
                                r.png,
                            )
                        }
                        Err(e) => Outgoing::Message(ServerMessage::Error {
                            request_id: req.request_id,
                            message: format!("{e:#}"),
                        }),
                    };
                    if out.send(msg).is_err() {
                        break;
                    }
                }
            })
        };
        Self {
            slot,
            out,
            worker: Some(worker),
        }
    }

    /// Handles one raw client message.
    pub fn handle(&self, renderer: &Renderer, raw: &[u8]) {
        use crate::protocol::ClientMessage;
        let reply = match serde_json::from_slice::<ClientMessage>(raw) {
            Ok(ClientMessage::Pose(req)) => match renderer.validate(&req) {
                Ok(_) => self
                    .slot
                    .submit(req)
                    .map(|old| ServerMessage::Superseded {
                        request_id: old.request_id,
                    }),
                Err(e) => Some(ServerMessage::Error {
                    request_id: req.request_id,
                    message: format!("{e:#}"),
                }),
            },
            Ok(ClientMessage::Health) => Some(ServerMessage::Health(renderer.health())),
            Err(e) => Some(ServerMessage::Error {
                request_id: None,
                message: format!("malformed request: {e}"),
            }),
        };
        if let Some(r) = reply {
            let _ = self.out.send(Outgoing::Message(r));
        }
    }

    pub fn reject(&self, message: impl Into<String>) {
        let _ = self.out.send(Outgoing::Message(ServerMessage::Error {
            request_id: None,
            message: message.into(),
        }));
    }

    /// Stops the worker after its current render.
    pub fn finish(mut self) {
        self.slot.close();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.slot.close();
    }
}
