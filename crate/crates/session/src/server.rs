//! WebSocket transport. One processing task owns the [`Session`]; each client
//! gets a writer fed from its own queue and a reader that forwards control
//! messages to the processing task.

use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use log::{debug, info, warn};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio::time::Instant;
use tokio_tungstenite::tungstenite::Message;

use scalpview_core::SampleBlock;

use crate::protocol::{ControlMessage, ServerMessage};
use crate::session::Session;

/// How long to wait for clients to drain their queues after the last message.
const DRAIN_TIMEOUT: Duration = Duration::from_secs(5);

struct Client {
    id: usize,
    out: mpsc::UnboundedSender<Message>,
    done: oneshot::Receiver<()>,
}

async fn handle_client(
    stream: TcpStream,
    id: usize,
    clients: mpsc::UnboundedSender<Client>,
    controls: mpsc::UnboundedSender<(usize, String)>,
) {
    let peer = stream.peer_addr().ok();
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            warn!("handshake with {peer:?} failed: {e}");
            return;
        }
    };
    info!("client {id} connected from {peer:?}");
    let (mut sink, mut source) = ws.split();
    let (out, mut queue) = mpsc::unbounded_channel();
    let (done_tx, done) = oneshot::channel();
    if clients.send(Client { id, out, done }).is_err() {
        return;
    }
    let writer = async {
        while let Some(msg) = queue.recv().await {
            if sink.send(msg).await.is_err() {
                return;
            }
        }
        let _ = sink.close().await;
    };
    let reader = async {
        while let Some(Ok(msg)) = source.next().await {
            match msg {
                Message::Text(text) => {
                    if controls.send((id, text.to_string())).is_err() {
                        break;
                    }
                }
                Message::Close(_) => break,
                _ => {}
            }
        }
    };
    tokio::select! {
        _ = writer => {}
        _ = reader => {}
    }
    debug!("client {id} finished");
    let _ = done_tx.send(());
}

#[derive(Default)]
struct Fanout {
    clients: Vec<Client>,
}

impl Fanout {
    fn send_to(&mut self, id: usize, msg: &ServerMessage) {
        if let Some(c) = self.clients.iter().find(|c| c.id == id) {
            let _ = c.out.send(Message::text(msg.to_json()));
        }
    }

    fn broadcast(&mut self, msgs: &[ServerMessage]) {
        for msg in msgs {
            let text = Message::text(msg.to_json());
            self.clients.retain(|c| c.out.send(text.clone()).is_ok());
        }
    }

    fn register(&mut self, client: Client, session: &Session) {
        let _ = client.out.send(Message::text(session.hello().to_json()));
        self.clients.push(client);
    }
}

/// Serves `blocks` through `session` to every client on `listener`.
///
/// Streaming starts once the first client has connected. `speed` scales
/// the replay clock; 0 processes blocks as fast as possible.
pub async fn serve(listener: TcpListener, mut session: Session, blocks: Vec<SampleBlock>, speed: f64) -> std::io::Result<()> {
    let (client_tx, mut client_rx) = mpsc::unbounded_channel();
    let (control_tx, mut control_rx) = mpsc::unbounded_channel();
    let acceptor = tokio::spawn(async move {
        let mut next_id = 0;
        loop {
            match listener.accept().await {
                Ok((stream, _)) => {
                    next_id += 1;
                    tokio::spawn(handle_client(stream, next_id, client_tx.clone(), control_tx.clone()));
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
    });

    let mut fanout = Fanout::default();
    match client_rx.recv().await {
        Some(c) => fanout.register(c, &session),
        None => return Ok(()),
    }
    let start = Instant::now();
    let t_first = blocks.first().map_or(0.0, |b| b.t0);
    for block in &blocks {
        if speed > 0.0 {
            let due = (block.time_of(block.len()) - t_first) / speed;
            tokio::time::sleep_until(start + Duration::from_secs_f64(due.max(0.0))).await;
        } else {
            tokio::task::yield_now().await;
        }
        while let Ok(c) = client_rx.try_recv() {
            fanout.register(c, &session);
        }
        while let Ok((id, text)) = control_rx.try_recv() {
            let result = ControlMessage::parse(&text).and_then(|msg| {
                debug!("client {id}: {msg:?}");
                session.apply(&msg)
            });
            if let Err(e) = result {
                fanout.send_to(id, &ServerMessage::error(e.to_string()));
            }
        }
        match session.process_block(block) {
            Ok(msgs) => fanout.broadcast(&msgs),
            Err(e) => {
                fanout.broadcast(&[ServerMessage::error(e.to_string()), session.end("processing error")]);
                break;
            }
        }
        if fanout.clients.is_empty() {
            info!("all clients left");
            break;
        }
    }
    fanout.broadcast(&[session.end("source exhausted")]);
    acceptor.abort();
    let pending: Vec<_> = fanout.clients.into_iter().map(|c| c.done).collect();
    let _ = tokio::time::timeout(DRAIN_TIMEOUT, futures_util::future::join_all(pending)).await;
    info!("session finished after {} frames", session.frames_emitted());
    Ok(())
}
