//! Real-time WebSocket service.
//!
//! One simulation task ticks at the scenario rate and publishes each
//! snapshot on a small broadcast ring. A client that falls behind loses the
//! oldest frames; the simulation never waits for it. Control messages from
//! any client are queued and applied at the next tick boundary.

use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};
use tokio::time::MissedTickBehavior;

use crate::stream::{Control, Envelope, Session, StreamMessage};

/// Frames a client may lag behind before the oldest are dropped.
const CLIENT_BUFFER: usize = 8;

#[derive(Clone)]
struct Hub {
    frames: broadcast::Sender<String>,
    controls: mpsc::UnboundedSender<Control>,
}

/// Serve the session on `listener` until the process stops.
pub async fn serve(listener: TcpListener, session: Session) -> anyhow::Result<()> {
    let (frames, _) = broadcast::channel(CLIENT_BUFFER);
    let (controls, inbox) = mpsc::unbounded_channel();
    let hub = Hub { frames: frames.clone(), controls };
    tokio::spawn(run_clock(session, frames, inbox));
    let app = Router::new().route("/ws", get(upgrade)).with_state(hub);
    axum::serve(listener, app).await?;
    Ok(())
}

async fn run_clock(mut session: Session, frames: broadcast::Sender<String>, mut inbox: mpsc::UnboundedReceiver<Control>) {
    let mut clock = tokio::time::interval(Duration::from_secs_f64(session.scenario().dt));
    clock.set_missed_tick_behavior(MissedTickBehavior::Skip);
    loop {
        clock.tick().await;
        while let Ok(control) = inbox.try_recv() {
            if let Err(e) = session.apply(control) {
                let _ = frames.send(Envelope::new(StreamMessage::Error { message: e.to_string() }).to_json());
            }
        }
        if let Err(e) = session.tick() {
            let _ = frames.send(Envelope::new(StreamMessage::Error { message: e.to_string() }).to_json());
        }
        // No receivers is fine: frames are fire-and-forget.
        let _ = frames.send(Envelope::new(StreamMessage::Snapshot(session.snapshot())).to_json());
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(hub): State<Hub>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, hub))
}

async fn client(socket: WebSocket, hub: Hub) {
    let (mut sink, mut incoming) = socket.split();
    let mut frames = hub.frames.subscribe();
    let (replies, mut reply_rx) = mpsc::unbounded_channel::<String>();
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = incoming.next().await {
            let text = match msg {
                Message::Text(t) => t.to_string(),
                Message::Close(_) => break,
                _ => continue,
            };
            match Envelope::parse(&text) {
                Ok(Envelope { message: StreamMessage::Control(c), .. }) => {
                    let _ = hub.controls.send(c);
                }
                Ok(_) => {
                    let _ = replies.send(error_frame("only control messages are accepted"));
                }
                Err(e) => {
                    let _ = replies.send(error_frame(&format!("{e:#}")));
                }
            }
        }
    });
    loop {
        let text = tokio::select! {
            frame = frames.recv() => match frame {
                Ok(text) => text,
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            },
            Some(reply) = reply_rx.recv() => reply,
        };
        if sink.send(Message::Text(text.into())).await.is_err() {
            break;
        }
    }
    reader.abort();
}

fn error_frame(message: &str) -> String {
    Envelope::new(StreamMessage::Error { message: message.to_string() }).to_json()
}
