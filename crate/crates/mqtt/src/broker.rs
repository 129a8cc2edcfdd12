use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::Serialize;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, Notify};
use tokio::task::JoinHandle;

use crate::codec::{
    self, ConnAck, Connect, ConnectReturnCode, LastWill, Packet, ProtocolError, Publish, QoS, SubAck,
    SubAckReturn,
};
use crate::config::BrokerConfig;
use crate::policy::{Action, PolicyDocument};
use crate::topic::TopicFilter;
use crate::ws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Tcp,
    Websocket,
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transport::Tcp => "tcp",
            Transport::Websocket => "websocket",
        })
    }
}

/// The QoS a subscriber gets for a message on `topic` published at
/// `published`: the highest granted QoS among its matching filters, capped by
/// the publish QoS. `None` when nothing matches.
pub fn delivery_qos(subscriptions: &[(TopicFilter, QoS)], topic: &str, published: QoS) -> Option<QoS> {
    subscriptions
        .iter()
        .filter(|(filter, _)| filter.matches(topic))
        .map(|(_, granted)| *granted)
        .max()
        .map(|granted| granted.min(published))
}

#[derive(Debug, Default)]
struct Counters {
    connections_accepted: AtomicU64,
    connections_refused: AtomicU64,
    evictions: AtomicU64,
    publishes_received: AtomicU64,
    publishes_denied: AtomicU64,
    messages_delivered: AtomicU64,
    subscriptions_denied: AtomicU64,
    protocol_errors: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BrokerStats {
    pub connections_accepted: u64,
    pub connections_refused: u64,
    pub evictions: u64,
    pub publishes_received: u64,
    pub publishes_denied: u64,
    pub messages_delivered: u64,
    pub subscriptions_denied: u64,
    pub protocol_errors: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionInfo {
    pub client_id: String,
    pub policy: String,
    pub transport: Transport,
    pub subscriptions: Vec<(String, u8)>,
}

enum Outbound {
    Packet(Packet),
    Close,
}

struct Session {
    conn_id: u64,
    policy_name: String,
    policy: PolicyDocument,
    transport: Transport,
    tx: mpsc::UnboundedSender<Outbound>,
    kick: Arc<Notify>,
    subscriptions: Vec<(TopicFilter, QoS)>,
    next_packet_id: u16,
}

impl Session {
    fn packet_id(&mut self) -> u16 {
        self.next_packet_id = self.next_packet_id.checked_add(1).unwrap_or(1);
        self.next_packet_id
    }

    fn send(&self, packet: Packet) {
        let _ = self.tx.send(Outbound::Packet(packet));
    }
}

#[derive(Default)]
struct State {
    sessions: HashMap<String, Session>,
    retained: BTreeMap<String, Publish>,
}

struct Inner {
    config: BrokerConfig,
    state: Mutex<State>,
    counters: Counters,
    next_conn: AtomicU64,
}

/// An embedded MQTT 3.1.1 broker (QoS 0/1, clean sessions only).
#[derive(Clone)]
pub struct Broker {
    inner: Arc<Inner>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConnectionError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("no CONNECT within {0:?}")]
    ConnectTimeout(Duration),
    #[error("keep-alive expired")]
    KeepAliveExpired,
    #[error("connection refused: {0}")]
    Refused(ConnectReturnCode),
    #[error("first packet was {0}, expected CONNECT")]
    NotConnect(&'static str),
    #[error("unexpected {0} from client")]
    Unexpected(&'static str),
    #[error("publish to {0:?} denied by policy")]
    PublishDenied(String),
}

enum Exit {
    Graceful,
    Evicted,
    Abrupt(Option<ConnectionError>),
}

impl Broker {
    pub fn new(config: BrokerConfig) -> Self {
        Broker {
            inner: Arc::new(Inner {
                config,
                state: Mutex::new(State::default()),
                counters: Counters::default(),
                next_conn: AtomicU64::new(1),
            }),
        }
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.inner.config
    }

    pub fn stats(&self) -> BrokerStats {
        let c = &self.inner.counters;
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        BrokerStats {
            connections_accepted: get(&c.connections_accepted),
            connections_refused: get(&c.connections_refused),
            evictions: get(&c.evictions),
            publishes_received: get(&c.publishes_received),
            publishes_denied: get(&c.publishes_denied),
            messages_delivered: get(&c.messages_delivered),
            subscriptions_denied: get(&c.subscriptions_denied),
            protocol_errors: get(&c.protocol_errors),
        }
    }

    pub fn sessions(&self) -> Vec<SessionInfo> {
        let state = self.inner.state.lock();
        let mut out: Vec<SessionInfo> = state
            .sessions
            .iter()
            .map(|(id, s)| SessionInfo {
                client_id: id.clone(),
                policy: s.policy_name.clone(),
                transport: s.transport,
                subscriptions: s
                    .subscriptions
                    .iter()
                    .map(|(f, q)| (f.as_str().to_owned(), *q as u8))
                    .collect(),
            })
            .collect();
        out.sort_by(|a, b| a.client_id.cmp(&b.client_id));
        out
    }

    pub fn is_connected(&self, client_id: &str) -> bool {
        self.inner.state.lock().sessions.contains_key(client_id)
    }

    pub fn retained(&self, topic: &str) -> Option<Publish> {
        self.inner.state.lock().retained.get(topic).cloned()
    }

    /// Publishes from the broker itself, bypassing policy checks.
    pub fn inject(&self, publish: Publish) {
        let mut state = self.inner.state.lock();
        self.route(&mut state, &publish);
    }

    /// Accepts raw TCP connections until the listener fails.
    pub async fn serve_tcp(self, listener: TcpListener) -> io::Result<()> {
        loop {
            let (stream, peer) = listener.accept().await?;
            let _ = stream.set_nodelay(true);
            let broker = self.clone();
            tokio::spawn(async move {
                if let Err(e) = broker.serve_connection(stream, Transport::Tcp).await {
                    tracing::debug!(%peer, error = %e, "tcp connection ended");
                }
            });
        }
    }

    /// Accepts WebSocket connections on `path` until the listener fails.
    pub async fn serve_ws(self, listener: TcpListener, path: String) -> io::Result<()> {
        let path: Arc<str> = path.into();
        loop {
            let (stream, peer) = listener.accept().await?;
            let _ = stream.set_nodelay(true);
            let broker = self.clone();
            let path = path.clone();
            tokio::spawn(async move {
                let ws = match tokio_tungstenite::accept_hdr_async(stream, |req: &_, resp| {
                    ws::check_handshake(&path, req, resp)
                })
                .await
                {
                    Ok(ws) => ws,
                    Err(e) => {
                        tracing::debug!(%peer, error = %e, "websocket handshake failed");
                        return;
                    }
                };
                let stream = ws::into_byte_stream(ws);
                if let Err(e) = broker.serve_connection(stream, Transport::Websocket).await {
                    tracing::debug!(%peer, error = %e, "websocket connection ended");
                }
            });
        }
    }

    /// Binds the requested listeners and serves them in background tasks.
    pub async fn start(self, tcp: Option<SocketAddr>, ws: Option<(SocketAddr, String)>) -> io::Result<RunningBroker> {
        let mut running = RunningBroker {
            broker: self.clone(),
            tcp_addr: None,
            ws_addr: None,
            ws_path: None,
            tasks: Vec::new(),
        };
        if let Some(addr) = tcp {
            let listener = TcpListener::bind(addr).await?;
            running.tcp_addr = Some(listener.local_addr()?);
            running.tasks.push(tokio::spawn(self.clone().serve_tcp(listener)));
        }
        if let Some((addr, path)) = ws {
            let listener = TcpListener::bind(addr).await?;
            running.ws_addr = Some(listener.local_addr()?);
            running.ws_path = Some(path.clone());
            running.tasks.push(tokio::spawn(self.clone().serve_ws(listener, path)));
        }
        Ok(running)
    }

    /// Runs one client connection to completion over any byte stream.
    pub async fn serve_connection<S>(&self, stream: S, transport: Transport) -> Result<(), ConnectionError>
    where
        S: AsyncRead + AsyncWrite + Send + 'static,
    {
        let (mut rd, mut wr) = tokio::io::split(stream);
        let mut buf = Vec::with_capacity(4096);
        let timeout = self.inner.config.connect_timeout;
        let first = match tokio::time::timeout(timeout, self.read_packet(&mut rd, &mut buf)).await {
            Err(_) => return Err(ConnectionError::ConnectTimeout(timeout)),
            Ok(Err(ConnectionError::Protocol(ProtocolError::UnsupportedProtocol { name, level }))) => {
                self.refuse(&mut wr, ConnectReturnCode::UnacceptableProtocolVersion).await;
                return Err(ProtocolError::UnsupportedProtocol { name, level }.into());
            }
            Ok(r) => r?,
        };
        let connect = match first {
            Some(Packet::Connect(c)) => c,
            Some(other) => return Err(ConnectionError::NotConnect(other.name())),
            None => return Ok(()),
        };
        let mut connect = connect;
        if connect.client_id.is_empty() {
            if !connect.clean_session {
                self.refuse(&mut wr, ConnectReturnCode::IdentifierRejected).await;
                return Err(ConnectionError::Refused(ConnectReturnCode::IdentifierRejected));
            }
            connect.client_id = format!("auto-{}", self.inner.next_conn.load(Ordering::Relaxed));
        }
        let (policy_name, policy) = self.inner.config.policy_for(&connect.client_id);
        if !policy.allows(Action::Connect, &connect.client_id) {
            tracing::info!(client = %connect.client_id, policy = policy_name, "connect denied");
            self.refuse(&mut wr, ConnectReturnCode::NotAuthorized).await;
            return Err(ConnectionError::Refused(ConnectReturnCode::NotAuthorized));
        }
        let (policy_name, policy) = (policy_name.to_owned(), policy.clone());

        let conn_id = self.inner.next_conn.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::unbounded_channel();
        let kick = Arc::new(Notify::new());
        let _ = tx.send(Outbound::Packet(Packet::ConnAck(ConnAck {
            session_present: false,
            code: ConnectReturnCode::Accepted,
        })));
        {
            let mut state = self.inner.state.lock();
            if let Some(old) = state.sessions.remove(&connect.client_id) {
                tracing::info!(client = %connect.client_id, "evicting previous session");
                self.inner.counters.evictions.fetch_add(1, Ordering::Relaxed);
                let _ = old.tx.send(Outbound::Close);
                old.kick.notify_one();
            }
            state.sessions.insert(
                connect.client_id.clone(),
                Session {
                    conn_id,
                    policy_name: policy_name.clone(),
                    policy: policy.clone(),
                    transport,
                    tx,
                    kick: kick.clone(),
                    subscriptions: Vec::new(),
                    next_packet_id: 0,
                },
            );
        }
        self.inner.counters.connections_accepted.fetch_add(1, Ordering::Relaxed);
        tracing::info!(client = %connect.client_id, %transport, policy = %policy_name, "client connected");

        let writer = tokio::spawn(write_loop(wr, rx));
        let exit = self.session_loop(&connect, &policy, &mut rd, &mut buf, &kick).await;

        {
            let mut state = self.inner.state.lock();
            if state.sessions.get(&connect.client_id).map(|s| s.conn_id) == Some(conn_id) {
                if let Some(s) = state.sessions.remove(&connect.client_id) {
                    let _ = s.tx.send(Outbound::Close);
                }
            }
            if let (Exit::Abrupt(_), Some(will)) = (&exit, &connect.will) {
                self.publish_will(&mut state, &connect.client_id, &policy, will);
            }
        }
        let _ = writer.await;
        tracing::info!(client = %connect.client_id, "client disconnected");
        match exit {
            Exit::Abrupt(Some(e)) => {
                if matches!(e, ConnectionError::Protocol(_)) {
                    self.inner.counters.protocol_errors.fetch_add(1, Ordering::Relaxed);
                }
                Err(e)
            }
            _ => Ok(()),
        }
    }

    async fn session_loop<R: AsyncRead + Unpin>(
        &self,
        connect: &Connect,
        policy: &PolicyDocument,
        rd: &mut R,
        buf: &mut Vec<u8>,
        kick: &Notify,
    ) -> Exit {
        // Keep-alive is enforced at one and a half times the client's value.
        let keep_alive = (connect.keep_alive > 0).then(|| Duration::from_millis(connect.keep_alive as u64 * 1500));
        loop {
            let next = async {
                match keep_alive {
                    Some(limit) => tokio::time::timeout(limit, self.read_packet(rd, buf))
                        .await
                        .unwrap_or(Err(ConnectionError::KeepAliveExpired)),
                    None => self.read_packet(rd, buf).await,
                }
            };
            let packet = tokio::select! {
                _ = kick.notified() => return Exit::Evicted,
                p = next => p,
            };
            let packet = match packet {
                Ok(Some(p)) => p,
                Ok(None) => return Exit::Abrupt(None),
                Err(e) => return Exit::Abrupt(Some(e)),
            };
            match packet {
                Packet::Publish(publish) => {
                    if let Err(e) = self.handle_publish(&connect.client_id, policy, publish) {
                        return Exit::Abrupt(Some(e));
                    }
                }
                Packet::PubAck(_) => {}
                Packet::Subscribe(sub) => self.handle_subscribe(&connect.client_id, policy, sub),
                Packet::Unsubscribe(unsub) => {
                    let mut state = self.inner.state.lock();
                    if let Some(session) = state.sessions.get_mut(&connect.client_id) {
                        session
                            .subscriptions
                            .retain(|(f, _)| !unsub.filters.iter().any(|u| u == f.as_str()));
                        session.send(Packet::UnsubAck(unsub.packet_id));
                    }
                }
                Packet::PingReq => self.send_to(&connect.client_id, Packet::PingResp),
                Packet::Disconnect => return Exit::Graceful,
                other => return Exit::Abrupt(Some(ConnectionError::Unexpected(other.name()))),
            }
        }
    }

    fn handle_publish(&self, client_id: &str, policy: &PolicyDocument, publish: Publish) -> Result<(), ConnectionError> {
        self.inner.counters.publishes_received.fetch_add(1, Ordering::Relaxed);
        let allowed = policy.allows(Action::Publish, &publish.topic);
        let mut state = self.inner.state.lock();
        if let Some(id) = publish.packet_id {
            // Acknowledged even when dropped, so a denied QoS 1 sender does not retry forever.
            if let Some(session) = state.sessions.get(client_id) {
                session.send(Packet::PubAck(id));
            }
        }
        if !allowed {
            self.inner.counters.publishes_denied.fetch_add(1, Ordering::Relaxed);
            tracing::warn!(client = client_id, topic = %publish.topic, "publish denied by policy, dropped");
            if self.inner.config.strict {
                return Err(ConnectionError::PublishDenied(publish.topic));
            }
            return Ok(());
        }
        if publish.retain {
            if publish.payload.is_empty() {
                state.retained.remove(&publish.topic);
            } else {
                state.retained.insert(publish.topic.clone(), publish.clone());
            }
        }
        self.route(&mut state, &publish);
        Ok(())
    }

    fn handle_subscribe(&self, client_id: &str, policy: &PolicyDocument, sub: codec::Subscribe) {
        let mut state = self.inner.state.lock();
        let State { sessions, retained } = &mut *state;
        let Some(session) = sessions.get_mut(client_id) else {
            return;
        };
        let mut return_codes = Vec::with_capacity(sub.filters.len());
        let mut granted = Vec::new();
        for (raw, qos) in sub.filters {
            let filter = match TopicFilter::parse(&raw) {
                Ok(f) if policy.allows(Action::Subscribe, &raw) => f,
                _ => {
                    self.inner.counters.subscriptions_denied.fetch_add(1, Ordering::Relaxed);
                    tracing::warn!(client = client_id, filter = %raw, "subscription denied");
                    return_codes.push(SubAckReturn::Failure);
                    continue;
                }
            };
            session.subscriptions.retain(|(f, _)| f.as_str() != raw);
            session.subscriptions.push((filter.clone(), qos));
            return_codes.push(SubAckReturn::Granted(qos));
            granted.push((filter, qos));
        }
        session.send(Packet::SubAck(SubAck {
            packet_id: sub.packet_id,
            return_codes,
        }));
        for (topic, message) in retained.iter() {
            let Some(qos) = delivery_qos(&granted, topic, message.qos) else {
                continue;
            };
            if !session.policy.allows(Action::Subscribe, topic) {
                continue;
            }
            let packet_id = (qos == QoS::AtLeastOnce).then(|| session.packet_id());
            session.send(Packet::Publish(Publish {
                dup: false,
                qos,
                retain: true,
                topic: topic.clone(),
                packet_id,
                payload: message.payload.clone(),
            }));
            self.inner.counters.messages_delivered.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn route(&self, state: &mut State, publish: &Publish) {
        for session in state.sessions.values_mut() {
            let Some(qos) = delivery_qos(&session.subscriptions, &publish.topic, publish.qos) else {
                continue;
            };
            if !session.policy.allows(Action::Subscribe, &publish.topic) {
                continue;
            }
            let packet_id = (qos == QoS::AtLeastOnce).then(|| session.packet_id());
            session.send(Packet::Publish(Publish {
                dup: false,
                qos,
                retain: false,
                topic: publish.topic.clone(),
                packet_id,
                payload: publish.payload.clone(),
            }));
            self.inner.counters.messages_delivered.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn publish_will(&self, state: &mut State, client_id: &str, policy: &PolicyDocument, will: &LastWill) {
        if !policy.allows(Action::Publish, &will.topic) {
            tracing::warn!(client = client_id, topic = %will.topic, "will denied by policy");
            return;
        }
        let publish = Publish {
            dup: false,
            qos: will.qos,
            retain: will.retain,
            topic: will.topic.clone(),
            packet_id: None,
            payload: will.payload.clone(),
        };
        if will.retain {
            state.retained.insert(will.topic.clone(), publish.clone());
        }
        self.route(state, &publish);
    }

    fn send_to(&self, client_id: &str, packet: Packet) {
        if let Some(session) = self.inner.state.lock().sessions.get(client_id) {
            session.send(packet);
        }
    }

    async fn refuse<W: AsyncWrite + Unpin>(&self, wr: &mut W, code: ConnectReturnCode) {
        self.inner.counters.connections_refused.fetch_add(1, Ordering::Relaxed);
        let bytes = codec::encode(&Packet::ConnAck(ConnAck {
            session_present: false,
            code,
        }));
        let _ = wr.write_all(&bytes).await;
        let _ = wr.shutdown().await;
    }

    /// Reads until one full packet is buffered. `Ok(None)` on clean EOF
    /// between packets.
    async fn read_packet<R: AsyncRead + Unpin>(&self, rd: &mut R, buf: &mut Vec<u8>) -> Result<Option<Packet>, ConnectionError> {
        loop {
            if let Some(len) = codec::frame_length(buf)? {
                if len > self.inner.config.max_packet_size {
                    return Err(ProtocolError::TooLarge(len).into());
                }
            }
            if let Some((packet, used)) = codec::decode(buf)? {
                buf.drain(..used);
                return Ok(Some(packet));
            }
            let mut chunk = [0u8; 4096];
            let n = rd.read(&mut chunk).await?;
            if n == 0 {
                return if buf.is_empty() {
                    Ok(None)
                } else {
                    Err(io::Error::from(io::ErrorKind::UnexpectedEof).into())
                };
            }
            buf.extend_from_slice(&chunk[..n]);
        }
    }
}

async fn write_loop<W: AsyncWrite + Unpin>(mut wr: W, mut rx: mpsc::UnboundedReceiver<Outbound>) {
    let mut out = Vec::with_capacity(1024);
    while let Some(msg) = rx.recv().await {
        let Outbound::Packet(packet) = msg else { break };
        out.clear();
        codec::encode_into(&packet, &mut out);
        // Drain whatever else is queued into the same write.
        let mut closing = false;
        while let Ok(next) = rx.try_recv() {
            match next {
                Outbound::Packet(p) => codec::encode_into(&p, &mut out),
                Outbound::Close => {
                    closing = true;
                    break;
                }
            }
        }
        if wr.write_all(&out).await.is_err() || wr.flush().await.is_err() || closing {
            break;
        }
    }
    let _ = wr.shutdown().await;
}

/// A broker serving in background tasks; the tasks stop when this is dropped.
pub struct RunningBroker {
    pub broker: Broker,
    pub tcp_addr: Option<SocketAddr>,
    pub ws_addr: Option<SocketAddr>,
    pub ws_path: Option<String>,
    tasks: Vec<JoinHandle<io::Result<()>>>,
}

impl RunningBroker {
    pub fn tcp_url(&self) -> Option<String> {
        self.tcp_addr.map(|a| format!("tcp://{a}"))
    }

    pub fn ws_url(&self) -> Option<String> {
        Some(format!("ws://{}{}", self.ws_addr?, self.ws_path.as_deref()?))
    }

    pub fn shutdown(self) {}
}

impl Drop for RunningBroker {
    fn drop(&mut self) {
        for task in &self.tasks {
            task.abort();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> TopicFilter {
        TopicFilter::parse(s).unwrap()
    }

    #[test]
    fn delivery_qos_is_min_of_best_grant_and_publish() {
        let subs = vec![(f("a/+"), QoS::AtMostOnce), (f("a/#"), QoS::AtLeastOnce)];
        assert_eq!(delivery_qos(&subs, "a/b", QoS::AtLeastOnce), Some(QoS::AtLeastOnce));
        assert_eq!(delivery_qos(&subs, "a/b", QoS::AtMostOnce), Some(QoS::AtMostOnce));
        assert_eq!(delivery_qos(&subs[..1], "a/b", QoS::AtLeastOnce), Some(QoS::AtMostOnce));
        assert_eq!(delivery_qos(&subs, "b", QoS::AtLeastOnce), None);
    }
}
