//! A small async MQTT 3.1.1 client (QoS 0/1) over TCP or WebSocket.

use std::collections::HashMap;
use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::atomic::{AtomicU16, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot};
use tokio_tungstenite::tungstenite::client::IntoClientRequest;
use tokio_tungstenite::tungstenite::http::HeaderValue;

use crate::codec::{self, Connect, ConnectReturnCode, LastWill, Packet, ProtocolError, Publish, QoS, SubAckReturn, Subscribe, Unsubscribe};
use crate::ws;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `host:port` reached over raw TCP.
    Tcp(String),
    /// A full `ws://` URL.
    WebSocket(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid broker endpoint {0:?}: expected tcp://host:port, mqtt://host:port, ws://host:port/path or host:port")]
pub struct EndpointError(pub String);

impl FromStr for Endpoint {
    type Err = EndpointError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EndpointError(s.to_owned());
        if s.starts_with("ws://") {
            let rest = &s["ws://".len()..];
            if rest.is_empty() || rest.starts_with('/') {
                return Err(bad());
            }
            return Ok(Endpoint::WebSocket(s.to_owned()));
        }
        let hostport = s
            .strip_prefix("tcp://")
            .or_else(|| s.strip_prefix("mqtt://"))
            .unwrap_or(s)
            .trim_end_matches('/');
        if hostport.contains("://") || hostport.contains('/') {
            return Err(bad());
        }
        match hostport.rsplit_once(':') {
            Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => Ok(Endpoint::Tcp(hostport.to_owned())),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Tcp(hp) => write!(f, "tcp://{hp}"),
            Endpoint::WebSocket(url) => f.write_str(url),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("websocket error: {0}")]
    WebSocket(String),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("broker refused connection: {0}")]
    Refused(ConnectReturnCode),
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("connection closed")]
    Closed,
    #[error("subscription to {0:?} rejected")]
    SubscriptionRejected(String),
    #[error("unexpected {0} from broker")]
    Unexpected(&'static str),
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub client_id: String,
    /// Seconds; 0 disables keep-alive pings.
    pub keep_alive: u16,
    pub will: Option<LastWill>,
    pub ack_timeout: Duration,
}

impl ClientOptions {
    pub fn new(client_id: impl Into<String>) -> Self {
        ClientOptions {
            client_id: client_id.into(),
            keep_alive: 30,
            will: None,
            ack_timeout: Duration::from_secs(5),
        }
    }

    pub fn keep_alive(mut self, secs: u16) -> Self {
        self.keep_alive = secs;
        self
    }

    pub fn will(mut self, will: LastWill) -> Self {
        self.will = Some(will);
        self
    }
}

type Pending = Arc<Mutex<HashMap<u16, oneshot::Sender<Packet>>>>;

/// Handle for sending on an established connection. Incoming publishes
/// arrive on the receiver returned by [`connect`]; it yields `None` once
/// the connection is gone.
#[derive(Clone)]
pub struct MqttClient {
    client_id: String,
    tx: mpsc::UnboundedSender<Packet>,
    pending: Pending,
    next_id: Arc<AtomicU16>,
    ack_timeout: Duration,
    // The connection task drops the socket once every clone is gone.
    _alive: Arc<oneshot::Sender<()>>,
}

pub type Incoming = mpsc::UnboundedReceiver<Publish>;

pub async fn connect(endpoint: &Endpoint, options: ClientOptions) -> Result<(MqttClient, Incoming), ClientError> {
    match endpoint {
        Endpoint::Tcp(hostport) => {
            let stream = TcpStream::connect(hostport).await?;
            let _ = stream.set_nodelay(true);
            connect_over(stream, options).await
        }
        Endpoint::WebSocket(url) => {
            let mut request = url
                .as_str()
                .into_client_request()
                .map_err(|e| ClientError::WebSocket(e.to_string()))?;
            request
                .headers_mut()
                .insert("sec-websocket-protocol", HeaderValue::from_static(ws::SUBPROTOCOL));
            let (socket, _) = tokio_tungstenite::connect_async(request)
                .await
                .map_err(|e| ClientError::WebSocket(e.to_string()))?;
            connect_over(ws::into_byte_stream(socket), options).await
        }
    }
}

/// Performs the CONNECT handshake over an already-open byte stream.
pub async fn connect_over<S>(stream: S, options: ClientOptions) -> Result<(MqttClient, Incoming), ClientError>
where
    S: AsyncRead + AsyncWrite + Send + 'static,
{
    let (mut rd, mut wr) = tokio::io::split(stream);
    let connect = Connect {
        client_id: options.client_id.clone(),
        keep_alive: options.keep_alive,
        clean_session: true,
        will: options.will.clone(),
        username: None,
        password: None,
    };
    wr.write_all(&codec::encode(&Packet::Connect(connect))).await?;
    let mut buf = Vec::new();
    let ack = tokio::time::timeout(options.ack_timeout, read_packet(&mut rd, &mut buf))
        .await
        .map_err(|_| ClientError::Timeout("CONNACK"))??;
    match ack {
        Some(Packet::ConnAck(ack)) if ack.code == ConnectReturnCode::Accepted => {}
        Some(Packet::ConnAck(ack)) => return Err(ClientError::Refused(ack.code)),
        Some(other) => return Err(ClientError::Unexpected(other.name())),
        None => return Err(ClientError::Closed),
    }

    let (tx, out_rx) = mpsc::unbounded_channel();
    let (in_tx, in_rx) = mpsc::unbounded_channel();
    let pending: Pending = Arc::default();
    let (alive, dropped) = oneshot::channel();
    let client = MqttClient {
        client_id: options.client_id,
        tx: tx.clone(),
        pending: pending.clone(),
        next_id: Arc::new(AtomicU16::new(0)),
        ack_timeout: options.ack_timeout,
        _alive: Arc::new(alive),
    };
    tokio::spawn(async move {
        let writer = write_loop(wr, out_rx);
        let reader = read_loop(rd, buf, tx.clone(), in_tx, pending.clone());
        let pinger = ping_loop(tx, options.keep_alive);
        tokio::select! {
            _ = writer => {}
            _ = reader => {}
            _ = pinger => {}
            _ = dropped => {}
        }
        pending.lock().clear();
    });
    Ok((client, in_rx))
}

async fn read_packet<R: AsyncRead + Unpin>(rd: &mut R, buf: &mut Vec<u8>) -> Result<Option<Packet>, ClientError> {
    loop {
        if let Some((packet, used)) = codec::decode(buf)? {
            buf.drain(..used);
            return Ok(Some(packet));
        }
        let mut chunk = [0u8; 4096];
        let n = rd.read(&mut chunk).await?;
        if n == 0 {
            return Ok(None);
        }
        buf.extend_from_slice(&chunk[..n]);
    }
}

async fn write_loop<W: AsyncWrite + Unpin>(mut wr: W, mut rx: mpsc::UnboundedReceiver<Packet>) {
    let mut out = Vec::new();
    while let Some(packet) = rx.recv().await {
        out.clear();
        codec::encode_into(&packet, &mut out);
        let disconnect = matches!(packet, Packet::Disconnect);
        if wr.write_all(&out).await.is_err() || wr.flush().await.is_err() || disconnect {
            break;
        }
    }
    let _ = wr.shutdown().await;
}

async fn read_loop<R: AsyncRead + Unpin>(
    mut rd: R,
    mut buf: Vec<u8>,
    tx: mpsc::UnboundedSender<Packet>,
    incoming: mpsc::UnboundedSender<Publish>,
    pending: Pending,
) {
    loop {
        let packet = match read_packet(&mut rd, &mut buf).await {
            Ok(Some(p)) => p,
            Ok(None) => return,
            Err(e) => {
                tracing::debug!(error = %e, "mqtt client read failed");
                return;
            }
        };
        match packet {
            Packet::Publish(publish) => {
                if let Some(id) = publish.packet_id {
                    let _ = tx.send(Packet::PubAck(id));
                }
                let _ = incoming.send(publish);
            }
            Packet::PubAck(id) | Packet::UnsubAck(id) => {
                if let Some(waiter) = pending.lock().remove(&id) {
                    let _ = waiter.send(packet);
                }
            }
            Packet::SubAck(ref ack) => {
                if let Some(waiter) = pending.lock().remove(&ack.packet_id) {
                    let _ = waiter.send(packet);
                }
            }
            Packet::PingResp => {}
            other => {
                tracing::debug!(packet = other.name(), "unexpected packet from broker");
                return;
            }
        }
    }
}

async fn ping_loop(tx: mpsc::UnboundedSender<Packet>, keep_alive: u16) {
    if keep_alive == 0 {
        return std::future::pending().await;
    }
    let mut every = tokio::time::interval(Duration::from_secs(keep_alive as u64));
    every.tick().await;
    loop {
        every.tick().await;
        if tx.send(Packet::PingReq).is_err() {
            return;
        }
    }
}

impl MqttClient {
    pub fn client_id(&self) -> &str {
        &self.client_id
    }

    pub fn is_connected(&self) -> bool {
        !self.tx.is_closed()
    }

    fn packet_id(&self) -> u16 {
        loop {
            let id = self.next_id.fetch_add(1, Ordering::Relaxed).wrapping_add(1);
            if id != 0 {
                return id;
            }
        }
    }

    async fn request(&self, packet: Packet, id: u16, what: &'static str) -> Result<Packet, ClientError> {
        let (done, wait) = oneshot::channel();
        self.pending.lock().insert(id, done);
        self.tx.send(packet).map_err(|_| ClientError::Closed)?;
        match tokio::time::timeout(self.ack_timeout, wait).await {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(_)) => Err(ClientError::Closed),
            Err(_) => {
                self.pending.lock().remove(&id);
                Err(ClientError::Timeout(what))
            }
        }
    }

    /// Subscribes to one filter and waits for the SUBACK.
    pub async fn subscribe(&self, filter: &str, qos: QoS) -> Result<QoS, ClientError> {
        let id = self.packet_id();
        let packet = Packet::Subscribe(Subscribe {
            packet_id: id,
            filters: vec![(filter.to_owned(), qos)],
        });
        match self.request(packet, id, "SUBACK").await? {
            Packet::SubAck(ack) => match ack.return_codes.first() {
                Some(SubAckReturn::Granted(q)) => Ok(*q),
                _ => Err(ClientError::SubscriptionRejected(filter.to_owned())),
            },
            other => Err(ClientError::Unexpected(other.name())),
        }
    }

    pub async fn unsubscribe(&self, filter: &str) -> Result<(), ClientError> {
        let id = self.packet_id();
        let packet = Packet::Unsubscribe(Unsubscribe {
            packet_id: id,
            filters: vec![filter.to_owned()],
        });
        self.request(packet, id, "UNSUBACK").await.map(|_| ())
    }

    /// Publishes; at QoS 1 this waits for the PUBACK.
    pub async fn publish(&self, topic: &str, payload: impl Into<Vec<u8>>, qos: QoS, retain: bool) -> Result<(), ClientError> {
        let mut publish = Publish {
            dup: false,
            qos,
            retain,
            topic: topic.to_owned(),
            packet_id: None,
            payload: payload.into(),
        };
        match qos {
            QoS::AtMostOnce => self.tx.send(Packet::Publish(publish)).map_err(|_| ClientError::Closed),
            QoS::AtLeastOnce => {
                let id = self.packet_id();
                publish.packet_id = Some(id);
                self.request(Packet::Publish(publish), id, "PUBACK").await.map(|_| ())
            }
        }
    }

    pub fn disconnect(&self) {
        let _ = self.tx.send(Packet::Disconnect);
    }
}

/// Exponential reconnect delay, reset after a successful connection.
#[derive(Debug, Clone)]
pub struct Backoff {
    min: Duration,
    max: Duration,
    next: Duration,
}

impl Backoff {
    pub fn new(min: Duration, max: Duration) -> Self {
        Backoff { min, max, next: min }
    }

    pub fn next_delay(&mut self) -> Duration {
        let delay = self.next;
        self.next = (self.next * 2).min(self.max);
        delay
    }

    pub fn reset(&mut self) {
        self.next = self.min;
    }
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff::new(Duration::from_millis(100), Duration::from_secs(5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_up_to_max_and_resets() {
        let mut b = Backoff::new(Duration::from_millis(100), Duration::from_millis(350));
        let got: Vec<u128> = (0..4).map(|_| b.next_delay().as_millis()).collect();
        assert_eq!(got, vec![100, 200, 350, 350]);
        b.reset();
        assert_eq!(b.next_delay(), Duration::from_millis(100));
    }
}
