//! MQTT over WebSocket. Binary frames are glued into a plain byte stream so
//! the broker and client can treat both transports the same way.

use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt, DuplexStream};
use tokio_tungstenite::tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tokio_tungstenite::tungstenite::http::{HeaderValue, StatusCode};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::WebSocketStream;

pub const SUBPROTOCOL: &str = "mqtt";
pub const DEFAULT_PATH: &str = "/mqtt";

const PIPE_CAPACITY: usize = 64 * 1024;

fn reject(status: StatusCode, reason: &str) -> ErrorResponse {
    let mut resp = ErrorResponse::new(Some(reason.to_owned()));
    *resp.status_mut() = status;
    resp
}

/// Handshake check for the server side: the path must match and, if the
/// client offers subprotocols, `mqtt` must be among them (it is echoed back).
pub fn check_handshake(path: &str, request: &Request, mut response: Response) -> Result<Response, ErrorResponse> {
    if request.uri().path() != path {
        return Err(reject(StatusCode::NOT_FOUND, "unknown path"));
    }
    if let Some(offered) = request.headers().get("sec-websocket-protocol") {
        let offered = offered.to_str().unwrap_or("");
        if !offered.split(',').any(|p| p.trim().eq_ignore_ascii_case(SUBPROTOCOL)) {
            return Err(reject(StatusCode::BAD_REQUEST, "subprotocol mqtt required"));
        }
        response
            .headers_mut()
            .insert("sec-websocket-protocol", HeaderValue::from_static(SUBPROTOCOL));
    }
    Ok(response)
}

/// Runs a pump between the WebSocket and an in-memory pipe and returns the
/// other end of the pipe. The pump ends when either side closes.
pub fn into_byte_stream<S>(ws: WebSocketStream<S>) -> DuplexStream
where
    S: AsyncRead + AsyncWrite + Unpin + Send + 'static,
{
    let (ours, theirs) = tokio::io::duplex(PIPE_CAPACITY);
    tokio::spawn(pump(ws, ours));
    theirs
}

async fn pump<S>(ws: WebSocketStream<S>, pipe: DuplexStream)
where
    S: AsyncRead + AsyncWrite + Unpin + Send + 'static,
{
    let (mut sink, mut source) = ws.split();
    let (mut pipe_rd, mut pipe_wr) = tokio::io::split(pipe);
    let inbound = async {
        while let Some(msg) = source.next().await {
            match msg {
                Ok(Message::Binary(data)) => {
                    if pipe_wr.write_all(&data).await.is_err() {
                        break;
                    }
                }
                Ok(Message::Ping(_) | Message::Pong(_) | Message::Frame(_)) => {}
                Ok(Message::Text(_)) => {
                    tracing::debug!("text frame on MQTT WebSocket, closing");
                    break;
                }
                Ok(Message::Close(_)) | Err(_) => break,
            }
        }
        let _ = pipe_wr.shutdown().await;
    };
    let outbound = async {
        let mut buf = vec![0u8; 16 * 1024];
        loop {
            match pipe_rd.read(&mut buf).await {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    if sink.send(Message::Binary(buf[..n].to_vec().into())).await.is_err() {
                        return;
                    }
                }
            }
        }
        let _ = sink.close().await;
    };
    // Whichever direction finishes first tears the connection down.
    tokio::select! {
        _ = inbound => {}
        _ = outbound => {}
    }
}
