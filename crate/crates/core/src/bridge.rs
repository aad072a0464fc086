//! Client side of the model backend protocol.
//!
//! Messages are a 4-byte little-endian length followed by that many bytes of
//! UTF-8 JSON. Requests carry `{id, method, params}`; each gets exactly one
//! response `{id, ok, result}` or `{id, ok: false, error: {code, message}}`.
//! Images travel as `{width, height, data}` with `data` the base64 of raw
//! RGB8 samples.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Mutex;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::image::ImageBuffer;

/// Upper bound on one message body.
pub const MAX_MESSAGE_LEN: usize = 64 << 20;
pub const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Caption,
    Correct,
    Reconstruct,
    Lpips,
    Segment,
    Health,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Caption,
        Method::Correct,
        Method::Reconstruct,
        Method::Lpips,
        Method::Segment,
        Method::Health,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Caption => "caption",
            Method::Correct => "correct",
            Method::Reconstruct => "reconstruct",
            Method::Lpips => "lpips",
            Method::Segment => "segment",
            Method::Health => "health",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub id: u64,
    pub method: Method,
    pub params: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteError {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RemoteError>,
}

impl BridgeResponse {
    pub fn success(id: u64, result: Value) -> Self {
        Self { id, ok: true, result: Some(result), error: None }
    }

    pub fn failure(id: u64, code: &str, message: impl Into<String>) -> Self {
        Self {
            id,
            ok: false,
            result: None,
            error: Some(RemoteError { code: code.to_string(), message: message.into() }),
        }
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("backend unreachable at {endpoint}: {source}")]
    Unreachable { endpoint: String, source: io::Error },
    #[error("backend i/o: {0}")]
    Io(#[from] io::Error),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("backend error {}: {}", .0.code, .0.message)]
    Remote(RemoteError),
}

pub fn write_message<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "message too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one message; `None` on a clean end of stream before the length.
pub fn read_message<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_MESSAGE_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "message exceeds size limit"));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn encode_image(img: &ImageBuffer) -> Value {
    json!({ "width": img.width(), "height": img.height(), "data": B64.encode(img.data()) })
}

pub fn decode_image(v: &Value) -> Option<ImageBuffer> {
    let w = u32::try_from(v.get("width")?.as_u64()?).ok()?;
    let h = u32::try_from(v.get("height")?.as_u64()?).ok()?;
    let data = B64.decode(v.get("data")?.as_str()?).ok()?;
    ImageBuffer::from_raw(w, h, data)
}

struct Connection {
    stream: TcpStream,
    next_id: u64,
}

/// A backend connection. Calls are serialized, so ids increase strictly and
/// responses pair with requests in order.
pub struct BridgeClient {
    endpoint: String,
    conn: Mutex<Connection>,
}

impl BridgeClient {
    pub fn connect(endpoint: &str) -> Result<Self, BridgeError> {
        let unreachable = |source| BridgeError::Unreachable { endpoint: endpoint.to_string(), source };
        let addrs: Vec<_> = std::net::ToSocketAddrs::to_socket_addrs(endpoint)
            .map_err(unreachable)?
            .collect();
        let mut last = io::Error::new(io::ErrorKind::NotFound, "no address");
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT) {
                Ok(stream) => {
                    stream.set_nodelay(true).ok();
                    return Ok(Self {
                        endpoint: endpoint.to_string(),
                        conn: Mutex::new(Connection { stream, next_id: 1 }),
                    });
                }
                Err(e) => last = e,
            }
        }
        Err(unreachable(last))
    }

    /// Connects and checks that the backend answers `health`.
    pub fn connect_healthy(endpoint: &str) -> Result<Self, BridgeError> {
        let client = Self::connect(endpoint)?;
        client.health()?;
        Ok(client)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn call(&self, method: Method, params: Value) -> Result<Value, BridgeError> {
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let id = conn.next_id;
        conn.next_id += 1;
        let req = BridgeRequest { id, method, params };
        let body = serde_json::to_vec(&req).expect("request serializes");
        write_message(&mut conn.stream, &body)?;
        let reply = read_message(&mut conn.stream)?
            .ok_or_else(|| BridgeError::Protocol("connection closed before response".into()))?;
        let resp: BridgeResponse =
            serde_json::from_slice(&reply).map_err(|e| BridgeError::Protocol(format!("bad response: {e}")))?;
        if resp.id != id {
            return Err(BridgeError::Protocol(format!("response id {} for request {id}", resp.id)));
        }
        match (resp.ok, resp.result, resp.error) {
            (true, Some(result), _) => Ok(result),
            (false, _, Some(err)) => Err(BridgeError::Remote(err)),
            _ => Err(BridgeError::Protocol("response lacks result or error".into())),
        }
    }

    /// Methods the backend advertises.
    pub fn health(&self) -> Result<Vec<String>, BridgeError> {
        let v = self.call(Method::Health, json!({}))?;
        v.get("methods")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|m| m.as_str().map(str::to_string)).collect())
            .ok_or_else(|| BridgeError::Protocol("health result lacks methods".into()))
    }

    pub fn lpips(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, BridgeError> {
        let v = self.call(Method::Lpips, json!({ "a": encode_image(a), "b": encode_image(b) }))?;
        v.get("score")
            .and_then(Value::as_f64)
            .ok_or_else(|| BridgeError::Protocol("lpips result lacks score".into()))
    }

    pub fn caption(&self, image: &ImageBuffer, query: &str) -> Result<String, BridgeError> {
        let v = self.call(Method::Caption, json!({ "image": encode_image(image), "query": query }))?;
        v.get("text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BridgeError::Protocol("caption result lacks text".into()))
    }
}

/// In-process deterministic backend speaking the same protocol, used as a
/// test double. `lpips` is the mean absolute sample difference scaled to
/// [0, 1]; `caption` returns [`stub::CAPTION_FIXTURE`]; `correct` echoes its
/// text.
pub mod stub {
    use super::*;

    pub const CAPTION_FIXTURE: &str = "a red square at center";

    fn image_param(params: &Value, key: &str) -> Result<ImageBuffer, String> {
        params
            .get(key)
            .and_then(decode_image)
            .ok_or_else(|| format!("missing or malformed image {key:?}"))
    }

    fn mean_abs_diff(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, String> {
        if a.width() != b.width() || a.height() != b.height() {
            return Err("image sizes differ".into());
        }
        let sum: u64 = a.data().iter().zip(b.data()).map(|(x, y)| u64::from(x.abs_diff(*y))).sum();
        Ok(sum as f64 / (a.data().len().max(1) as f64 * 255.0))
    }

    /// Answers one request body.
    pub fn respond(body: &[u8]) -> BridgeResponse {
        let req: BridgeRequest = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_slice::<Value>(body)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Value::as_u64))
                    .unwrap_or(0);
                let code = if e.to_string().contains("unknown variant") { "Unsupported" } else { "BadParams" };
                return BridgeResponse::failure(id, code, e.to_string());
            }
        };
        let p = &req.params;
        let out = match req.method {
            Method::Health => Ok(json!({
                "methods": Method::ALL.iter().map(|m| m.name()).collect::<Vec<_>>()
            })),
            Method::Lpips => image_param(p, "a")
                .and_then(|a| image_param(p, "b").and_then(|b| mean_abs_diff(&a, &b)))
                .map(|s| json!({ "score": s })),
            Method::Caption => image_param(p, "image").map(|_| json!({ "text": CAPTION_FIXTURE })),
            Method::Correct => p
                .get("text")
                .and_then(Value::as_str)
                .map(|t| json!({ "text": t }))
                .ok_or_else(|| "missing text".to_string()),
            Method::Reconstruct | Method::Segment => {
                return BridgeResponse::failure(req.id, "Unsupported", format!("{} needs a model", req.method.name()))
            }
        };
        match out {
            Ok(v) => BridgeResponse::success(req.id, v),
            Err(msg) => BridgeResponse::failure(req.id, "BadParams", msg),
        }
    }

    /// Serves one connection until the peer closes it.
    pub fn serve_connection(mut stream: TcpStream) -> io::Result<()> {
        while let Some(body) = read_message(&mut stream)? {
            let resp = respond(&body);
            write_message(&mut stream, &serde_json::to_vec(&resp).expect("response serializes"))?;
        }
        Ok(())
    }

    /// Binds an ephemeral loopback port and serves connections one at a time
    /// on a background thread. Returns the endpoint.
    pub fn spawn() -> io::Result<String> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let endpoint = listener.local_addr()?.to_string();
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let _ = serve_connection(stream);
            }
        });
        Ok(endpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn message_framing_round_trip() {
        let mut buf = Vec::new();
        write_message(&mut buf, b"{}").unwrap();
        write_message(&mut buf, b"[1]").unwrap();
        assert_eq!(&buf[..4], &[2, 0, 0, 0]);
        let mut r = Cursor::new(buf);
        assert_eq!(read_message(&mut r).unwrap().unwrap(), b"{}");
        assert_eq!(read_message(&mut r).unwrap().unwrap(), b"[1]");
        assert!(read_message(&mut r).unwrap().is_none());
    }

    #[test]
    fn truncated_message_is_an_error() {
        let mut r = Cursor::new(vec![5, 0, 0, 0, b'{']);
        assert!(read_message(&mut r).is_err());
    }

    #[test]
    fn image_codec_round_trip() {
        let mut img = ImageBuffer::white(3, 2);
        img.put_pixel(1, 1, [1, 2, 3]);
        let v = encode_image(&img);
        assert_eq!(v["width"], 3);
        assert_eq!(decode_image(&v).unwrap(), img);
    }

    #[test]
    fn request_wire_shape() {
        let req = BridgeRequest { id: 7, method: Method::Health, params: json!({}) };
        assert_eq!(serde_json::to_string(&req).unwrap(), r#"{"id":7,"method":"health","params":{}}"#);
        let ok = BridgeResponse::success(7, json!({"x":1}));
        assert_eq!(serde_json::to_string(&ok).unwrap(), r#"{"id":7,"ok":true,"result":{"x":1}}"#);
    }

    #[test]
    fn stub_rejects_garbage_with_a_response() {
        let r = stub::respond(b"not json");
        assert!(!r.ok);
        assert_eq!(r.error.unwrap().code, "BadParams");
        let r = stub::respond(br#"{"id":4,"method":"dance","params":{}}"#);
        assert_eq!((r.id, r.error.unwrap().code.as_str()), (4, "Unsupported"));
    }

    #[test]
    fn client_against_stub() {
        let endpoint = stub::spawn().unwrap();
        let client = BridgeClient::connect_healthy(&endpoint).unwrap();
        assert_eq!(client.health().unwrap().len(), 6);
        let img = ImageBuffer::white(4, 4);
        assert_eq!(client.lpips(&img, &img).unwrap(), 0.0);
        // One of two samples differs by 255 in every channel.
        let a = ImageBuffer::from_raw(2, 1, vec![0, 0, 0, 9, 9, 9]).unwrap();
        let b = ImageBuffer::from_raw(2, 1, vec![255, 255, 255, 9, 9, 9]).unwrap();
        assert_eq!(client.lpips(&a, &b).unwrap(), 0.5);
        assert_eq!(client.caption(&img, "q").unwrap(), stub::CAPTION_FIXTURE);
        let err = client.call(Method::Reconstruct, json!({})).unwrap_err();
        assert!(matches!(err, BridgeError::Remote(RemoteError { ref code, .. }) if code == "Unsupported"));
        // The connection survives error responses.
        assert_eq!(client.lpips(&img, &img).unwrap(), 0.0);
    }

    #[test]
    fn unreachable_backend() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let err = BridgeClient::connect(&format!("127.0.0.1:{port}")).err().unwrap();
        assert!(matches!(err, BridgeError::Unreachable { .. }));
    }
}
