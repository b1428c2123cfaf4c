//! Length-delimited request/response transport over TCP.
//!
//! Each message is a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON. A request is `{"tool": <name>, "arguments": {...}}`; the
//! response is the tool's envelope. Connections carry any number of
//! request/response pairs in order.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{ToolResponse, ToolService};

/// Largest accepted frame.
pub const MAX_FRAME: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRequest {
    pub tool: String,
    #[serde(default)]
    pub arguments: Json,
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {n} bytes exceeds limit")));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

/// Answer one encoded request. Malformed requests get an error envelope.
pub fn handle_request(service: &ToolService, request: &[u8]) -> Vec<u8> {
    match serde_json::from_slice::<ToolRequest>(request) {
        Ok(req) => service.call(&req.tool, &req.arguments).to_bytes(),
        Err(e) => ToolResponse::error(format!("malformed request: {e}")).to_bytes(),
    }
}

fn serve_connection(service: &ToolService, mut stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    while let Some(req) = read_frame(&mut stream)? {
        write_frame(&mut stream, &handle_request(service, &req))?;
    }
    Ok(())
}

/// A running server. Dropping the handle leaves it running; call
/// [`ServerHandle::shutdown`] to stop accepting connections.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Block until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

/// Bind `addr` and serve every connection on its own thread.
pub fn serve<A: ToSocketAddrs>(service: Arc<ToolService>, addr: A) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let accept = thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let svc = service.clone();
            thread::spawn(move || {
                let _ = serve_connection(&svc, stream);
            });
        }
    });
    Ok(ServerHandle {
        addr: local,
        stop,
        accept: Some(accept),
    })
}

/// Blocking client for one connection.
pub struct ToolClient {
    stream: TcpStream,
}

impl ToolClient {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    /// Raw response bytes for one call.
    pub fn call_raw(&mut self, tool: &str, arguments: Json) -> io::Result<Vec<u8>> {
        let req = serde_json::to_vec(&ToolRequest {
            tool: tool.to_string(),
            arguments,
        })?;
        write_frame(&mut self.stream, &req)?;
        read_frame(&mut self.stream)?.ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "server closed"))
    }

    pub fn call(&mut self, tool: &str, arguments: Json) -> io::Result<Json> {
        let bytes = self.call_raw(tool, arguments)?;
        serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}
