//! Carriers for slow-path traffic: the in-process mock, a framed TCP
//! client, and the matching server loop.

use std::collections::BTreeMap;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use crate::simulator::oracle::GroundTruthConfig;
use crate::simulator::scenario::Scenario;

use super::mock::{error_response, mock_respond, OracleKnowledge};
use super::protocol::{decode_request, decode_response, encode_request, encode_response, read_frame, write_frame, DecodeError, SlowRequest, SlowResponse};

/// Environment variable naming the slow endpoint, `host:port`.
pub const ENDPOINT_ENV: &str = "DUAL_AEB_SLOW_ENDPOINT";

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("slow endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Submits requests and hands back replies by id. `collect` is called at
/// the tick a reply is due and may block until it arrives.
pub trait SlowTransport {
    fn submit(&mut self, req: &SlowRequest) -> Result<(), TransportError>;
    /// `None` when the reply will never arrive.
    fn collect(&mut self, request_id: u64) -> Option<SlowResponse>;
}

/// Mock called directly, answering at submission time.
#[derive(Debug, Clone)]
pub struct InProcessMock {
    oracle: Arc<OracleKnowledge>,
    ready: BTreeMap<u64, SlowResponse>,
}

impl InProcessMock {
    pub fn new(sc: &Scenario, gt: GroundTruthConfig) -> Self {
        Self::from_oracle(Arc::new(OracleKnowledge::new(sc, gt)))
    }

    pub fn from_oracle(oracle: Arc<OracleKnowledge>) -> Self {
        Self {
            oracle,
            ready: BTreeMap::new(),
        }
    }
}

impl SlowTransport for InProcessMock {
    fn submit(&mut self, req: &SlowRequest) -> Result<(), TransportError> {
        self.ready.insert(req.request_id, mock_respond(req, &self.oracle));
        Ok(())
    }

    fn collect(&mut self, request_id: u64) -> Option<SlowResponse> {
        self.ready.remove(&request_id)
    }
}

/// A transport whose endpoint could not be reached. Every submission fails.
#[derive(Debug, Clone)]
pub struct Unreachable {
    reason: String,
}

impl Unreachable {
    pub fn new(reason: impl Into<String>) -> Self {
        Self { reason: reason.into() }
    }
}

impl SlowTransport for Unreachable {
    fn submit(&mut self, _req: &SlowRequest) -> Result<(), TransportError> {
        Err(TransportError::Unreachable(self.reason.clone()))
    }

    fn collect(&mut self, _request_id: u64) -> Option<SlowResponse> {
        None
    }
}

/// Framed JSON over TCP. A reader thread drains replies into a channel so
/// submissions never wait on the peer.
pub struct TcpTransport {
    writer: BufWriter<TcpStream>,
    replies: Receiver<SlowResponse>,
    stash: BTreeMap<u64, SlowResponse>,
    reply_timeout: Duration,
    reader: Option<JoinHandle<()>>,
}

impl TcpTransport {
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self, TransportError> {
        let addrs: Vec<SocketAddr> = endpoint
            .to_socket_addrs()
            .map_err(|e| TransportError::Unreachable(format!("{endpoint}: {e}")))?
            .collect();
        let stream = addrs
            .iter()
            .find_map(|a| TcpStream::connect_timeout(a, timeout).ok())
            .ok_or_else(|| TransportError::Unreachable(endpoint.to_string()))?;
        stream.set_nodelay(true)?;
        let read_half = stream.try_clone()?;
        let (tx, rx) = mpsc::channel();
        let reader = thread::spawn(move || {
            let mut r = BufReader::new(read_half);
            while let Ok(Some(frame)) = read_frame(&mut r) {
                // undecodable replies are dropped, like late ones
                if let Ok(resp) = decode_response(&frame) {
                    if tx.send(resp).is_err() {
                        break;
                    }
                }
            }
        });
        Ok(Self {
            writer: BufWriter::new(stream),
            replies: rx,
            stash: BTreeMap::new(),
            reply_timeout: Duration::from_secs(10),
            reader: Some(reader),
        })
    }

    pub fn with_reply_timeout(mut self, timeout: Duration) -> Self {
        self.reply_timeout = timeout;
        self
    }
}

impl SlowTransport for TcpTransport {
    fn submit(&mut self, req: &SlowRequest) -> Result<(), TransportError> {
        write_frame(&mut self.writer, &encode_request(req))?;
        Ok(())
    }

    fn collect(&mut self, request_id: u64) -> Option<SlowResponse> {
        if let Some(r) = self.stash.remove(&request_id) {
            return Some(r);
        }
        loop {
            match self.replies.recv_timeout(self.reply_timeout) {
                Ok(r) if r.request_id == request_id => return Some(r),
                Ok(r) => {
                    self.stash.insert(r.request_id, r);
                }
                Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => return None,
            }
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        let _ = self.writer.flush();
        let _ = self.writer.get_ref().shutdown(std::net::Shutdown::Both);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

/// Pulls a request id out of a payload that failed to decode, so the error
/// reply can echo it.
fn salvage_request_id(frame: &[u8]) -> u64 {
    serde_json::from_slice::<serde_json::Value>(frame)
        .ok()
        .and_then(|v| v.get("request_id").and_then(|id| id.as_u64()))
        .unwrap_or(0)
}

/// Serves one session: requests are answered strictly in arrival order
/// until the peer closes the stream.
pub fn serve_session<S: Read + Write>(stream: S, oracle: &OracleKnowledge) -> io::Result<()> {
    let mut stream = stream;
    while let Some(frame) = read_frame(&mut stream)? {
        let resp = match decode_request(&frame) {
            Ok(req) => mock_respond(&req, oracle),
            Err(e) => error_response(salvage_request_id(&frame), &e.to_string()),
        };
        write_frame(&mut stream, &encode_response(&resp))?;
    }
    Ok(())
}

/// Accepts sessions on `listener`, one thread each, until the listener
/// fails.
pub fn serve(listener: TcpListener, oracle: Arc<OracleKnowledge>) -> io::Result<()> {
    for conn in listener.incoming() {
        let stream = conn?;
        stream.set_nodelay(true)?;
        let oracle = Arc::clone(&oracle);
        thread::spawn(move || {
            let _ = serve_session(stream, &oracle);
        });
    }
    Ok(())
}

/// Binds `addr` and serves in a background thread, returning the bound
/// address.
pub fn spawn_server(addr: &str, oracle: Arc<OracleKnowledge>) -> io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    thread::spawn(move || {
        let _ = serve(listener, oracle);
    });
    Ok(local)
}
