//! Slow-path contract: wire protocol, oracle-backed mock and transports.

pub mod mock;
pub mod protocol;
pub mod transport;

pub use mock::{mock_respond, OracleKnowledge};
pub use protocol::*;
pub use transport::{serve, serve_session, spawn_server, InProcessMock, SlowTransport, TcpTransport, TransportError, Unreachable, ENDPOINT_ENV};
