//! Live session service: wire protocol, session state, WebSocket transport,
//! headless rendering and the command-line front end.

pub mod cli;
pub mod protocol;
pub mod render;
pub mod server;
pub mod session;
