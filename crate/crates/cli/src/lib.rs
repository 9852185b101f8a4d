//! Pipeline commands and the synthesis service behind the `omniview` binary.

pub mod commands;
pub mod protocol;
pub mod render;
pub mod server;
pub mod session;
