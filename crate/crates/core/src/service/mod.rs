//! The host process: owns documents and annotation state and serves
//! rendering clients over a loopback protocol.

mod host;
pub mod protocol;
pub mod server;

pub use host::{
    DetachedTag, ExternalChange, Host, HostEvent, TextEditResult, ANNOTATIONS_CHANGED,
    DOCUMENT_CHANGED, ORPHAN_DETECTED,
};
pub use server::{start, ServeOptions, Server};
