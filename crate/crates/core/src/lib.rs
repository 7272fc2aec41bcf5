//! Document-external annotations anchored to text spans.
//!
//! Annotations live in sidecar JSON files next to (not inside) the
//! documents they describe. They follow online edits through
//! [`tracking`], are re-attached after offline changes by [`reanchor`],
//! and are served to interactive clients by [`service`].

pub mod cli;
pub mod config;
pub mod error;
pub mod layers;
pub mod lmtest;
pub mod model;
pub mod provider;
pub mod reanchor;
pub mod repo;
pub mod service;
pub mod store;
pub mod tracking;

pub use error::{Error, Result};
pub use model::{
    validate_tag, Anchor, AnchorContext, AnnotationFile, DocOffset, DocumentRef, EditOperation,
    TagRecord, TagStatus, Violation,
};
pub use reanchor::{ReattachConfig, ReattachProposal, Reattachment, Strategy};
pub use store::{Freshness, StoreRoot};
