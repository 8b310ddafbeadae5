//! Community oversight of app permissions.
//!
//! Members of a small trusted community share the catalog of apps installed
//! on their phones and the permission decisions for each, review one
//! another's choices, hide apps they would rather keep to themselves, and
//! talk about it through a feed and direct messages.
//!
//! [`Coops`] is the entry point. The modules underneath are usable on their
//! own: [`catalog`] for diff reconciliation, [`oversight`] for masked
//! aggregate queries over a fixed set of catalogs, and so on.

pub mod catalog;
pub mod clock;
pub mod directory;
pub mod domain;
pub mod error;
pub mod events;
pub mod journal;
pub mod oversight;
pub mod service;
pub mod social;

pub use error::{Error, ErrorKind, Result};
pub use service::{Coops, Registration, ServiceConfig};
