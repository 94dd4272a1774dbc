//! Front ends for `geodp-core`: the `geodp` command line and an HTTP/JSON
//! service for the web explorer. Both go through [`api::execute`].

pub mod api;
pub mod config;
pub mod server;
