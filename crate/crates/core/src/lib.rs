//! Forensic parsing and correlation of WhatsApp Messenger artifacts from Android devices.

pub mod cli;
pub mod correlate;
pub mod crypt;
pub mod db;
pub mod forge;
pub mod ingest;
pub mod layout;
pub mod log;
pub mod model;
pub mod report;
