#![allow(dead_code)]

pub mod conformance;
pub mod gen;
pub mod laws;
pub mod oracle;
