#![allow(dead_code)]

pub mod kat;
pub mod oracle;
pub mod schedules;
