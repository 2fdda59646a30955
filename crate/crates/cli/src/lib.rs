//! Command-line front end and HTTP service for modguard.

pub mod backend;
pub mod cli;
pub mod commands;
pub mod config;
pub mod service;
