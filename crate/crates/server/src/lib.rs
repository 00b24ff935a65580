//! Command-line tool and HTTP session service for `dccf`.

pub mod cli;
pub mod service;
