//! Command-line front end and file formats for `memheat-core`.
//!
//! - [`config`]: strict TOML run configurations with a canonical echo.
//! - [`formats`]: CSV, JSON and binary checkpoint files.
//! - [`campaign`]: random and swept campaigns on the rayon pool.
//! - [`ledger`]: audit of the symbol ownership table in `docs/symbols.tsv`.
//! - [`cli`]: the subcommands behind the `memheat` binary.

pub mod campaign;
pub mod cli;
pub mod config;
pub mod formats;
pub mod ledger;
