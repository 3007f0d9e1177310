//! Batch front end: every command reads its inputs, writes its outputs and a
//! `manifest.json` (tool version, resolved config, seeds, SHA-256 digests of
//! inputs and outputs) into the output directory.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{cmd_ae_verify, cmd_eval, cmd_features, cmd_fit, cmd_implicit, cmd_mask, cmd_segment, Outcome};
pub use config::RunConfig;

use hybridseg::ErrorKind;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Input => EXIT_INPUT,
        ErrorKind::Numerical => EXIT_NUMERICAL,
        ErrorKind::Degenerate => EXIT_DEGENERATE,
    }
}
