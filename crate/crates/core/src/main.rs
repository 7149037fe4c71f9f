//! Binary entry point; all behavior lives in [`clc_enhance::cli`].

use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(clc_enhance::cli::run_main() as u8)
}
