use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lbl::cli::{self, SimulateOptions, EXIT_USAGE};
use lbl::verify::DEFAULT_SEED;

/// Long-baseline underwater acoustic positioning toolkit.
#[derive(Debug, Parser)]
#[command(name = "lbl", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and solve every frame.
    Simulate {
        /// Scenario file, or the name of a bundled scenario (squaretest, moving).
        scenario: String,
        /// CSV destination; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write one frame as an observation file.
        #[arg(long)]
        export: Option<PathBuf>,
        /// Frame to export.
        #[arg(long, default_value_t = 0, requires = "export")]
        frame: u64,
    },
    /// Solve one frame from an observation file.
    Solve { observations: PathBuf },
    /// Print the TDMA frame schedule.
    Schedule {
        /// Message length, bytes.
        bytes: u32,
        /// Modem bit rate, bit/s.
        bps: f64,
        /// Guard time between slots, seconds.
        guard: f64,
        /// Drop the one-second cap on message duration.
        #[arg(long)]
        no_cap: bool,
    },
    /// Run the seeded property suite.
    Verify {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

/// Parses `argv` and runs the command, returning the process exit code.
fn run(argv: impl IntoIterator<Item = String>, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let args = match Args::try_parse_from(argv) {
        Ok(args) => args,
        Err(e) => {
            // help and version requests are not errors
            if e.use_stderr() {
                write!(err, "{}", e.render()).ok();
                return EXIT_USAGE;
            }
            write!(out, "{}", e.render()).ok();
            return 0;
        }
    };
    let result = match &args.command {
        Command::Simulate { scenario, output, export, frame } => cli::cmd_simulate(
            &SimulateOptions { scenario, output: output.as_deref(), export: export.as_deref(), export_frame: *frame },
            out,
            err,
        ),
        Command::Solve { observations } => cli::cmd_solve(observations, out),
        Command::Schedule { bytes, bps, guard, no_cap } => cli::cmd_schedule(*bytes, *bps, *guard, !no_cap, out),
        Command::Verify { seed } => cli::cmd_verify(*seed, out),
    };
    match result {
        Ok(()) => 0,
        Err(failure) => {
            writeln!(err, "error: {failure}").ok();
            failure.code
        }
    }
}

fn main() -> ExitCode {
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
    let code = run(std::env::args(), &mut out, &mut err);
    out.flush().ok();
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invoke(args: &[&str]) -> (u8, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let argv = std::iter::once("lbl").chain(args.iter().copied()).map(String::from);
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn exit_codes() {
        assert_eq!(invoke(&["simulate", "squaretest"]).0, 0);
        assert_eq!(invoke(&["simulate", "no-such.toml"]).0, 1);
        assert_eq!(invoke(&["schedule", "80", "640", "1"]).0, 0);
        assert_eq!(invoke(&["schedule", "200", "640", "1"]).0, 2);
        assert_eq!(invoke(&["schedule", "200", "640", "1", "--no-cap"]).0, 0);
        assert_eq!(invoke(&["schedule", "80", "0", "1"]).0, 1);
        assert_eq!(invoke(&["solve", "no-such.obs"]).0, 1);
    }

    #[test]
    fn usage_errors_go_to_stderr_with_code_1() {
        for args in [
            &[][..],
            &["frobnicate"],
            &["schedule", "80", "fast", "1"],
            &["simulate"],
            &["simulate", "squaretest", "--frame", "2"],
        ] {
            let (code, out, err) = invoke(args);
            assert_eq!(code, 1, "{args:?}");
            assert!(out.is_empty() && !err.is_empty(), "{args:?}");
        }
    }

    #[test]
    fn help_and_version_succeed() {
        let (code, out, _) = invoke(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("simulate") && out.contains("verify"));
        assert_eq!(invoke(&["--version"]).0, 0);
    }

    #[test]
    fn solver_failure_names_the_error() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/symmetric.obs");
        let (code, _, err) = invoke(&["solve", path]);
        assert_eq!(code, 2);
        assert!(err.contains("SingularDenominator"), "{err}");
    }
}
