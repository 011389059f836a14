use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mshem_cli::{cmd_compare, cmd_solve, cmd_trace, CliError, DirectionSpec, Method, RunManifest, Solver};

#[derive(Parser)]
#[command(name = "mshem", version, about = "P-V curve tracing by multi-stage holomorphic embedding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one power flow.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "newton")]
        solver: Solver,
        /// Loading parameter (0 is the base case).
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
    },
    /// Trace the P-V curve and write curve, mismatch and summary files.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "mshem")]
        method: Method,
    },
    /// Compare curves previously written by `trace` into the output directory.
    Compare {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    case: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `proportional` or a JSON direction file.
    #[arg(long, default_value = "proportional")]
    direction: DirectionSpec,
    /// Corrector tolerance, per-unit.
    #[arg(long)]
    tol_correct: Option<f64>,
    /// Predictor tolerance, per-unit.
    #[arg(long)]
    tol_predict: Option<f64>,
    #[arg(long)]
    min_step_mw: Option<f64>,
    /// Series order.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Common {
    fn manifest(&self, method: Method) -> RunManifest {
        let mut m = RunManifest::new(&self.case, &self.out);
        m.method = method;
        m.direction = self.direction.clone();
        m.seed = self.seed;
        let t = &mut m.tracer;
        if let Some(v) = self.tol_correct {
            t.tol_correct = v;
            m.cpf.tol = v;
            t.correct_above = t.correct_above.min(v);
        }
        if let Some(v) = self.tol_predict {
            t.tol_predict = v;
        }
        if let Some(v) = self.min_step_mw {
            t.min_step_mw = v;
        }
        if let Some(v) = self.order {
            t.series_order = v;
        }
        m
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Solve { common, solver, lambda } => {
            let report = cmd_solve(&common.manifest(Method::Mshem), solver, lambda)?;
            Ok(serde_json::to_string_pretty(&report).expect("serializable"))
        }
        Command::Trace { common, method } => {
            let out = cmd_trace(&common.manifest(method))?;
            Ok(serde_json::to_string_pretty(&out.summary).expect("serializable"))
        }
        Command::Compare { common } => {
            let reports = cmd_compare(&common.manifest(Method::Both))?;
            Ok(serde_json::to_string_pretty(&reports).expect("serializable"))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap reports usage errors with status 2, which is reserved for numerical failures
            return if e.use_stderr() { ExitCode::from(mshem_cli::EXIT_INPUT as u8) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
