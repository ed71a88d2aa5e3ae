use std::io::Read;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fakeann_cli::error::CliError;
use fakeann_cli::jobs::{run_job, Command, JobOptions, Report};
use fakeann_cli::report;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Text,
}

/// Exact computations on fake annuli.
#[derive(Parser, Debug)]
#[command(name = "fakeann", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// problem file; repeat for several, `-` reads stdin
    #[arg(long, required = true)]
    input: Vec<String>,
    /// override the coefficient precision N
    #[arg(long)]
    prec: Option<i32>,
    /// λ window upper bound, e.g. `3/2`, `1+1/2*a` or `inf`
    #[arg(long, allow_hyphen_values = true)]
    lambda_hi: Option<String>,
    /// recorded in the report
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// extend the residue field to degree s first
    #[arg(long)]
    extend_residue: Option<usize>,
    /// number of files processed in parallel
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn read_input(path: &str) -> Result<String, CliError> {
    let io = |source| CliError::Io {
        path: path.to_string(),
        source,
    };
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(io)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(io)
    }
}

fn run_one(command: Command, path: &str, opts: &JobOptions) -> Report {
    match read_input(path) {
        Ok(text) => run_job(command, path, &text, opts),
        Err(e) => {
            let mut r = run_job(command, path, "", opts);
            r.error = Some(e.to_string());
            r.exit_code = e.exit_code();
            r
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let opts = JobOptions {
        prec: args.prec,
        lambda_hi: args.lambda_hi.clone(),
        seed: args.seed,
        extend_residue: args.extend_residue,
    };
    let jobs = args.jobs.max(1);
    let mut reports: Vec<Option<Report>> = vec![None; args.input.len()];
    std::thread::scope(|scope| {
        for (paths, slots) in args
            .input
            .chunks(args.input.len().div_ceil(jobs))
            .zip(reports.chunks_mut(args.input.len().div_ceil(jobs)))
        {
            let opts = &opts;
            scope.spawn(move || {
                for (p, slot) in paths.iter().zip(slots) {
                    *slot = Some(run_one(args.command, p, opts));
                }
            });
        }
    });
    let mut code = 0;
    for r in reports.into_iter().flatten() {
        match args.format {
            Format::Json => println!("{}", report::to_json(&r)),
            Format::Text => print!("{}", report::to_text(&r)),
        }
        if let Some(e) = &r.error {
            eprintln!("{}: {e}", r.input);
        }
        code = code.max(r.exit_code);
    }
    ExitCode::from(code as u8)
}
