use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use bifol::cli::{report::write_atomic, run_command, Command, Overrides, RunConfig};

const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "bifol", version, about = "Rotation numbers, asymptotic cycles and straightening of torus bi-foliations")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving `<command>.json` and exported grids.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit 4 when quality flags are raised.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = args.threads {
        if t == 0 || rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("error: invalid --threads {t}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let (cfg, text) = match RunConfig::load(&args.config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let ov = Overrides {
        seed: args.seed,
        out_dir: args.out.clone(),
    };
    let report = run_command(&cfg, &text, args.command, &ov);
    let json = report.to_json_pretty();
    println!("{json}");
    let out_dir = args.out.or_else(|| cfg.out_dir.as_ref().map(|d| cfg.base_dir.join(d)));
    if let Some(dir) = out_dir {
        let path = dir.join(format!("{}.json", args.command.name()));
        if let Err(e) = write_atomic(&path, json.as_bytes()) {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    if let Some(err) = &report.error {
        eprintln!("error: {}", err.message);
    }
    ExitCode::from(report.exit_code(args.strict) as u8)
}
