use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};

use nocsim::cli::{parse_config, summary, write_outcome, Format};
use nocsim::scenario::{run_scenario, Outcome, Scenario};
use nocsim::SimConfig;

/// Cycle-stepped chiplet interconnect simulator.
#[derive(Parser, Debug)]
#[command(version, group(ArgGroup::new("format").args(["csv", "json", "both"])))]
struct Args {
    /// TOML config file; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset to run, or `all`.
    #[arg(long, value_parser = parse_scenario)]
    scenario: Vec<Selection>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_cycles: Option<u64>,
    /// Write CSV only.
    #[arg(long)]
    csv: bool,
    /// Write JSON only.
    #[arg(long)]
    json: bool,
    /// Write CSV and JSON (default).
    #[arg(long)]
    both: bool,
}

#[derive(Debug, Clone)]
enum Selection {
    One(Scenario),
    All,
}

fn parse_scenario(s: &str) -> Result<Selection, String> {
    if s == "all" {
        return Ok(Selection::All);
    }
    Scenario::from_name(s).map(Selection::One).ok_or_else(|| {
        let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
        format!(
            "unknown scenario `{s}`; expected one of: {}, all",
            names.join(", ")
        )
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(p) => match parse_config(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
        },
        None => SimConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.max_cycles {
        cfg.max_cycles = m;
    }
    let format = match (args.csv, args.json) {
        (true, _) => Format::Csv,
        (_, true) => Format::Json,
        _ => Format::Both,
    };
    let mut picked: Vec<Scenario> = Vec::new();
    for s in &args.scenario {
        match s {
            Selection::All => picked.extend(Scenario::ALL),
            Selection::One(x) => picked.push(*x),
        }
    }
    picked.sort();
    picked.dedup();
    if picked.is_empty() {
        eprintln!("error: no scenario given (use --scenario NAME or --scenario all)");
        return ExitCode::from(2);
    }

    // independent presets run on worker threads; output order stays fixed
    let results: Vec<(Scenario, nocsim::Result<Outcome>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = picked
            .iter()
            .map(|&s| {
                let cfg = &cfg;
                scope.spawn(move || (s, run_scenario(s, cfg)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });

    let mut code = 0u8;
    for (s, r) in results {
        match r {
            Ok(o) => {
                print!("{}", summary(&o));
                if let Err(e) = write_outcome(&o, &args.out, format) {
                    eprintln!("error: writing {}: {e}", args.out.display());
                    code = 2;
                }
                if !o.passed() && code == 0 {
                    code = 1;
                }
            }
            Err(e) => {
                eprintln!("[ERROR] {s}: {e}");
                code = 2;
            }
        }
    }
    ExitCode::from(code)
}
