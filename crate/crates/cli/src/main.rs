use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sfbf::runner::{load_config_with_seeds, run_batch, BatchOptions};

/// Stochastic forward-backward-forward splitting experiments.
#[derive(Debug, Parser)]
#[command(name = "sfbf", version, about, args_conflicts_with_subcommands = true)]
struct Cli {
    /// Run the built-in check problems and report one line per check.
    #[arg(long)]
    check: bool,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a TOML-described problem over one or more seeds.
    Run {
        config: PathBuf,
        /// Seeds overriding the config: `1,2,5`, `0..200` or `3..=7`, comma-joined.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<SeedList>,
        /// Output directory (overrides `output` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full iterate history per seed.
        #[arg(long)]
        dump_iterates: bool,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}"));
    let mut seeds = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        if let Some((lo, hi)) = part.split_once("..=") {
            seeds.extend(num(lo)?..=num(hi)?);
        } else if let Some((lo, hi)) = part.split_once("..") {
            seeds.extend(num(lo)?..num(hi)?);
        } else {
            seeds.push(num(part)?);
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(SeedList(seeds))
}

fn check(jobs: Option<usize>) -> ExitCode {
    let outcomes = sfbf::acceptance::run_checks(jobs);
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}

fn run(
    config: PathBuf,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    dump_iterates: bool,
    jobs: Option<usize>,
) -> ExitCode {
    let cfg = match load_config_with_seeds(&config, seeds) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let out_dir = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("sfbf-out"));
    let result = match run_batch(&cfg, &out_dir, &BatchOptions { jobs, dump_iterates }) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let s = &result.summary;
    for seed in s.per_seed.iter().filter_map(|p| p.error.as_ref().map(|e| (p.seed, e))) {
        eprintln!("seed {}: {}", seed.0, seed.1);
    }
    println!(
        "{}: {} seeds, {} converged (fraction {}), {} diverged, {} failed; results in {}",
        s.problem,
        s.seeds,
        s.converged,
        s.convergence_fraction,
        s.diverged,
        s.failed,
        out_dir.display()
    );
    ExitCode::from(result.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Some(Command::Run {
            config,
            seeds,
            out,
            dump_iterates,
        }) => run(config, seeds.map(|s| s.0), out, dump_iterates, cli.jobs),
        None if cli.check => check(cli.jobs),
        None => {
            eprintln!("nothing to do: pass `run <config>` or `--check` (see --help)");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_and_ranges() {
        assert_eq!(parse_seeds("1,2,5").unwrap().0, vec![1, 2, 5]);
        assert_eq!(parse_seeds("0..3,7").unwrap().0, vec![0, 1, 2, 7]);
        assert_eq!(parse_seeds("3..=5").unwrap().0, vec![3, 4, 5]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("a").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
