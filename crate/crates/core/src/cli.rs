//! `homlab` command line. Exit codes: 0 success, 1 validation error,
//! 2 numerical failure, 3 failed trend check under `study --assert`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::capacity::{capacity_ball, capacity_extrapolate, capacity_variational, spherical_condenser};
use crate::diagnostics::assumption_quantities;
use crate::error::{Error, Result};
use crate::harness::{run_study, StudyConfig};
use crate::holes::{disjointness_check, read_holes_csv, write_holes_csv, SeparationParams};
use crate::inverse::{construct_holes, DEFAULT_C1};
use crate::solver::{l2_distance, lump_measure, solve_limit, solve_perforated, SolveOptions, SolveStats};
use crate::tiling::{Cell, TilingSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_TREND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "homlab", version, about = "Dirichlet homogenization laboratory")]
struct Cli {
    /// Worker threads for the solver pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Map holes smaller than two grid steps to their nearest node.
    #[arg(long, global = true)]
    override_tiny_holes: bool,
    /// Directory for output files; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Capacity of the ball of radius `a` in dimension `d`.
    Capacity {
        d: usize,
        a: f64,
        /// Also run variational solves at truncations L and 2L with step h.
        #[arg(long, num_args = 2, value_names = ["L", "H"])]
        numeric: Option<Vec<f64>>,
    },
    /// Build the holes for one eps and write them as CSV.
    Construct {
        config: PathBuf,
        /// Which of the configured epsilons to use.
        #[arg(long, default_value_t = 0)]
        row: usize,
    },
    /// Evaluate the assumption quantities.
    Check {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        row: usize,
        /// Read holes from this CSV instead of constructing them.
        #[arg(long)]
        holes: Option<PathBuf>,
    },
    /// Solve the perforated and limit problems for one eps.
    Solve {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        row: usize,
    },
    /// Run the full eps-sweep.
    Study {
        config: PathBuf,
        /// Exit with code 3 if a registered trend check fails.
        #[arg(long = "assert")]
        assert_trends: bool,
    },
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    epsilon: f64,
    grid_n: usize,
    holes: usize,
    perforated: SolveStats,
    limit: SolveStats,
    l2_error: f64,
    l2_relative: f64,
}

fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

/// Parses `args` (program name first) and runs one subcommand.
pub fn main_with_args<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_VALIDATION;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), text)?;
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::Config(e.to_string()))
}

fn load(config: &Path, row: usize, override_tiny: bool) -> Result<StudyConfig> {
    let mut cfg = StudyConfig::load(config)?;
    if row >= cfg.study.epsilons.len() {
        return Err(Error::Config(format!(
            "row {row} out of range, config has {} epsilons",
            cfg.study.epsilons.len()
        )));
    }
    cfg.study.override_tiny_holes |= override_tiny;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Capacity { d, a, numeric } => {
            let exact = capacity_ball(*d, *a)?;
            let mut text = format!("{}\n", exact.value);
            if let Some(v) = numeric {
                let (l, h) = (v[0], v[1]);
                let first = capacity_variational(*d, *a, l, h)?;
                let second = capacity_variational(*d, *a, 2.0 * l, h)?;
                let extrapolated = capacity_extrapolate(&first, &second)?;
                text.push_str(&format!("variational L={l} {}\n", first.value));
                text.push_str(&format!("condenser L={l} {}\n", spherical_condenser(*d, *a, l)?));
                text.push_str(&format!("variational L={} {}\n", 2.0 * l, second.value));
                text.push_str(&format!("condenser L={} {}\n", 2.0 * l, spherical_condenser(*d, *a, 2.0 * l)?));
                text.push_str(&format!("extrapolated {}\n", extrapolated.value));
            }
            emit(out, "capacity.txt", &text)?;
            Ok(EXIT_OK)
        }
        Command::Construct { config, row } => {
            let cfg = load(config, *row, cli.override_tiny_holes)?;
            let spec = TilingSpec::new(cfg.study.dim, cfg.study.epsilons[*row])?;
            let rep = construct_holes(&cfg.potential()?, &spec, &cfg.domain(), &cfg.quad())?;
            let mut csv = Vec::new();
            write_holes_csv(&mut csv, &rep.holes)?;
            emit(out, "holes.csv", &String::from_utf8_lossy(&csv))?;
            if let Some(dir) = out {
                fs::write(dir.join("holes.json"), to_json(&rep.header())?)?;
            }
            Ok(EXIT_OK)
        }
        Command::Check { config, row, holes } => {
            let cfg = load(config, *row, cli.override_tiny_holes)?;
            let eps = cfg.study.epsilons[*row];
            let holes = match holes {
                Some(path) => read_holes_csv(BufReader::new(fs::File::open(path)?))?,
                None => {
                    let spec = TilingSpec::new(cfg.study.dim, eps)?;
                    construct_holes(&cfg.potential()?, &spec, &cfg.domain(), &cfg.quad())?.holes
                }
            };
            let seps = SeparationParams::uniform(eps, DEFAULT_C1, holes.len())?;
            let check = disjointness_check(&holes, &seps)?;
            if !check.ok() {
                return Err(Error::Geometry(format!(
                    "{} overlapping pairs, {} holes outside their cells",
                    check.overlapping_pairs.len(),
                    check.escaping_holes.len()
                )));
            }
            let cells: Vec<Cell> = holes.iter().map(|h| Cell::new(h.cell_index.clone(), eps)).collect();
            let rep = assumption_quantities(&holes, &seps, &cells, &cfg.domain())?;
            emit(out, "assumptions.json", &to_json(&rep)?)?;
            Ok(EXIT_OK)
        }
        Command::Solve { config, row } => {
            let cfg = load(config, *row, cli.override_tiny_holes)?;
            let eps = cfg.study.epsilons[*row];
            let grid = cfg.grid(*row)?;
            let mu = cfg.potential()?;
            let spec = TilingSpec::new(cfg.study.dim, eps)?;
            let rep = construct_holes(&mu, &spec, &cfg.domain(), &cfg.quad())?;
            let f = cfg.source()?.sample(&grid);
            let opts = SolveOptions {
                tol: cfg.study.tol,
                override_tiny_holes: cfg.study.override_tiny_holes,
            };
            let (u_eps, perforated) = solve_perforated(&f, &rep.holes, &opts)?;
            let lumped = lump_measure(&mu, &grid, &cfg.lump_quad())?;
            let (u, limit) = solve_limit(&f, &lumped, opts.tol)?;
            let l2_error = l2_distance(&u_eps, &u)?;
            let norm = u.l2_norm();
            let summary = SolveSummary {
                epsilon: eps,
                grid_n: grid.n,
                holes: rep.holes.iter().filter(|h| !h.is_empty()).count(),
                perforated,
                limit,
                l2_error,
                l2_relative: if norm > 0.0 { l2_error / norm } else { l2_error },
            };
            if let Some(dir) = out {
                fs::create_dir_all(dir)?;
                u_eps.write_binary(fs::File::create(dir.join("u_eps.bin"))?)?;
                u.write_binary(fs::File::create(dir.join("u_limit.bin"))?)?;
            }
            emit(out, "solve.json", &to_json(&summary)?)?;
            Ok(EXIT_OK)
        }
        Command::Study { config, assert_trends } => {
            let mut cfg = load(config, 0, cli.override_tiny_holes)?;
            if let Some(dir) = out {
                cfg.output.dir = Some(dir.to_path_buf());
            }
            let report = run_study(&cfg)?;
            let summary = match cfg.output.dir.as_deref() {
                Some(dir) => report.write_outputs(dir)?,
                None => {
                    let mut csv = Vec::new();
                    report.write_csv(&mut csv)?;
                    io::stdout().write_all(&csv)?;
                    report.summary()?
                }
            };
            for c in &summary.checks {
                log::info!("trend {} {:?}: {}", c.column, c.mode, if c.pass { "pass" } else { "FAIL" });
            }
            if let Some(msg) = &report.failure {
                eprintln!("error: {msg}");
                return Ok(if report.failure_numerical {
                    EXIT_NUMERICAL
                } else {
                    EXIT_VALIDATION
                });
            }
            if *assert_trends && !summary.pass {
                let failed: Vec<&str> = summary.checks.iter().filter(|c| !c.pass).map(|c| c.column.as_str()).collect();
                eprintln!("error: trend checks failed: {}", failed.join(", "));
                return Ok(EXIT_TREND);
            }
            Ok(EXIT_OK)
        }
    }
}
