//! Subcommand implementations.
//!
//! Every command follows the same shape: resolve the layered configuration,
//! apply flag overrides, validate, compute, then atomically write one CSV
//! file (manifest block, header, data rows, optional `## result` or
//! `## summary` trailer) and print a single summary line on stdout.

use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{self, Config};
use crate::output::{csv_row, num, write_atomic, CliErr};

use tfqkd::bounds::{crossover_distance, distance_grid, ideal_curves, EXPERIMENT_POINTS};
use tfqkd::model::transmittance;
use tfqkd::optimize::{optimal_m, optimal_mu, OptimizeStatus, DEFAULT_M_CANDIDATES};
use tfqkd::phase::{drift_sigma, simulate_drift};
use tfqkd::rate::rate_of_kind;
use tfqkd::sim::{estimate_from_tally, run_batch};
use tfqkd::{ChannelSpec, CurveKind, CurveSpec, RateKind, SimParams};

/// Twin-field QKD rate curves, repeaterless bounds, crossover search, and
/// event-level Monte Carlo, written as manifest-stamped CSV.
#[derive(Debug, Parser)]
#[command(name = "tfqkd", version)]
pub struct Cli {
    /// Config file: TOML, or a previous output file (its manifest is reused)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file path (default: <command>.csv)
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<String>,
    /// Master seed overriding the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

/// The available subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep the protocol key rate over the distance grid
    Rates {
        /// Rate law: "qkd" or "tfqkd"
        #[arg(long)]
        protocol: Option<String>,
        /// Optimise the total source intensity at every distance
        #[arg(long)]
        optimize_mu: bool,
    },
    /// Write the repeaterless benchmarks and ideal reference curves
    Bounds {
        /// Also write the literature reference points to a second file
        #[arg(long)]
        with_experiments: bool,
    },
    /// Locate where one curve overtakes another inside a bracket
    Crossover {
        /// First curve id
        #[arg(long)]
        curve_a: Option<String>,
        /// Second curve id
        #[arg(long)]
        curve_b: Option<String>,
        /// Search bracket in km
        #[arg(long, value_parser = parse_bracket, value_name = "LO,HI")]
        bracket: Option<(f64, f64)>,
    },
    /// Run the event-level Monte Carlo at one distance
    Simulate {
        /// Number of trials
        #[arg(long)]
        trials: Option<u64>,
        /// Number of independent random streams
        #[arg(long)]
        shards: Option<u32>,
        /// Total user-to-user distance, km
        #[arg(long)]
        distance: Option<f64>,
    },
    /// Simulate differential phase drift and summarise the rate statistics
    Drift {
        /// Trace duration, ms
        #[arg(long)]
        duration: Option<f64>,
        /// Fibre length, km
        #[arg(long)]
        length: Option<f64>,
    },
    /// Optimise the source intensity or the slice count
    Optimize {
        /// Target: "mu" (one distance) or "m" (candidate table over the grid)
        #[arg(long)]
        what: Option<String>,
        /// Distance for --what mu, km
        #[arg(long)]
        distance: Option<f64>,
    },
}

/// Parses a `LO,HI` bracket flag.
fn parse_bracket(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("bracket {s:?}: expected LO,HI"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bracket low edge {lo:?}: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bracket high edge {hi:?}: {e}"))?;
    Ok((lo, hi))
}

/// Maps a protocol name to the rate law it selects.
fn rate_kind(name: &str) -> Result<RateKind, CliErr> {
    match name {
        "qkd" => Ok(RateKind::Qkd),
        "tfqkd" => Ok(RateKind::Tfqkd),
        other => Err(CliErr::Config(format!(
            "run.protocol = {other:?}: expected \"qkd\" or \"tfqkd\""
        ))),
    }
}

/// Final output path: the configured one, or the per-command default.
fn resolve_out(cfg: &Config, default: &str) -> String {
    cfg.run.out.clone().unwrap_or_else(|| default.to_string())
}

/// Resolves the config, applies flag overrides, and dispatches.
pub fn run(cli: Cli) -> Result<(), CliErr> {
    let mut cfg = config::load(cli.config.as_deref()).map_err(CliErr::Config)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.run.out = Some(out);
    }
    match cli.command {
        Command::Rates { protocol, optimize_mu } => {
            if let Some(p) = protocol {
                cfg.run.protocol = p;
            }
            if optimize_mu {
                cfg.run.optimize_mu = true;
            }
            cfg.validate().map_err(CliErr::Config)?;
            cmd_rates(&cfg)
        }
        Command::Bounds { with_experiments } => {
            if with_experiments {
                cfg.run.with_experiments = true;
            }
            cfg.validate().map_err(CliErr::Config)?;
            cmd_bounds(&cfg)
        }
        Command::Crossover { curve_a, curve_b, bracket } => {
            if let Some(a) = curve_a {
                cfg.run.curve_a = a;
            }
            if let Some(b) = curve_b {
                cfg.run.curve_b = b;
            }
            if let Some((lo, hi)) = bracket {
                cfg.run.bracket_lo_km = lo;
                cfg.run.bracket_hi_km = hi;
            }
            cfg.validate().map_err(CliErr::Config)?;
            cmd_crossover(&cfg)
        }
        Command::Simulate { trials, shards, distance } => {
            if let Some(n) = trials {
                cfg.sim.trials = n;
            }
            if let Some(s) = shards {
                cfg.sim.shards = s;
            }
            if let Some(d) = distance {
                cfg.run.distance_km = d;
            }
            cfg.validate().map_err(CliErr::Config)?;
            cmd_simulate(&cfg)
        }
        Command::Drift { duration, length } => {
            if let Some(d) = duration {
                cfg.run.duration_ms = d;
            }
            if let Some(l) = length {
                cfg.run.length_km = l;
            }
            cfg.validate().map_err(CliErr::Config)?;
            cmd_drift(&cfg)
        }
        Command::Optimize { what, distance } => {
            if let Some(w) = what {
                cfg.run.what = w;
            }
            if let Some(d) = distance {
                cfg.run.distance_km = d;
            }
            cfg.validate().map_err(CliErr::Config)?;
            cmd_optimize(&cfg)
        }
    }
}

fn cmd_rates(cfg: &Config) -> Result<(), CliErr> {
    let kind = rate_kind(&cfg.run.protocol)?;
    let grid = distance_grid(cfg.grid.start_km, cfg.grid.stop_km, cfg.grid.step_km)?;
    let channel = cfg.channel_spec();
    let det = cfg.detector_spec();
    let proto = cfg.protocol_spec();

    let mut rows = String::new();
    for &d in &grid {
        let (mu_used, rate) = if cfg.run.optimize_mu {
            let opt = optimal_mu(d, &channel, &det, &proto, kind)?;
            (opt.mu, opt.rate)
        } else {
            let mu = proto.mu();
            (mu, rate_of_kind(kind, mu, d, &channel, &det, &proto)?)
        };
        let eta = transmittance(&ChannelSpec { length_km: d, ..channel });
        rows.push_str(&csv_row(&[
            num(d),
            num(cfg.channel.alpha_db_per_km * d),
            num(eta),
            num(mu_used),
            num(rate),
            cfg.run.protocol.clone(),
        ]));
    }

    let out = resolve_out(cfg, "rates.csv");
    let mut content = cfg.manifest_block("rates-v1", "rates", &out);
    content.push_str("distance_km,loss_db,eta,mu_used,rate_bits_per_pulse,curve_id\n");
    content.push_str(&rows);
    write_atomic(Path::new(&out), &content)?;
    println!("rates: {} rows ({}) -> {}", grid.len(), cfg.run.protocol, out);
    Ok(())
}

fn cmd_bounds(cfg: &Config) -> Result<(), CliErr> {
    let grid = distance_grid(cfg.grid.start_km, cfg.grid.stop_km, cfg.grid.step_km)?;
    let curves = ideal_curves(cfg.channel.alpha_db_per_km, &grid)?;
    let blocks = [
        (CurveKind::Skc, &curves.skc),
        (CurveKind::SingleRepeater, &curves.single_repeater),
        (CurveKind::IdealDecoyQkd, &curves.decoy_qkd),
        (CurveKind::IdealSinglePhotonQkd, &curves.single_photon_qkd),
    ];

    let out = resolve_out(cfg, "bounds.csv");
    let mut content = cfg.manifest_block("bounds-v1", "bounds", &out);
    content.push_str("distance_km,loss_db,eta,mu_used,rate_bits_per_pulse,curve_id\n");
    for (kind, points) in &blocks {
        for p in points.iter() {
            content.push_str(&csv_row(&[
                num(p.distance_km),
                num(cfg.channel.alpha_db_per_km * p.distance_km),
                num(p.eta),
                num(p.mu),
                num(p.rate),
                kind.id().to_string(),
            ]));
        }
    }
    write_atomic(Path::new(&out), &content)?;

    let n_rows = blocks.len() * grid.len();
    if cfg.run.with_experiments {
        // same manifest (run.out points at the main file), separate schema
        let ex_out = experiments_path(&out);
        let mut ex = cfg.manifest_block("experiments-v1", "bounds", &out);
        ex.push_str("label,protocol,distance_km,rate_value,rate_unit,note\n");
        for p in EXPERIMENT_POINTS {
            ex.push_str(&csv_row(&[
                p.label.to_string(),
                p.protocol.to_string(),
                num(p.distance_km),
                num(p.rate_value),
                p.rate_unit.to_string(),
                p.note.to_string(),
            ]));
        }
        write_atomic(Path::new(&ex_out), &ex)?;
        println!("bounds: {} rows over {} distances -> {} (+ {})", n_rows, grid.len(), out, ex_out);
    } else {
        println!("bounds: {} rows over {} distances -> {}", n_rows, grid.len(), out);
    }
    Ok(())
}

/// Companion path for the literature points file.
fn experiments_path(out: &str) -> String {
    match out.strip_suffix(".csv") {
        Some(stem) => format!("{stem}_experiments.csv"),
        None => format!("{out}_experiments"),
    }
}

fn cmd_crossover(cfg: &Config) -> Result<(), CliErr> {
    let kind_a: CurveKind =
        cfg.run.curve_a.parse().map_err(|e: tfqkd::Error| CliErr::Config(e.to_string()))?;
    let kind_b: CurveKind =
        cfg.run.curve_b.parse().map_err(|e: tfqkd::Error| CliErr::Config(e.to_string()))?;
    let spec = |kind| CurveSpec {
        kind,
        alpha_db_per_km: cfg.channel.alpha_db_per_km,
        det: cfg.detector_spec(),
        proto: cfg.protocol_spec(),
    };
    let bracket = (cfg.run.bracket_lo_km, cfg.run.bracket_hi_km);
    let found = crossover_distance(&spec(kind_a), &spec(kind_b), bracket).map_err(|e| match e {
        tfqkd::Error::AmbiguousCrossover { .. } => {
            CliErr::Numerical(format!("{e}; tighten the bracket"))
        }
        other => CliErr::from(other),
    })?;

    let (status, km_cell, report) = match found {
        Some(x) => ("found", num(x), format!("crossover: {} km", num(x))),
        None => ("none", String::new(), "crossover: none".to_string()),
    };
    let out = resolve_out(cfg, "crossover.csv");
    let mut content = cfg.manifest_block("crossover-v1", "crossover", &out);
    content.push_str("curve_a,curve_b,bracket_lo_km,bracket_hi_km,status,crossover_km\n");
    content.push_str(&csv_row(&[
        kind_a.id().to_string(),
        kind_b.id().to_string(),
        num(bracket.0),
        num(bracket.1),
        status.to_string(),
        km_cell,
    ]));
    write_atomic(Path::new(&out), &content)?;
    println!("{report} -> {out}");
    Ok(())
}

fn cmd_simulate(cfg: &Config) -> Result<(), CliErr> {
    if cfg.sim.trials < 1 {
        return Err(CliErr::Config("sim.trials must be >= 1".to_string()));
    }
    // leaves headroom so merged u64 counters can never wrap
    const MAX_TRIALS: u64 = 1 << 62;
    if cfg.sim.trials > MAX_TRIALS {
        return Err(CliErr::Config(format!(
            "sim.trials = {} would overflow the tally counters (max {MAX_TRIALS})",
            cfg.sim.trials
        )));
    }
    let d = cfg.run.distance_km;
    if !(d.is_finite() && d >= 0.0) {
        return Err(CliErr::Config(format!("run.distance_km = {d}: must be >= 0 and finite")));
    }

    let arm = ChannelSpec { alpha_db_per_km: cfg.channel.alpha_db_per_km, length_km: d / 2.0 };
    let eta_arm = transmittance(&arm);
    let params =
        SimParams::symmetric(eta_arm, cfg.detector_spec(), cfg.protocol_spec(), cfg.sim.basis_bias);
    let tally = run_batch(cfg.sim.trials, &params, cfg.run.seed, cfg.sim.shards)?;
    let est = estimate_from_tally(&tally, &params)?;

    let qber_cell = est.qber.map(num).unwrap_or_default();
    let out = resolve_out(cfg, "simulate.csv");
    let mut content = cfg.manifest_block("sim-v1", "simulate", &out);
    content.push_str(
        "distance_km,eta_arm,n_trials,n_slice_match,n_matched,n_no_click,n_sift,\
         n_double_click,n_error,n_dark_sift,gain,qber,slice_match_rate,dark_fraction,\
         secret_rate_per_pulse\n",
    );
    content.push_str(&csv_row(&[
        num(d),
        num(eta_arm),
        tally.n_trials.to_string(),
        tally.n_slice_match.to_string(),
        tally.n_matched.to_string(),
        tally.n_no_click.to_string(),
        tally.n_sift.to_string(),
        tally.n_double_click.to_string(),
        tally.n_error.to_string(),
        tally.n_dark_sift.to_string(),
        num(est.gain),
        qber_cell.clone(),
        num(est.slice_match_rate),
        num(est.dark_fraction),
        num(est.secret_rate),
    ]));
    write_atomic(Path::new(&out), &content)?;
    let qber_report = est.qber.map(num).unwrap_or_else(|| "n/a".to_string());
    println!(
        "simulate: {} trials, gain {}, qber {} -> {}",
        tally.n_trials,
        num(est.gain),
        qber_report,
        out
    );
    Ok(())
}

fn cmd_drift(cfg: &Config) -> Result<(), CliErr> {
    let model = cfg.drift_model();
    // stricter than the library floor: summary statistics need real support
    if cfg.run.duration_ms < 100.0 * model.sample_dt_ms {
        return Err(CliErr::Config(format!(
            "run.duration_ms = {} covers fewer than 100 samples at sample_dt_ms = {}",
            cfg.run.duration_ms, model.sample_dt_ms
        )));
    }
    let trace = simulate_drift(cfg.run.duration_ms, cfg.run.length_km, &model, cfg.run.seed)?;
    let sigma_model = drift_sigma(cfg.run.length_km, &model)?;
    let rates = &trace.rates_rad_per_ms;
    let (skewness, excess_kurtosis) = sample_shape(rates);

    let out = resolve_out(cfg, "drift.csv");
    let mut content = cfg.manifest_block("drift-v1", "drift", &out);
    content.push_str("time_ms,phase_rad,rate_rad_per_ms\n");
    for i in 0..trace.times_ms.len() {
        // the final sample has no forward difference
        let rate_cell = rates.get(i).map(|r| num(*r)).unwrap_or_default();
        content.push_str(&csv_row(&[num(trace.times_ms[i]), num(trace.phases_rad[i]), rate_cell]));
    }
    let _ = writeln!(content, "## summary.n_samples = {}", rates.len());
    let _ = writeln!(content, "## summary.rate_mean = {}", num(trace.rate_mean()));
    let _ = writeln!(content, "## summary.rate_std = {}", num(trace.rate_std()));
    let _ = writeln!(content, "## summary.skewness = {}", num(skewness));
    let _ = writeln!(content, "## summary.excess_kurtosis = {}", num(excess_kurtosis));
    let _ = writeln!(content, "## summary.sigma_model = {}", num(sigma_model));
    write_atomic(Path::new(&out), &content)?;
    println!("drift: {} samples, rate std {} rad/ms -> {}", rates.len(), num(trace.rate_std()), out);
    Ok(())
}

/// Population skewness and excess kurtosis; NaN on zero variance.
fn sample_shape(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

fn cmd_optimize(cfg: &Config) -> Result<(), CliErr> {
    let channel = cfg.channel_spec();
    let det = cfg.detector_spec();
    let proto = cfg.protocol_spec();
    match cfg.run.what.as_str() {
        "mu" => {
            let kind = rate_kind(&cfg.run.protocol)?;
            let d = cfg.run.distance_km;
            let opt = optimal_mu(d, &channel, &det, &proto, kind)?;
            let out = resolve_out(cfg, "optimize.csv");
            let mut content = cfg.manifest_block("optimize-mu-v1", "optimize", &out);
            content.push_str("mu,rate_bits_per_pulse\n");
            for (mu, r) in &opt.trace {
                content.push_str(&csv_row(&[num(*mu), num(*r)]));
            }
            let infeasible = matches!(opt.status, OptimizeStatus::Infeasible);
            let status = if infeasible { "infeasible" } else { "converged" };
            let _ = writeln!(content, "## result.status = {status}");
            let _ = writeln!(content, "## result.mu_opt = {}", num(opt.mu));
            let _ = writeln!(content, "## result.rate_opt = {}", num(opt.rate));
            let _ = writeln!(content, "## result.distance_km = {}", num(d));
            write_atomic(Path::new(&out), &content)?;
            println!("optimize mu: {status}, mu_opt {}, rate {} -> {}", num(opt.mu), num(opt.rate), out);
            if infeasible {
                return Err(CliErr::Numerical(format!(
                    "no positive rate for any intensity at {} km",
                    num(d)
                )));
            }
            Ok(())
        }
        "m" => {
            let grid = distance_grid(cfg.grid.start_km, cfg.grid.stop_km, cfg.grid.step_km)?;
            let opt = optimal_m(&grid, &channel, &det, &proto, &DEFAULT_M_CANDIDATES)?;
            let out = resolve_out(cfg, "optimize.csv");
            let mut content = cfg.manifest_block("optimize-m-v1", "optimize", &out);
            content.push_str("m_slices,intrinsic_qber,area_score\n");
            for c in &opt.table {
                content.push_str(&csv_row(&[c.m.to_string(), num(c.intrinsic_qber), num(c.area)]));
            }
            let _ = writeln!(content, "## result.best_m = {}", opt.best_m);
            write_atomic(Path::new(&out), &content)?;
            println!("optimize m: best_m {} -> {}", opt.best_m, out);
            Ok(())
        }
        other => {
            Err(CliErr::Config(format!("run.what = {other:?}: expected \"mu\" or \"m\"")))
        }
    }
}
