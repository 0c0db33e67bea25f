//! End-to-end tests of the `tfqkd` binary: output structure, manifest
//! reproduction, exit codes, and consistency with the library.

use std::path::Path;
use std::process::{Command, Output};

use tfqkd::{ChannelSpec, DetectorSpec, ProtocolSpec};

/// Command for the binary under test, isolated from ambient overrides.
fn tfqkd_cmd(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tfqkd"));
    c.current_dir(dir);
    for (key, _) in std::env::vars_os() {
        let key = key.to_string_lossy().into_owned();
        if key.starts_with("TFQKD_") {
            c.env_remove(key);
        }
    }
    c
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("binary runs").status.code().expect("exit code")
}

/// Splits a written file into manifest lines, the header, and data rows
/// (trailing `##` lines excluded).
fn parse_csv(path: &Path) -> (Vec<String>, String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).expect("output exists");
    let mut manifest = Vec::new();
    let mut header = String::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') {
            manifest.push(line.to_string());
        } else if header.is_empty() {
            header = line.to_string();
        } else {
            rows.push(line.split(',').map(str::to_string).collect());
        }
    }
    (manifest, header, rows)
}

fn trailer_value(path: &Path, key: &str) -> String {
    let text = std::fs::read_to_string(path).expect("output exists");
    let prefix = format!("## {key} = ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("missing trailer {key}"))
        .to_string()
}

fn f(cell: &str) -> f64 {
    cell.parse().unwrap_or_else(|e| panic!("bad float {cell:?}: {e}"))
}

#[test]
fn rates_default_sweep_is_deterministic_with_monotone_loss() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&mut tfqkd_cmd(dir.path()).arg("rates"));
    let first = std::fs::read(dir.path().join("rates.csv")).unwrap();
    run_ok(&mut tfqkd_cmd(dir.path()).arg("rates"));
    let second = std::fs::read(dir.path().join("rates.csv")).unwrap();
    assert_eq!(first, second, "same invocation twice must be byte-identical");

    let (manifest, header, rows) = parse_csv(&dir.path().join("rates.csv"));
    assert!(manifest.iter().any(|l| l.starts_with("## tool = tfqkd ")));
    assert!(manifest.contains(&"## schema = rates-v1".to_string()));
    assert!(manifest.iter().any(|l| l.starts_with("## config_sha256 = ")));
    assert_eq!(header, "distance_km,loss_db,eta,mu_used,rate_bits_per_pulse,curve_id");
    assert_eq!(rows.len(), 61, "0..600 step 10 is 61 rows");
    for w in rows.windows(2) {
        assert!(f(&w[1][1]) > f(&w[0][1]), "loss_db must increase");
    }
    for row in &rows {
        assert_eq!(row[5], "tfqkd");
    }
}

#[test]
fn rates_regenerated_from_manifest_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&mut tfqkd_cmd(dir.path()).args(["rates", "--out", "out1.csv"]));
    let original = std::fs::read(dir.path().join("out1.csv")).unwrap();

    // rerun purely from the manifest; run.out inside it targets out1.csv
    std::fs::rename(dir.path().join("out1.csv"), dir.path().join("manifest.csv")).unwrap();
    run_ok(&mut tfqkd_cmd(dir.path()).args(["rates", "--config", "manifest.csv"]));
    let regenerated = std::fs::read(dir.path().join("out1.csv")).unwrap();
    assert_eq!(original, regenerated, "manifest regeneration must be byte-identical");
}

#[test]
fn rates_single_point_matches_library_exactly() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        tfqkd_cmd(dir.path())
            .args(["rates", "--protocol", "tfqkd"])
            .env("TFQKD_GRID_START_KM", "300")
            .env("TFQKD_GRID_STOP_KM", "300"),
    );
    let (_, _, rows) = parse_csv(&dir.path().join("rates.csv"));
    assert_eq!(rows.len(), 1);
    let got = f(&rows[0][4]);

    let channel = ChannelSpec { alpha_db_per_km: 0.2, length_km: 0.0 };
    let proto = ProtocolSpec::default();
    let want =
        tfqkd::rate::tfqkd_rate(proto.mu(), 300.0, &channel, &DetectorSpec::default(), &proto)
            .unwrap();
    assert_eq!(got, want, "CSV cell must round-trip to the library value");
    let frozen = 2.8127671658527047e-6;
    assert!((got - frozen).abs() <= frozen * 1e-12, "got {got}, frozen {frozen}");
}

#[test]
fn rates_rejects_invalid_grid() {
    let dir = tempfile::tempdir().unwrap();
    let code = exit_code(
        tfqkd_cmd(dir.path()).arg("rates").env("TFQKD_GRID_STOP_KM", "-5"),
    );
    assert_eq!(code, 2);
    let code = exit_code(
        tfqkd_cmd(dir.path()).arg("rates").env("TFQKD_GRID_STEP_KM", "0"),
    );
    assert_eq!(code, 2);
    assert!(!dir.path().join("rates.csv").exists(), "no output on config error");
}

#[test]
fn rates_rejects_unknown_protocol_and_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(exit_code(tfqkd_cmd(dir.path()).args(["rates", "--protocol", "mdi"])), 2);
    std::fs::write(dir.path().join("bad.toml"), "[channel]\nalphaa = 0.2\n").unwrap();
    let out = tfqkd_cmd(dir.path())
        .args(["rates", "--config", "bad.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("alphaa"), "error names the unknown key: {stderr}");
    assert!(stderr.contains("line 2") || stderr.contains("2,"), "error carries a line: {stderr}");
}

#[test]
fn bounds_orders_benchmarks_and_matches_rates_eta() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&mut tfqkd_cmd(dir.path()).arg("bounds"));
    run_ok(&mut tfqkd_cmd(dir.path()).arg("rates"));
    let (manifest, header, rows) = parse_csv(&dir.path().join("bounds.csv"));
    assert!(manifest.contains(&"## schema = bounds-v1".to_string()));
    assert_eq!(header, "distance_km,loss_db,eta,mu_used,rate_bits_per_pulse,curve_id");
    assert_eq!(rows.len(), 4 * 61);

    let curve = |id: &str| -> Vec<&Vec<String>> {
        rows.iter().filter(|r| r[5] == id).collect()
    };
    let skc = curve("skc");
    let srb = curve("single_repeater");
    assert_eq!(skc.len(), 61);
    for (s, r) in skc.iter().zip(&srb) {
        assert_eq!(s[0], r[0]);
        // both infinite at zero loss, strictly ordered elsewhere
        if f(&s[0]) > 0.0 {
            assert!(f(&r[4]) > f(&s[4]), "single_repeater > skc at {} km", s[0]);
        }
    }
    let skc50 = skc.iter().find(|r| r[0] == "50").expect("50 km row");
    let want = 0.15200309344504998;
    assert!((f(&skc50[4]) - want).abs() < 1e-12, "skc(50 km) = {}", skc50[4]);

    // eta depends only on the distance grid: identical across output files
    let (_, _, rate_rows) = parse_csv(&dir.path().join("rates.csv"));
    for (b, r) in skc.iter().zip(&rate_rows) {
        assert_eq!(b[0], r[0]);
        assert_eq!(b[2], r[2], "eta mismatch at {} km", b[0]);
    }
}

#[test]
fn bounds_with_experiments_writes_companion_file() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&mut tfqkd_cmd(dir.path()).args(["bounds", "--with-experiments"]));
    let (manifest, header, rows) = parse_csv(&dir.path().join("bounds_experiments.csv"));
    assert!(manifest.contains(&"## schema = experiments-v1".to_string()));
    assert_eq!(header, "label,protocol,distance_km,rate_value,rate_unit,note");
    assert_eq!(rows.len(), tfqkd::bounds::EXPERIMENT_POINTS.len());
    assert!(rows.iter().all(|r| f(&r[2]) > 0.0 && f(&r[3]) > 0.0));
}

#[test]
fn crossover_reports_single_distance_under_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(&mut tfqkd_cmd(dir.path()).arg("crossover"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("crossover: "), "stdout: {stdout}");
    let (manifest, header, rows) = parse_csv(&dir.path().join("crossover.csv"));
    assert!(manifest.contains(&"## schema = crossover-v1".to_string()));
    assert_eq!(header, "curve_a,curve_b,bracket_lo_km,bracket_hi_km,status,crossover_km");
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][..5], ["tfqkd_realistic", "skc", "100", "600", "found"]);
    let x = f(&rows[0][5]);
    assert!((250.0..450.0).contains(&x), "crossover at {x} km");
}

#[test]
fn crossover_absence_is_success_and_bad_bracket_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(
        &mut tfqkd_cmd(dir.path()).args(["crossover", "--curve-a", "skc", "--curve-b", "skc"]),
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("crossover: none"));
    let (_, _, rows) = parse_csv(&dir.path().join("crossover.csv"));
    assert_eq!(rows[0][4], "none");
    assert_eq!(rows[0][5], "", "crossover_km cell empty when none");

    assert_eq!(
        exit_code(tfqkd_cmd(dir.path()).args(["crossover", "--bracket", "500,100"])),
        2
    );
    assert_eq!(
        exit_code(tfqkd_cmd(dir.path()).args(["crossover", "--bracket", "oops"])),
        2
    );
    assert_eq!(
        exit_code(tfqkd_cmd(dir.path()).args(["crossover", "--curve-a", "nonsense"])),
        2
    );
}

#[test]
fn simulate_is_deterministic_and_bounds_trials() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--trials", "2000000", "--distance", "100"];
    run_ok(&mut tfqkd_cmd(dir.path()).args(args));
    let first = std::fs::read(dir.path().join("simulate.csv")).unwrap();
    run_ok(&mut tfqkd_cmd(dir.path()).args(args));
    let second = std::fs::read(dir.path().join("simulate.csv")).unwrap();
    assert_eq!(first, second, "fixed seed and shard count pin the tally");

    let (manifest, header, rows) = parse_csv(&dir.path().join("simulate.csv"));
    assert!(manifest.contains(&"## schema = sim-v1".to_string()));
    assert!(manifest.contains(&"# sim.shards = 8".to_string()));
    assert!(header.starts_with("distance_km,eta_arm,n_trials,"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][2], "2000000");
    let n_matched = f(&rows[0][4]);
    let n_no_click = f(&rows[0][5]);
    assert!((f(&rows[0][10]) - (1.0 - n_no_click / n_matched)).abs() < 1e-12);

    assert_eq!(exit_code(tfqkd_cmd(dir.path()).args(["simulate", "--trials", "0"])), 2);
    // a different seed must change the tally
    run_ok(&mut tfqkd_cmd(dir.path()).args(args).args(["--seed", "8"]));
    let reseeded = std::fs::read(dir.path().join("simulate.csv")).unwrap();
    assert_ne!(first, reseeded);
}

#[test]
fn drift_summary_matches_model_and_zero_sigma_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&mut tfqkd_cmd(dir.path()).args(["drift", "--duration", "2500", "--length", "100"]));
    let path = dir.path().join("drift.csv");
    let (manifest, header, rows) = parse_csv(&path);
    assert!(manifest.contains(&"## schema = drift-v1".to_string()));
    assert_eq!(header, "time_ms,phase_rad,rate_rad_per_ms");
    assert_eq!(rows.len(), 100_001, "100k steps plus the origin");
    assert_eq!(rows.last().unwrap()[2], "", "final sample has no forward rate");

    let std = f(&trailer_value(&path, "summary.rate_std"));
    assert!((std - 2.4).abs() < 0.05 * 2.4, "rate std {std} vs model 2.4");
    assert_eq!(f(&trailer_value(&path, "summary.sigma_model")), 2.4);
    let n: f64 = f(&trailer_value(&path, "summary.n_samples"));
    assert_eq!(n, 100_000.0);

    run_ok(
        tfqkd_cmd(dir.path())
            .args(["drift", "--duration", "10", "--out", "flat.csv"])
            .env("TFQKD_DRIFT_SIGMA_RATE_REF_RAD_PER_MS", "0"),
    );
    let (_, _, flat) = parse_csv(&dir.path().join("flat.csv"));
    assert!(flat.iter().all(|r| r[1] == "0" && (r[2] == "0" || r[2].is_empty())));

    assert_eq!(exit_code(tfqkd_cmd(dir.path()).args(["drift", "--duration", "1"])), 2);
}

#[test]
fn optimize_mu_noiseless_peak_and_error_paths() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        tfqkd_cmd(dir.path())
            .args(["optimize", "--what", "mu", "--distance", "0"])
            .env("TFQKD_RUN_PROTOCOL", "qkd")
            .env("TFQKD_DETECTOR_P_DC", "0")
            .env("TFQKD_DETECTOR_ETA_DET", "1")
            .env("TFQKD_PROTOCOL_E_OPT", "0")
            .env("TFQKD_PROTOCOL_EC_FACTOR", "1"),
    );
    let path = dir.path().join("optimize.csv");
    let (manifest, header, rows) = parse_csv(&path);
    assert!(manifest.contains(&"## schema = optimize-mu-v1".to_string()));
    assert_eq!(header, "mu,rate_bits_per_pulse");
    assert_eq!(rows.len(), 64, "full coarse trace is emitted");
    assert_eq!(trailer_value(&path, "result.status"), "converged");
    let mu_opt = f(&trailer_value(&path, "result.mu_opt"));
    assert!((mu_opt - 1.0).abs() < 1e-3, "noiseless optimum near 1, got {mu_opt}");

    assert_eq!(exit_code(tfqkd_cmd(dir.path()).args(["optimize", "--what", "q"])), 2);

    // far beyond the dark-count wall: table still written, then exit 3
    let code = exit_code(
        tfqkd_cmd(dir.path()).args(["optimize", "--what", "mu", "--distance", "800", "--out", "dead.csv"]),
    );
    assert_eq!(code, 3);
    assert_eq!(trailer_value(&dir.path().join("dead.csv"), "result.status"), "infeasible");
}

#[test]
fn optimize_m_emits_full_candidate_table() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&mut tfqkd_cmd(dir.path()).args(["optimize", "--what", "m"]));
    let path = dir.path().join("optimize.csv");
    let (manifest, header, rows) = parse_csv(&path);
    assert!(manifest.contains(&"## schema = optimize-m-v1".to_string()));
    assert_eq!(header, "m_slices,intrinsic_qber,area_score");
    assert_eq!(rows.len(), 8, "one row per default candidate");
    let best: u32 = trailer_value(&path, "result.best_m").parse().unwrap();
    assert!(rows.iter().any(|r| r[0] == best.to_string()));
    // the winner's area tops the table
    let best_area = rows
        .iter()
        .find(|r| r[0] == best.to_string())
        .map(|r| f(&r[2]))
        .unwrap();
    assert!(rows.iter().all(|r| f(&r[2]) <= best_area));
}
