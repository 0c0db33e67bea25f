//! Layered run configuration.
//!
//! Every parameter of every subcommand is a key in one fixed schema, so a
//! run is pinned by a single config value set. Values are resolved in
//! order: built-in defaults, then a TOML config file, then `TFQKD_*`
//! environment variables, then command-line flags. Unknown keys are
//! rejected. The effective configuration is echoed into each output file
//! as `# section.key = value` lines; those lines parse back as TOML, so a
//! previous output file can be passed to `--config` to reproduce the run.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use tfqkd::phase::DriftModel;
use tfqkd::{ChannelSpec, DetectorSpec, ProtocolSpec};

/// Fibre parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// Attenuation, dB/km.
    pub alpha_db_per_km: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection { alpha_db_per_km: 0.2 }
    }
}

/// Detector parameters at the measurement node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    /// Dark count probability per gate.
    pub p_dc: f64,
    /// Detection efficiency.
    pub eta_det: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection { p_dc: 1e-8, eta_det: 0.30 }
    }
}

/// Protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    /// Number of phase slices M.
    pub m_slices: u32,
    /// Duty cycle d of the quantum modality.
    pub duty_cycle: f64,
    /// Error-correction inefficiency f.
    pub ec_factor: f64,
    /// Optical misalignment error rate.
    pub e_opt: f64,
    /// Source intensity of party A.
    pub mu_a: f64,
    /// Source intensity of party B.
    pub mu_b: f64,
    /// Additional decoy intensities (recorded for sweeps; the asymptotic
    /// rate laws use infinite-decoy bounds).
    pub decoy_intensities: Vec<f64>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            m_slices: 16,
            duty_cycle: 0.9,
            ec_factor: 1.15,
            e_opt: 0.01,
            mu_a: 0.25,
            mu_b: 0.25,
            decoy_intensities: Vec::new(),
        }
    }
}

/// Phase-drift model calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    /// Drift-rate standard deviation at the reference length, rad/ms.
    pub sigma_rate_ref_rad_per_ms: f64,
    /// Reference length, km.
    pub length_ref_km: f64,
    /// Length-scaling exponent.
    pub scaling_exponent: f64,
    /// Sampling step, ms.
    pub sample_dt_ms: f64,
}

impl Default for DriftSection {
    fn default() -> Self {
        DriftSection {
            sigma_rate_ref_rad_per_ms: 2.4,
            length_ref_km: 100.0,
            scaling_exponent: 0.5,
            sample_dt_ms: 0.025,
        }
    }
}

/// Distance grid for sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// First distance, km.
    pub start_km: f64,
    /// Last distance, km (inclusive).
    pub stop_km: f64,
    /// Step, km.
    pub step_km: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { start_km: 0.0, stop_km: 600.0, step_km: 10.0 }
    }
}

/// Monte Carlo controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    /// Trials per run.
    pub trials: u64,
    /// Independent random streams the trials are split over.
    pub shards: u32,
    /// Per-party probability of choosing the key basis.
    pub basis_bias: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection { trials: 1_000_000, shards: 8, basis_bias: 0.5 }
    }
}

/// Per-run settings and command parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Master seed; subcommands derive labelled substreams from it.
    pub seed: u64,
    /// Protocol for `rates` and `optimize`: "qkd" or "tfqkd".
    pub protocol: String,
    /// Optimise the intensity per distance in `rates`.
    pub optimize_mu: bool,
    /// First curve of `crossover`.
    pub curve_a: String,
    /// Second curve of `crossover`.
    pub curve_b: String,
    /// Crossover bracket, low edge, km.
    pub bracket_lo_km: f64,
    /// Crossover bracket, high edge, km.
    pub bracket_hi_km: f64,
    /// Drift trace duration, ms.
    pub duration_ms: f64,
    /// Drift fibre length, km.
    pub length_km: f64,
    /// Optimisation target: "mu" or "m".
    pub what: String,
    /// Total distance for `simulate` and `optimize --what mu`, km.
    pub distance_km: f64,
    /// Also write the literature reference points in `bounds`.
    pub with_experiments: bool,
    /// Output path; defaults to `<command>.csv`.
    pub out: Option<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 7,
            protocol: "tfqkd".to_string(),
            optimize_mu: false,
            curve_a: "tfqkd_realistic".to_string(),
            curve_b: "skc".to_string(),
            bracket_lo_km: 100.0,
            bracket_hi_km: 600.0,
            duration_ms: 25.0,
            length_km: 100.0,
            what: "mu".to_string(),
            distance_km: 300.0,
            with_experiments: false,
            out: None,
        }
    }
}

/// The full layered configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub channel: ChannelSection,
    pub detector: DetectorSection,
    pub protocol: ProtocolSection,
    pub drift: DriftSection,
    pub grid: GridSection,
    pub sim: SimSection,
    pub run: RunSection,
}

impl Config {
    /// Fibre spec (length is supplied per evaluation point).
    pub fn channel_spec(&self) -> ChannelSpec {
        ChannelSpec { alpha_db_per_km: self.channel.alpha_db_per_km, length_km: 0.0 }
    }

    /// Detector spec.
    pub fn detector_spec(&self) -> DetectorSpec {
        DetectorSpec { dark_count_prob: self.detector.p_dc, efficiency: self.detector.eta_det }
    }

    /// Protocol spec.
    pub fn protocol_spec(&self) -> ProtocolSpec {
        ProtocolSpec {
            m_slices: self.protocol.m_slices,
            duty_cycle: self.protocol.duty_cycle,
            ec_factor: self.protocol.ec_factor,
            e_opt: self.protocol.e_opt,
            mu_a: self.protocol.mu_a,
            mu_b: self.protocol.mu_b,
            decoy_intensities: self.protocol.decoy_intensities.clone(),
        }
    }

    /// Drift model.
    pub fn drift_model(&self) -> DriftModel {
        DriftModel {
            sigma_rate_ref_rad_per_ms: self.drift.sigma_rate_ref_rad_per_ms,
            length_ref_km: self.drift.length_ref_km,
            scaling_exponent: self.drift.scaling_exponent,
            sample_dt_ms: self.drift.sample_dt_ms,
        }
    }

    /// Validates every domain-constrained field through the library specs.
    pub fn validate(&self) -> Result<(), String> {
        self.channel_spec().validate().map_err(|e| e.to_string())?;
        self.detector_spec().validate().map_err(|e| e.to_string())?;
        self.protocol_spec().validate().map_err(|e| e.to_string())?;
        self.drift_model().validate().map_err(|e| e.to_string())?;
        if !(self.sim.basis_bias > 0.0 && self.sim.basis_bias <= 1.0) {
            return Err(format!("sim.basis_bias = {} outside (0, 1]", self.sim.basis_bias));
        }
        if self.sim.shards == 0 {
            return Err("sim.shards must be >= 1".to_string());
        }
        Ok(())
    }

    /// Every key of the effective configuration in manifest order.
    pub fn entries(&self, resolved_out: &str) -> Vec<(&'static str, String)> {
        fn f(v: f64) -> String {
            format!("{v}")
        }
        fn s(v: &str) -> String {
            format!("{v:?}")
        }
        let decoys = format!(
            "[{}]",
            self.protocol.decoy_intensities.iter().map(|d| f(*d)).collect::<Vec<_>>().join(", ")
        );
        vec![
            ("channel.alpha_db_per_km", f(self.channel.alpha_db_per_km)),
            ("detector.p_dc", f(self.detector.p_dc)),
            ("detector.eta_det", f(self.detector.eta_det)),
            ("protocol.m_slices", self.protocol.m_slices.to_string()),
            ("protocol.duty_cycle", f(self.protocol.duty_cycle)),
            ("protocol.ec_factor", f(self.protocol.ec_factor)),
            ("protocol.e_opt", f(self.protocol.e_opt)),
            ("protocol.mu_a", f(self.protocol.mu_a)),
            ("protocol.mu_b", f(self.protocol.mu_b)),
            ("protocol.decoy_intensities", decoys),
            ("drift.sigma_rate_ref_rad_per_ms", f(self.drift.sigma_rate_ref_rad_per_ms)),
            ("drift.length_ref_km", f(self.drift.length_ref_km)),
            ("drift.scaling_exponent", f(self.drift.scaling_exponent)),
            ("drift.sample_dt_ms", f(self.drift.sample_dt_ms)),
            ("grid.start_km", f(self.grid.start_km)),
            ("grid.stop_km", f(self.grid.stop_km)),
            ("grid.step_km", f(self.grid.step_km)),
            ("sim.trials", self.sim.trials.to_string()),
            ("sim.shards", self.sim.shards.to_string()),
            ("sim.basis_bias", f(self.sim.basis_bias)),
            ("run.seed", self.run.seed.to_string()),
            ("run.protocol", s(&self.run.protocol)),
            ("run.optimize_mu", self.run.optimize_mu.to_string()),
            ("run.curve_a", s(&self.run.curve_a)),
            ("run.curve_b", s(&self.run.curve_b)),
            ("run.bracket_lo_km", f(self.run.bracket_lo_km)),
            ("run.bracket_hi_km", f(self.run.bracket_hi_km)),
            ("run.duration_ms", f(self.run.duration_ms)),
            ("run.length_km", f(self.run.length_km)),
            ("run.what", s(&self.run.what)),
            ("run.distance_km", f(self.run.distance_km)),
            ("run.with_experiments", self.run.with_experiments.to_string()),
            ("run.out", s(resolved_out)),
        ]
    }

    /// The manifest comment block placed at the top of every output file.
    /// The config hash covers exactly the echoed `key = value` lines, so a
    /// reproduced run hashes identically.
    pub fn manifest_block(&self, schema: &str, command: &str, resolved_out: &str) -> String {
        let entries = self.entries(resolved_out);
        let mut body = String::new();
        for (k, v) in &entries {
            let _ = writeln!(body, "{k} = {v}");
        }
        let hash = sha256_hex(body.as_bytes());
        let mut block = String::new();
        let _ = writeln!(block, "## tool = tfqkd {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(block, "## schema = {schema}");
        let _ = writeln!(block, "## command = {command}");
        let _ = writeln!(block, "## config_sha256 = {hash}");
        for (k, v) in &entries {
            let _ = writeln!(block, "# {k} = {v}");
        }
        block
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

/// Loads the configuration: defaults, then the optional file (either a
/// TOML config or a previous output file whose manifest is extracted),
/// then environment variables.
pub fn load(path: Option<&Path>) -> Result<Config, String> {
    let mut cfg = Config::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)
            .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
        let toml_text = if text.starts_with("## tool = tfqkd") {
            extract_manifest(&text)
        } else {
            text
        };
        cfg = toml::from_str(&toml_text).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    apply_env(&mut cfg)?;
    Ok(cfg)
}

/// Pulls the `# key = value` manifest lines out of a previous output file.
fn extract_manifest(text: &str) -> String {
    let mut out = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            let _ = writeln!(out, "{rest}");
        }
    }
    out
}

/// Applies `TFQKD_<SECTION>_<KEY>` environment overrides.
pub fn apply_env(cfg: &mut Config) -> Result<(), String> {
    fn set<T: std::str::FromStr>(target: &mut T, var: &str) -> Result<(), String>
    where
        T::Err: std::fmt::Display,
    {
        match std::env::var(var) {
            Ok(raw) => {
                *target = raw.parse().map_err(|e| format!("{var}: {e} (value {raw:?})"))?;
                Ok(())
            }
            Err(_) => Ok(()),
        }
    }
    set(&mut cfg.channel.alpha_db_per_km, "TFQKD_CHANNEL_ALPHA_DB_PER_KM")?;
    set(&mut cfg.detector.p_dc, "TFQKD_DETECTOR_P_DC")?;
    set(&mut cfg.detector.eta_det, "TFQKD_DETECTOR_ETA_DET")?;
    set(&mut cfg.protocol.m_slices, "TFQKD_PROTOCOL_M_SLICES")?;
    set(&mut cfg.protocol.duty_cycle, "TFQKD_PROTOCOL_DUTY_CYCLE")?;
    set(&mut cfg.protocol.ec_factor, "TFQKD_PROTOCOL_EC_FACTOR")?;
    set(&mut cfg.protocol.e_opt, "TFQKD_PROTOCOL_E_OPT")?;
    set(&mut cfg.protocol.mu_a, "TFQKD_PROTOCOL_MU_A")?;
    set(&mut cfg.protocol.mu_b, "TFQKD_PROTOCOL_MU_B")?;
    set(&mut cfg.drift.sigma_rate_ref_rad_per_ms, "TFQKD_DRIFT_SIGMA_RATE_REF_RAD_PER_MS")?;
    set(&mut cfg.drift.length_ref_km, "TFQKD_DRIFT_LENGTH_REF_KM")?;
    set(&mut cfg.drift.scaling_exponent, "TFQKD_DRIFT_SCALING_EXPONENT")?;
    set(&mut cfg.drift.sample_dt_ms, "TFQKD_DRIFT_SAMPLE_DT_MS")?;
    set(&mut cfg.grid.start_km, "TFQKD_GRID_START_KM")?;
    set(&mut cfg.grid.stop_km, "TFQKD_GRID_STOP_KM")?;
    set(&mut cfg.grid.step_km, "TFQKD_GRID_STEP_KM")?;
    set(&mut cfg.sim.trials, "TFQKD_SIM_TRIALS")?;
    set(&mut cfg.sim.shards, "TFQKD_SIM_SHARDS")?;
    set(&mut cfg.sim.basis_bias, "TFQKD_SIM_BASIS_BIAS")?;
    set(&mut cfg.run.seed, "TFQKD_RUN_SEED")?;
    set(&mut cfg.run.protocol, "TFQKD_RUN_PROTOCOL")?;
    set(&mut cfg.run.optimize_mu, "TFQKD_RUN_OPTIMIZE_MU")?;
    set(&mut cfg.run.curve_a, "TFQKD_RUN_CURVE_A")?;
    set(&mut cfg.run.curve_b, "TFQKD_RUN_CURVE_B")?;
    set(&mut cfg.run.bracket_lo_km, "TFQKD_RUN_BRACKET_LO_KM")?;
    set(&mut cfg.run.bracket_hi_km, "TFQKD_RUN_BRACKET_HI_KM")?;
    set(&mut cfg.run.duration_ms, "TFQKD_RUN_DURATION_MS")?;
    set(&mut cfg.run.length_km, "TFQKD_RUN_LENGTH_KM")?;
    set(&mut cfg.run.what, "TFQKD_RUN_WHAT")?;
    set(&mut cfg.run.distance_km, "TFQKD_RUN_DISTANCE_KM")?;
    set(&mut cfg.run.with_experiments, "TFQKD_RUN_WITH_EXPERIMENTS")?;
    if let Ok(v) = std::env::var("TFQKD_RUN_OUT") {
        cfg.run.out = Some(v);
    }
    Ok(())
}
