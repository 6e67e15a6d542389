//! Scenario configuration, unit conversions, deterministic RNG streams and
//! the operation counter used by the complexity reporter.
//!
//! All powers are stored in linear milliwatts internally; dBm appears only at
//! the configuration and reporting boundaries.

use std::fmt;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Deserialize;

use crate::error::Error;
use crate::Result;

/// Operating mode of the reflecting surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RisMode {
    /// Elements amplify (`p_n >= 1` allowed) and inject dynamic noise.
    Active,
    /// Unit-modulus phase shifts only; dynamic noise variance is zero.
    Passive,
    /// No surface present; the direct link is the whole channel.
    None,
}

impl RisMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "active" => Ok(RisMode::Active),
            "passive" => Ok(RisMode::Passive),
            "none" => Ok(RisMode::None),
            other => Err(Error::config(format!("unknown ris_mode `{other}`"))),
        }
    }
}

impl fmt::Display for RisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RisMode::Active => write!(f, "active"),
            RisMode::Passive => write!(f, "passive"),
            RisMode::None => write!(f, "none"),
        }
    }
}

/// Full scenario description: array sizes, powers, geometry, code and
/// iteration counts. Immutable after construction and shared across workers.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    /// Number of single-antenna users K.
    pub users: usize,
    /// Number of access-point antennas M.
    pub antennas: usize,
    /// Number of reflecting elements N (0 only with `RisMode::None`).
    pub ris_elements: usize,
    /// Symbol energy E[|x|^2], linear.
    pub sigma_x2: f64,
    /// Static receiver noise power, dBm per antenna.
    pub sigma_s2_dbm: f64,
    /// Dynamic RIS noise power, dBm per element (ignored unless active).
    pub sigma_v2_dbm: f64,
    /// Carrier frequency in GHz (recorded; the path-loss models absorb it).
    pub carrier_ghz: f64,
    /// Total transmit power P_T, dBm.
    pub p_total_dbm: f64,
    pub ris_mode: RisMode,
    /// Fraction of P_T reserved for the active surface.
    pub ris_power_fraction: f64,
    /// When true, per-user symbol energy is P_U / R instead of P_U.
    pub normalize_power_by_rate: bool,
    /// Access point position, metres.
    pub ap_pos: [f64; 2],
    /// Surface position, metres.
    pub ris_pos: [f64; 2],
    /// Centre of the user disc, metres.
    pub user_center: [f64; 2],
    /// Radius of the user disc, metres.
    pub user_radius: f64,
    /// LDPC block length n.
    pub code_n: usize,
    /// LDPC code rate R.
    pub code_rate: f64,
    /// LDPC variable-node degree.
    pub ldpc_col_degree: usize,
    /// Sum-product iterations per IDD outer iteration.
    pub ldpc_inner_iters: usize,
    /// Detector/decoder exchanges tau.
    pub idd_iterations: usize,
    /// Alternating-optimization iterations I_AO.
    pub ao_iterations: usize,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            users: 12,
            antennas: 32,
            ris_elements: 64,
            sigma_x2: 1.0,
            sigma_s2_dbm: -100.0,
            sigma_v2_dbm: 0.0,
            carrier_ghz: 5.0,
            p_total_dbm: 20.0,
            ris_mode: RisMode::Passive,
            ris_power_fraction: 0.1,
            normalize_power_by_rate: true,
            ap_pos: [0.0, 0.0],
            ris_pos: [400.0, 10.0],
            user_center: [400.0, 0.0],
            user_radius: 5.0,
            code_n: 512,
            code_rate: 0.5,
            ldpc_col_degree: 3,
            ldpc_inner_iters: 10,
            idd_iterations: 3,
            ao_iterations: 5,
            rng_seed: 1,
        }
    }
}

/// Linear per-node power split of the total budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit {
    /// Power budget of the active surface, linear mW (0 unless active).
    pub p_ris: f64,
    /// Transmit power of each user, linear mW.
    pub p_user: f64,
}

/// dBm to linear milliwatts.
pub fn dbm_to_linear(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Linear milliwatts to dBm.
pub fn linear_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

impl SystemConfig {
    /// Validates the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::config("users must be >= 1"));
        }
        if self.antennas == 0 {
            return Err(Error::config("antennas must be >= 1"));
        }
        if self.ris_elements == 0 && self.ris_mode != RisMode::None {
            return Err(Error::config("ris_elements = 0 requires ris_mode = none"));
        }
        if !(0.0..1.0).contains(&self.ris_power_fraction) {
            return Err(Error::config(format!(
                "ris_power_fraction {} outside [0, 1)",
                self.ris_power_fraction
            )));
        }
        if self.sigma_x2 <= 0.0 {
            return Err(Error::config("sigma_x2 must be positive"));
        }
        let k_info = self.code_n as f64 * self.code_rate;
        if (k_info - k_info.round()).abs() > 1e-9 {
            return Err(Error::config("code_n * code_rate must be integral"));
        }
        if self.idd_iterations == 0 {
            return Err(Error::config("idd_iterations must be >= 1"));
        }
        Ok(())
    }

    /// Static noise variance, linear mW.
    pub fn sigma_s2(&self) -> f64 {
        dbm_to_linear(self.sigma_s2_dbm)
    }

    /// Dynamic RIS noise variance, linear mW. Zero unless the surface is
    /// active: a passive RIS has no amplification stage to inject noise.
    pub fn sigma_v2(&self) -> f64 {
        match self.ris_mode {
            RisMode::Active => dbm_to_linear(self.sigma_v2_dbm),
            _ => 0.0,
        }
    }

    /// Splits P_T between the surface and the users.
    ///
    /// Active mode: P_RIS = fraction * P_T, P_U = (1 - fraction) * P_T / K.
    /// Otherwise the users take everything: P_U = P_T / K.
    pub fn derive_powers(&self) -> Result<PowerSplit> {
        if !(0.0..1.0).contains(&self.ris_power_fraction) {
            return Err(Error::config("ris_power_fraction outside [0, 1)"));
        }
        let p_total = dbm_to_linear(self.p_total_dbm);
        Ok(match self.ris_mode {
            RisMode::Active => PowerSplit {
                p_ris: self.ris_power_fraction * p_total,
                p_user: (1.0 - self.ris_power_fraction) * p_total / self.users as f64,
            },
            _ => PowerSplit {
                p_ris: 0.0,
                p_user: p_total / self.users as f64,
            },
        })
    }

    /// Per-user symbol energy implied by the power split, optionally
    /// normalized by the code rate.
    pub fn derived_sigma_x2(&self) -> Result<f64> {
        let split = self.derive_powers()?;
        Ok(if self.normalize_power_by_rate {
            split.p_user / self.code_rate
        } else {
            split.p_user
        })
    }

    /// Number of information bits per codeword.
    pub fn code_k(&self) -> usize {
        (self.code_n as f64 * self.code_rate).round() as usize
    }
}

/// Deterministic random stream: identical `(seed, stream_id)` pairs yield
/// identical draws; distinct stream ids are statistically independent. One
/// global seed fans out to per-trial streams so serial and parallel runs see
/// the same randomness.
pub fn seeded_rng(seed: u64, stream_id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Counter for the dominant numeric work in the optimization path: complex
/// multiply-add pairs and Hermitian factor-and-solve events. Per-worker and
/// merged by summation.
#[derive(Debug, Clone, Default)]
pub struct OpCounter {
    /// Complex multiply-accumulate operations.
    pub complex_mul_adds: u64,
    /// One entry per factorization: (system size, right-hand-side count).
    pub cholesky_solves: Vec<(usize, usize)>,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_mul_adds(&mut self, n: u64) {
        self.complex_mul_adds += n;
    }

    pub fn record_cholesky(&mut self, size: usize, rhs: usize) {
        self.cholesky_solves.push((size, rhs));
    }

    /// Folds another worker's counts into this one.
    pub fn merge(&mut self, other: &OpCounter) {
        self.complex_mul_adds += other.complex_mul_adds;
        self.cholesky_solves.extend_from_slice(&other.cholesky_solves);
    }

    /// Total complex-operation estimate: multiply-adds plus n^3/3 per
    /// factorization and n^2 per right-hand side.
    pub fn total_complex_ops(&self) -> f64 {
        let mut total = self.complex_mul_adds as f64;
        for &(n, rhs) in &self.cholesky_solves {
            let n = n as f64;
            total += n * n * n / 3.0 + n * n * rhs as f64;
        }
        total
    }
}

// ---------------------------------------------------------------------------
// Configuration file (TOML: section headers + key = value). Unknown keys are
// rejected so typos fail loudly instead of silently using defaults.
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    system: SystemSection,
    geometry: GeometrySection,
    code: CodeSection,
    iteration: IterationSection,
    rng: RngSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    users: usize,
    antennas: usize,
    ris_elements: usize,
    sigma_x2: f64,
    sigma_s2_dbm: f64,
    sigma_v2_dbm: f64,
    carrier_ghz: f64,
    p_total_dbm: f64,
    ris_mode: String,
    ris_power_fraction: f64,
    normalize_power_by_rate: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometrySection {
    ap_pos: [f64; 2],
    ris_pos: [f64; 2],
    user_center: [f64; 2],
    user_radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeSection {
    block_length: usize,
    rate: f64,
    column_degree: usize,
    inner_iterations: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IterationSection {
    idd_iterations: usize,
    ao_iterations: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngSection {
    seed: u64,
}

impl SystemConfig {
    /// Parses a configuration file. Every field of [`SystemConfig`] is
    /// addressable; unknown keys are errors.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: FileConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config file: {e}")))?;
        let cfg = SystemConfig {
            users: file.system.users,
            antennas: file.system.antennas,
            ris_elements: file.system.ris_elements,
            sigma_x2: file.system.sigma_x2,
            sigma_s2_dbm: file.system.sigma_s2_dbm,
            sigma_v2_dbm: file.system.sigma_v2_dbm,
            carrier_ghz: file.system.carrier_ghz,
            p_total_dbm: file.system.p_total_dbm,
            ris_mode: RisMode::parse(&file.system.ris_mode)?,
            ris_power_fraction: file.system.ris_power_fraction,
            normalize_power_by_rate: file.system.normalize_power_by_rate,
            ap_pos: file.geometry.ap_pos,
            ris_pos: file.geometry.ris_pos,
            user_center: file.geometry.user_center,
            user_radius: file.geometry.user_radius,
            code_n: file.code.block_length,
            code_rate: file.code.rate,
            ldpc_col_degree: file.code.column_degree,
            ldpc_inner_iters: file.code.inner_iterations,
            idd_iterations: file.iteration.idd_iterations,
            ao_iterations: file.iteration.ao_iterations,
            rng_seed: file.rng.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Named scenario presets.
    ///
    /// `fig2`: passive surface at (400 m, 10 m), sigma_s^2 = -100 dBm.
    /// `fig3`: active surface at (200 m, 10 m), sigma_s^2 = sigma_v^2 = -95 dBm.
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = SystemConfig::default();
        match name {
            "fig2" => {
                cfg.ris_mode = RisMode::Passive;
                cfg.ris_pos = [400.0, 10.0];
                cfg.sigma_s2_dbm = -100.0;
                cfg.sigma_v2_dbm = 0.0;
            }
            "fig3" => {
                cfg.ris_mode = RisMode::Active;
                cfg.ris_pos = [200.0, 10.0];
                cfg.sigma_s2_dbm = -95.0;
                cfg.sigma_v2_dbm = -95.0;
            }
            other => return Err(Error::config(format!("unknown preset `{other}`"))),
        }
        Ok(cfg)
    }
}
