//! End-to-end Monte Carlo harness: coded block transmission through the
//! detection-and-decoding loop, adaptive BER/sum-rate sweeps over transmit
//! power, and CSV emission.
//!
//! One block is one fading realization carrying one LDPC codeword per user.
//! The flow per block: draw geometry and channels, estimate CSI if asked,
//! alternate-optimize (W, phi) on the design channels, transmit the coded
//! QPSK frame over the true channels, then run `tau` detection/decoding
//! exchanges, recomputing the prior-aware filter each round.
//!
//! Blocks are seeded as `seeded_rng(seed, stream)` with a stream id unique
//! per (power point, block), so worker scheduling cannot change any result:
//! serial and parallel sweeps are bit-identical.

use std::fmt;
use std::hash::{Hash, Hasher};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{draw_channels, draw_geometry, draw_noise, equivalent_channel};
use crate::config::{seeded_rng, OpCounter, RisMode, SystemConfig};
use crate::csi::{estimate, PilotPlan};
use crate::detector::{llr_exact_qpsk, noise_regularizer, sic_estimate, DetectorState};
use crate::error::Error;
use crate::ldpc::LdpcCode;
use crate::linalg::{CMat, C64};
use crate::modem::Constellation;
use crate::ris::{alternating_optimize, DesignChannels};
use crate::Result;

/// Channel knowledge available to the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    Perfect,
    Estimated,
}

impl CsiMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "perfect" => Ok(CsiMode::Perfect),
            "estimated" => Ok(CsiMode::Estimated),
            other => Err(Error::config(format!("unknown csi mode `{other}`"))),
        }
    }
}

impl fmt::Display for CsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsiMode::Perfect => write!(f, "perfect"),
            CsiMode::Estimated => write!(f, "estimated"),
        }
    }
}

/// Receiver/surface combination under test. The linear variants are the
/// iterative ones degenerated to a single exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    LmmseWoRis,
    LmmsePRis,
    LmmseARis,
    IddWoRis,
    IddPRis,
    IddARis,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::LmmseWoRis,
        Scheme::LmmsePRis,
        Scheme::LmmseARis,
        Scheme::IddWoRis,
        Scheme::IddPRis,
        Scheme::IddARis,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "lmmse-wo-ris" => Ok(Scheme::LmmseWoRis),
            "lmmse-p-ris" => Ok(Scheme::LmmsePRis),
            "lmmse-a-ris" => Ok(Scheme::LmmseARis),
            "idd-wo-ris" => Ok(Scheme::IddWoRis),
            "idd-p-ris" => Ok(Scheme::IddPRis),
            "idd-a-ris" => Ok(Scheme::IddARis),
            other => Err(Error::config(format!("unknown scheme `{other}`"))),
        }
    }

    pub fn ris_mode(&self) -> RisMode {
        match self {
            Scheme::LmmseWoRis | Scheme::IddWoRis => RisMode::None,
            Scheme::LmmsePRis | Scheme::IddPRis => RisMode::Passive,
            Scheme::LmmseARis | Scheme::IddARis => RisMode::Active,
        }
    }

    /// Linear schemes force a single exchange.
    pub fn effective_tau(&self, tau: usize) -> usize {
        match self {
            Scheme::LmmseWoRis | Scheme::LmmsePRis | Scheme::LmmseARis => 1,
            _ => tau.max(1),
        }
    }

    pub fn is_idd(&self) -> bool {
        matches!(self, Scheme::IddWoRis | Scheme::IddPRis | Scheme::IddARis)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Scheme::LmmseWoRis => "LMMSE-WO-RIS",
            Scheme::LmmsePRis => "LMMSE-P-RIS",
            Scheme::LmmseARis => "LMMSE-A-RIS",
            Scheme::IddWoRis => "IDD-WO-RIS",
            Scheme::IddPRis => "IDD-P-RIS",
            Scheme::IddARis => "IDD-A-RIS",
        };
        write!(f, "{name}")
    }
}

/// One sweep request: a power grid for one scheme.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Grid of P_T/K values in dBm, strictly increasing.
    pub powers_dbm: Vec<f64>,
    pub scheme: Scheme,
    pub tau: usize,
    pub csi: CsiMode,
    /// Stop a point once this many final-round bit errors accumulate.
    pub min_errors: u64,
    /// Hard cap on blocks per point.
    pub max_blocks: u64,
    pub rng_seed: u64,
    /// Run blocks on the worker pool (results identical either way).
    pub parallel: bool,
    /// Pilot repetitions (estimated CSI only).
    pub pilot_len: usize,
    /// Static noise during estimation, dBm.
    pub est_noise_dbm: f64,
}

impl SweepSpec {
    pub fn new(powers_dbm: Vec<f64>, scheme: Scheme, tau: usize) -> Self {
        SweepSpec {
            powers_dbm,
            scheme,
            tau,
            csi: CsiMode::Perfect,
            min_errors: 100,
            max_blocks: 2000,
            rng_seed: 1,
            parallel: true,
            pilot_len: 4,
            est_noise_dbm: -125.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.powers_dbm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("power grid must be strictly increasing"));
        }
        if self.pilot_len == 0 {
            return Err(Error::config("pilot_len must be >= 1"));
        }
        Ok(())
    }
}

/// Outcome of one fading block.
#[derive(Debug, Clone)]
pub struct BlockOutcome {
    /// Post-decoding information-bit errors after each exchange.
    pub errors_per_iter: Vec<u64>,
    /// Information bits carried by the block (K * k_info).
    pub info_bits: u64,
    /// `sum_k log2(1 + gamma_k)` at the uniform-prior detector state.
    pub sum_rate: f64,
    /// Codewords failing parity after the final exchange.
    pub parity_failures: u64,
}

/// Aggregated result for one (power, scheme) point.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub power_dbm_per_user: f64,
    pub scheme: Scheme,
    pub tau: usize,
    pub csi: CsiMode,
    pub blocks: u64,
    pub info_bits: u64,
    pub bit_errors: u64,
    /// Final-round BER.
    pub ber: f64,
    /// BER after each exchange (length tau).
    pub ber_per_iter: Vec<f64>,
    pub sum_rate: f64,
    pub parity_failures: u64,
    pub seed: u64,
    pub config_hash: String,
    pub build: String,
}

/// Specializes the scenario to a sweep point: total power from the per-user
/// x-axis value and the scheme's surface mode, with the symbol energy
/// derived from the split (rate-normalized when configured).
pub fn config_at_power(
    base: &SystemConfig,
    scheme: Scheme,
    p_per_user_dbm: f64,
) -> Result<SystemConfig> {
    let mut cfg = base.clone();
    cfg.ris_mode = scheme.ris_mode();
    if cfg.ris_mode == RisMode::None {
        cfg.ris_elements = 0;
    }
    cfg.p_total_dbm = p_per_user_dbm + 10.0 * (cfg.users as f64).log10();
    cfg.sigma_x2 = cfg.derived_sigma_x2()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one fading block. `cfg` must already be specialized via
/// [`config_at_power`]; the stream id must be unique per block.
pub fn run_block(
    cfg: &SystemConfig,
    spec: &SweepSpec,
    code: &LdpcCode,
    stream: u64,
) -> Result<BlockOutcome> {
    let mut rng = seeded_rng(spec.rng_seed, stream);
    let tau = spec.scheme.effective_tau(spec.tau);
    let users = cfg.users;
    let antennas = cfg.antennas;
    let n_bits = code.block_length();
    let k_info = code.message_length();
    let symbols_per_cw = n_bits / 2;

    let geom = draw_geometry(cfg, &mut rng);
    let cs = draw_channels(&geom, cfg, &mut rng)?;
    let design = match spec.csi {
        CsiMode::Perfect => DesignChannels::from_true(&cs),
        CsiMode::Estimated => {
            let plan = PilotPlan::dft(cfg.ris_elements, spec.pilot_len, spec.est_noise_dbm)?;
            let est = estimate(&cs, &plan, cfg, &mut rng)?;
            DesignChannels::from_estimate(&est, &cs)
        }
    };

    let mut ops = OpCounter::new();
    let ao = alternating_optimize(&design, cfg, &mut ops)?;
    let phi = &ao.phi.coeffs;

    // Propagation runs over the true channels; the receiver only sees the
    // design view.
    let h_true = equivalent_channel(&cs, phi)?;
    let h_rx = design.equivalent(phi)?;
    let reg = noise_regularizer(cfg, design.g_loss)?;

    let constellation = Constellation::qpsk(cfg.sigma_x2);
    let mut messages = Vec::with_capacity(users);
    let mut codewords = Vec::with_capacity(users);
    let mut tx_symbols = Vec::with_capacity(users);
    for _ in 0..users {
        let msg: Vec<u8> = (0..k_info).map(|_| rng.random_range(0..2u8)).collect();
        let cw = code.encode(&msg)?;
        tx_symbols.push(constellation.map_bits(&cw)?);
        messages.push(msg);
        codewords.push(cw);
    }

    // Received frame, one vector per channel use.
    let active_noise = cfg.ris_mode == RisMode::Active && cfg.sigma_v2() > 0.0;
    let mut frame = Vec::with_capacity(symbols_per_cw);
    for t in 0..symbols_per_cw {
        let noise = draw_noise(cfg, &mut rng);
        let mut y = noise.static_noise;
        for (u, syms) in tx_symbols.iter().enumerate() {
            let x = syms[t];
            for (r, y_r) in y.iter_mut().enumerate() {
                *y_r += h_true[(r, u)] * x;
            }
        }
        if active_noise {
            for r in 0..antennas {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, &p) in phi.iter().enumerate() {
                    acc += cs.ap_ris[(r, i)] * p * noise.dynamic_noise[i];
                }
                y[r] += acc;
            }
        }
        frame.push(y);
    }

    // Decoder feedback: per user, per symbol, the pair of extrinsic LLRs.
    let mut priors = vec![vec![[0.0f64; 2]; symbols_per_cw]; users];
    let mut errors_per_iter = Vec::with_capacity(tau);
    let mut parity_failures = 0u64;
    let mut sum_rate = 0.0;
    let mut soft_means = vec![Complex64::new(0.0, 0.0); users];
    let mut channel_llrs = vec![vec![0.0f64; n_bits]; users];

    for round in 0..tau {
        // Block-averaged symbol variances feed the filter; soft means stay
        // per-symbol for the cancellation step.
        let mut variances = vec![0.0f64; users];
        let mut mean_table = vec![Complex64::new(0.0, 0.0); users * symbols_per_cw];
        for u in 0..users {
            let mut acc = 0.0;
            for t in 0..symbols_per_cw {
                let mean = constellation.soft_symbol(&priors[u][t]);
                acc += constellation.symbol_variance(&priors[u][t], mean);
                mean_table[u * symbols_per_cw + t] = mean;
            }
            variances[u] = (acc / symbols_per_cw as f64).min(cfg.sigma_x2);
        }

        let state = DetectorState::compute(&h_rx, &variances, cfg.sigma_x2, reg, &mut ops)?;
        if round == 0 {
            sum_rate = state
                .sinr
                .iter()
                .map(|&g| if g.is_finite() { (1.0 + g).log2() } else { 0.0 })
                .sum();
        }

        for (t, y) in frame.iter().enumerate() {
            for u in 0..users {
                soft_means[u] = mean_table[u * symbols_per_cw + t];
            }
            let estimates = sic_estimate(y, &state.filter, &h_rx, &soft_means)?;
            for u in 0..users {
                let ld = llr_exact_qpsk(
                    estimates[u],
                    state.mu[u],
                    state.eta2[u],
                    priors[u][t],
                    &constellation,
                );
                channel_llrs[u][2 * t] = ld[0];
                channel_llrs[u][2 * t + 1] = ld[1];
            }
        }

        let mut errors = 0u64;
        let last_round = round + 1 == tau;
        for u in 0..users {
            let decoded = code.decode(&channel_llrs[u], cfg.ldpc_inner_iters);
            for (pos, &bit) in code.info_positions().iter().zip(&messages[u]) {
                if decoded.hard_bits[*pos] != bit {
                    errors += 1;
                }
            }
            if last_round && !decoded.parity_ok {
                parity_failures += 1;
            }
            for t in 0..symbols_per_cw {
                priors[u][t] = [decoded.extrinsic[2 * t], decoded.extrinsic[2 * t + 1]];
            }
        }
        errors_per_iter.push(errors);
    }

    Ok(BlockOutcome {
        errors_per_iter,
        info_bits: (users * k_info) as u64,
        sum_rate,
        parity_failures,
    })
}

fn config_hash(cfg: &SystemConfig, spec: &SweepSpec) -> String {
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    format!("{cfg:?}").hash(&mut hasher);
    format!(
        "{:?}/{}/{}/{}/{}/{}",
        spec.scheme, spec.tau, spec.csi, spec.min_errors, spec.max_blocks, spec.pilot_len
    )
    .hash(&mut hasher);
    format!("{:016x}", hasher.finish())
}

fn aggregate_point(
    spec: &SweepSpec,
    cfg: &SystemConfig,
    code: &LdpcCode,
    power_idx: usize,
    p_dbm: f64,
) -> Result<ResultRow> {
    let tau = spec.scheme.effective_tau(spec.tau);
    let mut blocks = 0u64;
    let mut info_bits = 0u64;
    let mut errors = vec![0u64; tau];
    let mut parity_failures = 0u64;
    let mut sum_rate_acc = 0.0;

    let batch: u64 = 16;
    while blocks < spec.max_blocks {
        let take = batch.min(spec.max_blocks - blocks);
        let ids: Vec<u64> = (blocks..blocks + take).collect();
        let stream_of = |b: u64| ((power_idx as u64) << 32) | b;
        let outcomes: Vec<Result<BlockOutcome>> = if spec.parallel {
            ids.par_iter()
                .map(|&b| run_block(cfg, spec, code, stream_of(b)))
                .collect()
        } else {
            ids.iter()
                .map(|&b| run_block(cfg, spec, code, stream_of(b)))
                .collect()
        };
        for outcome in outcomes {
            let o = outcome?;
            for (dst, src) in errors.iter_mut().zip(&o.errors_per_iter) {
                *dst += src;
            }
            info_bits += o.info_bits;
            parity_failures += o.parity_failures;
            sum_rate_acc += o.sum_rate;
            blocks += 1;
        }
        if errors[tau - 1] >= spec.min_errors {
            break;
        }
    }

    let ber_per_iter: Vec<f64> = errors
        .iter()
        .map(|&e| e as f64 / info_bits.max(1) as f64)
        .collect();
    Ok(ResultRow {
        power_dbm_per_user: p_dbm,
        scheme: spec.scheme,
        tau,
        csi: spec.csi,
        blocks,
        info_bits,
        bit_errors: errors[tau - 1],
        ber: ber_per_iter[tau - 1],
        ber_per_iter,
        sum_rate: sum_rate_acc / blocks.max(1) as f64,
        parity_failures,
        seed: spec.rng_seed,
        config_hash: config_hash(cfg, spec),
        build: env!("CARGO_PKG_VERSION").to_string(),
    })
}

/// Runs a BER sweep: one row per power point, with adaptive stopping on the
/// final-round error count. Deterministic for a fixed (config, seed).
pub fn run_sweep(spec: &SweepSpec, base: &SystemConfig) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let code = LdpcCode::build(
        base.code_n,
        base.code_rate,
        base.ldpc_col_degree,
        base.rng_seed,
    )?;
    let mut rows = Vec::with_capacity(spec.powers_dbm.len());
    for (idx, &p) in spec.powers_dbm.iter().enumerate() {
        let cfg = config_at_power(base, spec.scheme, p)?;
        rows.push(aggregate_point(spec, &cfg, &code, idx, p)?);
    }
    Ok(rows)
}

/// Sum-rate sweep: runs a fixed number of blocks per point (`max_blocks`)
/// without the transmission/decoding stage.
pub fn run_sumrate_sweep(spec: &SweepSpec, base: &SystemConfig) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.powers_dbm.len());
    for (idx, &p) in spec.powers_dbm.iter().enumerate() {
        let cfg = config_at_power(base, spec.scheme, p)?;
        let blocks = spec.max_blocks.max(1);
        let stream_of = |b: u64| ((idx as u64) << 32) | b;
        let rates: Vec<Result<f64>> = if spec.parallel {
            (0..blocks)
                .into_par_iter()
                .map(|b| sum_rate_block(&cfg, spec, stream_of(b)))
                .collect()
        } else {
            (0..blocks)
                .map(|b| sum_rate_block(&cfg, spec, stream_of(b)))
                .collect()
        };
        let mut acc = 0.0;
        for r in rates {
            acc += r?;
        }
        rows.push(ResultRow {
            power_dbm_per_user: p,
            scheme: spec.scheme,
            tau: 1,
            csi: spec.csi,
            blocks,
            info_bits: 0,
            bit_errors: 0,
            ber: 0.0,
            ber_per_iter: vec![0.0],
            sum_rate: acc / blocks as f64,
            parity_failures: 0,
            seed: spec.rng_seed,
            config_hash: config_hash(&cfg, spec),
            build: env!("CARGO_PKG_VERSION").to_string(),
        });
    }
    Ok(rows)
}

fn sum_rate_block(cfg: &SystemConfig, spec: &SweepSpec, stream: u64) -> Result<f64> {
    let mut rng = seeded_rng(spec.rng_seed, stream);
    let geom = draw_geometry(cfg, &mut rng);
    let cs = draw_channels(&geom, cfg, &mut rng)?;
    let design = match spec.csi {
        CsiMode::Perfect => DesignChannels::from_true(&cs),
        CsiMode::Estimated => {
            let plan = PilotPlan::dft(cfg.ris_elements, spec.pilot_len, spec.est_noise_dbm)?;
            let est = estimate(&cs, &plan, cfg, &mut rng)?;
            DesignChannels::from_estimate(&est, &cs)
        }
    };
    let mut ops = OpCounter::new();
    let ao = alternating_optimize(&design, cfg, &mut ops)?;
    let h_rx = design.equivalent(&ao.phi.coeffs)?;
    let reg = noise_regularizer(cfg, design.g_loss)?;
    let state = DetectorState::compute(
        &h_rx,
        &vec![cfg.sigma_x2; cfg.users],
        cfg.sigma_x2,
        reg,
        &mut ops,
    )?;
    Ok(state
        .sinr
        .iter()
        .map(|&g| if g.is_finite() { (1.0 + g).log2() } else { 0.0 })
        .sum())
}

/// Fixed CSV header shared by both sweep kinds. The per-iteration trace is
/// packed into one semicolon-separated field so the header never varies.
pub const CSV_HEADER: &str = "power_dbm_per_user,scheme,tau,csi,blocks,info_bits,bit_errors,ber,ber_per_iter,sum_rate,parity_failures,seed,config_hash,build";

/// Serializes rows with the fixed header. Output is byte-stable for a fixed
/// (config, seed) regardless of worker scheduling.
pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let trace = r
            .ber_per_iter
            .iter()
            .map(|b| format!("{b:.9e}"))
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{:.4},{},{},{},{},{},{},{:.9e},{},{:.9e},{},{},{},{}\n",
            r.power_dbm_per_user,
            r.scheme,
            r.tau,
            r.csi,
            r.blocks,
            r.info_bits,
            r.bit_errors,
            r.ber,
            trace,
            r.sum_rate,
            r.parity_failures,
            r.seed,
            r.config_hash,
            r.build,
        ));
    }
    out
}

/// Interpolated x-position (dBm) where a BER curve crosses `target`, from
/// log-linear interpolation between bracketing grid points.
pub fn power_at_ber(rows: &[ResultRow], target: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.ber > 0.0)
        .map(|r| (r.power_dbm_per_user, r.ber))
        .collect();
    for w in pts.windows(2) {
        let (p0, b0) = w[0];
        let (p1, b1) = w[1];
        if (b0 >= target && b1 <= target) || (b0 <= target && b1 >= target) {
            if b0 == b1 {
                return Some(p0);
            }
            let t = (target.ln() - b0.ln()) / (b1.ln() - b0.ln());
            return Some(p0 + t * (p1 - p0));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Validation suites: fast oracle checks shared by the CLI and the acceptance
// tests.
// ---------------------------------------------------------------------------

pub mod checks {
    use super::*;
    use crate::complexity::{flops, measured_vs_model, ComplexityModel, Method};
    use crate::linalg::vec_norm_sqr;
    use crate::ris::{
        objective_gradient_norm, solve_phi_llr, solve_phi_unconstrained, truncate_active,
        truncate_passive, RisIntermediates,
    };
    use rand::Rng;

    /// One named pass/fail outcome.
    #[derive(Debug, Clone)]
    pub struct CheckResult {
        pub name: String,
        pub pass: bool,
        pub detail: String,
    }

    impl CheckResult {
        fn new(name: &str, pass: bool, detail: String) -> Self {
            CheckResult {
                name: name.to_string(),
                pass,
                detail,
            }
        }
    }

    fn rand_c64(rng: &mut impl Rng) -> C64 {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn synthetic_design(
        users: usize,
        antennas: usize,
        elements: usize,
        rng: &mut impl Rng,
    ) -> DesignChannels {
        let cs = crate::channel::ChannelSet {
            direct: CMat::from_fn(antennas, users, |_, _| rand_c64(rng)),
            ap_ris: CMat::from_fn(antennas, elements, |_, _| rand_c64(rng)),
            ris_user: CMat::from_fn(elements, users, |_, _| rand_c64(rng)),
            g_loss: 1.0,
        };
        DesignChannels::from_true(&cs)
    }

    fn design_cfg(users: usize, antennas: usize, elements: usize, mode: RisMode) -> SystemConfig {
        SystemConfig {
            users,
            antennas,
            ris_elements: elements,
            ris_mode: mode,
            sigma_x2: 1.0,
            sigma_s2_dbm: -10.0,
            sigma_v2_dbm: -13.0,
            p_total_dbm: 10.0,
            ..SystemConfig::default()
        }
    }

    /// Closed-form equivalence of the two reflection designs at zero
    /// dynamic noise: 100 random instances, sup-norm below 1e-10.
    pub fn eq22_equivalence() -> CheckResult {
        let mut rng = seeded_rng(0xE22, 0);
        let mut worst = 0.0f64;
        for trial in 0..100 {
            let users = 2 + trial % 3;
            let antennas = 4 + trial % 5;
            let elements = 4 + trial % 5;
            let dc = synthetic_design(users, antennas, elements, &mut rng);
            let cfg = design_cfg(users, antennas, elements, RisMode::Passive);
            let w = CMat::from_fn(users, antennas, |_, _| rand_c64(&mut rng).scale(0.5));
            let mut ops = OpCounter::new();
            let a = match solve_phi_unconstrained(&w, &dc, &cfg, &mut ops) {
                Ok(v) => v,
                Err(e) => return CheckResult::new("eq22", false, format!("solve failed: {e}")),
            };
            let b = match solve_phi_llr(&w, &dc, &cfg, &mut ops) {
                Ok(v) => v,
                Err(e) => return CheckResult::new("eq22", false, format!("solve failed: {e}")),
            };
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).norm());
            }
        }
        CheckResult::new(
            "eq22",
            worst < 1e-10,
            format!("sup-norm gap over 100 instances: {worst:.3e}"),
        )
    }

    /// Finite-difference stationarity of the unconstrained solution on 50
    /// random instances including nonzero dynamic noise.
    pub fn stationarity() -> CheckResult {
        let mut rng = seeded_rng(0x57A7, 0);
        let mut worst_ratio = 0.0f64;
        for trial in 0..50 {
            let users = 2 + trial % 3;
            let antennas = 4 + trial % 5;
            let elements = 4 + trial % 5;
            let mode = if trial % 2 == 0 {
                RisMode::Active
            } else {
                RisMode::Passive
            };
            let dc = synthetic_design(users, antennas, elements, &mut rng);
            let cfg = design_cfg(users, antennas, elements, mode);
            let w = CMat::from_fn(users, antennas, |_, _| rand_c64(&mut rng).scale(0.4));
            let mut ops = OpCounter::new();
            let phi = match solve_phi_unconstrained(&w, &dc, &cfg, &mut ops) {
                Ok(v) => v,
                Err(e) => return CheckResult::new("stationarity", false, e.to_string()),
            };
            let inter = RisIntermediates::build(&w, &dc, &mut ops).unwrap();
            let psi_norm = vec_norm_sqr(&inter.psi).sqrt();
            let grad = objective_gradient_norm(&w, &phi, &dc, &cfg, 1e-5).unwrap();
            worst_ratio = worst_ratio.max(grad / (1.0 + psi_norm));
        }
        CheckResult::new(
            "stationarity",
            worst_ratio < 1e-6,
            format!("worst |grad| / (1 + |Psi|): {worst_ratio:.3e}"),
        )
    }

    /// Passive projection against a 720^2 phase grid on Re[phi_t^H phi_o],
    /// 20 random two-element vectors.
    pub fn passive_truncation_grid() -> CheckResult {
        let mut rng = seeded_rng(0x9A55, 0);
        let grid = 720usize;
        for trial in 0..20 {
            let phi_o: Vec<C64> = (0..2).map(|_| rand_c64(&mut rng)).collect();
            let projected = truncate_passive(&phi_o);
            let score = |cand: &[C64]| -> f64 {
                cand.iter()
                    .zip(&phi_o)
                    .map(|(t, o)| (t.conj() * o).re)
                    .sum()
            };
            let best = score(&projected.coeffs);
            for i in 0..grid {
                let t1 = Complex64::from_polar(1.0, std::f64::consts::TAU * i as f64 / grid as f64);
                for j in 0..grid {
                    let t2 =
                        Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / grid as f64);
                    if score(&[t1, t2]) > best + 1e-12 {
                        return CheckResult::new(
                            "truncation-passive",
                            false,
                            format!("grid beat projection on trial {trial}"),
                        );
                    }
                }
            }
        }
        CheckResult::new(
            "truncation-passive",
            true,
            "projection beat 720^2 grid on 20 instances".into(),
        )
    }

    /// Active truncation hits the power budget with < 1e-9 relative error on
    /// 100 random instances.
    pub fn active_truncation_equality() -> CheckResult {
        let mut rng = seeded_rng(0xAC7, 0);
        let mut worst = 0.0f64;
        for trial in 0..100 {
            let users = 2 + trial % 3;
            let elements = 3 + trial % 6;
            let dc = synthetic_design(users, 4, elements, &mut rng);
            let cfg = design_cfg(users, 4, elements, RisMode::Active);
            let split = cfg.derive_powers().unwrap();
            let phi_o: Vec<C64> = (0..elements).map(|_| rand_c64(&mut rng)).collect();
            match truncate_active(&phi_o, &dc, &cfg) {
                Ok(rv) => {
                    let used = rv.reflected_power + rv.dynamic_noise_power;
                    worst = worst.max(((used - split.p_ris) / split.p_ris).abs());
                }
                Err(e) => {
                    return CheckResult::new("truncation-active", false, e.to_string());
                }
            }
        }
        CheckResult::new(
            "truncation-active",
            worst < 1e-9,
            format!("worst relative budget error: {worst:.3e}"),
        )
    }

    /// Flop-model anchors and the instrumented counter on the default
    /// scenario.
    pub fn complexity_anchor() -> CheckResult {
        let apris = flops(Method::Apris, 12, 32, 64, 5);
        if apris != 5_898_240.0 {
            return CheckResult::new(
                "complexity",
                false,
                format!("A/P-RIS anchor {apris} != 5898240"),
            );
        }
        let admm = flops(Method::Admm, 12, 32, 64, 5);
        if (admm - 7e6).abs() / 7e6 > 0.15 {
            return CheckResult::new("complexity", false, format!("ADMM {admm:.3e} not ~7e6"));
        }

        // Instrumented alternating optimization on the full-size scenario.
        let cfg = SystemConfig {
            sigma_x2: 1.0,
            ..SystemConfig::preset("fig2").unwrap()
        };
        let cfg = match config_at_power(&cfg, Scheme::IddPRis, 10.0) {
            Ok(c) => c,
            Err(e) => return CheckResult::new("complexity", false, e.to_string()),
        };
        let mut rng = seeded_rng(0xC0, 0);
        let geom = draw_geometry(&cfg, &mut rng);
        let cs = match draw_channels(&geom, &cfg, &mut rng) {
            Ok(c) => c,
            Err(e) => return CheckResult::new("complexity", false, e.to_string()),
        };
        let dc = DesignChannels::from_true(&cs);
        let mut ops = OpCounter::new();
        let ao = match alternating_optimize(&dc, &cfg, &mut ops) {
            Ok(a) => a,
            Err(e) => return CheckResult::new("complexity", false, e.to_string()),
        };
        let model = ComplexityModel::new(Method::Apris, 12, 32, 64, ao.iterations_used.max(1));
        let report = measured_vs_model(&ops, &model);
        CheckResult::new(
            "complexity",
            report.within_2x,
            format!(
                "anchors ok; measured/model = {:.3} over {} AO iterations",
                report.ratio, ao.iterations_used
            ),
        )
    }

    /// Decoder sanity: noiseless fixed point plus BPSK-AWGN BER at
    /// E_b/N_0 = 3 dB below 1e-4 for the (512, 1/2) code.
    pub fn ldpc_sanity() -> CheckResult {
        let code = match LdpcCode::build(512, 0.5, 3, 7) {
            Ok(c) => c,
            Err(e) => return CheckResult::new("ldpc", false, e.to_string()),
        };
        let mut rng = seeded_rng(0x1D9C, 0);
        let msg: Vec<u8> = (0..code.message_length())
            .map(|_| rng.random_range(0..2u8))
            .collect();
        let cw = code.encode(&msg).unwrap();
        let clean: Vec<f64> = cw.iter().map(|&b| (2.0 * b as f64 - 1.0) * 1e9).collect();
        let res = code.decode(&clean, 10);
        if !res.parity_ok || res.hard_bits != cw || res.iterations_used != 1 {
            return CheckResult::new("ldpc", false, "noiseless fixed point violated".into());
        }

        // BPSK over AWGN at Eb/N0 = 3 dB, rate 1/2: Es/N0 = 0 dB, so the
        // per-dimension noise variance is 1/2 and LLR = 2 y / sigma^2.
        let sigma2: f64 = 0.5;
        let mut errors = 0u64;
        let mut bits = 0u64;
        let codewords = 8000;
        for _ in 0..codewords {
            let msg: Vec<u8> = (0..code.message_length())
                .map(|_| rng.random_range(0..2u8))
                .collect();
            let cw = code.encode(&msg).unwrap();
            let llr: Vec<f64> = cw
                .iter()
                .map(|&b| {
                    let s = 2.0 * b as f64 - 1.0;
                    let y = s
                        + sigma2.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
                    2.0 * y / sigma2
                })
                .collect();
            let res = code.decode(&llr, 10);
            for (pos, &bit) in code.info_positions().iter().zip(&msg) {
                if res.hard_bits[*pos] != bit {
                    errors += 1;
                }
            }
            bits += code.message_length() as u64;
        }
        let ber = errors as f64 / bits as f64;
        CheckResult::new(
            "ldpc",
            ber < 1e-4,
            format!("BPSK-AWGN BER at 3 dB: {ber:.3e} over {bits} bits"),
        )
    }

    /// Runs a named suite; `all` runs everything.
    pub fn run_suite(name: &str) -> Result<Vec<CheckResult>> {
        let all = ["eq22", "stationarity", "truncation", "complexity", "ldpc"];
        let selected: Vec<&str> = match name {
            "all" => all.to_vec(),
            other if all.contains(&other) => vec![other],
            other => {
                return Err(Error::config(format!(
                    "unknown suite `{other}` (available: all, {})",
                    all.join(", ")
                )))
            }
        };
        let mut out = Vec::new();
        for s in selected {
            match s {
                "eq22" => out.push(eq22_equivalence()),
                "stationarity" => out.push(stationarity()),
                "truncation" => {
                    out.push(passive_truncation_grid());
                    out.push(active_truncation_equality());
                }
                "complexity" => out.push(complexity_anchor()),
                "ldpc" => out.push(ldpc_sanity()),
                _ => unreachable!(),
            }
        }
        Ok(out)
    }
}
