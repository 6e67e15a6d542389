//! Pilot-based channel estimation in two stages: direct links with the
//! surface switched off, then the cascaded links excited slot by slot with
//! reflection patterns taken from the discrete Fourier matrix.
//!
//! Users are time-orthogonal (each transmits alone in its slots) with
//! unit-modulus pilots at the per-user transmit power. Estimation runs once
//! per fading block.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelSet;
use crate::config::{dbm_to_linear, SystemConfig};
use crate::error::Error;
use crate::linalg::{CMat, C64};
use crate::Result;

/// Pilot schedule and surface patterns for one estimation pass.
#[derive(Debug, Clone)]
pub struct PilotPlan {
    /// Repetitions averaged per slot.
    pub pilot_len: usize,
    /// Static noise power during estimation, dBm.
    pub est_noise_dbm: f64,
    /// (N+1) x N unit-modulus reflection settings, one row per slot.
    pub patterns: CMat,
}

impl PilotPlan {
    /// Patterns from the (N+1)-point DFT matrix (columns 1..N), so the
    /// pattern matrix has orthogonal columns and the slot observations
    /// invert by a conjugate multiply.
    pub fn dft(elements: usize, pilot_len: usize, est_noise_dbm: f64) -> Result<Self> {
        if pilot_len == 0 {
            return Err(Error::config("pilot_len must be >= 1"));
        }
        let rows = elements + 1;
        let patterns = CMat::from_fn(rows, elements, |t, c| {
            let angle = -std::f64::consts::TAU * (t as f64) * ((c + 1) as f64) / rows as f64;
            Complex64::from_polar(1.0, angle)
        });
        Ok(PilotPlan {
            pilot_len,
            est_noise_dbm,
            patterns,
        })
    }

    fn noise_variance(&self) -> f64 {
        dbm_to_linear(self.est_noise_dbm)
    }
}

/// Estimated channel state: direct links plus per-user cascades
/// `G diag(f_k)`, with normalized-MSE diagnostics against the truth they
/// were drawn from.
#[derive(Debug, Clone)]
pub struct CsiEstimate {
    /// M x K estimate of the direct links.
    pub direct: CMat,
    /// Per user: M x N estimate of the cascade.
    pub cascaded: Vec<CMat>,
    /// Per-user NMSE of the direct estimate.
    pub direct_nmse: Vec<f64>,
    /// Per-user NMSE of the cascaded estimate.
    pub cascaded_nmse: Vec<f64>,
    /// AP-RIS average gain (copied from the channel draw; a long-term
    /// statistic assumed known).
    pub g_loss: f64,
}

fn averaged_noise(variance: f64, reps: usize, m: usize, rng: &mut impl Rng) -> Vec<C64> {
    // Mean of `reps` i.i.d. draws: variance / reps per entry.
    let s = (variance / (2.0 * reps as f64)).sqrt();
    (0..m)
        .map(|_| {
            Complex64::new(
                s * rng.sample::<f64, _>(StandardNormal),
                s * rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect()
}

/// Stage one: surface off, least squares over orthogonal pilots.
/// Per-entry error variance is `sigma_est^2 / (pilot_len * P_U)`.
pub fn estimate_direct(
    cs: &ChannelSet,
    plan: &PilotPlan,
    cfg: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<CMat> {
    let m = cs.direct.rows();
    let k = cs.direct.cols();
    let p_pilot = cfg.derive_powers()?.p_user;
    if p_pilot <= 0.0 {
        return Err(Error::config("pilot power must be positive"));
    }
    let amp = p_pilot.sqrt();
    let var = plan.noise_variance();
    let mut h_hat = CMat::zeros(m, k);
    for user in 0..k {
        let noise = averaged_noise(var, plan.pilot_len, m, rng);
        for r in 0..m {
            // y_bar = h * amp + n_bar; divide out the pilot.
            h_hat[(r, user)] = cs.direct[(r, user)] + noise[r] / amp;
        }
    }
    Ok(h_hat)
}

/// Stage two: N+1 slots per user with DFT reflection patterns. After
/// subtracting the direct-link contribution, the slot stack inverts through
/// the conjugate pattern matrix:
/// `A_hat = Z conj(Phi) / (amp (N+1))`.
pub fn estimate_cascaded(
    cs: &ChannelSet,
    plan: &PilotPlan,
    h_hat: &CMat,
    cfg: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<Vec<CMat>> {
    let m = cs.direct.rows();
    let k = cs.direct.cols();
    let n = cs.ap_ris.cols();
    if plan.patterns.rows() != n + 1 || plan.patterns.cols() != n {
        return Err(Error::dimension("pilot patterns must be (N+1) x N"));
    }
    let p_pilot = cfg.derive_powers()?.p_user;
    let amp = p_pilot.sqrt();
    let var = plan.noise_variance();
    let slots = n + 1;

    let mut out = Vec::with_capacity(k);
    for user in 0..k {
        // True cascade for synthesis: columns of G scaled by f_user.
        let a_true = CMat::from_fn(m, n, |r, c| cs.ap_ris[(r, c)] * cs.ris_user[(c, user)]);
        let mut a_hat = CMat::zeros(m, n);
        for t in 0..slots {
            let phi_t = plan.patterns.row(t);
            let noise = averaged_noise(var, plan.pilot_len, m, rng);
            for r in 0..m {
                let mut cascade = Complex64::new(0.0, 0.0);
                for c in 0..n {
                    cascade += a_true[(r, c)] * phi_t[c];
                }
                let y = (cs.direct[(r, user)] + cascade) * amp + noise[r];
                let z = y - h_hat[(r, user)] * amp;
                // Accumulate Z conj(Phi): column c gains z * conj(phi_t[c]).
                for c in 0..n {
                    a_hat[(r, c)] += z * phi_t[c].conj();
                }
            }
        }
        let scale = 1.0 / (amp * slots as f64);
        for r in 0..m {
            for c in 0..n {
                a_hat[(r, c)] *= scale;
            }
        }
        out.push(a_hat);
    }
    Ok(out)
}

/// Both stages plus the NMSE bookkeeping.
pub fn estimate(
    cs: &ChannelSet,
    plan: &PilotPlan,
    cfg: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<CsiEstimate> {
    let h_hat = estimate_direct(cs, plan, cfg, rng)?;
    let cascaded = estimate_cascaded(cs, plan, &h_hat, cfg, rng)?;

    let k = cs.direct.cols();
    let m = cs.direct.rows();
    let n = cs.ap_ris.cols();
    let mut direct_nmse = Vec::with_capacity(k);
    let mut cascaded_nmse = Vec::with_capacity(k);
    for user in 0..k {
        let mut err = 0.0;
        let mut pow = 0.0;
        for r in 0..m {
            err += (h_hat[(r, user)] - cs.direct[(r, user)]).norm_sqr();
            pow += cs.direct[(r, user)].norm_sqr();
        }
        direct_nmse.push(if pow > 0.0 { err / pow } else { 0.0 });

        let mut err = 0.0;
        let mut pow = 0.0;
        for r in 0..m {
            for c in 0..n {
                let truth = cs.ap_ris[(r, c)] * cs.ris_user[(c, user)];
                err += (cascaded[user][(r, c)] - truth).norm_sqr();
                pow += truth.norm_sqr();
            }
        }
        cascaded_nmse.push(if pow > 0.0 { err / pow } else { 0.0 });
    }
    Ok(CsiEstimate {
        direct: h_hat,
        cascaded,
        direct_nmse,
        cascaded_nmse,
        g_loss: cs.g_loss,
    })
}

/// Equivalent channel rebuilt from the estimates:
/// `h_hat_k + A_hat_k phi` per user.
pub fn rebuild_equivalent(est: &CsiEstimate, phi: &[C64]) -> Result<CMat> {
    let m = est.direct.rows();
    let k = est.direct.cols();
    let mut out = est.direct.clone();
    for user in 0..k {
        let a = &est.cascaded[user];
        if a.cols() != phi.len() {
            return Err(Error::dimension("rebuild_equivalent: phi length"));
        }
        for r in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, &p) in phi.iter().enumerate() {
                acc += a[(r, c)] * p;
            }
            out[(r, user)] += acc;
        }
    }
    Ok(out)
}
