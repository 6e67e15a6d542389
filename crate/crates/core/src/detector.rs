//! Soft interference cancellation with prior-aware MMSE filtering and
//! Gaussian-approximation LLR computation for QPSK.
//!
//! The filter for user k solves
//! `[(G_loss P_RIS sigma_v^2 + sigma_s^2)/sigma_x^2 I + H Delta_k H^H] w_k = h_k`
//! over the equivalent channel columns. The conditional statistics of the
//! filtered estimate are `E[x_hat|x] = mu_k x` and
//! `var[x_hat|x] = eta_k^2 = sigma_x^2 (mu_k - mu_k^2)`.

use num_complex::Complex64;

use crate::config::{OpCounter, SystemConfig};
use crate::error::Error;
use crate::linalg::{cholesky_solve, CMat, C64};
use crate::modem::Constellation;
use crate::Result;

/// Floor for the conditional variance before divisions.
pub const ETA2_FLOOR: f64 = 1e-12;

/// Output LLR cap.
pub const LLR_CAP: f64 = 30.0;

/// Per-iteration detector summary: filter bank and the per-user Gaussian
/// statistics of the filtered estimates.
#[derive(Debug, Clone)]
pub struct DetectorState {
    /// K x M filter bank; row k is `w_k^H`.
    pub filter: CMat,
    /// `mu_k = w_k^H h_k` (real for a well-posed MMSE solve).
    pub mu: Vec<f64>,
    /// `eta_k^2 = sigma_x^2 (mu_k - mu_k^2)`, floored at [`ETA2_FLOOR`].
    pub eta2: Vec<f64>,
    /// Post-cancellation output SINR per user.
    pub sinr: Vec<f64>,
}

/// Diagnostic terms of the linearized LLR computation.
#[derive(Debug, Clone, Copy)]
pub struct LlrApproxTerms {
    /// Decision variable of the in-phase branch (argument of chi).
    pub a: f64,
    /// Prior/extrinsic offset of the first bit.
    pub eta_term: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Exact residual term at the operating point.
    pub chi: f64,
    /// Prior-free linear term of the first-bit LLR.
    pub gamma_term: f64,
}

/// Noise regularizer of the filter: `(G_loss P_RIS sigma_v^2 + sigma_s^2) / sigma_x^2`.
pub fn noise_regularizer(cfg: &SystemConfig, g_loss: f64) -> Result<f64> {
    let split = cfg.derive_powers()?;
    Ok((g_loss * split.p_ris * cfg.sigma_v2() + cfg.sigma_s2()) / cfg.sigma_x2)
}

/// Diagonal of the prior covariance `Delta_k`: `sigma2_i / sigma_x2` with a
/// fixed 1 at position k.
pub fn delta_matrix(variances: &[f64], sigma_x2: f64, k: usize) -> Result<Vec<f64>> {
    if k >= variances.len() {
        return Err(Error::dimension("delta_matrix: user index"));
    }
    let mut diag = Vec::with_capacity(variances.len());
    for (i, &v) in variances.iter().enumerate() {
        if !(0.0..=sigma_x2 * (1.0 + 1e-9)).contains(&v) {
            return Err(Error::config(format!(
                "symbol variance {v} outside [0, {sigma_x2}]"
            )));
        }
        diag.push(if i == k { 1.0 } else { v / sigma_x2 });
    }
    Ok(diag)
}

/// Single-user filter `w_k` for a given prior diagonal.
pub fn mmse_filter(
    h_eq: &CMat,
    delta_diag: &[f64],
    noise_reg: f64,
    k: usize,
    ops: &mut OpCounter,
) -> Result<Vec<C64>> {
    let mut a = crate::linalg::weighted_col_gram(h_eq, delta_diag, ops)?;
    a.add_diagonal(noise_reg);
    crate::linalg::cholesky_solve_vec(&a, &h_eq.col(k), ops)
}

impl DetectorState {
    /// Computes the whole filter bank. With uniform priors every `Delta_k`
    /// is the identity, so one factorization serves all users; otherwise
    /// each user gets its own regularized solve.
    pub fn compute(
        h_eq: &CMat,
        variances: &[f64],
        sigma_x2: f64,
        noise_reg: f64,
        ops: &mut OpCounter,
    ) -> Result<Self> {
        let m = h_eq.rows();
        let k_users = h_eq.cols();
        if variances.len() != k_users {
            return Err(Error::dimension("variance count"));
        }
        let uniform = variances
            .iter()
            .all(|&v| (v - sigma_x2).abs() <= 1e-12 * sigma_x2.max(1.0));

        let mut filter = CMat::zeros(k_users, m);
        if uniform {
            let ones = vec![1.0; k_users];
            let mut a = crate::linalg::weighted_col_gram(h_eq, &ones, ops)?;
            a.add_diagonal(noise_reg);
            let w = cholesky_solve(&a, h_eq, ops)?;
            for k in 0..k_users {
                for r in 0..m {
                    filter[(k, r)] = w[(r, k)].conj();
                }
            }
        } else {
            for k in 0..k_users {
                let diag = delta_matrix(variances, sigma_x2, k)?;
                let w = mmse_filter(h_eq, &diag, noise_reg, k, ops)?;
                for r in 0..m {
                    filter[(k, r)] = w[r].conj();
                }
            }
        }

        let mut mu = Vec::with_capacity(k_users);
        let mut eta2 = Vec::with_capacity(k_users);
        let mut sinr = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let hk = h_eq.col(k);
            let m_k: C64 = filter.row(k).iter().zip(&hk).map(|(w, h)| w * h).sum();
            let mu_k = m_k.re;
            let e2 = (sigma_x2 * (mu_k - mu_k * mu_k)).max(ETA2_FLOOR);
            mu.push(mu_k);
            eta2.push(e2);
            sinr.push(post_sic_sinr(mu_k, e2, sigma_x2));
        }
        Ok(DetectorState {
            filter,
            mu,
            eta2,
            sinr,
        })
    }
}

/// Interference-cancelled estimates `x_hat_k = w_k^H (y - sum_{i!=k} h_i x_tilde_i)`.
pub fn sic_estimate(
    y: &[C64],
    filter: &CMat,
    h_eq: &CMat,
    soft_means: &[C64],
) -> Result<Vec<C64>> {
    let m = h_eq.rows();
    let k_users = h_eq.cols();
    if y.len() != m || soft_means.len() != k_users || filter.rows() != k_users {
        return Err(Error::dimension("sic_estimate: shapes"));
    }
    // Residual after removing every soft mean; add back user k's own term.
    let mut residual = y.to_vec();
    for (i, &xt) in soft_means.iter().enumerate() {
        if xt == Complex64::new(0.0, 0.0) {
            continue;
        }
        for r in 0..m {
            residual[r] -= h_eq[(r, i)] * xt;
        }
    }
    let mut out = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let row = filter.row(k);
        let mut acc: C64 = row.iter().zip(&residual).map(|(w, r)| w * r).sum();
        if soft_means[k] != Complex64::new(0.0, 0.0) {
            let wh: C64 = row.iter().zip(&h_eq.col(k)).map(|(w, h)| w * h).sum();
            acc += wh * soft_means[k];
        }
        out.push(acc);
    }
    Ok(out)
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Log prior of a bit value under `ln P(1)/P(0)` convention.
fn log_bit_prior(bit: u8, llr: f64) -> f64 {
    let s = 2.0 * bit as f64 - 1.0;
    -softplus(-s * llr)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Exact extrinsic QPSK LLRs by four-point enumeration of the Gaussian
/// likelihood `P(x_hat | x) ~ exp(-|x_hat - mu x|^2 / eta^2)` with factorized
/// priors; the incoming prior is subtracted from each bit.
pub fn llr_exact_qpsk(
    x_hat: C64,
    mu: f64,
    eta2: f64,
    priors: [f64; 2],
    constellation: &Constellation,
) -> [f64; 2] {
    let eta2 = eta2.max(ETA2_FLOOR);
    let points = constellation.points();
    let mut logw = [0.0f64; 4];
    for (idx, &p) in points.iter().enumerate() {
        let d = x_hat - p * mu;
        let mut w = -d.norm_sqr() / eta2;
        for (l, &prior) in priors.iter().enumerate() {
            w += log_bit_prior(constellation.label_bit(idx, l), prior);
        }
        logw[idx] = w;
    }
    let mut out = [0.0f64; 2];
    for (l, &prior) in priors.iter().enumerate() {
        let ones: Vec<f64> = (0..4)
            .filter(|&i| constellation.label_bit(i, l) == 1)
            .map(|i| logw[i])
            .collect();
        let zeros: Vec<f64> = (0..4)
            .filter(|&i| constellation.label_bit(i, l) == 0)
            .map(|i| logw[i])
            .collect();
        let total = log_sum_exp(&ones) - log_sum_exp(&zeros);
        let extrinsic = if prior.is_finite() { total - prior } else { total };
        out[l] = extrinsic.clamp(-LLR_CAP, LLR_CAP);
    }
    out
}

/// Closed-form linearized LLRs.
///
/// Rearranging the exact first-bit LLR gives
/// `L^i = eta + gamma + chi(a)` with `gamma = c (Re - Im) x_hat`,
/// `a = c Re(x_hat)`, `c = 2 sqrt(2) / (sigma_x (1 - mu))` and
/// `chi(a) = ln(1 + (P10/P11) e^-a) - ln(1 + (P01/P00) e^a)`.
/// Replacing `chi` by its linear blend `-a + kappa1` collapses the result to
/// the matched component: `L^i ~= eta1 + kappa1 - c Im(x_hat)` and likewise
/// `L^ii ~= eta2 + kappa2 + c Re(x_hat)`. Under uniform priors both kappas
/// vanish and the forms are exact.
pub fn llr_linear_approx(
    x_hat: C64,
    mu: f64,
    priors: [f64; 2],
    constellation: &Constellation,
) -> Result<([f64; 2], LlrApproxTerms)> {
    if (1.0 - mu).abs() < 1e-12 {
        return Err(Error::Infeasible(
            "mu -> 1: linearized LLR undefined at a perfect estimate".into(),
        ));
    }
    let sigma_x = constellation.sigma_x2().sqrt();
    let c = 2.0 * 2.0f64.sqrt() / (sigma_x * (1.0 - mu));
    let p = constellation.symbol_probs(&priors);
    let (p00, p01, p10, p11) = (p[0], p[1], p[2], p[3]);

    let eta1 = (p11 / p00).ln() - priors[0];
    let eta2 = (p11 / p00).ln() - priors[1];
    let kappa1 = ((p10 + p11) * p00 / ((p01 + p00) * p11)).ln();
    let kappa2 = ((p01 + p11) * p00 / ((p10 + p00) * p11)).ln();

    let a = c * x_hat.re;
    let gamma_term = c * (x_hat.re - x_hat.im);
    let chi = softplus((p10 / p11).ln() - a) - softplus((p01 / p00).ln() + a);

    let l_i = eta1 + kappa1 - c * x_hat.im;
    let l_ii = eta2 + kappa2 + c * x_hat.re;
    Ok((
        [l_i, l_ii],
        LlrApproxTerms {
            a,
            eta_term: eta1,
            kappa1,
            kappa2,
            chi,
            gamma_term,
        },
    ))
}

/// Post-cancellation output SINR `mu^2 sigma_x^2 / eta^2`. Returns infinity
/// when the variance has collapsed to the floor (perfect estimate).
pub fn post_sic_sinr(mu: f64, eta2: f64, sigma_x2: f64) -> f64 {
    if eta2 <= ETA2_FLOOR {
        return f64::INFINITY;
    }
    mu * mu * sigma_x2 / eta2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::seeded_rng;
    use crate::config::RisMode;
    use crate::linalg::{vdot, vec_norm_sqr};
    use rand::Rng;

    fn rand_c64(rng: &mut impl Rng) -> C64 {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn rand_mat(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| rand_c64(rng))
    }

    #[test]
    fn scalar_filter_closed_form() {
        // K = M = 1, h = 1, noise/sigma_x2 = 1, Delta = 1  =>  w = 0.5.
        let h = CMat::from_fn(1, 1, |_, _| C64::new(1.0, 0.0));
        let mut ops = OpCounter::new();
        let w = mmse_filter(&h, &[1.0], 1.0, 0, &mut ops).unwrap();
        assert!((w[0] - C64::new(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn filter_matches_textbook_covariance_form() {
        // Independent route: w = sigma_x2 (sigma_x2 H D H^H + sigma_n2 I)^-1 h_k.
        let mut rng = seeded_rng(21, 0);
        let mut ops = OpCounter::new();
        let (m, k) = (6, 3);
        let h = rand_mat(m, k, &mut rng);
        let sigma_x2 = 1.7;
        let sigma_n2 = 0.3;
        let variances = [1.7, 0.9, 0.2];

        for user in 0..k {
            let diag = delta_matrix(&variances, sigma_x2, user).unwrap();
            let ours = mmse_filter(&h, &diag, sigma_n2 / sigma_x2, user, &mut ops).unwrap();

            let weights: Vec<f64> = diag.iter().map(|d| d * sigma_x2).collect();
            let mut cov = crate::linalg::weighted_col_gram(&h, &weights, &mut ops).unwrap();
            cov.add_diagonal(sigma_n2);
            let text = crate::linalg::cholesky_solve_vec(&cov, &h.col(user), &mut ops).unwrap();
            for (a, b) in ours.iter().zip(&text) {
                assert!((a - b * sigma_x2).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_priors_share_one_inverse() {
        let mut rng = seeded_rng(22, 0);
        let mut ops = OpCounter::new();
        let h = rand_mat(5, 3, &mut rng);
        let state = DetectorState::compute(&h, &[1.0; 3], 1.0, 0.2, &mut ops).unwrap();
        // Shared-path filters must match the per-user route exactly.
        for k in 0..3 {
            let w = mmse_filter(&h, &[1.0; 3], 0.2, k, &mut ops).unwrap();
            for (r, wr) in w.iter().enumerate() {
                assert!((state.filter[(k, r)] - wr.conj()).norm() < 1e-11);
            }
        }
        // One factorization of size 5 with 3 right-hand sides on the shared path.
        assert_eq!(ops.cholesky_solves[0], (5, 3));
    }

    #[test]
    fn delta_matrix_structure() {
        let d = delta_matrix(&[1.0, 1.0, 1.0], 1.0, 1).unwrap();
        assert_eq!(d, vec![1.0, 1.0, 1.0]);
        let d = delta_matrix(&[0.0, 0.5, 0.0], 1.0, 2).unwrap();
        assert_eq!(d, vec![0.0, 0.5, 1.0]);
        let mixed = delta_matrix(&[0.3, 0.9, 0.1], 1.5, 0).unwrap();
        assert_eq!(mixed, vec![1.0, 0.9 / 1.5, 0.1 / 1.5]);
        assert!(delta_matrix(&[2.0], 1.0, 0).is_err());
        assert!(delta_matrix(&[-0.1], 1.0, 0).is_err());
    }

    #[test]
    fn sic_reductions() {
        let mut rng = seeded_rng(23, 0);
        let h = rand_mat(4, 2, &mut rng);
        let mut ops = OpCounter::new();
        let state = DetectorState::compute(&h, &[1.0; 2], 1.0, 0.1, &mut ops).unwrap();
        let y: Vec<C64> = (0..4).map(|_| rand_c64(&mut rng)).collect();

        // Zero soft means: x_hat_k = w_k^H y.
        let zeros = vec![C64::new(0.0, 0.0); 2];
        let est = sic_estimate(&y, &state.filter, &h, &zeros).unwrap();
        for k in 0..2 {
            let direct: C64 = state.filter.row(k).iter().zip(&y).map(|(w, v)| w * v).sum();
            assert!((est[k] - direct).norm() < 1e-12);
        }

        // Perfect priors, noiseless: x_hat_k = mu_k x_k.
        let x = [rand_c64(&mut rng), rand_c64(&mut rng)];
        let mut y2 = vec![C64::new(0.0, 0.0); 4];
        for r in 0..4 {
            for (i, &xi) in x.iter().enumerate() {
                y2[r] += h[(r, i)] * xi;
            }
        }
        let est = sic_estimate(&y2, &state.filter, &h, &x.to_vec()).unwrap();
        for k in 0..2 {
            let expected = x[k] * state.mu[k];
            // mu has a small imaginary part in finite precision; compare via
            // the full complex filter response.
            let wh: C64 = state
                .filter
                .row(k)
                .iter()
                .zip(&h.col(k))
                .map(|(w, hk)| w * hk)
                .sum();
            assert!((est[k] - x[k] * wh).norm() < 1e-12);
            assert!((est[k] - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn sic_single_user_is_noop() {
        let mut rng = seeded_rng(24, 0);
        let h = rand_mat(3, 1, &mut rng);
        let mut ops = OpCounter::new();
        let state = DetectorState::compute(&h, &[1.0], 1.0, 0.1, &mut ops).unwrap();
        let y: Vec<C64> = (0..3).map(|_| rand_c64(&mut rng)).collect();
        let with_prior = sic_estimate(&y, &state.filter, &h, &[C64::new(0.4, -0.2)]).unwrap();
        let without = sic_estimate(&y, &state.filter, &h, &[C64::new(0.0, 0.0)]).unwrap();
        assert!((with_prior[0] - without[0]).norm() < 1e-12);
    }

    #[test]
    fn exact_llr_symmetries() {
        let c = Constellation::qpsk(1.0);
        // Decision-boundary input: the first bit reads the imaginary part.
        let l = llr_exact_qpsk(C64::new(0.3, 0.0), 0.5, 0.25, [0.0, 0.0], &c);
        assert!(l[0].abs() < 1e-12);
        // Odd symmetry under sign flip of the estimate.
        let a = llr_exact_qpsk(C64::new(0.2, -0.4), 0.5, 0.25, [0.0, 0.0], &c);
        let b = llr_exact_qpsk(C64::new(-0.2, 0.4), 0.5, 0.25, [0.0, 0.0], &c);
        assert!((a[0] + b[0]).abs() < 1e-12);
        assert!((a[1] + b[1]).abs() < 1e-12);
    }

    #[test]
    fn exact_llr_reduces_to_gray_linear_form_under_uniform_priors() {
        // Enumeration must collapse to L^i = -c Im(x_hat), L^ii = +c Re(x_hat)
        // with c = 2 sqrt(2) mu sigma_x / (sqrt(2) eta^2) = 2 sqrt(2)/(sigma_x (1-mu)).
        let sigma_x2 = 1.9f64;
        let c64 = Constellation::qpsk(sigma_x2);
        let mu = 0.62;
        let eta2 = sigma_x2 * (mu - mu * mu);
        let coef = 2.0 * 2.0f64.sqrt() / (sigma_x2.sqrt() * (1.0 - mu));
        let mut rng = seeded_rng(25, 0);
        for _ in 0..50 {
            let x_hat = C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let l = llr_exact_qpsk(x_hat, mu, eta2, [0.0, 0.0], &c64);
            assert!((l[0] - (-coef * x_hat.im)).abs() < 1e-9, "L^i");
            assert!((l[1] - (coef * x_hat.re)).abs() < 1e-9, "L^ii");
        }
    }

    #[test]
    fn extrinsic_property_via_enumeration_identity() {
        // The prior enters the total LLR only through the prior terms: the
        // extrinsic output with priors equals the prior-free value plus the
        // chi correction, which the decomposition below isolates. Verify by
        // recomputing the full enumeration with and without priors.
        let c = Constellation::qpsk(1.0);
        let mu = 0.55;
        let eta2 = 1.0 * (mu - mu * mu);
        let mut rng = seeded_rng(26, 0);
        for _ in 0..25 {
            let x_hat = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let priors = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let with = llr_exact_qpsk(x_hat, mu, eta2, priors, &c);
            let (_, terms) = llr_linear_approx(x_hat, mu, priors, &c).unwrap();
            // Exact decomposition: L^i = eta + gamma + chi(a).
            let rebuilt = terms.eta_term + terms.gamma_term + terms.chi;
            assert!(
                (with[0] - rebuilt).abs() < 1e-10,
                "decomposition {} vs {}",
                with[0],
                rebuilt
            );
        }
    }

    #[test]
    fn approx_kappas_vanish_under_uniform_priors() {
        let c = Constellation::qpsk(1.0);
        let (_, terms) =
            llr_linear_approx(C64::new(0.3, 0.1), 0.5, [0.0, 0.0], &c).unwrap();
        assert!(terms.kappa1.abs() < 1e-12);
        assert!(terms.kappa2.abs() < 1e-12);
        assert!(llr_linear_approx(C64::new(0.3, 0.1), 1.0, [0.0, 0.0], &c).is_err());
    }

    #[test]
    fn approx_matches_exact_in_high_confidence_regime() {
        // |a| > 10 with mild priors: the chi blend error is dwarfed by the
        // linear terms, so the relative gap stays below 1%.
        let sigma_x2 = 1.0;
        let c = Constellation::qpsk(sigma_x2);
        let mu = 0.7;
        let eta2 = sigma_x2 * (mu - mu * mu);
        let coef = 2.0 * 2.0f64.sqrt() / (sigma_x2.sqrt() * (1.0 - mu));
        let mut rng = seeded_rng(27, 0);
        for _ in 0..40 {
            // Both components large so both LLR magnitudes dominate the
            // prior-blend constants.
            let re = (12.0 + rng.random_range(0.0..6.0)) / coef * (if rng.random::<bool>() { 1.0 } else { -1.0 });
            let im = (12.0 + rng.random_range(0.0..6.0)) / coef * (if rng.random::<bool>() { 1.0 } else { -1.0 });
            let x_hat = C64::new(re, im);
            let priors = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            let (approx, terms) = llr_linear_approx(x_hat, mu, priors, &c).unwrap();
            assert!(terms.a.abs() > 10.0);
            // Compare against the unclamped enumeration.
            let exact = llr_exact_qpsk(x_hat, mu, eta2, priors, &c);
            for l in 0..2 {
                if exact[l].abs() >= LLR_CAP {
                    continue; // clamped: magnitude ordering already decided
                }
                let rel = (approx[l] - exact[l]).abs() / exact[l].abs();
                assert!(rel < 0.01, "bit {l}: approx {} exact {}", approx[l], exact[l]);
            }
        }
    }

    #[test]
    fn approx_gap_at_boundary_recorded() {
        // a = 0 is the worst case for the linear blend; record the gap over a
        // scan instead of asserting it (it is a documented approximation).
        let c = Constellation::qpsk(1.0);
        let mu = 0.6;
        let eta2 = mu - mu * mu;
        let coef = 2.0 * 2.0f64.sqrt() / (1.0 - mu);
        let priors = [1.2, -0.7];
        let mut worst: f64 = 0.0;
        for step in -200..=200 {
            let a = step as f64 / 10.0; // a in [-20, 20]
            let x_hat = C64::new(a / coef, 0.35);
            let (approx, _) = llr_linear_approx(x_hat, mu, priors, &c).unwrap();
            let exact = llr_exact_qpsk(x_hat, mu, eta2, priors, &c);
            worst = worst.max((approx[0] - exact[0]).abs());
        }
        println!("max linear-approx gap over a in [-20,20]: {worst:.4}");
        assert!(worst.is_finite());
    }

    #[test]
    fn sinr_anchors() {
        let gamma = post_sic_sinr(0.5, 0.25, 1.0);
        assert!((gamma - 1.0).abs() < 1e-12);
        assert!(((1.0 + gamma).log2() - 1.0).abs() < 1e-12);
        assert_eq!(post_sic_sinr(1.0, ETA2_FLOOR, 1.0), f64::INFINITY);
        assert_eq!(post_sic_sinr(0.0, 0.3, 1.0), 0.0);
    }

    #[test]
    fn gaussian_consistency_of_filtered_estimates() {
        // Fixed channel, user 0's symbol fixed, everything else random:
        // E[x_hat_0] ~= mu_0 x_0 and var ~= eta_0^2.
        let cfg = SystemConfig {
            users: 2,
            antennas: 4,
            ris_elements: 0,
            ris_mode: RisMode::None,
            sigma_x2: 1.0,
            sigma_s2_dbm: -3.0,
            ..SystemConfig::default()
        };
        let mut rng = seeded_rng(28, 0);
        let h = rand_mat(4, 2, &mut rng);
        let reg = cfg.sigma_s2() / cfg.sigma_x2;
        let mut ops = OpCounter::new();
        let state = DetectorState::compute(&h, &[1.0, 1.0], 1.0, reg, &mut ops).unwrap();

        let constellation = Constellation::qpsk(1.0);
        let x0 = constellation.points()[1];
        let trials = 10_000;
        let mut mean = C64::new(0.0, 0.0);
        let mut second = 0.0;
        let zeros = vec![C64::new(0.0, 0.0); 2];
        let sigma_s2 = cfg.sigma_s2();
        for _ in 0..trials {
            let x1 = constellation.points()[rng.random_range(0..4)];
            let mut y = vec![C64::new(0.0, 0.0); 4];
            for r in 0..4 {
                let n = C64::new(
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                ) * (sigma_s2 / 2.0).sqrt();
                y[r] = h[(r, 0)] * x0 + h[(r, 1)] * x1 + n;
            }
            let est = sic_estimate(&y, &state.filter, &h, &zeros).unwrap()[0];
            mean += est;
            second += est.norm_sqr();
        }
        let mean = mean / trials as f64;
        let expected = x0 * state.mu[0];
        // Standard error of the mean of x_hat: eta / sqrt(trials) per axis.
        let se = (state.eta2[0] / trials as f64).sqrt();
        assert!(
            (mean - expected).norm() < 3.0 * se * 2.0,
            "mean {mean} expected {expected} se {se}"
        );
        let var = second / trials as f64 - mean.norm_sqr();
        assert!(
            (var - state.eta2[0]).abs() / state.eta2[0] < 0.05,
            "var {var} eta2 {}",
            state.eta2[0]
        );
    }

    #[test]
    fn mmse_filter_is_a_local_minimum_of_exact_mse() {
        // J(w) = sigma_x2 - 2 sigma_x2 Re(w^H h_k) + w^H C w with
        // C = sigma_x2 H H^H + sigma_n2 I is the exact expectation of
        // |x_k - w^H y|^2; the solved filter cannot be beaten by nearby
        // perturbations.
        let mut rng = seeded_rng(29, 0);
        let h = rand_mat(4, 2, &mut rng);
        let sigma_x2 = 1.0;
        let sigma_n2 = 0.25;
        let mut ops = OpCounter::new();
        let state =
            DetectorState::compute(&h, &[1.0, 1.0], sigma_x2, sigma_n2 / sigma_x2, &mut ops)
                .unwrap();

        let ones = [1.0f64, 1.0];
        let weights: Vec<f64> = ones.iter().map(|d| d * sigma_x2).collect();
        let mut cov = crate::linalg::weighted_col_gram(&h, &weights, &mut ops).unwrap();
        cov.add_diagonal(sigma_n2);
        let mse = |w: &[C64], k: usize| -> f64 {
            let hk = h.col(k);
            let cw = cov.mat_vec(w, &mut OpCounter::new()).unwrap();
            let quad: f64 = vdot(w, &cw).re;
            sigma_x2 - 2.0 * sigma_x2 * vdot(w, &hk).re + quad
        };
        for k in 0..2 {
            let w: Vec<C64> = state.filter.row(k).iter().map(|x| x.conj()).collect();
            let base = mse(&w, k);
            for _ in 0..200 {
                let mut delta: Vec<C64> = (0..4).map(|_| rand_c64(&mut rng)).collect();
                let norm = vec_norm_sqr(&delta).sqrt();
                for d in &mut delta {
                    *d *= 1e-3 / norm;
                }
                let perturbed: Vec<C64> = w.iter().zip(&delta).map(|(a, b)| a + b).collect();
                assert!(mse(&perturbed, k) >= base - 1e-15);
            }
        }
    }
}
