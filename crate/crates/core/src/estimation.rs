//! Channel-parameter estimation: least squares from pilots and joint
//! EM channel estimation / symbol clustering over the Gaussian mixture
//! formed by the received symbols.

use crate::constellation::Codebook;
use crate::error::{PmhError, Result};
use crate::linalg::{dist_sq, solve_right, CMat, C64};
use std::f64::consts::PI;

/// Floor applied to sigma^2 between EM iterations so the next E-step never
/// divides by zero.
pub const SIGMA_FLOOR: f64 = 1e-15;

/// Gram matrices with a pivot-ratio estimate beyond this are treated as
/// singular.
pub const GRAM_COND_LIMIT: f64 = 1e12;

/// Least-squares channel estimate from a pilot block.
#[derive(Debug, Clone)]
pub struct LsEstimate {
    pub h_ls: CMat,
    pub sigma_ls: f64,
}

/// Pilot matrix with L columns: sqrt(N)-scaled unitary-DFT columns, cycled.
/// Every pilot symbol has energy N and any N consecutive columns are
/// orthogonal, so the matrix has full row rank for L >= N.
pub fn pilot_matrix(n_tx: usize, l: usize) -> CMat {
    assert!(n_tx >= 1 && l >= 1);
    let n = n_tx as f64;
    CMat::from_fn(n_tx, l, |a, b| {
        let col = b % n_tx;
        C64::from_polar(1.0, -2.0 * PI * (a * col) as f64 / n)
    })
}

/// H_LS = Y X^H (X X^H)^{-1} (right pseudo-inverse of the pilot block) and
/// the residual noise variance sigma^2 = sum_l ||y_l - H x_l||^2 / (M L).
pub fn ls_estimate(pilots_tx: &CMat, pilots_rx: &CMat) -> Result<LsEstimate> {
    let n = pilots_tx.rows();
    let l = pilots_tx.cols();
    let m = pilots_rx.rows();
    if pilots_rx.cols() != l {
        return Err(PmhError::DimensionMismatch(format!(
            "{} tx pilots vs {} rx pilots",
            l,
            pilots_rx.cols()
        )));
    }
    if l < n {
        return Err(PmhError::InvalidConfig(format!(
            "pilot length {l} shorter than transmit antenna count {n}"
        )));
    }
    let xh = pilots_tx.hermitian();
    let gram = pilots_tx.mul(&xh); // N x N
    let yxh = pilots_rx.mul(&xh); // M x N
    let solved = solve_right(&yxh, &gram)
        .ok_or(PmhError::SingularPilotGram(f64::INFINITY))
        .and_then(|s| {
            if s.cond_proxy > GRAM_COND_LIMIT {
                Err(PmhError::SingularPilotGram(s.cond_proxy))
            } else {
                Ok(s)
            }
        })?;
    let h_ls = solved.x;

    let mut rss = 0.0;
    for col in 0..l {
        let x: Vec<C64> = (0..n).map(|r| pilots_tx.get(r, col)).collect();
        let hx = h_ls.mat_vec(&x);
        for (r, hv) in hx.iter().enumerate() {
            rss += (pilots_rx.get(r, col) - hv).norm_sqr();
        }
    }
    Ok(LsEstimate {
        h_ls,
        sigma_ls: rss / (m * l) as f64,
    })
}

/// Posterior assignment probabilities from one E-step: row t holds
/// p(symbol t was codeword i) for all i. Rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    tau: Vec<f64>,
    rows: usize,
    k: usize,
}

impl Responsibilities {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Fixed uniform prior over the codewords.
    pub fn prior(&self) -> f64 {
        1.0 / self.k as f64
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.tau[t * self.k..(t + 1) * self.k]
    }

    /// Index of the most probable codeword for symbol t (ties to the
    /// smaller index).
    pub fn argmax_row(&self, t: usize) -> usize {
        let row = self.row(t);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        best
    }
}

/// Receiver codewords {H s_i} for a codebook under a channel estimate.
pub fn receiver_codewords(h: &CMat, codebook: &Codebook) -> Vec<Vec<C64>> {
    codebook.codewords().iter().map(|s| h.mat_vec(s)).collect()
}

/// E-step over precomputed receiver codewords. Computed in the log domain
/// with per-row max subtraction; underflow to exactly zero is fine.
pub(crate) fn e_step_points(y: &[Vec<C64>], rx_codewords: &[Vec<C64>], sigma2: f64) -> Responsibilities {
    assert!(sigma2 > 0.0, "E-step needs sigma^2 > 0");
    let k = rx_codewords.len();
    let mut tau = Vec::with_capacity(y.len() * k);
    let mut d2 = vec![0.0f64; k];
    for yt in y {
        let mut min_d2 = f64::INFINITY;
        for (i, c) in rx_codewords.iter().enumerate() {
            d2[i] = dist_sq(yt, c);
            min_d2 = min_d2.min(d2[i]);
        }
        let mut sum = 0.0;
        let base = tau.len();
        for &d in &d2 {
            let w = (-(d - min_d2) / sigma2).exp();
            tau.push(w);
            sum += w;
        }
        for v in &mut tau[base..] {
            *v /= sum;
        }
    }
    Responsibilities {
        tau,
        rows: y.len(),
        k,
    }
}

/// One E-step: posterior responsibilities of each codeword for each
/// received symbol, under the Gaussian mixture with means {H s_i} and
/// isotropic variance sigma^2.
pub fn em_e_step(
    y: &[Vec<C64>],
    codebook: &Codebook,
    h: &CMat,
    sigma2: f64,
) -> Responsibilities {
    e_step_points(y, &receiver_codewords(h, codebook), sigma2)
}

/// One M-step: re-estimates (H, sigma^2) from weighted moments.
///
/// H solves H G = B with B = sum_{t,i} tau y_t s_i^H and
/// G = sum_{t,i} tau s_i s_i^H; sigma^2 is the responsibility-weighted mean
/// squared residual per receive antenna (raw, not floored).
pub fn em_m_step(
    y: &[Vec<C64>],
    codebook: &Codebook,
    resp: &Responsibilities,
) -> Result<(CMat, f64)> {
    let (h, sigma2, _) = m_step_inner(y, codebook, resp)?;
    Ok((h, sigma2))
}

/// Returns (H_new, sigma^2_raw, weighted residual sum of squares).
fn m_step_inner(
    y: &[Vec<C64>],
    codebook: &Codebook,
    resp: &Responsibilities,
) -> Result<(CMat, f64, f64)> {
    let k = codebook.size();
    assert_eq!(resp.k(), k);
    assert_eq!(resp.rows(), y.len());
    let m = y[0].len();
    let n = codebook.params().n_tx();

    // Column sums and responsibility-weighted received sums per codeword.
    let mut weight = vec![0.0f64; k];
    let mut ysum = vec![vec![C64::ZERO; m]; k];
    for (t, yt) in y.iter().enumerate() {
        for (i, &tau) in resp.row(t).iter().enumerate() {
            if tau == 0.0 {
                continue;
            }
            weight[i] += tau;
            for (acc, v) in ysum[i].iter_mut().zip(yt) {
                *acc += tau * v;
            }
        }
    }

    let mut b = CMat::zeros(m, n);
    let mut gram = CMat::zeros(n, n);
    for i in 0..k {
        if weight[i] == 0.0 {
            continue;
        }
        let s = codebook.codeword(i);
        b.add_scaled_outer(&ysum[i], s, 1.0);
        gram.add_scaled_outer(s, s, weight[i]);
    }

    let solved = solve_right(&b, &gram)
        .ok_or(PmhError::SingularWeightedGram(f64::INFINITY))
        .and_then(|s| {
            if s.cond_proxy > GRAM_COND_LIMIT {
                Err(PmhError::SingularWeightedGram(s.cond_proxy))
            } else {
                Ok(s)
            }
        })?;
    let h_new = solved.x;

    // Weighted residual, accumulated directly so a perfect fit really gives
    // (numerically) zero instead of cancellation noise.
    let rx = receiver_codewords(&h_new, codebook);
    let mut rss = 0.0;
    for (t, yt) in y.iter().enumerate() {
        for (i, &tau) in resp.row(t).iter().enumerate() {
            if tau == 0.0 {
                continue;
            }
            rss += tau * dist_sq(yt, &rx[i]);
        }
    }
    let total_weight: f64 = weight.iter().sum();
    let sigma2 = rss / (m as f64 * total_weight);
    Ok((h_new, sigma2, rss))
}

/// Expected complete-data log-likelihood plus responsibility entropy
/// (the EM lower bound), evaluated at (resp, sigma2_used, rss).
fn em_lower_bound(resp: &Responsibilities, m: usize, sigma2_used: f64, rss: f64) -> f64 {
    let t_s = resp.rows() as f64;
    let q = t_s * resp.prior().ln() - t_s * m as f64 * (PI * sigma2_used).ln() - rss / sigma2_used;
    let mut entropy = 0.0;
    for v in &resp.tau {
        if *v > 0.0 {
            entropy -= v * v.ln();
        }
    }
    q + entropy
}

/// Outcome of an EM run.
#[derive(Debug, Clone)]
pub struct EmResult {
    pub h_em: CMat,
    pub sigma_em: f64,
    /// Posteriors under the final parameters (the E-step of the last
    /// iteration), used for the sample-symbol decisions.
    pub resp: Responsibilities,
    /// Lower-bound log-likelihood after each M-step; non-decreasing.
    pub ll_trace: Vec<f64>,
    /// Number of E/M iterations executed.
    pub iterations: usize,
    /// Set when the run stopped on the iteration cap instead of the
    /// log-likelihood threshold (soft failure; parameters are best-so-far).
    pub hit_max_iters: bool,
}

/// Runs EM to convergence: alternates E and M steps until the
/// log-likelihood improvement drops below `eps` or `max_iters` is reached.
pub fn em_run(
    y_samples: &[Vec<C64>],
    codebook: &Codebook,
    init: &LsEstimate,
    eps: f64,
    max_iters: usize,
) -> Result<EmResult> {
    let (result, _) = em_run_traced(y_samples, codebook, init, eps, max_iters, false)?;
    Ok(result)
}

/// As [`em_run`]; when `record_h` is set, also returns the channel estimate
/// after every M-step (for NMSE-versus-iteration traces).
pub fn em_run_traced(
    y_samples: &[Vec<C64>],
    codebook: &Codebook,
    init: &LsEstimate,
    eps: f64,
    max_iters: usize,
    record_h: bool,
) -> Result<(EmResult, Vec<CMat>)> {
    assert!(!y_samples.is_empty(), "EM needs at least one sample symbol");
    assert!(max_iters >= 1);
    let m = y_samples[0].len();

    let mut h = init.h_ls.clone();
    let mut sigma2 = init.sigma_ls.max(SIGMA_FLOOR);
    let mut ll_trace = Vec::new();
    let mut h_trace = Vec::new();
    let mut ll_prev = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        let rx = receiver_codewords(&h, codebook);
        let resp = e_step_points(y_samples, &rx, sigma2);
        let (h_new, sigma_raw, rss) = m_step_inner(y_samples, codebook, &resp)?;
        h = h_new;
        sigma2 = sigma_raw.max(SIGMA_FLOOR);
        let ll = em_lower_bound(&resp, m, sigma2, rss);
        ll_trace.push(ll);
        if record_h {
            h_trace.push(h.clone());
        }
        if ll - ll_prev < eps {
            converged = true;
            break;
        }
        ll_prev = ll;
    }

    // Refresh the posteriors under the final parameters; Proposition-style
    // sample decisions must agree with ML detection under (H_EM, sigma_EM).
    let rx = receiver_codewords(&h, codebook);
    let resp = e_step_points(y_samples, &rx, sigma2);

    Ok((
        EmResult {
            h_em: h,
            sigma_em: sigma2,
            resp,
            ll_trace,
            iterations,
            hit_max_iters: !converged,
        },
        h_trace,
    ))
}

/// Normalized mean squared error ||H_est - H||^2 / ||H||^2 (Frobenius).
pub fn nmse(h_est: &CMat, h_true: &CMat) -> Result<f64> {
    if h_est.rows() != h_true.rows() || h_est.cols() != h_true.cols() {
        return Err(PmhError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            h_est.rows(),
            h_est.cols(),
            h_true.rows(),
            h_true.cols()
        )));
    }
    let denom = h_true.fro_norm_sq();
    if denom == 0.0 {
        return Err(PmhError::ZeroReference);
    }
    Ok(h_est.sub(h_true).fro_norm_sq() / denom)
}
