//! Channel realizations (i.i.d. Rayleigh and geometric mmWave), additive
//! noise, and the Eb/N0 to noise-variance mapping.

use crate::constellation::PmhParams;
use crate::error::{PmhError, Result};
use crate::linalg::{CMat, C64};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Draws a circularly-symmetric complex Gaussian with the given variance.
#[inline]
pub fn draw_cn(var: f64, rng: &mut impl Rng) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Rayleigh,
    MmWave { n_ray: usize },
}

/// A quasi-static channel: fixed M x N matrix plus per-receive-antenna
/// complex noise variance for the duration of one frame.
#[derive(Debug, Clone)]
pub struct ChannelState {
    h: CMat,
    noise_var: f64,
    kind: ChannelKind,
}

impl ChannelState {
    pub fn new(h: CMat, noise_var: f64, kind: ChannelKind) -> Result<Self> {
        if !h.is_finite() {
            return Err(PmhError::InvalidConfig(
                "channel matrix has non-finite entries".into(),
            ));
        }
        if !(noise_var >= 0.0) {
            return Err(PmhError::InvalidConfig(format!(
                "noise variance must be >= 0, got {noise_var}"
            )));
        }
        Ok(Self {
            h,
            noise_var,
            kind,
        })
    }

    pub fn h(&self) -> &CMat {
        &self.h
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn n_rx(&self) -> usize {
        self.h.rows()
    }

    pub fn n_tx(&self) -> usize {
        self.h.cols()
    }

    /// One use of the channel: y = Hx + n with n ~ CN(0, sigma^2 I).
    ///
    /// Noise is drawn fresh on every call; the matrix never changes.
    pub fn transmit(&self, x: &[C64], rng: &mut impl Rng) -> Result<Vec<C64>> {
        if x.len() != self.h.cols() {
            return Err(PmhError::DimensionMismatch(format!(
                "symbol has {} entries, channel expects {}",
                x.len(),
                self.h.cols()
            )));
        }
        let mut y = self.h.mat_vec(x);
        for v in &mut y {
            *v += draw_cn(self.noise_var, rng);
        }
        Ok(y)
    }
}

/// Geometric mmWave channel parameters. The array is uniform linear with
/// half-wavelength spacing, so the phase step per element is
/// pi * sin(angle).
#[derive(Debug, Clone, Copy)]
pub struct MmWaveParams {
    n_ray: usize,
}

impl MmWaveParams {
    /// Antenna spacing over wavelength (fixed).
    pub const SPACING_RATIO: f64 = 0.5;

    pub fn new(n_ray: usize) -> Result<Self> {
        if n_ray < 1 {
            return Err(PmhError::InvalidConfig("need at least one path".into()));
        }
        Ok(Self { n_ray })
    }

    pub fn n_ray(&self) -> usize {
        self.n_ray
    }

    /// Wavenumber times spacing: 2*pi * d/lambda = pi.
    pub fn wavenumber_times_spacing(&self) -> f64 {
        2.0 * PI * Self::SPACING_RATIO
    }
}

/// One propagation path of the geometric channel.
#[derive(Debug, Clone, Copy)]
pub struct MmWavePath {
    pub gain: C64,
    pub aoa: f64,
    pub aod: f64,
}

/// i.i.d. Rayleigh channel: entries CN(0, 1).
pub fn rayleigh_channel(params: PmhParams, noise_var: f64, rng: &mut impl Rng) -> ChannelState {
    let h = CMat::from_fn(params.n_rx(), params.n_tx(), |_, _| draw_cn(1.0, rng));
    ChannelState::new(h, noise_var, ChannelKind::Rayleigh).expect("finite by construction")
}

/// Unit-norm steering vector of a uniform linear array.
pub fn steering_vector(n_elem: usize, angle: f64) -> Vec<C64> {
    assert!(n_elem >= 1);
    let scale = 1.0 / (n_elem as f64).sqrt();
    let step = PI * angle.sin();
    (0..n_elem)
        .map(|l| C64::from_polar(scale, step * l as f64))
        .collect()
}

/// Assembles the geometric channel from explicit paths:
/// H = sqrt(N*M / n_paths) * sum_l gain_l * a_r(aoa_l) a_t(aod_l)^H.
pub fn mmwave_channel_from_paths(params: PmhParams, paths: &[MmWavePath]) -> CMat {
    assert!(!paths.is_empty());
    let (m, n) = (params.n_rx(), params.n_tx());
    let scale = ((n * m) as f64 / paths.len() as f64).sqrt();
    let mut h = CMat::zeros(m, n);
    for p in paths {
        let ar = steering_vector(m, p.aoa);
        let at = steering_vector(n, p.aod);
        let a: Vec<C64> = ar.iter().map(|v| v * p.gain * scale).collect();
        h.add_scaled_outer(&a, &at, 1.0);
    }
    h
}

/// Geometric mmWave channel with random path gains CN(0,1) and angles
/// uniform on [0, 2*pi). Per path the draw order is gain, AoA, AoD.
pub fn mmwave_channel(
    params: PmhParams,
    mm: MmWaveParams,
    noise_var: f64,
    rng: &mut impl Rng,
) -> ChannelState {
    let paths: Vec<MmWavePath> = (0..mm.n_ray())
        .map(|_| MmWavePath {
            gain: draw_cn(1.0, rng),
            aoa: rng.random_range(0.0..2.0 * PI),
            aod: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    let h = mmwave_channel_from_paths(params, &paths);
    ChannelState::new(h, noise_var, ChannelKind::MmWave { n_ray: mm.n_ray() })
        .expect("finite by construction")
}

/// Maps Eb/N0 in dB to the per-receive-antenna complex noise variance.
///
/// Convention: transmit symbol energy N, unit-variance channel entries,
/// k*N bits per symbol, so sigma^2 = N / (k*N * 10^(dB/10)) = 1/(k * 10^(dB/10)).
pub fn noise_var_from_ebn0(params: PmhParams, ebn0_db: f64) -> f64 {
    1.0 / (params.bits_per_antenna() as f64 * 10f64.powf(ebn0_db / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sq;
    use crate::seeding::stream_rng;

    fn params(n: usize, m: usize) -> PmhParams {
        PmhParams::new(n, 1, m).unwrap()
    }

    #[test]
    fn rayleigh_has_requested_shape() {
        let mut rng = stream_rng(10, 0);
        let ch = rayleigh_channel(params(2, 3), 0.1, &mut rng);
        assert_eq!((ch.h().rows(), ch.h().cols()), (3, 2));
    }

    #[test]
    fn rayleigh_entries_are_unit_variance_and_independent() {
        let mut rng = stream_rng(11, 0);
        let mut sum_sq = 0.0;
        let mut cross = C64::ZERO;
        let trials = 100_000;
        for _ in 0..trials {
            let ch = rayleigh_channel(params(2, 2), 0.0, &mut rng);
            let a = ch.h().get(0, 0);
            let b = ch.h().get(1, 1);
            sum_sq += a.norm_sqr();
            cross += a * b.conj();
        }
        let var = sum_sq / trials as f64;
        assert!((0.99..=1.01).contains(&var), "variance {var}");
        let rho = cross.norm() / trials as f64;
        assert!(rho < 0.01, "correlation {rho}");
    }

    #[test]
    fn steering_vector_basics() {
        let a = steering_vector(3, 0.0);
        for v in &a {
            assert!((v - C64::new(1.0 / 3f64.sqrt(), 0.0)).norm() < 1e-15);
        }
        for &phi in &[0.3, 1.1, -2.0, 5.9] {
            let a = steering_vector(4, phi);
            assert!((norm_sq(&a) - 1.0).abs() < 1e-12);
            assert!((a[0] - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
        let a = steering_vector(2, PI / 2.0);
        let s = 1.0 / 2f64.sqrt();
        assert!((a[0] - C64::new(s, 0.0)).norm() < 1e-12);
        assert!((a[1] - C64::new(-s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn single_path_channel_has_rank_one() {
        let mut rng = stream_rng(12, 0);
        let ch = mmwave_channel(params(3, 3), MmWaveParams::new(1).unwrap(), 0.0, &mut rng);
        let h = ch.h();
        // All columns must be parallel: |<ci, cj>|^2 = |ci|^2 |cj|^2.
        for i in 0..3 {
            for j in i + 1..3 {
                let ci: Vec<C64> = (0..3).map(|r| h.get(r, i)).collect();
                let cj: Vec<C64> = (0..3).map(|r| h.get(r, j)).collect();
                let ip: C64 = ci.iter().zip(&cj).map(|(a, b)| a * b.conj()).sum();
                let rel = (ip.norm_sqr() - norm_sq(&ci) * norm_sq(&cj)).abs()
                    / (norm_sq(&ci) * norm_sq(&cj));
                assert!(rel < 1e-9, "columns {i},{j} not parallel, rel {rel}");
            }
        }
    }

    #[test]
    fn mmwave_frobenius_energy_matches_nm() {
        let mut rng = stream_rng(13, 0);
        let p = params(2, 3);
        let mm = MmWaveParams::new(4).unwrap();
        let trials = 10_000;
        let mean: f64 = (0..trials)
            .map(|_| mmwave_channel(p, mm, 0.0, &mut rng).h().fro_norm_sq())
            .sum::<f64>()
            / trials as f64;
        let expected = (p.n_tx() * p.n_rx()) as f64;
        assert!(
            (mean - expected).abs() / expected < 0.05,
            "mean Frobenius energy {mean}, expected {expected}"
        );
    }

    #[test]
    fn fixed_single_path_gives_all_ones_matrix() {
        let p = params(2, 2);
        let h = mmwave_channel_from_paths(
            p,
            &[MmWavePath {
                gain: C64::ONE,
                aoa: 0.0,
                aod: 0.0,
            }],
        );
        for r in 0..2 {
            for c in 0..2 {
                assert!((h.get(r, c) - C64::ONE).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn ebn0_mapping_follows_the_convention() {
        let p1 = PmhParams::new(2, 1, 2).unwrap();
        let p2 = PmhParams::new(2, 2, 2).unwrap();
        assert!((noise_var_from_ebn0(p1, 0.0) - 1.0).abs() < 1e-15);
        let at10 = noise_var_from_ebn0(p1, 10.0);
        assert!((at10 - 0.1).abs() < 1e-15);
        assert!((noise_var_from_ebn0(p2, 10.0) - at10 / 2.0).abs() < 1e-15);
        assert!(noise_var_from_ebn0(p1, 200.0) < 1e-19);
    }

    #[test]
    fn noiseless_transmit_is_exact() {
        let mut rng = stream_rng(14, 0);
        let ch = rayleigh_channel(params(2, 2), 0.0, &mut rng);
        let x = vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let y = ch.transmit(&x, &mut rng).unwrap();
        let hx = ch.h().mat_vec(&x);
        assert_eq!(y, hx);

        let ident = ChannelState::new(CMat::identity(2), 0.0, ChannelKind::Rayleigh).unwrap();
        assert_eq!(ident.transmit(&x, &mut rng).unwrap(), x);
    }

    #[test]
    fn transmit_rejects_wrong_dimension() {
        let mut rng = stream_rng(15, 0);
        let ch = rayleigh_channel(params(2, 2), 0.0, &mut rng);
        let x = vec![C64::ONE; 3];
        assert!(matches!(
            ch.transmit(&x, &mut rng),
            Err(PmhError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn noise_covariance_is_isotropic() {
        let mut rng = stream_rng(16, 0);
        let p = params(2, 2);
        let ch = rayleigh_channel(p, 0.25, &mut rng);
        let x = vec![C64::new(1.0, 1.0), C64::new(-1.0, 0.0)];
        let hx = ch.h().mat_vec(&x);
        let trials = 100_000;
        let mut diag = [0.0f64; 2];
        let mut cross = C64::ZERO;
        let mut lag1 = C64::ZERO;
        let mut prev = C64::ZERO;
        for _ in 0..trials {
            let y = ch.transmit(&x, &mut rng).unwrap();
            let n0 = y[0] - hx[0];
            let n1 = y[1] - hx[1];
            diag[0] += n0.norm_sqr();
            diag[1] += n1.norm_sqr();
            cross += n0 * n1.conj();
            lag1 += n0 * prev.conj();
            prev = n0;
        }
        for d in diag {
            let v = d / trials as f64;
            assert!((v - 0.25).abs() / 0.25 < 0.02, "diag variance {v}");
        }
        // normalized off-diagonal and lag-1 correlations
        assert!(cross.norm() / trials as f64 / 0.25 < 0.01);
        assert!(lag1.norm() / trials as f64 / 0.25 < 0.01);
    }
}
