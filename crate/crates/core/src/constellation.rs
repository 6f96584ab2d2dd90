//! Transmitter codebook generation for phase modulation on the hypersphere.
//!
//! A codebook is K = 2^(k*N) complex N-vectors spread uniformly over the
//! hypersphere of radius sqrt(N), produced by spherical K-means over a large
//! sample pool, then bit-labeled by a greedy Gray-style swap descent so that
//! near neighbors get near labels.

use crate::error::{PmhError, Result};
use crate::linalg::{dist_sq, norm_sq, re_inner, C64};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::fs;
use std::path::Path;

/// Codeword-norm tolerance, relative to N.
pub const NORM_TOL: f64 = 1e-9;

/// Sample-pool size multiplier for codebook generation.
const POOL_PER_CODEWORD: usize = 200;

/// K-means stops after this many iterations if assignments keep moving.
const KMEANS_MAX_ITERS: usize = 500;

/// System dimensions: N transmit antennas, k bits per antenna, M receive
/// antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PmhParams {
    n_tx: usize,
    bits_per_antenna: usize,
    n_rx: usize,
}

impl PmhParams {
    pub fn new(n_tx: usize, bits_per_antenna: usize, n_rx: usize) -> Result<Self> {
        if n_tx < 1 || bits_per_antenna < 1 {
            return Err(PmhError::InvalidConfig(
                "need at least one transmit antenna and one bit per antenna".into(),
            ));
        }
        if n_rx < n_tx {
            return Err(PmhError::InvalidConfig(format!(
                "receive antennas ({n_rx}) must be >= transmit antennas ({n_tx})"
            )));
        }
        if n_tx * bits_per_antenna > 24 {
            return Err(PmhError::InvalidConfig(format!(
                "codebook size 2^{} is beyond simulation scale",
                n_tx * bits_per_antenna
            )));
        }
        Ok(Self {
            n_tx,
            bits_per_antenna,
            n_rx,
        })
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn bits_per_antenna(&self) -> usize {
        self.bits_per_antenna
    }

    /// Bits carried by one PMH symbol (k*N).
    pub fn bits_per_symbol(&self) -> usize {
        self.n_tx * self.bits_per_antenna
    }

    /// K = 2^(k*N).
    pub fn codebook_size(&self) -> usize {
        1usize << self.bits_per_symbol()
    }
}

/// The transmitter codebook: K codewords on the radius-sqrt(N) hypersphere
/// plus their bit labels.
///
/// Codeword order is canonical: sorted by label value, so codeword `i`
/// carries label `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    params: PmhParams,
    codewords: Vec<Vec<C64>>,
    labels: Vec<u64>,
}

impl Codebook {
    /// Generates a codebook from scratch. Deterministic in `seed`.
    pub fn generate(params: PmhParams, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = params.codebook_size();
        let pool = sample_hypersphere(params.n_tx, POOL_PER_CODEWORD * k, &mut rng);
        let centroids = spherical_kmeans(&pool, k, KMEANS_MAX_ITERS, &mut rng);
        let labels = assign_gray_labels(&centroids, &mut rng);
        Self::from_parts(params, centroids, labels)
    }

    /// Builds a codebook from precomputed codewords and labels, sorting into
    /// canonical label order and validating invariants.
    pub fn from_parts(
        params: PmhParams,
        codewords: Vec<Vec<C64>>,
        labels: Vec<u64>,
    ) -> Result<Self> {
        if codewords.len() != labels.len() {
            return Err(PmhError::InvalidCodebook(
                "codeword/label count mismatch".into(),
            ));
        }
        let mut pairs: Vec<(u64, Vec<C64>)> = labels.into_iter().zip(codewords).collect();
        pairs.sort_by_key(|(label, _)| *label);
        let labels: Vec<u64> = pairs.iter().map(|(l, _)| *l).collect();
        let codewords: Vec<Vec<C64>> = pairs.into_iter().map(|(_, w)| w).collect();
        let cb = Self {
            params,
            codewords,
            labels,
        };
        cb.validate()?;
        Ok(cb)
    }

    pub fn params(&self) -> PmhParams {
        self.params
    }

    /// Replaces the receive-antenna count (not stored in codebook files).
    pub fn with_n_rx(mut self, n_rx: usize) -> Result<Self> {
        self.params = PmhParams::new(self.params.n_tx, self.params.bits_per_antenna, n_rx)?;
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.codewords.len()
    }

    pub fn codewords(&self) -> &[Vec<C64>] {
        &self.codewords
    }

    pub fn codeword(&self, i: usize) -> &[C64] {
        &self.codewords[i]
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u64 {
        self.labels[i]
    }

    /// Checks all structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.params.n_tx as f64;
        let k = self.params.codebook_size();
        if self.codewords.len() != k {
            return Err(PmhError::InvalidCodebook(format!(
                "expected {k} codewords, found {}",
                self.codewords.len()
            )));
        }
        for (i, w) in self.codewords.iter().enumerate() {
            if w.len() != self.params.n_tx {
                return Err(PmhError::InvalidCodebook(format!(
                    "codeword {i} has dimension {}",
                    w.len()
                )));
            }
            let err = (norm_sq(w) - n).abs() / n;
            if !err.is_finite() || err > NORM_TOL {
                return Err(PmhError::InvalidCodebook(format!(
                    "codeword {i} is off the sphere (relative error {err:.3e})"
                )));
            }
        }
        let mut sorted = self.labels.clone();
        sorted.sort_unstable();
        if sorted.iter().enumerate().any(|(i, &l)| l != i as u64) {
            return Err(PmhError::InvalidCodebook(
                "labels are not a permutation of all k*N-bit strings".into(),
            ));
        }
        for i in 0..self.codewords.len() {
            for j in i + 1..self.codewords.len() {
                if dist_sq(&self.codewords[i], &self.codewords[j]) <= 0.0 {
                    return Err(PmhError::InvalidCodebook(format!(
                        "codewords {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(())
    }

    /// CRC32 of the serialized codebook (metadata for run reports).
    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&self.to_bytes_without_crc())
    }

    fn to_bytes_without_crc(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(10 + self.size() * (self.params.n_tx * 16 + 8));
        buf.extend_from_slice(FILE_MAGIC);
        buf.extend_from_slice(&FILE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.params.n_tx as u16).to_le_bytes());
        buf.extend_from_slice(&(self.params.bits_per_antenna as u16).to_le_bytes());
        for w in &self.codewords {
            for z in w {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        for &l in &self.labels {
            buf.extend_from_slice(&l.to_le_bytes());
        }
        buf
    }

    /// Writes the codebook in the `PMHC` binary format (see README).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = self.to_bytes_without_crc();
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        fs::write(path, bytes)?;
        Ok(())
    }

    /// Reads a `PMHC` file. The receive-antenna count is not part of the
    /// format; it defaults to N and can be overridden with [`with_n_rx`].
    ///
    /// [`with_n_rx`]: Codebook::with_n_rx
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_file_bytes(&bytes)
    }

    fn from_file_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() >= 4 && &bytes[..4] != FILE_MAGIC {
            return Err(PmhError::FormatVersionMismatch("bad magic bytes".into()));
        }
        if bytes.len() < 14 {
            return Err(PmhError::ChecksumMismatch);
        }
        let (payload, crc_bytes) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        if crc32fast::hash(payload) != stored {
            return Err(PmhError::ChecksumMismatch);
        }
        let version = u16::from_le_bytes(payload[4..6].try_into().unwrap());
        if version != FILE_VERSION {
            return Err(PmhError::FormatVersionMismatch(format!(
                "unsupported version {version}"
            )));
        }
        let n_tx = u16::from_le_bytes(payload[6..8].try_into().unwrap()) as usize;
        let bits = u16::from_le_bytes(payload[8..10].try_into().unwrap()) as usize;
        let params = PmhParams::new(n_tx, bits, n_tx)?;
        let k = params.codebook_size();
        let expected = 10 + k * n_tx * 16 + k * 8;
        if payload.len() != expected {
            return Err(PmhError::InvalidCodebook(format!(
                "body length {} does not match K=2^{} codewords",
                payload.len() - 10,
                params.bits_per_symbol()
            )));
        }
        let mut off = 10;
        let read_f64 = |off: &mut usize| {
            let v = f64::from_le_bytes(payload[*off..*off + 8].try_into().unwrap());
            *off += 8;
            v
        };
        let mut codewords = Vec::with_capacity(k);
        for _ in 0..k {
            let mut w = Vec::with_capacity(n_tx);
            for _ in 0..n_tx {
                let re = read_f64(&mut off);
                let im = read_f64(&mut off);
                w.push(C64::new(re, im));
            }
            codewords.push(w);
        }
        let mut labels = Vec::with_capacity(k);
        for _ in 0..k {
            labels.push(u64::from_le_bytes(payload[off..off + 8].try_into().unwrap()));
            off += 8;
        }
        Self::from_parts(params, codewords, labels)
    }
}

const FILE_MAGIC: &[u8; 4] = b"PMHC";
const FILE_VERSION: u16 = 1;

/// Draws `count` points uniformly on the radius-sqrt(N) hypersphere in N
/// complex dimensions (isotropic Gaussian, normalized).
pub fn sample_hypersphere(n_tx: usize, count: usize, rng: &mut impl Rng) -> Vec<Vec<C64>> {
    assert!(n_tx >= 1 && count >= 1);
    let radius = (n_tx as f64).sqrt();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<C64> = (0..n_tx)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = norm_sq(&v).sqrt();
        if norm < 1e-12 {
            continue; // resample a degenerate draw
        }
        let scale = radius / norm;
        for z in &mut v {
            *z *= scale;
        }
        out.push(v);
    }
    out
}

/// Spherical K-means: clusters points on the sphere by maximum real inner
/// product and renormalizes centroids back to radius sqrt(N).
///
/// Init is farthest-point seeding from a random start. Stops when
/// assignments are stable or after `max_iters`.
pub fn spherical_kmeans(
    points: &[Vec<C64>],
    k: usize,
    max_iters: usize,
    rng: &mut impl Rng,
) -> Vec<Vec<C64>> {
    let (centroids, _trace) = spherical_kmeans_traced(points, k, max_iters, rng);
    centroids
}

/// As [`spherical_kmeans`], also returning the per-iteration objective
/// (sum of squared chordal distances to the assigned centroid).
pub fn spherical_kmeans_traced(
    points: &[Vec<C64>],
    k: usize,
    max_iters: usize,
    rng: &mut impl Rng,
) -> (Vec<Vec<C64>>, Vec<f64>) {
    assert!(k >= 1 && points.len() >= k, "need at least K points");
    let dim = points[0].len();
    let radius = (dim as f64).sqrt();

    // Farthest-point seeding.
    let first = rng.random_range(0..points.len());
    let mut centroids: Vec<Vec<C64>> = vec![points[first].clone()];
    let mut nearest_d2: Vec<f64> = points.iter().map(|p| dist_sq(p, &centroids[0])).collect();
    while centroids.len() < k {
        let next = (0..points.len())
            .max_by(|&a, &b| nearest_d2[a].total_cmp(&nearest_d2[b]))
            .unwrap();
        centroids.push(points[next].clone());
        let c = centroids.last().unwrap();
        for (d2, p) in nearest_d2.iter_mut().zip(points) {
            *d2 = d2.min(dist_sq(p, c));
        }
    }

    let mut assign = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..max_iters {
        // Assignment: max Re<p, c> equals min chordal distance on the sphere.
        let mut changed = false;
        let mut objective = 0.0;
        for (t, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_ip = f64::NEG_INFINITY;
            for (i, c) in centroids.iter().enumerate() {
                let ip = re_inner(p, c);
                if ip > best_ip {
                    best_ip = ip;
                    best = i;
                }
            }
            objective += dist_sq(p, &centroids[best]);
            if assign[t] != best {
                assign[t] = best;
                changed = true;
            }
        }
        trace.push(objective);
        if !changed {
            break;
        }

        // Update: renormalized cluster means.
        let mut sums = vec![vec![C64::ZERO; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, z) in sums[a].iter_mut().zip(p) {
                *s += z;
            }
        }
        for i in 0..k {
            let norm = norm_sq(&sums[i]).sqrt();
            if counts[i] == 0 || norm < 1e-12 {
                // Empty-cluster repair: reseed to the point farthest from
                // its nearest centroid.
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = centroids
                            .iter()
                            .map(|c| dist_sq(&points[a], c))
                            .fold(f64::INFINITY, f64::min);
                        let db = centroids
                            .iter()
                            .map(|c| dist_sq(&points[b], c))
                            .fold(f64::INFINITY, f64::min);
                        da.total_cmp(&db)
                    })
                    .unwrap();
                centroids[i] = points[far].clone();
            } else {
                let scale = radius / norm;
                centroids[i] = sums[i].iter().map(|z| z * scale).collect();
            }
        }
    }
    (centroids, trace)
}

/// Number of restarts for the label descent, scaled down for large K.
fn gray_restarts(k: usize) -> usize {
    match k {
        0..=16 => 32,
        17..=64 => 12,
        _ => 4,
    }
}

/// Assigns each codeword a distinct bit label (a permutation of all
/// log2(K)-bit strings) by greedy swap descent on the sum of Hamming
/// distances over each codeword's 2N nearest neighbors.
///
/// At return no single label swap can reduce the cost. Several seeded
/// restarts are taken and the best local optimum kept.
pub fn assign_gray_labels(codewords: &[Vec<C64>], rng: &mut impl Rng) -> Vec<u64> {
    let k = codewords.len();
    assert!(k.is_power_of_two() && k >= 2, "K must be a power of two");
    if k == 2 {
        return vec![0, 1];
    }
    let n = codewords[0].len();
    let d = (2 * n).min(k - 1);

    // Weighted adjacency from the directed D-nearest-neighbor graph.
    let mut weight = vec![0u8; k * k];
    for i in 0..k {
        let mut order: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            dist_sq(&codewords[i], &codewords[a])
                .total_cmp(&dist_sq(&codewords[i], &codewords[b]))
                .then(a.cmp(&b))
        });
        for &j in order.iter().take(d) {
            weight[i * k + j] += 1;
            weight[j * k + i] += 1;
        }
    }
    let adj: Vec<Vec<(usize, f64)>> = (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| weight[i * k + j] > 0)
                .map(|j| (j, weight[i * k + j] as f64))
                .collect()
        })
        .collect();

    let cost = |labels: &[u64]| -> f64 {
        let mut c = 0.0;
        for i in 0..k {
            for &(j, w) in &adj[i] {
                c += w * (labels[i] ^ labels[j]).count_ones() as f64;
            }
        }
        c / 2.0 // each undirected pair counted once per endpoint
    };
    // Cost change at node `a` if its label became `cand`, edges to `b` excluded.
    let node_delta = |labels: &[u64], a: usize, b: usize, cand: u64| -> f64 {
        adj[a]
            .iter()
            .filter(|&&(o, _)| o != b)
            .map(|&(o, w)| {
                w * ((cand ^ labels[o]).count_ones() as f64
                    - (labels[a] ^ labels[o]).count_ones() as f64)
            })
            .sum()
    };

    let mut best: Option<(f64, Vec<u64>)> = None;
    for _ in 0..gray_restarts(k) {
        let mut labels: Vec<u64> = (0..k as u64).collect();
        labels.shuffle(rng);
        loop {
            let mut best_swap: Option<(f64, usize, usize)> = None;
            for a in 0..k {
                for b in a + 1..k {
                    let delta =
                        node_delta(&labels, a, b, labels[b]) + node_delta(&labels, b, a, labels[a]);
                    if delta < -1e-9 && best_swap.map_or(true, |(d, _, _)| delta < d) {
                        best_swap = Some((delta, a, b));
                    }
                }
            }
            match best_swap {
                Some((_, a, b)) => labels.swap(a, b),
                None => break,
            }
        }
        let c = cost(&labels);
        if best.as_ref().map_or(true, |(bc, _)| c < *bc) {
            best = Some((c, labels));
        }
    }
    best.unwrap().1
}
