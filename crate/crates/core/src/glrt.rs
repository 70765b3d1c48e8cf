//! Non-coherent GLRT detection over an enumerated codebook.
//!
//! A codeword is the stacked Toeplitz matrix `S = [T(x); T(y); T(z_3); ...]`.
//! The GLRT picks the codeword whose column space captures the most energy of
//! the received vector, `z^H S (S^H S)^-1 S^H z`. The codebook offers full
//! diversity when `(S, S~)` has full column rank `2L` for every pair of
//! distinct codewords; [`verify_full_rank`] checks that exhaustively.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{embed, toeplitz_t, FrameConfig, FrameSet};
use crate::constellation::{psk_alphabet, PskSymbol};
use crate::{Error, Result};

/// Default cap on codewords enumerated by [`glrt_decode`].
pub const DECODE_CAP: u128 = 1 << 20;
/// Default cap on codewords for the pairwise rank check.
pub const RANK_CHECK_CAP: u128 = 1 << 12;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-9;

const MAX_LISTED_PAIRS: usize = 64;

/// The stacked `PT x L` signal matrix of one codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    pub matrix: DMatrix<Complex64>,
    pub frames: FrameSet,
}

impl SignalMatrix {
    pub fn new(frames: FrameSet, l: usize) -> Self {
        let blocks: Vec<DMatrix<Complex64>> =
            frames.blocks().map(|b| toeplitz_t(&embed(b), l)).collect();
        let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
        let mut matrix = DMatrix::zeros(rows, l);
        let mut offset = 0;
        for b in &blocks {
            matrix.rows_mut(offset, b.nrows()).copy_from(b);
            offset += b.nrows();
        }
        Self { matrix, frames }
    }

    /// Noise-free received vector `S h`.
    pub fn apply(&self, h: &[Complex64]) -> Vec<Complex64> {
        let out = &self.matrix * nalgebra::DVector::from_column_slice(h);
        out.iter().copied().collect()
    }
}

/// Orthonormal basis of a column space.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Vec<Vec<Complex64>>,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

impl Subspace {
    /// Modified Gram-Schmidt with one reorthogonalization pass. Fails if a
    /// column keeps less than `RANK_TOL` of the largest column norm.
    pub fn from_columns(m: &DMatrix<Complex64>) -> Result<Self> {
        let cols: Vec<Vec<Complex64>> = m
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        let max_norm = cols.iter().map(|c| dot(c, c).re.sqrt()).fold(0.0, f64::max);
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(cols.len());
        for (rank, mut col) in cols.into_iter().enumerate() {
            for _ in 0..2 {
                for q in &basis {
                    let proj = dot(q, &col);
                    for (c, qi) in col.iter_mut().zip(q) {
                        *c -= proj * qi;
                    }
                }
            }
            let norm = dot(&col, &col).re.sqrt();
            if max_norm == 0.0 || norm <= RANK_TOL * max_norm {
                return Err(Error::RankDeficient {
                    rank,
                    cols: m.ncols(),
                });
            }
            col.iter_mut().for_each(|c| *c /= norm);
            basis.push(col);
        }
        Ok(Self { basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `|Q^H z|^2`, clamped to `[0, |z|^2]`.
    pub fn projected_energy(&self, z: &[Complex64]) -> f64 {
        let e: f64 = self.basis.iter().map(|q| dot(q, z).norm_sqr()).sum();
        e.min(dot(z, z).re).max(0.0)
    }
}

/// GLRT statistic: energy of the projection of `z` onto the columns of `S`.
pub fn glrt_metric(z: &[Complex64], s: &SignalMatrix) -> Result<f64> {
    if z.len() != s.matrix.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "received vector has {} samples, signal matrix has {} rows",
            z.len(),
            s.matrix.nrows()
        )));
    }
    Ok(Subspace::from_columns(&s.matrix)?.projected_energy(z))
}

/// Every frame set of a layout, enumerated lexicographically with `x_1` as
/// the most significant digit and the last symbol of the last block as the
/// least significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub k: usize,
    pub l: usize,
    pub t: usize,
    x_alphabet: Vec<PskSymbol>,
    y_alphabet: Vec<PskSymbol>,
    z_alphabet: Vec<PskSymbol>,
}

impl Codebook {
    pub fn new(cfg: &FrameConfig) -> Self {
        Self {
            k: cfg.k,
            l: cfg.l,
            t: cfg.t,
            x_alphabet: cfg.x_alphabet(),
            y_alphabet: cfg.y_alphabet(),
            z_alphabet: cfg.z_alphabet(),
        }
    }

    /// Codebook over arbitrary alphabets, including ones whose orders are
    /// not coprime (useful as a degenerate baseline).
    pub fn from_alphabets(
        k: usize,
        l: usize,
        t: usize,
        x_alphabet: Vec<PskSymbol>,
        y_alphabet: Vec<PskSymbol>,
        z_alphabet: Vec<PskSymbol>,
    ) -> Result<Self> {
        if k == 0 || l == 0 || t < 2 {
            return Err(Error::Config("need K >= 1, L >= 1, T >= 2".into()));
        }
        if x_alphabet.is_empty() || y_alphabet.is_empty() || (t > 2 && z_alphabet.is_empty()) {
            return Err(Error::Config("empty alphabet".into()));
        }
        Ok(Self {
            k,
            l,
            t,
            x_alphabet,
            y_alphabet,
            z_alphabet,
        })
    }

    /// Same-constellation baseline: `x`, `y` and `z` all from `order`-PSK.
    pub fn same_psk(k: usize, l: usize, t: usize, order: u32, z_order: u32) -> Result<Self> {
        Self::from_alphabets(
            k,
            l,
            t,
            psk_alphabet(order),
            psk_alphabet(order),
            psk_alphabet(z_order),
        )
    }

    pub fn size(&self) -> u128 {
        let pow = |n: usize, e: usize| (n as u128).saturating_pow(e as u32);
        pow(self.x_alphabet.len(), self.k)
            .saturating_mul(pow(self.y_alphabet.len(), self.k))
            .saturating_mul(pow(self.z_alphabet.len(), self.k * (self.t - 2)))
    }

    fn radix(&self, position: usize) -> &[PskSymbol] {
        match position / self.k {
            0 => &self.x_alphabet,
            1 => &self.y_alphabet,
            _ => &self.z_alphabet,
        }
    }

    pub fn frame_at(&self, index: u128) -> FrameSet {
        assert!(index < self.size(), "codeword index out of range");
        let positions = self.k * self.t;
        let mut digits = vec![PskSymbol::unity(1); positions];
        let mut rest = index;
        for pos in (0..positions).rev() {
            let alphabet = self.radix(pos);
            let n = alphabet.len() as u128;
            digits[pos] = alphabet[(rest % n) as usize];
            rest /= n;
        }
        let mut chunks = digits.chunks(self.k).map(<[PskSymbol]>::to_vec);
        let x = chunks.next().unwrap();
        let y = chunks.next().unwrap();
        FrameSet {
            x,
            y,
            z_blocks: chunks.collect(),
        }
    }

    /// Inverse of [`Codebook::frame_at`]; `None` if a symbol is not in its
    /// block's alphabet or the shape does not match.
    pub fn index_of(&self, frames: &FrameSet) -> Option<u128> {
        if frames.num_blocks() != self.t {
            return None;
        }
        let mut index: u128 = 0;
        let mut pos = 0;
        for block in frames.blocks() {
            if block.len() != self.k {
                return None;
            }
            for s in block {
                let alphabet = self.radix(pos);
                let digit = alphabet.iter().position(|a| a == s)?;
                index = index * alphabet.len() as u128 + digit as u128;
                pos += 1;
            }
        }
        Some(index)
    }

    pub fn signal_matrix(&self, index: u128) -> SignalMatrix {
        SignalMatrix::new(self.frame_at(index), self.l)
    }

    fn check_cap(&self, cap: u128) -> Result<usize> {
        let size = self.size();
        if size > cap {
            return Err(Error::ConfigTooLarge { size, cap });
        }
        Ok(size as usize)
    }
}

/// A codebook with every codeword's orthonormal basis precomputed, for
/// repeated decoding.
#[derive(Debug, Clone)]
pub struct PreparedCodebook {
    codebook: Codebook,
    subspaces: Vec<Subspace>,
}

impl PreparedCodebook {
    pub fn new(codebook: Codebook, cap: u128) -> Result<Self> {
        let size = codebook.check_cap(cap)?;
        let subspaces = (0..size)
            .into_par_iter()
            .map(|i| Subspace::from_columns(&codebook.signal_matrix(i as u128).matrix))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            codebook,
            subspaces,
        })
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn len(&self) -> usize {
        self.subspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subspaces.is_empty()
    }

    /// Sequential argmax; ties go to the lowest index.
    pub fn decode_index(&self, z: &[Complex64]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, s) in self.subspaces.iter().enumerate() {
            let e = s.projected_energy(z);
            if e > best.1 {
                best = (i, e);
            }
        }
        best
    }
}

fn better(a: (f64, u128), b: (f64, u128)) -> (f64, u128) {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Greater => a,
        std::cmp::Ordering::Less => b,
        std::cmp::Ordering::Equal => {
            if a.1 <= b.1 {
                a
            } else {
                b
            }
        }
    }
}

/// Exhaustive GLRT decision with the default enumeration cap.
pub fn glrt_decode(z: &[Complex64], codebook: &Codebook) -> Result<(FrameSet, f64)> {
    glrt_decode_with_cap(z, codebook, DECODE_CAP)
}

/// Exhaustive GLRT decision. Codeword ranges are scored in parallel and
/// reduced by (metric, lowest index), so the result does not depend on the
/// thread count.
pub fn glrt_decode_with_cap(
    z: &[Complex64],
    codebook: &Codebook,
    cap: u128,
) -> Result<(FrameSet, f64)> {
    let size = codebook.check_cap(cap)?;
    let rows = codebook.t * (codebook.k + codebook.l - 1);
    if z.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "received vector has {} samples, expected {rows}",
            z.len()
        )));
    }
    let (metric, index) = (0..size)
        .into_par_iter()
        .map(|i| {
            let s = codebook.signal_matrix(i as u128);
            glrt_metric(z, &s).map(|m| (m, i as u128))
        })
        .try_reduce(|| (f64::NEG_INFINITY, u128::MAX), |a, b| Ok(better(a, b)))?;
    Ok((codebook.frame_at(index), metric))
}

/// Outcome of the pairwise rank check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub pairs_checked: u64,
    /// Minimum numerical rank of `(S, S~)`; `2L` when there are no pairs.
    pub min_rank: usize,
    pub full_rank: usize,
    /// Number of pairs with rank below `2L`.
    pub offending_count: u64,
    /// The first few offending pairs by codeword index.
    pub offending_pairs: Vec<(u64, u64)>,
}

impl RankReport {
    pub fn is_full_rank(&self) -> bool {
        self.min_rank == self.full_rank
    }
}

/// Singular values below `RANK_TOL * sigma_max` count as zero.
pub fn numerical_rank(m: &DMatrix<Complex64>) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

pub fn verify_full_rank(codebook: &Codebook) -> Result<RankReport> {
    verify_full_rank_with_cap(codebook, RANK_CHECK_CAP)
}

/// Numerical rank of `(S, S~)` for every unordered pair of distinct
/// codewords.
pub fn verify_full_rank_with_cap(codebook: &Codebook, cap: u128) -> Result<RankReport> {
    let size = codebook.check_cap(cap)?;
    let l = codebook.l;
    let full_rank = 2 * l;
    let mats: Vec<DMatrix<Complex64>> = (0..size)
        .into_par_iter()
        .map(|i| codebook.signal_matrix(i as u128).matrix)
        .collect();

    // Per first index: (pairs checked, min rank, listed offenders, offender count).
    type RowSummary = (u64, usize, Vec<(u64, u64)>, u64);
    let per_row: Vec<RowSummary> = (0..size)
        .into_par_iter()
        .map(|i| {
            let mut min_rank = full_rank;
            let mut listed = Vec::new();
            let mut count = 0u64;
            let mut pair = DMatrix::zeros(mats[i].nrows(), full_rank);
            pair.columns_mut(0, l).copy_from(&mats[i]);
            for (j, other) in mats.iter().enumerate().skip(i + 1) {
                pair.columns_mut(l, l).copy_from(other);
                let rank = numerical_rank(&pair);
                if rank < full_rank {
                    count += 1;
                    if listed.len() < MAX_LISTED_PAIRS {
                        listed.push((i as u64, j as u64));
                    }
                }
                min_rank = min_rank.min(rank);
            }
            ((size - i - 1) as u64, min_rank, listed, count)
        })
        .collect();

    let mut report = RankReport {
        pairs_checked: 0,
        min_rank: full_rank,
        full_rank,
        offending_count: 0,
        offending_pairs: Vec::new(),
    };
    for (checked, min_rank, listed, count) in per_row {
        report.pairs_checked += checked;
        report.min_rank = report.min_rank.min(min_rank);
        report.offending_count += count;
        for p in listed {
            if report.offending_pairs.len() < MAX_LISTED_PAIRS {
                report.offending_pairs.push(p);
            }
        }
    }
    Ok(report)
}

/// Determinant check for the square block matrix
/// `[T(x)[1:K], T(x)[1:K]; T(z)[k:K+k-1], T(z~)[k:K+k-1]]` with `K = L`.
///
/// Subtracting the first block column from the second leaves a block
/// lower-triangular matrix with diagonal blocks `T(x)[1:K]` (diagonal `x_1`)
/// and `T(z~ - z)[k:K+k-1]` (diagonal `z~_k - z_k`), so the determinant is
/// `x_1^K (z~_k - z_k)^K`. Returns `|det - x_1^K (z~_k - z_k)^K|`.
///
/// `k` is 1-based; `z` and `z~` must agree before `k` and differ at `k`.
pub fn check_determinant_identity(
    x: &[PskSymbol],
    z: &[Complex64],
    z_tilde: &[Complex64],
    k: usize,
    l: usize,
) -> Result<f64> {
    let n = x.len();
    if n != l {
        return Err(Error::Unsupported(format!(
            "determinant identity needs K = L (got K = {n}, L = {l})"
        )));
    }
    if z.len() != n || z_tilde.len() != n {
        return Err(Error::DimensionMismatch(
            "z blocks must have length K".into(),
        ));
    }
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k = {k} outside 1..={n}")));
    }
    if z[..k - 1] != z_tilde[..k - 1] || z[k - 1] == z_tilde[k - 1] {
        return Err(Error::Domain(format!(
            "z and z~ must agree before index {k} and differ at it"
        )));
    }

    let tx = toeplitz_t(&embed(x), l);
    let tz = toeplitz_t(z, l);
    let tzt = toeplitz_t(z_tilde, l);
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&tx.rows(0, n));
    block.view_mut((0, n), (n, n)).copy_from(&tx.rows(0, n));
    block.view_mut((n, 0), (n, n)).copy_from(&tz.rows(k - 1, n));
    block
        .view_mut((n, n), (n, n))
        .copy_from(&tzt.rows(k - 1, n));

    let det = block.determinant();
    let closed = (x[0].embed() * (z_tilde[k - 1] - z[k - 1])).powu(n as u32);
    Ok((det - closed).norm())
}
