//! Exact residue arithmetic on PSK constellations.
//!
//! A symbol of an `n`-PSK alphabet is stored as its integer index `k`
//! (the point `exp(j 2 pi k / n)`), never as a floating-point angle. Complex
//! values only appear when a symbol is embedded for transmission or when a
//! received complex number has to be mapped back onto residues.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Integrality tolerance on `l*` before rounding.
pub const TOL_INT: f64 = 1e-6;
/// Bound on `|x - y - w|` accepted by an exact decomposition.
pub const TOL_REC: f64 = 1e-9;
/// `|w|` at or below this is treated as `w = 0`.
pub const ZERO_THRESHOLD: f64 = 1e-12;

/// How a complex input is mapped back onto constellation residues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// Reject inputs that are not (to fp rounding) an exact constellation image.
    Exact,
    /// Round to the nearest candidate and report the residual.
    Nearest,
}

/// A point of an `order`-PSK constellation, `exp(j 2 pi index / order)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PskSymbol {
    index: u32,
    order: u32,
}

impl PskSymbol {
    pub fn new(index: u32, order: u32) -> Result<Self> {
        if order == 0 {
            return Err(Error::Domain("PSK order must be at least 1".into()));
        }
        if index >= order {
            return Err(Error::Domain(format!(
                "symbol index {index} out of range for {order}-PSK"
            )));
        }
        Ok(Self { index, order })
    }

    /// Reduces an arbitrary integer index modulo `order`.
    pub fn from_residue(residue: i64, order: u32) -> Self {
        assert!(order >= 1, "PSK order must be at least 1");
        Self {
            index: residue.rem_euclid(order as i64) as u32,
            order,
        }
    }

    /// The point `1`.
    pub fn unity(order: u32) -> Self {
        Self::from_residue(0, order)
    }

    pub fn index(self) -> u32 {
        self.index
    }

    pub fn order(self) -> u32 {
        self.order
    }

    pub fn is_unity(self) -> bool {
        self.index == 0
    }

    pub fn embed(self) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * self.index as f64 / self.order as f64)
    }

    pub fn conj(self) -> Self {
        Self::from_residue(-(self.index as i64), self.order)
    }

    /// Nearest point of the `order`-PSK alphabet to `z` (by angle), and the
    /// distance `|embed - z|`.
    pub fn nearest(z: Complex64, order: u32) -> (Self, f64) {
        let angle = z.im.atan2(z.re);
        let k = (angle * order as f64 / (2.0 * PI)).round() as i64;
        let sym = Self::from_residue(k, order);
        (sym, (sym.embed() - z).norm())
    }

    /// Like [`PskSymbol::nearest`] but restricted to a subset of indices.
    pub fn nearest_in(z: Complex64, alphabet: &[PskSymbol]) -> Option<(Self, f64)> {
        alphabet
            .iter()
            .map(|&s| (s, (s.embed() - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Product of two symbols of the same alphabet. Panics if the orders differ.
impl Mul for PskSymbol {
    type Output = Self;

    fn mul(self, other: Self) -> Self {
        assert_eq!(
            self.order, other.order,
            "cannot multiply symbols of different PSK orders"
        );
        Self::from_residue(self.index as i64 + other.index as i64, self.order)
    }
}

impl fmt::Debug for PskSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.index, self.order)
    }
}

/// All points of the `order`-PSK alphabet in index order.
pub fn psk_alphabet(order: u32) -> Vec<PskSymbol> {
    (0..order).map(|k| PskSymbol { index: k, order }).collect()
}

/// `order`-PSK with the point `1` removed, so a `(2^m + 1)`-PSK carries
/// exactly `2^m` symbols.
pub fn puncture_constellation(order: u32) -> Result<Vec<PskSymbol>> {
    if order < 2 {
        return Err(Error::Domain(format!(
            "cannot puncture a {order}-PSK constellation"
        )));
    }
    Ok((1..order).map(|k| PskSymbol { index: k, order }).collect())
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Euler's totient via trial-division factorization.
pub fn euler_totient(n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::Domain("totient is undefined for 0".into()));
    }
    let mut rest = n;
    let mut phi = n;
    let mut d = 2u64;
    while d * d <= rest {
        if rest.is_multiple_of(d) {
            while rest.is_multiple_of(d) {
                rest /= d;
            }
            phi -= phi / d;
        }
        d += 1;
    }
    if rest > 1 {
        phi -= phi / rest;
    }
    Ok(phi)
}

/// `base^exponent mod modulus`, with a result in `[0, modulus)`.
pub fn mod_pow(base: i64, mut exponent: u64, modulus: u64) -> u64 {
    assert!(modulus >= 1, "modulus must be positive");
    if modulus == 1 {
        return 0;
    }
    let m = modulus as u128;
    let mut b = base.rem_euclid(modulus as i64) as u128;
    let mut acc: u128 = 1;
    while exponent > 0 {
        if exponent & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exponent >>= 1;
    }
    acc as u64
}

/// A validated pair of coprime PSK orders with the modular inverses
/// `q^(phi(p)-1) mod p` and `p^(phi(q)-1) mod q` precomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct CoprimePair {
    p: u32,
    q: u32,
    phi_p: u32,
    phi_q: u32,
    inv_q_mod_p: u32,
    inv_p_mod_q: u32,
}

#[derive(Serialize, Deserialize)]
struct RawPair {
    p: u32,
    q: u32,
}

impl TryFrom<RawPair> for CoprimePair {
    type Error = Error;

    fn try_from(raw: RawPair) -> Result<Self> {
        CoprimePair::new(raw.p, raw.q)
    }
}

impl From<CoprimePair> for RawPair {
    fn from(pair: CoprimePair) -> Self {
        RawPair {
            p: pair.p,
            q: pair.q,
        }
    }
}

impl CoprimePair {
    pub fn new(p: u32, q: u32) -> Result<Self> {
        if p < 2 || q < 2 {
            return Err(Error::Domain(format!(
                "PSK orders must be at least 2 (got p = {p}, q = {q})"
            )));
        }
        if gcd(p as u64, q as u64) != 1 {
            return Err(Error::NotCoprime { p, q });
        }
        let phi_p = euler_totient(p as u64)?;
        let phi_q = euler_totient(q as u64)?;
        Ok(Self {
            p,
            q,
            phi_p: phi_p as u32,
            phi_q: phi_q as u32,
            inv_q_mod_p: mod_pow(q as i64, phi_p - 1, p as u64) as u32,
            inv_p_mod_q: mod_pow(p as i64, phi_q - 1, q as u64) as u32,
        })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn pq(&self) -> u64 {
        self.p as u64 * self.q as u64
    }

    pub fn phi_p(&self) -> u32 {
        self.phi_p
    }

    pub fn phi_q(&self) -> u32 {
        self.phi_q
    }

    pub fn inv_q_mod_p(&self) -> u32 {
        self.inv_q_mod_p
    }

    pub fn inv_p_mod_q(&self) -> u32 {
        self.inv_p_mod_q
    }

    /// CRT split of a residue `l mod pq`: the `p`-PSK symbol with index
    /// `l q^-1 mod p` and the `q`-PSK symbol with index `l p^-1 mod q`.
    fn split(&self, ell: i64) -> (PskSymbol, PskSymbol) {
        let a = (ell.rem_euclid(self.p as i64)) * self.inv_q_mod_p as i64;
        let b = (ell.rem_euclid(self.q as i64)) * self.inv_p_mod_q as i64;
        (
            PskSymbol::from_residue(a, self.p),
            PskSymbol::from_residue(b, self.q),
        )
    }
}

/// Factor the `pq`-PSK point `exp(j 2 pi k / pq)` as `x * y` with `x` in
/// `p`-PSK and `y` in `q`-PSK. The factorization is unique.
pub fn factor_product(k: u64, pair: &CoprimePair) -> Result<(PskSymbol, PskSymbol)> {
    if k >= pair.pq() {
        return Err(Error::Domain(format!(
            "k = {k} out of range [0, {})",
            pair.pq()
        )));
    }
    Ok(pair.split(k as i64))
}

/// Result of splitting `w` as `x - y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceDecomposition {
    pub x: PskSymbol,
    pub y: PskSymbol,
    /// Residue `l mod pq` carried by the argument of `w`.
    pub ell: u64,
    /// `|embed(x) - embed(y) - w|`.
    pub residual: f64,
}

/// Split `w` as `x - y` with `x` in `p`-PSK and `y` in `q`-PSK.
///
/// For `w != 0` the phase fixes `l = pq (theta / pi - 1/2) mod pq`, and `l`
/// determines `(x, y)` by the same CRT split as [`factor_product`]. In
/// [`SolveMode::Exact`] a non-integral `l` or a reconstruction mismatch means
/// `w` is not a difference of two constellation points.
pub fn decompose_difference(
    w: Complex64,
    pair: &CoprimePair,
    mode: SolveMode,
) -> Result<DifferenceDecomposition> {
    if !w.re.is_finite() || !w.im.is_finite() {
        return Err(Error::Domain("w must be finite".into()));
    }
    let magnitude = w.norm();
    if magnitude <= ZERO_THRESHOLD {
        return Ok(DifferenceDecomposition {
            x: PskSymbol::unity(pair.p),
            y: PskSymbol::unity(pair.q),
            ell: 0,
            residual: magnitude,
        });
    }
    if mode == SolveMode::Exact && magnitude > 2.0 + TOL_REC {
        return Err(Error::NoSolution(format!("|w| = {magnitude} exceeds 2")));
    }

    let pq = pair.pq() as f64;
    let theta = w.im.atan2(w.re);
    let mut ell_star = pq * (theta / PI - 0.5);
    while ell_star < 0.0 {
        ell_star += 2.0 * pq;
    }
    let rounded = ell_star.round();
    if mode == SolveMode::Exact && (ell_star - rounded).abs() > TOL_INT {
        return Err(Error::NoSolution(format!(
            "l* = {ell_star} is not an integer"
        )));
    }
    let ell = (rounded as i64).rem_euclid(pair.pq() as i64);
    let (x, y) = pair.split(ell);
    let residual = (x.embed() - y.embed() - w).norm();
    if mode == SolveMode::Exact && residual > TOL_REC {
        return Err(Error::NoSolution(format!(
            "reconstruction residual {residual:e} for l = {ell}"
        )));
    }
    Ok(DifferenceDecomposition {
        x,
        y,
        ell: ell as u64,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_totient(n: u64) -> u64 {
        (1..=n).filter(|&k| gcd(k, n) == 1).count() as u64
    }

    #[test]
    fn totient_examples() {
        assert_eq!(euler_totient(1).unwrap(), 1);
        assert_eq!(euler_totient(7).unwrap(), 6);
        assert_eq!(brute_totient(12), 4);
        assert_eq!(euler_totient(12).unwrap(), 4);
        assert!(matches!(euler_totient(0), Err(Error::Domain(_))));
    }

    #[test]
    fn totient_matches_gcd_count() {
        for n in 1..=500 {
            assert_eq!(euler_totient(n).unwrap(), brute_totient(n), "n = {n}");
        }
    }

    #[test]
    fn mod_pow_examples() {
        assert_eq!(mod_pow(3, 1, 2), 1);
        assert_eq!(mod_pow(2, 2, 3), 1);
        assert_eq!(mod_pow(5, 0, 7), 1);
        assert_eq!(mod_pow(-1, 3, 5), 4);
        assert_eq!(mod_pow(7, 100, 1), 0);
    }

    #[test]
    fn mod_pow_large_operands() {
        let m = (1u64 << 31) - 1;
        // Fermat: a^(m-1) = 1 mod m for prime m.
        assert_eq!(mod_pow((1 << 31) - 2, m - 1, m), 1);
        assert_eq!(mod_pow(1 << 30, 2, m), ((1u128 << 60) % m as u128) as u64);
    }

    #[test]
    fn pair_rejects_non_coprime() {
        assert!(matches!(
            CoprimePair::new(2, 4),
            Err(Error::NotCoprime { p: 2, q: 4 })
        ));
        assert!(CoprimePair::new(1, 3).is_err());
        let pair = CoprimePair::new(8, 9).unwrap();
        assert_eq!((pair.phi_p(), pair.phi_q()), (4, 6));
        assert_eq!(9 * pair.inv_q_mod_p() % 8, 1);
        assert_eq!(8 * pair.inv_p_mod_q() % 9, 1);
    }

    #[test]
    fn factor_product_examples() {
        let p23 = CoprimePair::new(2, 3).unwrap();
        let (x, y) = factor_product(0, &p23).unwrap();
        assert_eq!((x.index(), y.index()), (0, 0));

        let (x, y) = factor_product(5, &p23).unwrap();
        assert_eq!((x.index(), y.index()), (1, 1));
        let target = Complex64::from_polar(1.0, 2.0 * PI * 5.0 / 6.0);
        assert!((x.embed() * y.embed() - target).norm() < 1e-12);

        let p34 = CoprimePair::new(3, 4).unwrap();
        let (x, y) = factor_product(7, &p34).unwrap();
        assert_eq!((x.index(), y.index()), (1, 1));
        let target = Complex64::from_polar(1.0, 2.0 * PI * 7.0 / 12.0);
        assert!((x.embed() * y.embed() - target).norm() < 1e-12);

        assert!(factor_product(6, &p23).is_err());
    }

    #[test]
    fn decompose_examples() {
        let p23 = CoprimePair::new(2, 3).unwrap();
        let d = decompose_difference(Complex64::new(0.0, 0.0), &p23, SolveMode::Exact).unwrap();
        assert!(d.x.is_unity() && d.y.is_unity());
        assert_eq!(d.ell, 0);

        let w = Complex64::from_polar(1.0, 4.0 * PI / 3.0);
        let d = decompose_difference(w, &p23, SolveMode::Exact).unwrap();
        assert_eq!(d.ell, 5);
        assert_eq!((d.x.index(), d.y.index()), (1, 1));
        let forward = Complex64::new(-1.0, 0.0) - Complex64::from_polar(1.0, 2.0 * PI / 3.0);
        assert!((forward - w).norm() < 1e-12);

        assert!(matches!(
            decompose_difference(Complex64::new(3.0, 0.0), &p23, SolveMode::Exact),
            Err(Error::NoSolution(_))
        ));
    }

    #[test]
    fn decompose_exact_rejects_noisy_input_nearest_accepts() {
        let pair = CoprimePair::new(4, 9).unwrap();
        let x = PskSymbol::new(3, 4).unwrap();
        let y = PskSymbol::new(2, 9).unwrap();
        let w = x.embed() - y.embed() + Complex64::new(0.01, -0.02);
        assert!(decompose_difference(w, &pair, SolveMode::Exact).is_err());
        let d = decompose_difference(w, &pair, SolveMode::Nearest).unwrap();
        assert_eq!((d.x, d.y), (x, y));
        assert!(d.residual > 0.0 && d.residual < 0.05);
    }

    #[test]
    fn decompose_rejects_non_finite() {
        let pair = CoprimePair::new(2, 3).unwrap();
        let w = Complex64::new(f64::NAN, 0.0);
        assert!(decompose_difference(w, &pair, SolveMode::Nearest).is_err());
    }

    #[test]
    fn puncture_examples() {
        let idx = |v: Vec<PskSymbol>| v.into_iter().map(|s| s.index()).collect::<Vec<_>>();
        assert_eq!(idx(puncture_constellation(3).unwrap()), vec![1, 2]);
        assert_eq!(idx(puncture_constellation(2).unwrap()), vec![1]);
        assert_eq!(idx(puncture_constellation(5).unwrap()), vec![1, 2, 3, 4]);
        assert!(puncture_constellation(1).is_err());
        // (2^m + 1)-PSK punctures to 2^m symbols.
        assert_eq!(puncture_constellation(9).unwrap().len(), 8);
    }

    #[test]
    fn symbol_arithmetic() {
        let a = PskSymbol::new(3, 8).unwrap();
        let b = PskSymbol::new(6, 8).unwrap();
        assert_eq!((a * b).index(), 1);
        assert_eq!(a.conj().index(), 5);
        assert!((a * a.conj()).is_unity());
        assert!(((a.embed().norm()) - 1.0).abs() < 1e-12);
        assert!(PskSymbol::new(8, 8).is_err());
        let (n, d) = PskSymbol::nearest(Complex64::from_polar(0.9, 2.0 * PI * 3.1 / 8.0), 8);
        assert_eq!(n, a);
        assert!(d < 0.2);
    }

    #[test]
    fn pair_serde_validates() {
        let pair: CoprimePair = serde_json::from_str(r#"{"p":4,"q":9}"#).unwrap();
        assert_eq!(pair, CoprimePair::new(4, 9).unwrap());
        assert!(serde_json::from_str::<CoprimePair>(r#"{"p":2,"q":4}"#).is_err());
    }
}
