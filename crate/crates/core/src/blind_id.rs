//! Closed-form blind identification from the first two received blocks.
//!
//! With `u = T(x) h` and `v = T(y) h`, where `x` is drawn from `p`-PSK and
//! `y` from `q`-PSK with `gcd(p, q) = 1`, the receiver recovers
//! the leading-zero count `r`, every tap, and both symbol blocks:
//!
//! 1. `u_k v_k = 0` for `k <= r` forces `h_0 = ... = h_{r-1} = 0`.
//! 2. `u_{r+1} / v_{r+1} = x_1 conj(y_1)` is a `pq`-PSK point; its CRT split
//!    gives `x_1`, `y_1` and then `h_r = conj(x_1) u_{r+1}`.
//! 3. For each later tap, eliminating it from the `u` and `v` equations
//!    leaves `w_m = conj(x_1) x_m - conj(y_1) y_m`, a difference of a
//!    `p`-PSK and a `q`-PSK point that splits uniquely.
//! 4. Once all taps are known, the remaining symbols follow by
//!    back-substitution.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{convolve, embed, ChannelImpulseResponse, FrameConfig};
use crate::constellation::{
    decompose_difference, factor_product, CoprimePair, PskSymbol, SolveMode, TOL_INT, TOL_REC,
};
use crate::{Error, Result};

/// Relative zero threshold, scaled by `max(|u|_inf, |v|_inf)`.
pub const EPS_ZERO: f64 = 1e-9;

/// Allowed deviation of `|u_{r+1} / v_{r+1}|` from 1 in exact mode.
const TOL_UNIT: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Which algebraic form of the tap recursion to run.
///
/// [`Formulation::Printed`] reproduces two transcription slips in the
/// published recursion (the `v` branch reuses the `x` symbols and the tap
/// update drops `-h_r x_m`). It exists so regression tests can show that it
/// does not recover the channel; use [`Formulation::Corrected`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Corrected,
    Printed,
}

/// Diagnostics for one tap of the recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Step index `m`; step `m` determines tap `h_{r+m-1}`.
    pub m: usize,
    /// The decomposed quantity: `w_1 = u_{r+1}/v_{r+1}` for `m = 1`, the
    /// difference `w_m` afterwards. Zero for steps past the payload end.
    pub w: Complex64,
    pub theta: f64,
    pub ell: Option<u64>,
    /// `conj(x_1) x_m`, an element of the `p`-PSK alphabet.
    pub x_ratio: Option<PskSymbol>,
    /// `conj(y_1) y_m`, an element of the `q`-PSK alphabet.
    pub y_ratio: Option<PskSymbol>,
    /// `|h_{r+m-1}|`.
    pub innovation: f64,
    /// Disagreement between the taps implied by the `u` and `v` equations.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub leading_zeros: usize,
    pub taps: ChannelImpulseResponse,
    pub x_hat: Vec<PskSymbol>,
    pub y_hat: Vec<PskSymbol>,
    /// Index of the last nonzero tap plus one.
    pub effective_order: usize,
    pub trace: Vec<StepRecord>,
}

fn inf_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Number of leading indices with `|u_k| |v_k|` below `(eps_zero * scale)^2`,
/// where `scale = max(|u|_inf, |v|_inf)`.
pub fn detect_leading_zeros(u: &[Complex64], v: &[Complex64], eps_zero: f64) -> Result<usize> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "blocks of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (inf_norm(u), inf_norm(v));
    let scale = nu.max(nv);
    let tol = eps_zero * scale;
    if scale == 0.0 || nu <= tol || nv <= tol {
        return Err(Error::AllZeroReceived);
    }
    Ok(u.iter()
        .zip(v)
        .take_while(|(a, b)| a.norm() * b.norm() <= tol * tol)
        .count())
}

/// Recovers taps and the first two symbol blocks from `u = T(x) h` and
/// `v = T(y) h`. Only these two blocks are used.
pub fn identify(
    u: &[Complex64],
    v: &[Complex64],
    cfg: &FrameConfig,
    mode: SolveMode,
) -> Result<IdentificationResult> {
    identify_with(u, v, cfg, mode, Formulation::Corrected)
}

pub fn identify_with(
    u: &[Complex64],
    v: &[Complex64],
    cfg: &FrameConfig,
    mode: SolveMode,
    formulation: Formulation,
) -> Result<IdentificationResult> {
    let (k, l) = (cfg.k, cfg.l);
    let pair: &CoprimePair = &cfg.pair;
    let p_len = cfg.block_len();
    if u.len() != p_len || v.len() != p_len {
        return Err(Error::DimensionMismatch(format!(
            "expected blocks of length {p_len}, got {} and {}",
            u.len(),
            v.len()
        )));
    }

    // Step 1: leading zero taps.
    let r = detect_leading_zeros(u, v, EPS_ZERO)?;
    let scale = inf_norm(u).max(inf_norm(v));
    let zero_tol = EPS_ZERO * scale;
    if r >= l {
        return Err(Error::DecompositionFailed {
            step: 1,
            reason: format!("first {r} products vanish but the channel has at most {l} taps"),
        });
    }

    // Step 2: x_1, y_1 and h_r from the pq-PSK ratio.
    if v[r].norm() <= zero_tol {
        return Err(Error::DecompositionFailed {
            step: 1,
            reason: "v_{r+1} vanishes while u_{r+1} does not".into(),
        });
    }
    let w1 = u[r] / v[r];
    if mode == SolveMode::Exact && (w1.norm() - 1.0).abs() > TOL_UNIT {
        return Err(Error::DecompositionFailed {
            step: 1,
            reason: format!("|u_(r+1) / v_(r+1)| = {} is not 1", w1.norm()),
        });
    }
    let pq = pair.pq();
    let theta1 = w1.im.atan2(w1.re).rem_euclid(2.0 * PI);
    let ell1_star = pq as f64 * theta1 / (2.0 * PI);
    if mode == SolveMode::Exact && (ell1_star - ell1_star.round()).abs() > TOL_INT {
        return Err(Error::DecompositionFailed {
            step: 1,
            reason: format!("l_1 = {ell1_star} is not an integer"),
        });
    }
    let ell1 = (ell1_star.round() as u64) % pq;
    let (x1, y1_conj) = factor_product(ell1, pair)?;
    let y1 = y1_conj.conj();
    let h_r = x1.embed().conj() * u[r];
    if h_r.norm() <= zero_tol {
        return Err(Error::NearZeroPivot {
            magnitude: h_r.norm(),
            threshold: zero_tol,
        });
    }

    let mut taps = vec![ZERO; l];
    taps[r] = h_r;
    let mut xs = vec![x1];
    let mut ys = vec![y1];
    let mut trace = vec![StepRecord {
        m: 1,
        w: w1,
        theta: theta1,
        ell: Some(ell1),
        x_ratio: Some(PskSymbol::unity(pair.p())),
        y_ratio: Some(PskSymbol::unity(pair.q())),
        innovation: h_r.norm(),
        residual: (y1.embed().conj() * v[r] - h_r).norm(),
    }];

    // 1-based symbol lookup; zero past the payload end.
    let sym = |block: &[PskSymbol], idx: usize| -> Complex64 {
        if idx <= block.len() {
            block[idx - 1].embed()
        } else {
            ZERO
        }
    };
    let x1c = x1.embed().conj();
    let y1c = y1.embed().conj();

    // Step 3: remaining taps, m = 2 ..= L - r.
    for m in 2..=(l - r) {
        let mut u_rest = u[r + m - 1];
        let mut v_rest = v[r + m - 1];
        for i in 1..=m.saturating_sub(2) {
            u_rest -= taps[r + i] * sym(&xs, m - i);
            v_rest -= taps[r + i]
                * match formulation {
                    Formulation::Corrected => sym(&ys, m - i),
                    Formulation::Printed => sym(&xs, m - i),
                };
        }

        let record = if m <= k {
            let w = (x1c * u_rest - y1c * v_rest) / h_r;
            let (a, b, ell) = if w.norm() <= EPS_ZERO {
                (PskSymbol::unity(pair.p()), PskSymbol::unity(pair.q()), None)
            } else {
                let d = decompose_difference(w, pair, mode).map_err(|e| {
                    Error::DecompositionFailed {
                        step: m,
                        reason: e.to_string(),
                    }
                })?;
                (d.x, d.y, Some(d.ell))
            };
            let xm = x1 * a;
            let ym = y1 * b;
            xs.push(xm);
            ys.push(ym);
            let tap = match formulation {
                Formulation::Corrected => x1c * (u_rest - h_r * xm.embed()),
                Formulation::Printed => x1c * u_rest,
            };
            let tap_from_v = y1c * (v_rest - h_r * ym.embed());
            taps[r + m - 1] = tap;
            StepRecord {
                m,
                w,
                theta: w.im.atan2(w.re),
                ell,
                x_ratio: Some(a),
                y_ratio: Some(b),
                innovation: tap.norm(),
                residual: (tap - tap_from_v).norm(),
            }
        } else {
            // Past the payload end x_m = y_m = 0, so the tap is read off directly.
            let tap = x1c * u_rest;
            taps[r + m - 1] = tap;
            StepRecord {
                m,
                w: ZERO,
                theta: 0.0,
                ell: None,
                x_ratio: None,
                y_ratio: None,
                innovation: tap.norm(),
                residual: (tap - y1c * v_rest).norm(),
            }
        };
        trace.push(record);
    }

    // Step 4: remaining symbols by back-substitution, m = L - r + 1 ..= K.
    let sym_tol = TOL_REC * (scale / h_r.norm()).max(1.0);
    let y_alphabet = cfg.y_alphabet();
    for m in (l - r + 1)..=k {
        let x_est = back_substitute(u, &taps, r, &xs, m);
        let y_est = back_substitute(v, &taps, r, &ys, m);
        let (xm, dx) = PskSymbol::nearest(x_est, pair.p());
        let (ym, dy) = match mode {
            SolveMode::Nearest if cfg.punctured_y => {
                PskSymbol::nearest_in(y_est, &y_alphabet).expect("nonempty alphabet")
            }
            _ => PskSymbol::nearest(y_est, pair.q()),
        };
        if mode == SolveMode::Exact && dx.max(dy) > sym_tol {
            return Err(Error::DecompositionFailed {
                step: m,
                reason: format!(
                    "back-substituted symbols miss the constellation by {:e}",
                    dx.max(dy)
                ),
            });
        }
        xs.push(xm);
        ys.push(ym);
    }

    // Channel order: last step with a nonzero tap.
    let m0 = trace
        .iter()
        .rev()
        .find(|rec| rec.innovation > zero_tol)
        .map(|rec| rec.m)
        .unwrap_or(1);
    let effective_order = r + m0;
    for tap in taps.iter_mut().skip(effective_order) {
        *tap = ZERO;
    }

    Ok(IdentificationResult {
        leading_zeros: r,
        taps: ChannelImpulseResponse::new(taps)?,
        x_hat: xs,
        y_hat: ys,
        effective_order,
        trace,
    })
}

/// `(out_{m+r} - sum_{j=r+1}^{L-1} h_j s_{m+r-j}) / h_r`, the estimate of
/// symbol `s_m` once all taps are known.
fn back_substitute(
    out: &[Complex64],
    taps: &[Complex64],
    r: usize,
    known: &[PskSymbol],
    m: usize,
) -> Complex64 {
    let mut acc = out[m + r - 1];
    for (j, &h) in taps.iter().enumerate().skip(r + 1) {
        if m + r > j {
            let idx = m + r - j;
            if idx <= known.len() {
                acc -= h * known[idx - 1].embed();
            }
        }
    }
    acc / taps[r]
}

/// `max(|T(x_hat) h_hat - u|_inf, |T(y_hat) h_hat - v|_inf)`.
pub fn reconstruct_residual(
    result: &IdentificationResult,
    u: &[Complex64],
    v: &[Complex64],
) -> f64 {
    let err = |syms: &[PskSymbol], target: &[Complex64]| -> f64 {
        let out = convolve(&embed(syms), result.taps.taps());
        if out.len() != target.len() {
            return f64::INFINITY;
        }
        out.iter()
            .zip(target)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    };
    err(&result.x_hat, u).max(err(&result.y_hat, v))
}
