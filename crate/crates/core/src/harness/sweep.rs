use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blind_id::{identify, reconstruct_residual};
use crate::channel::{
    noise_variance_for_snr_db, sample_channel, transmit, ChannelImpulseResponse, FrameSet,
};
use crate::constellation::SolveMode;
use crate::glrt::{Codebook, PreparedCodebook, DECODE_CAP};
use crate::{Error, Result};

use super::ExperimentSpec;

/// Tap tolerance for counting a round trip as exact.
const ROUNDTRIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub trials: u64,
    pub frame_errors: u64,
    pub symbol_errors: u64,
    pub fer: f64,
    pub ser: f64,
}

/// Least-squares line through `(snr_db / 10, log10 fer)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub points_used: usize,
    pub r_squared: f64,
    pub min_errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripSummary {
    pub trials: u64,
    pub recovered: u64,
    pub recovery_rate: f64,
    /// Largest reconstruction residual over trials that identified at all.
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: ExperimentSpec,
    pub master_seed: u64,
    pub points: Vec<SnrPoint>,
    pub slope: Option<SlopeFit>,
    pub roundtrip: Option<RoundtripSummary>,
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the RNG stream for one trial:
/// `splitmix64(splitmix64(splitmix64(master) ^ snr_index) ^ trial)`.
pub fn trial_seed(master_seed: u64, snr_index: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ snr_index) ^ trial)
}

/// `ChaCha8Rng::seed_from_u64(trial_seed(..))`.
pub fn trial_rng(master_seed: u64, snr_index: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(master_seed, snr_index, trial))
}

/// Channel for a round-trip trial. Every fourth trial zeroes `h_0` and every
/// fourth (offset by one) zeroes the last tap, so leading-zero and
/// short-channel paths are always exercised when `L >= 2`.
fn roundtrip_channel<R: Rng>(l: usize, trial: u64, rng: &mut R) -> ChannelImpulseResponse {
    let mut taps = sample_channel(l, rng).taps().to_vec();
    if l >= 2 {
        match trial % 4 {
            2 => taps[0] = Complex64::new(0.0, 0.0),
            3 => taps[l - 1] = Complex64::new(0.0, 0.0),
            _ => {}
        }
    }
    ChannelImpulseResponse::new(taps).expect("finite taps")
}

fn true_structure(h: &ChannelImpulseResponse) -> (usize, usize) {
    let taps = h.taps();
    let r = taps.iter().take_while(|t| t.norm() == 0.0).count();
    let order = taps
        .iter()
        .rposition(|t| t.norm() != 0.0)
        .map_or(0, |i| i + 1);
    (r, order)
}

/// Noise-free transmit-then-identify over `trials_per_point` random
/// channels and symbol blocks. A trial counts as recovered when the
/// symbols, leading-zero count and channel order match exactly and every
/// tap is within `1e-9`.
pub fn run_identify_roundtrip(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cfg = spec.frame_config()?;
    let outcomes: Vec<(bool, Option<f64>)> = (0..spec.trials_per_point)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(spec.master_seed, 0, trial);
            let h = roundtrip_channel(cfg.l, trial, &mut rng);
            let frames = FrameSet::sample(&cfg, &mut rng);
            let rx = transmit(&frames, &h, 0.0, &mut rng);
            let (u, v) = (&rx.blocks[0], &rx.blocks[1]);
            match identify(u, v, &cfg, SolveMode::Exact) {
                Ok(res) => {
                    let residual = reconstruct_residual(&res, u, v);
                    let (r, order) = true_structure(&h);
                    let taps_ok = res
                        .taps
                        .taps()
                        .iter()
                        .zip(h.taps())
                        .all(|(a, b)| (a - b).norm() < ROUNDTRIP_TOL);
                    let ok = taps_ok
                        && res.x_hat == frames.x
                        && res.y_hat == frames.y
                        && res.leading_zeros == r
                        && res.effective_order == order
                        && residual < ROUNDTRIP_TOL;
                    (ok, Some(residual))
                }
                Err(_) => (false, None),
            }
        })
        .collect();

    let recovered = outcomes.iter().filter(|o| o.0).count() as u64;
    let max_residual = outcomes.iter().filter_map(|o| o.1).fold(0.0, f64::max);
    Ok(SweepResult {
        config: spec.clone(),
        master_seed: spec.master_seed,
        points: Vec::new(),
        slope: None,
        roundtrip: Some(RoundtripSummary {
            trials: spec.trials_per_point,
            recovered,
            recovery_rate: recovered as f64 / spec.trials_per_point as f64,
            max_residual,
        }),
    })
}

/// GLRT frame and symbol error rates over the SNR grid.
///
/// Each trial draws a Rayleigh channel, a uniform codeword and the noise from
/// its own stream [`trial_rng`]`(master_seed, snr_index, trial)`, so results
/// do not depend on the thread count.
pub fn run_ber_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cfg = spec.frame_config()?;
    let prepared = PreparedCodebook::new(Codebook::new(&cfg), DECODE_CAP)?;
    let size = prepared.len();
    let symbols_per_frame = (cfg.k * cfg.t) as u64;

    let points: Vec<SnrPoint> = spec
        .snr_grid_db
        .iter()
        .enumerate()
        .map(|(si, &snr_db)| {
            let sigma2 = noise_variance_for_snr_db(snr_db);
            let (frame_errors, symbol_errors) = (0..spec.trials_per_point)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = trial_rng(spec.master_seed, si as u64, trial);
                    let h = sample_channel(cfg.l, &mut rng);
                    let sent = rng.random_range(0..size);
                    let frames = prepared.codebook().frame_at(sent as u128);
                    let rx = transmit(&frames, &h, sigma2, &mut rng);
                    let (decoded, _) = prepared.decode_index(&rx.stacked());
                    if decoded == sent {
                        (0u64, 0u64)
                    } else {
                        let guess = prepared.codebook().frame_at(decoded as u128);
                        (1, frames.symbol_errors(&guess) as u64)
                    }
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            let trials = spec.trials_per_point;
            SnrPoint {
                snr_db,
                trials,
                frame_errors,
                symbol_errors,
                fer: frame_errors as f64 / trials as f64,
                ser: symbol_errors as f64 / (trials * symbols_per_frame) as f64,
            }
        })
        .collect();

    let mut result = SweepResult {
        config: spec.clone(),
        master_seed: spec.master_seed,
        points,
        slope: None,
        roundtrip: None,
    };
    result.slope = estimate_diversity_slope(&result, spec.min_errors).ok();
    Ok(result)
}

/// Slope of `log10(FER)` against `snr_db / 10`, using only points with at
/// least `min_errors` frame errors. A scheme with diversity order `d`
/// approaches slope `-d` at high SNR.
pub fn estimate_diversity_slope(result: &SweepResult, min_errors: u64) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = result
        .points
        .iter()
        .filter(|p| p.frame_errors >= min_errors.max(1) && p.fer > 0.0)
        .map(|p| (p.snr_db / 10.0, p.fer.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientStatistics {
            usable: pts.len(),
            required: 2,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(SlopeFit {
        slope,
        intercept,
        points_used: pts.len(),
        r_squared,
        min_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Mode;

    fn synthetic(order: f64) -> SweepResult {
        let points = [10.0, 20.0, 30.0]
            .iter()
            .map(|&snr_db: &f64| {
                let fer = 10f64.powf(-order * snr_db / 10.0);
                SnrPoint {
                    snr_db,
                    trials: 1 << 40,
                    frame_errors: ((1u64 << 40) as f64 * fer) as u64,
                    symbol_errors: 0,
                    fer,
                    ser: 0.0,
                }
            })
            .collect();
        SweepResult {
            config: ExperimentSpec::default(),
            master_seed: 0,
            points,
            slope: None,
            roundtrip: None,
        }
    }

    #[test]
    fn slope_of_synthetic_curves() {
        let fit = estimate_diversity_slope(&synthetic(1.0), 50).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let fit = estimate_diversity_slope(&synthetic(2.0), 50).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert_eq!(fit.points_used, 3);
    }

    #[test]
    fn slope_skips_unreliable_points() {
        let mut r = synthetic(2.0);
        r.points[2].frame_errors = 3;
        let fit = estimate_diversity_slope(&r, 50).unwrap();
        assert_eq!(fit.points_used, 2);
        r.points[1].frame_errors = 0;
        assert!(matches!(
            estimate_diversity_slope(&r, 50),
            Err(Error::InsufficientStatistics {
                usable: 1,
                required: 2
            })
        ));
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(trial_seed(1, 2, 3), trial_seed(1, 2, 3));
        let mut seen = std::collections::HashSet::new();
        for s in 0..4 {
            for t in 0..1000 {
                assert!(seen.insert(trial_seed(7, s, t)));
            }
        }
    }

    #[test]
    fn roundtrip_small() {
        let spec = ExperimentSpec {
            k: 4,
            l: 2,
            trials_per_point: 200,
            mode: Mode::IdentifyRoundtrip,
            ..Default::default()
        };
        let res = run_identify_roundtrip(&spec).unwrap();
        let rt = res.roundtrip.unwrap();
        assert_eq!(rt.recovered, 200);
        assert!(rt.max_residual < 1e-9);
    }

    #[test]
    fn pure_noise_is_uniform_guessing() {
        let spec = ExperimentSpec {
            snr_grid_db: vec![-80.0],
            trials_per_point: 20_000,
            ..Default::default()
        };
        let res = run_ber_sweep(&spec).unwrap();
        let fer = res.points[0].fer;
        let expected = 1.0 - 1.0 / 36.0;
        // Binomial std. error is about 1.2e-3.
        assert!((fer - expected).abs() < 0.01, "fer = {fer}");
    }
}
