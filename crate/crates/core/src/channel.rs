//! Zero-padded block transmission over a frequency-selective channel.
//!
//! Each length-`K` payload block is followed by `L - 1` zeros, so one block
//! produces `P = K + L - 1` received samples and consecutive blocks never
//! overlap. The received block is the full linear convolution of payload and
//! taps, written either as `H s` or as `T(s) h`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constellation::{psk_alphabet, puncture_constellation, CoprimePair, PskSymbol};
use crate::{Error, Result};

/// Channel taps `h_0 .. h_{L-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelImpulseResponse {
    taps: Vec<Complex64>,
}

impl ChannelImpulseResponse {
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Domain("channel must have at least one tap".into()));
        }
        if taps.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
            return Err(Error::Domain("channel taps must be finite".into()));
        }
        Ok(Self { taps })
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Block layout and alphabets of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Payload symbols per block.
    pub k: usize,
    /// Upper bound on the channel length.
    pub l: usize,
    /// Blocks per coherence interval.
    pub t: usize,
    pub pair: CoprimePair,
    /// Order of the PSK alphabet used by blocks 3..T.
    pub z_order: u32,
    /// Draw the second block from `q`-PSK without the point `1`.
    pub punctured_y: bool,
}

impl FrameConfig {
    pub fn new(
        k: usize,
        l: usize,
        t: usize,
        pair: CoprimePair,
        z_order: u32,
        punctured_y: bool,
    ) -> Result<Self> {
        let cfg = Self {
            k,
            l,
            t,
            pair,
            z_order,
            punctured_y,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 {
            return Err(Error::Config("K and L must be at least 1".into()));
        }
        if self.t < 2 {
            return Err(Error::Config("T must be at least 2".into()));
        }
        if self.z_order == 0 {
            return Err(Error::Config("z_order must be at least 1".into()));
        }
        Ok(())
    }

    /// Received samples per block, `K + L - 1`.
    pub fn block_len(&self) -> usize {
        self.k + self.l - 1
    }

    pub fn x_alphabet(&self) -> Vec<PskSymbol> {
        psk_alphabet(self.pair.p())
    }

    pub fn y_alphabet(&self) -> Vec<PskSymbol> {
        if self.punctured_y {
            puncture_constellation(self.pair.q()).expect("q >= 2 by construction")
        } else {
            psk_alphabet(self.pair.q())
        }
    }

    pub fn z_alphabet(&self) -> Vec<PskSymbol> {
        psk_alphabet(self.z_order)
    }
}

/// The `T` transmitted payload blocks of one coherence interval.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameSet {
    pub x: Vec<PskSymbol>,
    pub y: Vec<PskSymbol>,
    pub z_blocks: Vec<Vec<PskSymbol>>,
}

impl FrameSet {
    /// Uniform i.i.d. draw of every symbol from its block's alphabet.
    pub fn sample<R: Rng + ?Sized>(cfg: &FrameConfig, rng: &mut R) -> Self {
        let draw = |alphabet: &[PskSymbol], rng: &mut R| -> Vec<PskSymbol> {
            (0..cfg.k)
                .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                .collect()
        };
        let x = draw(&cfg.x_alphabet(), rng);
        let y = draw(&cfg.y_alphabet(), rng);
        let z_alpha = cfg.z_alphabet();
        let z_blocks = (2..cfg.t).map(|_| draw(&z_alpha, rng)).collect();
        Self { x, y, z_blocks }
    }

    /// Checks block count, lengths and alphabets against `cfg`.
    pub fn validate(&self, cfg: &FrameConfig) -> Result<()> {
        if self.z_blocks.len() + 2 != cfg.t {
            return Err(Error::DimensionMismatch(format!(
                "{} blocks for T = {}",
                self.z_blocks.len() + 2,
                cfg.t
            )));
        }
        for block in self.blocks() {
            if block.len() != cfg.k {
                return Err(Error::DimensionMismatch(format!(
                    "block of length {} for K = {}",
                    block.len(),
                    cfg.k
                )));
            }
        }
        let wrong_order = |b: &[PskSymbol], n: u32| b.iter().any(|s| s.order() != n);
        if wrong_order(&self.x, cfg.pair.p())
            || wrong_order(&self.y, cfg.pair.q())
            || self.z_blocks.iter().any(|b| wrong_order(b, cfg.z_order))
        {
            return Err(Error::Domain("symbol drawn from the wrong alphabet".into()));
        }
        if cfg.punctured_y && self.y.iter().any(|s| s.is_unity()) {
            return Err(Error::Domain("punctured block contains the point 1".into()));
        }
        Ok(())
    }

    /// Blocks in transmission order: `x`, `y`, `z_3`, ..., `z_T`.
    pub fn blocks(&self) -> impl Iterator<Item = &[PskSymbol]> {
        [self.x.as_slice(), self.y.as_slice()]
            .into_iter()
            .chain(self.z_blocks.iter().map(Vec::as_slice))
    }

    pub fn num_blocks(&self) -> usize {
        2 + self.z_blocks.len()
    }

    /// Number of positions where the two frame sets carry different symbols.
    pub fn symbol_errors(&self, other: &FrameSet) -> usize {
        self.blocks()
            .zip(other.blocks())
            .map(|(a, b)| a.iter().zip(b).filter(|(s, t)| s != t).count())
            .sum()
    }
}

/// Noisy outputs of the `T` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceivedFrame {
    pub blocks: Vec<Vec<Complex64>>,
    pub noise_variance: f64,
    /// Seed of the RNG stream that produced this frame, when known.
    pub seed: Option<u64>,
}

impl ReceivedFrame {
    /// All blocks concatenated, the `PT`-sample vector `z`.
    pub fn stacked(&self) -> Vec<Complex64> {
        self.blocks.iter().flatten().copied().collect()
    }
}

pub fn embed(symbols: &[PskSymbol]) -> Vec<Complex64> {
    symbols.iter().map(|s| s.embed()).collect()
}

/// The `(K + L - 1) x L` matrix `T(s)` whose column `j` is `s` shifted down
/// by `j` rows.
pub fn toeplitz_t(s: &[Complex64], l: usize) -> DMatrix<Complex64> {
    let k = s.len();
    let rows = k + l - 1;
    DMatrix::from_fn(rows, l, |i, j| {
        if i >= j && i - j < k {
            s[i - j]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// The `(K + L - 1) x K` channel matrix `H` with first column
/// `(h_0, ..., h_{L-1}, 0, ..., 0)`.
pub fn toeplitz_h(h: &ChannelImpulseResponse, k: usize) -> DMatrix<Complex64> {
    let taps = h.taps();
    let rows = k + taps.len() - 1;
    DMatrix::from_fn(rows, k, |i, j| {
        if i >= j && i - j < taps.len() {
            taps[i - j]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Full linear convolution, length `s.len() + h.len() - 1`.
pub fn convolve(s: &[Complex64], h: &[Complex64]) -> Vec<Complex64> {
    if s.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); s.len() + h.len() - 1];
    for (i, &si) in s.iter().enumerate() {
        for (j, &hj) in h.iter().enumerate() {
            out[i + j] += si * hj;
        }
    }
    out
}

/// Circularly symmetric complex Gaussian with `E|n|^2 = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sigma = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(sigma * re, sigma * im)
}

/// Rayleigh channel: `L` i.i.d. unit-variance complex Gaussian taps.
pub fn sample_channel<R: Rng + ?Sized>(l: usize, rng: &mut R) -> ChannelImpulseResponse {
    assert!(l >= 1, "channel length must be at least 1");
    ChannelImpulseResponse {
        taps: (0..l).map(|_| complex_gaussian(rng, 1.0)).collect(),
    }
}

/// Sends every block through `h` and adds white noise of variance
/// `noise_variance` per complex sample.
pub fn transmit<R: Rng + ?Sized>(
    frames: &FrameSet,
    h: &ChannelImpulseResponse,
    noise_variance: f64,
    rng: &mut R,
) -> ReceivedFrame {
    assert!(noise_variance >= 0.0, "noise variance must be nonnegative");
    let blocks = frames
        .blocks()
        .map(|block| {
            let mut r = convolve(&embed(block), h.taps());
            if noise_variance > 0.0 {
                for sample in r.iter_mut() {
                    *sample += complex_gaussian(rng, noise_variance);
                }
            }
            r
        })
        .collect();
    ReceivedFrame {
        blocks,
        noise_variance,
        seed: None,
    }
}

/// Noise variance for an SNR in dB, with unit-modulus symbols and
/// unit-variance taps: `sigma^2 = 10^(-snr_db / 10)`.
pub fn noise_variance_for_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| complex_gaussian(rng, 1.0)).collect()
    }

    fn cfg23(k: usize, l: usize, t: usize) -> FrameConfig {
        FrameConfig::new(k, l, t, CoprimePair::new(2, 3).unwrap(), 2, false).unwrap()
    }

    #[test]
    fn toeplitz_t_examples() {
        let t = toeplitz_t(&[c(1.0, 0.0)], 2);
        assert_eq!(t, DMatrix::identity(2, 2));

        let (s1, s2) = (c(1.0, 2.0), c(-3.0, 0.5));
        let t = toeplitz_t(&[s1, s2], 2);
        let z = c(0.0, 0.0);
        assert_eq!(t, DMatrix::from_row_slice(3, 2, &[s1, z, s2, s1, z, s2]));
    }

    #[test]
    fn toeplitz_h_examples() {
        let h = ChannelImpulseResponse::new(vec![c(1.0, 0.0)]).unwrap();
        assert_eq!(toeplitz_h(&h, 3), DMatrix::identity(3, 3));

        let (h0, h1) = (c(0.5, -1.0), c(2.0, 0.0));
        let h = ChannelImpulseResponse::new(vec![h0, h1]).unwrap();
        let z = c(0.0, 0.0);
        assert_eq!(
            toeplitz_h(&h, 2),
            DMatrix::from_row_slice(3, 2, &[h0, z, h1, h0, z, h1])
        );
    }

    #[test]
    fn toeplitz_forms_agree_with_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let k = rng.random_range(1..=8);
            let l = rng.random_range(1..=8);
            let s = random_vec(&mut rng, k);
            let h = ChannelImpulseResponse::new(random_vec(&mut rng, l)).unwrap();
            let hs = toeplitz_h(&h, k) * nalgebra::DVector::from_column_slice(&s);
            let th = toeplitz_t(&s, l) * nalgebra::DVector::from_column_slice(h.taps());
            let conv = convolve(&s, h.taps());
            assert_eq!(conv.len(), k + l - 1);
            for i in 0..conv.len() {
                assert!((hs[i] - th[i]).norm() < 1e-12);
                assert!((hs[i] - conv[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_rejects_bad_taps() {
        assert!(ChannelImpulseResponse::new(vec![]).is_err());
        assert!(ChannelImpulseResponse::new(vec![c(f64::INFINITY, 0.0)]).is_err());
    }

    #[test]
    fn sampled_taps_have_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut sum = c(0.0, 0.0);
        let mut power = 0.0;
        let (mut re2, mut im2) = (0.0, 0.0);
        for _ in 0..n {
            let h = sample_channel(1, &mut rng).taps()[0];
            sum += h;
            power += h.norm_sqr();
            re2 += h.re * h.re;
            im2 += h.im * h.im;
        }
        let nf = n as f64;
        let mean = sum / nf;
        // Std. error of each mean component is sqrt(0.5 / n).
        let three_sigma = 3.0 * (0.5 / nf).sqrt();
        assert!(mean.re.abs() < three_sigma && mean.im.abs() < three_sigma);
        assert!((power / nf - 1.0).abs() < 0.02);
        assert!((re2 / nf - 0.5).abs() < 0.02);
        assert!((im2 / nf - 0.5).abs() < 0.02);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let a = sample_channel(4, &mut ChaCha8Rng::seed_from_u64(99));
        let b = sample_channel(4, &mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a, b);
    }

    #[test]
    fn identity_channel_passes_symbols() {
        let cfg = cfg23(3, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames = FrameSet::sample(&cfg, &mut rng);
        let h = ChannelImpulseResponse::new(vec![c(1.0, 0.0)]).unwrap();
        let rx = transmit(&frames, &h, 0.0, &mut rng);
        assert_eq!(rx.blocks[0], embed(&frames.x));
        assert_eq!(rx.blocks[1], embed(&frames.y));
    }

    #[test]
    fn noiseless_transmit_is_convolution() {
        let cfg = cfg23(4, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frames = FrameSet::sample(&cfg, &mut rng);
        frames.validate(&cfg).unwrap();
        let h = sample_channel(3, &mut rng);
        let rx = transmit(&frames, &h, 0.0, &mut rng);
        assert_eq!(rx.blocks.len(), 4);
        for (block, r) in frames.blocks().zip(&rx.blocks) {
            assert_eq!(r.len(), cfg.block_len());
            let t = toeplitz_t(&embed(block), 3) * nalgebra::DVector::from_column_slice(h.taps());
            for i in 0..r.len() {
                assert!((r[i] - t[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn blocks_do_not_interfere() {
        // Transmitting the whole frame equals transmitting each block alone.
        let cfg = cfg23(3, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frames = FrameSet::sample(&cfg, &mut rng);
        let h = sample_channel(3, &mut rng);
        let joint = transmit(&frames, &h, 0.0, &mut rng);
        for (i, block) in frames.blocks().enumerate() {
            assert_eq!(joint.blocks[i], convolve(&embed(block), h.taps()));
        }
        // Serial stream with zero padding: the tail of block i never leaks
        // into block i + 1.
        let mut stream = Vec::new();
        for block in frames.blocks() {
            stream.extend(embed(block));
            stream.extend(std::iter::repeat_n(c(0.0, 0.0), cfg.l - 1));
        }
        let serial = convolve(&stream, h.taps());
        let p = cfg.block_len();
        for (i, block) in joint.blocks.iter().enumerate() {
            for (a, b) in block.iter().zip(&serial[i * p..(i + 1) * p]) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_variance_matches() {
        let cfg = cfg23(10, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = ChannelImpulseResponse::new(vec![c(1.0, 0.0)]).unwrap();
        let sigma2 = 0.3;
        let mut acc = 0.0;
        let mut n = 0usize;
        while n < 100_000 {
            let frames = FrameSet::sample(&cfg, &mut rng);
            let rx = transmit(&frames, &h, sigma2, &mut rng);
            for (block, r) in frames.blocks().zip(&rx.blocks) {
                for (s, v) in embed(block).iter().zip(r) {
                    acc += (v - s).norm_sqr();
                    n += 1;
                }
            }
        }
        let est = acc / n as f64;
        assert!((est / sigma2 - 1.0).abs() < 0.05, "estimated {est}");
    }

    #[test]
    fn transmit_is_seed_deterministic() {
        let cfg = cfg23(3, 2, 3);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let frames = FrameSet::sample(&cfg, &mut rng);
            let h = sample_channel(2, &mut rng);
            transmit(&frames, &h, 0.1, &mut rng)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn punctured_frames_avoid_unity() {
        let cfg = FrameConfig::new(64, 1, 2, CoprimePair::new(2, 3).unwrap(), 2, true).unwrap();
        let frames = FrameSet::sample(&cfg, &mut ChaCha8Rng::seed_from_u64(8));
        assert!(frames.y.iter().all(|s| !s.is_unity()));
        frames.validate(&cfg).unwrap();
    }

    #[test]
    fn snr_convention() {
        assert!((noise_variance_for_snr_db(0.0) - 1.0).abs() < 1e-15);
        assert!((noise_variance_for_snr_db(20.0) - 0.01).abs() < 1e-15);
    }
}
