//! Blind identification of zero-padded frequency-selective channels.
//!
//! The first two blocks of every frame are drawn from a `p`-PSK and a
//! `q`-PSK alphabet with `gcd(p, q) = 1`. Because every `pq`-PSK point splits
//! uniquely into a product of a `p`-PSK and a `q`-PSK point, and every
//! feasible difference `x - y` splits uniquely as well, the receiver can
//! recover the channel taps and both symbol blocks in closed form with no
//! scale ambiguity ([`blind_id`]). Under noise, the same codebook gives full
//! diversity to a non-coherent GLRT receiver ([`glrt`]), which the Monte Carlo
//! [`harness`] checks empirically.

pub mod blind_id;
pub mod channel;
pub mod constellation;
mod error;
pub mod glrt;
pub mod harness;

pub use error::{Error, Result};

pub use num_complex::Complex64;
