//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a stream addressed by a
//! [`StreamKey`] `(seed, path_id, step_id, substream)`. The key is mapped
//! injectively onto the counter and key of a Philox4x64-10 block cipher, so a
//! stream can be opened anywhere without touching any other stream. Results
//! are therefore independent of how paths are scheduled across threads.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{MvsdeError, Result};

/// Well-known substream tags.
pub mod substream {
    /// Wiener increments and iterated integrals driving particle paths.
    pub const NOISE: u64 = 0;
    /// Bernoulli shots of the amplitude-estimation emulator.
    pub const QMCI: u64 = 1;
    /// Seeds of sweep repetitions.
    pub const SWEEP: u64 = 2;
}

const PHILOX_M0: u64 = 0xD2E7_470E_E14C_6C93;
const PHILOX_M1: u64 = 0xCA5A_8263_9512_1157;
const PHILOX_W0: u64 = 0x9E37_79B9_7F4A_7C15;
const PHILOX_W1: u64 = 0xBB67_AE85_84CA_A73B;
// Second key word; fixed so the 64-bit seed is the only key material.
const KEY_SALT: u64 = 0x6d76_7364_652d_7267;

#[inline(always)]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = u128::from(a) * u128::from(b);
    (p as u64, (p >> 64) as u64)
}

/// Philox4x64 with 10 rounds.
#[inline]
pub fn philox4x64_10(mut ctr: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let [mut k0, mut k1] = key;
    for round in 0..10 {
        if round > 0 {
            k0 = k0.wrapping_add(PHILOX_W0);
            k1 = k1.wrapping_add(PHILOX_W1);
        }
        let (lo0, hi0) = mulhilo(PHILOX_M0, ctr[0]);
        let (lo1, hi1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0];
    }
    ctr
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub path_id: u64,
    pub step_id: u64,
    pub substream: u64,
}

impl StreamKey {
    pub const fn new(seed: u64, path_id: u64, step_id: u64, substream: u64) -> Self {
        Self {
            seed,
            path_id,
            step_id,
            substream,
        }
    }

    pub const fn with_path(self, path_id: u64) -> Self {
        Self { path_id, ..self }
    }

    pub const fn with_step(self, step_id: u64) -> Self {
        Self { step_id, ..self }
    }

    pub const fn with_substream(self, substream: u64) -> Self {
        Self { substream, ..self }
    }

    /// Opens the stream at its first block.
    pub fn stream(&self) -> PhiloxStream {
        PhiloxStream {
            key: [self.seed, KEY_SALT],
            ctr: [0, self.step_id, self.path_id, self.substream],
            buf: [0; 4],
            pos: 4,
        }
    }

    /// First 64-bit word of the stream; used to derive child seeds.
    pub fn derive_seed(&self) -> u64 {
        self.stream().next_u64()
    }
}

/// Sequential reader over one keyed stream. The block index occupies the
/// first counter word, leaving 2^64 blocks per key.
#[derive(Debug, Clone)]
pub struct PhiloxStream {
    key: [u64; 2],
    ctr: [u64; 4],
    buf: [u64; 4],
    pos: usize,
}

impl RngCore for PhiloxStream {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        if self.pos == 4 {
            self.buf = philox4x64_10(self.ctr, self.key);
            self.ctr[0] = self.ctr[0].wrapping_add(1);
            self.pos = 0;
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// `n` i.i.d. `N(0, variance)` draws from the stream `key`.
pub fn gaussian(key: StreamKey, n: usize, variance: f64) -> Result<Vec<f64>> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(MvsdeError::param("variance", "must be finite and non-negative"));
    }
    if variance == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let sd = variance.sqrt();
    let mut rng = key.stream();
    Ok((0..n)
        .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect::<Vec<f64>>())
}

type NoiseVec = SmallVec<[f64; 4]>;

const INV_SQRT_3: f64 = 0.577_350_269_189_625_8;

/// Random input of one step: Wiener increments `ΔW` and the iterated
/// integrals `I_(j,0) = ∫∫ dW^j_u ds` over the same interval.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub dw: NoiseVec,
    pub i10: NoiseVec,
}

impl NoiseDraw {
    pub fn zeros(m: usize) -> Self {
        Self {
            dw: SmallVec::from_elem(0.0, m),
            i10: SmallVec::from_elem(0.0, m),
        }
    }

    pub fn noise_dim(&self) -> usize {
        self.dw.len()
    }

    /// Builds `I_(j,0) = h/2 (ΔW_j + ζ_j/√3)` from given `ΔW` and an
    /// independent `ζ ~ N(0, h)`.
    pub fn from_parts(dw: &[f64], zeta: &[f64], h: f64) -> Self {
        let i10 = dw
            .iter()
            .zip(zeta)
            .map(|(&w, &z)| iterated_integral(w, z, h))
            .collect();
        Self {
            dw: dw.iter().copied().collect(),
            i10,
        }
    }

    /// Refills from `rng`; with `iterated == false` only `ΔW` is drawn and
    /// `I_(j,0)` is left at zero.
    #[inline]
    pub fn resample<R: RngCore + ?Sized>(&mut self, rng: &mut R, h: f64, iterated: bool) {
        let sd = h.sqrt();
        for j in 0..self.dw.len() {
            let w = sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
            self.dw[j] = w;
            self.i10[j] = if iterated {
                let z = sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                iterated_integral(w, z, h)
            } else {
                0.0
            };
        }
    }
}

#[inline(always)]
fn iterated_integral(dw: f64, zeta: f64, h: f64) -> f64 {
    0.5 * h * (dw + zeta * INV_SQRT_3)
}

/// Samples `ΔW ~ N(0, h I_m)` and the matching `I_(j,0)`.
pub fn sample_noise(key: StreamKey, m: usize, h: f64) -> Result<NoiseDraw> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(MvsdeError::param("h", "step size must be positive"));
    }
    let mut draw = NoiseDraw::zeros(m);
    draw.resample(&mut key.stream(), h, true);
    Ok(draw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Published known-answer vectors for Philox4x64-10.
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x64_10([0; 4], [0; 2]),
            [0x16554d9eca36314c, 0xdb20fe9d672d0fdc, 0xd7e772cee186176b, 0x7e68b68aec7ba23b]
        );
        assert_eq!(
            philox4x64_10([u64::MAX; 4], [u64::MAX; 2]),
            [0x87b092c3013fe90b, 0x438c3c67be8d0224, 0x9cc7d7c69cd777b6, 0xa09caebf594f0ba0]
        );
        assert_eq!(
            philox4x64_10(
                [0x243f6a8885a308d3, 0x13198a2e03707344, 0xa4093822299f31d0, 0x082efa98ec4e6c89],
                [0x452821e638d01377, 0xbe5466cf34e90c6c]
            ),
            [0xa528f45403e61d95, 0x38c72dbd566e9788, 0xa5a1610e72fd18b5, 0x57bd43b5e52b7fe6]
        );
    }

    #[test]
    fn zero_variance_is_all_zero() {
        let v = gaussian(StreamKey::new(1, 2, 3, 4), 17, 0.0).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn negative_variance_rejected() {
        assert!(gaussian(StreamKey::new(1, 0, 0, 0), 3, -1.0).is_err());
        assert!(sample_noise(StreamKey::new(1, 0, 0, 0), 1, 0.0).is_err());
        assert!(sample_noise(StreamKey::new(1, 0, 0, 0), 1, -0.5).is_err());
    }

    #[test]
    fn same_key_same_output() {
        let k = StreamKey::new(99, 5, 8, substream::NOISE);
        assert_eq!(gaussian(k, 64, 2.0).unwrap(), gaussian(k, 64, 2.0).unwrap());
        assert_eq!(sample_noise(k, 3, 0.1).unwrap(), sample_noise(k, 3, 0.1).unwrap());
        assert_ne!(
            gaussian(k, 4, 1.0).unwrap(),
            gaussian(k.with_step(9), 4, 1.0).unwrap()
        );
    }

    #[test]
    fn gaussian_moments() {
        let v = gaussian(StreamKey::new(2024, 0, 0, 0), 1_000_000, 1.0).unwrap();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn forced_zero_noise_gives_zero_integral() {
        let d = NoiseDraw::from_parts(&[0.0, 0.0], &[0.0, 0.0], 0.37);
        assert_eq!(d.i10.as_slice(), &[0.0, 0.0]);
        let d = NoiseDraw::from_parts(&[0.2], &[0.0], 0.1);
        assert_relative_eq!(d.i10[0], 0.01);
    }

    #[test]
    fn iterated_integral_moments() {
        let h = 0.1;
        let n = 1_000_000;
        let (mut s, mut s2, mut cross) = (0.0, 0.0, 0.0);
        for p in 0..n {
            let d = sample_noise(StreamKey::new(7, p, 0, substream::NOISE), 1, h).unwrap();
            s += d.i10[0];
            s2 += d.i10[0] * d.i10[0];
            cross += d.dw[0] * d.i10[0];
        }
        let nf = n as f64;
        assert!((s / nf).abs() < 3.0 * (h.powi(3) / 3.0 / nf).sqrt() + 1e-7);
        let second = s2 / nf;
        let cov = cross / nf;
        assert!((second / (h.powi(3) / 3.0) - 1.0).abs() < 0.03, "E[I²] = {second}");
        assert!((cov / (h * h / 2.0) - 1.0).abs() < 0.03, "E[ΔW I] = {cov}");
    }

    #[test]
    fn distinct_paths_uncorrelated() {
        let n = 100_000;
        let a = gaussian(StreamKey::new(11, 0, 0, 0), n, 1.0).unwrap();
        let b = gaussian(StreamKey::new(11, 1, 0, 0), n, 1.0).unwrap();
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        assert!(corr.abs() < 0.01, "corr {corr}");
        // draws at the same position across many paths
        let first: Vec<f64> = (0..n as u64)
            .map(|p| gaussian(StreamKey::new(11, p, 3, 0), 1, 1.0).unwrap()[0])
            .collect();
        let lag = first.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1) as f64;
        assert!(lag.abs() < 0.01, "lag corr {lag}");
    }
}
