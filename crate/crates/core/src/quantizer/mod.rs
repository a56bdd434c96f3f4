//! Uniform and subtractively dithered quantizers with `n`-bit codewords.
//!
//! A quantizer covers the interval `[z̄ − U/2, z̄ + U/2]` with step
//! `Δ = U/(2ⁿ − 1)`. The sender adds a dither `ν ~ U(−Δ/2, Δ/2)`, rounds to the
//! nearest level and transmits the level index; the recipient, drawing the
//! same `ν` from a shared stream, reconstructs `ẑ = q(z + ν) − ν`.

mod packing;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::exec::Execution;
use crate::rng::{self, Purpose};

pub use packing::{pack_codes, packed_len, unpack_codes};

/// `q(z) = z̄ + sgn(z − z̄)·Δ·⌊|z − z̄|/Δ + 1/2⌋`, returned as the signed level
/// index and the quantized value. Halves round away from zero.
pub fn uniform_quantize(z: f64, midpoint: f64, step: f64) -> (i64, f64) {
    let offset = z - midpoint;
    let magnitude = (offset.abs() / step + 0.5).floor();
    let level = if offset > 0.0 {
        magnitude as i64
    } else if offset < 0.0 {
        -(magnitude as i64)
    } else {
        0
    };
    (level, midpoint + level as f64 * step)
}

/// The four quantizers each node runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// State, outer loop.
    A,
    /// Gradient, outer loop.
    B,
    /// State, inner loop.
    C,
    /// Gradient, inner loop.
    D,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::A, Family::B, Family::C, Family::D];

    fn purpose(self) -> Purpose {
        match self {
            Family::A => Purpose::DitherA,
            Family::B => Purpose::DitherB,
            Family::C => Purpose::DitherC,
            Family::D => Purpose::DitherD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerState {
    pub family: Family,
    pub bits: u8,
    pub interval: f64,
    pub midpoint: Vec<f64>,
    pub kappa: f64,
}

impl QuantizerState {
    pub fn new(family: Family, bits: u8, interval: f64, midpoint: Vec<f64>, kappa: f64) -> Result<Self> {
        if !(2..=32).contains(&bits) {
            return Err(Error::Parameter(format!("need 2 <= n <= 32 bits, got {bits}")));
        }
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(Error::Parameter(format!("interval must be positive, got {interval}")));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::Parameter(format!("need 0 < kappa < 1, got {kappa}")));
        }
        Ok(Self { family, bits, interval, midpoint, kappa })
    }

    /// Quantizer used in outer round `s`: `U = C·κ^{(s+1)/2}`.
    pub fn at_round(family: Family, bits: u8, scale: f64, kappa: f64, s: usize, midpoint: Vec<f64>) -> Result<Self> {
        Self::new(family, bits, scale * kappa.powf((s as f64 + 1.0) / 2.0), midpoint, kappa)
    }

    /// `Δ = U/(2ⁿ − 1)`
    pub fn step(&self) -> f64 {
        self.interval / self.levels_minus_one()
    }

    fn levels_minus_one(&self) -> f64 {
        ((1u64 << self.bits) - 1) as f64
    }

    /// Shrinks the interval by `κ^{1/2}` and recentres on `midpoint`.
    pub fn refine(&self, midpoint: Vec<f64>) -> Self {
        Self { interval: self.interval * self.kappa.sqrt(), midpoint, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.midpoint.len()
    }
}

/// Shared dither source. Sender and recipients build it from the same
/// `(master seed, family, sender, s, t)` and draw one value per component.
#[derive(Debug, Clone)]
pub struct DitherStream {
    rng: ChaCha8Rng,
}

impl DitherStream {
    pub fn new(master: u64, family: Family, sender: usize, s: usize, t: usize) -> Self {
        Self { rng: rng::stream(master, family.purpose(), sender as u64, s as u64, t as u64) }
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    /// Uniform on the open interval `(−Δ/2, Δ/2)`.
    pub fn next(&mut self, step: f64) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u != 0.0 {
                return (u - 0.5) * step;
            }
        }
    }
}

/// Encoded vector: one `n`-bit code per component plus sender-side counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodewordBlock {
    pub bits: u8,
    pub codes: Vec<u32>,
    /// Components inside the interval whose dithered level fell off the code
    /// range and was clamped.
    pub edge_clamps: usize,
    /// Components outside the quantization interval.
    pub overflows: usize,
}

pub fn dithered_encode(v: &[f64], q: &QuantizerState, dither: &mut DitherStream) -> Result<CodewordBlock> {
    check_dim(q.dim(), v.len())?;
    let step = q.step();
    let half = q.interval / 2.0;
    let bias = 1i64 << (q.bits - 1);
    let (lo, hi) = (-bias, bias - 1);
    let mut codes = Vec::with_capacity(v.len());
    let (mut edge_clamps, mut overflows) = (0, 0);
    for (&z, &mid) in v.iter().zip(&q.midpoint) {
        let nu = dither.next(step);
        let (level, _) = uniform_quantize(z + nu, mid, step);
        let outside = !z.is_finite() || (z - mid).abs() > half;
        let clamped = level.clamp(lo, hi);
        if outside {
            overflows += 1;
        } else if clamped != level {
            edge_clamps += 1;
        }
        codes.push((clamped + bias) as u32);
    }
    Ok(CodewordBlock { bits: q.bits, codes, edge_clamps, overflows })
}

pub fn dithered_decode(block: &CodewordBlock, q: &QuantizerState, dither: &mut DitherStream) -> Result<Vec<f64>> {
    check_dim(q.dim(), block.codes.len())?;
    if block.bits != q.bits {
        return Err(Error::Codec(format!("codeword width {} does not match quantizer width {}", block.bits, q.bits)));
    }
    let step = q.step();
    let bias = 1i64 << (q.bits - 1);
    Ok(block
        .codes
        .iter()
        .zip(&q.midpoint)
        .map(|(&c, &mid)| {
            let nu = dither.next(step);
            mid + (i64::from(c) - bias) as f64 * step - nu
        })
        .collect())
}

/// Empirical moments of the dithered quantization error `γ = z − ẑ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStatistics {
    pub samples: usize,
    pub mean: f64,
    /// Standard error of `mean`.
    pub std_error: f64,
    pub variance: f64,
    /// `Δ²/12`
    pub expected_variance: f64,
    /// Correlation between the input and its error.
    pub input_correlation: f64,
    /// Correlation between the errors of adjacent component pairs.
    pub pair_correlation: f64,
    pub edge_clamps: usize,
    pub overflows: usize,
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: f64,
    e: f64,
    ee: f64,
    z: f64,
    zz: f64,
    ze: f64,
    pa: f64,
    pb: f64,
    paa: f64,
    pbb: f64,
    pab: f64,
    np: f64,
    clamps: usize,
    overflows: usize,
}

fn corr(n: f64, a: f64, b: f64, aa: f64, bb: f64, ab: f64) -> f64 {
    let cov = ab / n - (a / n) * (b / n);
    let va = aa / n - (a / n) * (a / n);
    let vb = bb / n - (b / n) * (b / n);
    cov / (va * vb).sqrt()
}

/// Monte-Carlo error statistics for inputs uniform on the interior
/// `[z̄ ± (U − Δ)/2]` (with `z̄ = 0`), drawn in `chunks` independent batches.
pub fn error_statistics(bits: u8, interval: f64, samples: usize, seed: u64, exec: Execution) -> Result<ErrorStatistics> {
    const CHUNKS: usize = 64;
    let per_chunk = samples.div_ceil(CHUNKS) & !1;
    let probe = QuantizerState::new(Family::A, bits, interval, Vec::new(), 0.5)?;
    let step = probe.step();
    let reach = (interval - step) / 2.0;
    let parts = exec.map(CHUNKS, |c| -> Result<Moments> {
        let mut input = rng::stream(seed, Purpose::Test, bits as u64, c as u64, 0);
        let z: Vec<f64> = (0..per_chunk).map(|_| input.random_range(-reach..=reach)).collect();
        let q = QuantizerState { midpoint: vec![0.0; per_chunk], ..probe.clone() };
        let dither = DitherStream::new(seed, Family::A, c, bits as usize, 0);
        let block = dithered_encode(&z, &q, &mut dither.clone())?;
        let zhat = dithered_decode(&block, &q, &mut dither.clone())?;
        let mut m = Moments { clamps: block.edge_clamps, overflows: block.overflows, ..Moments::default() };
        let errors: Vec<f64> = z.iter().zip(&zhat).map(|(a, b)| a - b).collect();
        for (&zi, &ei) in z.iter().zip(&errors) {
            m.n += 1.0;
            m.e += ei;
            m.ee += ei * ei;
            m.z += zi;
            m.zz += zi * zi;
            m.ze += zi * ei;
        }
        for pair in errors.chunks_exact(2) {
            m.np += 1.0;
            m.pa += pair[0];
            m.pb += pair[1];
            m.paa += pair[0] * pair[0];
            m.pbb += pair[1] * pair[1];
            m.pab += pair[0] * pair[1];
        }
        Ok(m)
    });
    let mut t = Moments::default();
    for part in parts {
        let m = part?;
        t.n += m.n;
        t.e += m.e;
        t.ee += m.ee;
        t.z += m.z;
        t.zz += m.zz;
        t.ze += m.ze;
        t.np += m.np;
        t.pa += m.pa;
        t.pb += m.pb;
        t.paa += m.paa;
        t.pbb += m.pbb;
        t.pab += m.pab;
        t.clamps += m.clamps;
        t.overflows += m.overflows;
    }
    let mean = t.e / t.n;
    let variance = t.ee / t.n - mean * mean;
    Ok(ErrorStatistics {
        samples: t.n as usize,
        mean,
        std_error: (variance / t.n).sqrt(),
        variance,
        expected_variance: step * step / 12.0,
        input_correlation: corr(t.n, t.z, t.e, t.zz, t.ee, t.ze),
        pair_correlation: corr(t.np, t.pa, t.pb, t.paa, t.pbb, t.pab),
        edge_clamps: t.clamps,
        overflows: t.overflows,
    })
}
