//! Slice error probabilities and quantizer entropies under the joint
//! gaussian law of the standardized pair `(X, Y)` with `ρ² = Σ/(1 + Σ)`.
//!
//! Given `Y = y`, `X ~ N(ρy, 1 − ρ²)`. Bob's best guess of slice bit `k`,
//! knowing the true bits `1..k−1`, picks the heavier of the two posterior
//! masses, so `e_k = E_y[ Σ_c min(m_{c,0}(y), m_{c,1}(y)) ]` with `c` ranging
//! over the lower-bit classes.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use libm::erfc;

use super::SliceConfig;
use crate::error::{Error, Result};
use crate::par;

/// Absolute tolerance of the adaptive integrator.
pub const INTEGRATION_TOLERANCE: f64 = 1e-8;
const Y_LIMIT: f64 = 10.0;
const MAX_DEPTH: u32 = 48;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod 7-15 panel of a vector integrand. Returns the Kronrod
/// estimate and the largest component-wise |Kronrod − Gauss| difference.
fn gk15<F: Fn(f64, &mut [f64])>(f: &F, a: f64, b: f64, dim: usize) -> (Vec<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for (i, (&x, &wk)) in XGK.iter().zip(&WGK).enumerate() {
        let nodes: &[f64] = if x == 0.0 { &[0.0] } else { &[-1.0, 1.0] };
        for &sgn in nodes {
            f(c + sgn * h * x, &mut buf);
            for d in 0..dim {
                kron[d] += wk * buf[d];
                if i % 2 == 1 {
                    gauss[d] += WG[i / 2] * buf[d];
                }
            }
        }
    }
    let mut err = 0.0f64;
    for d in 0..dim {
        kron[d] *= h;
        gauss[d] *= h;
        err = err.max((kron[d] - gauss[d]).abs());
    }
    (kron, err)
}

/// Adaptive bisection with a global absolute tolerance shared in proportion
/// to panel width.
pub(crate) fn integrate_adaptive<F: Fn(f64, &mut [f64])>(f: &F, a: f64, b: f64, dim: usize, tol: f64) -> Vec<f64> {
    let mut total = vec![0.0; dim];
    let mut stack = vec![(a, b, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (est, err) = gk15(f, lo, hi, dim);
        if err <= tol * (hi - lo) / (b - a) || depth >= MAX_DEPTH {
            for d in 0..dim {
                total[d] += est[d];
            }
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

/// Fixed equal-width GK15 panels, evaluated in parallel and summed in order.
pub(crate) fn integrate_panels<F: Fn(f64, &mut [f64]) + Sync>(f: &F, a: f64, b: f64, dim: usize, panels: usize) -> Vec<f64> {
    let w = (b - a) / panels as f64;
    let parts = par::map_range(panels, |i| gk15(f, a + w * i as f64, a + w * (i + 1) as f64, dim).0);
    let mut total = vec![0.0; dim];
    for p in parts {
        for d in 0..dim {
            total[d] += p[d];
        }
    }
    total
}

/// Lower and upper normal tails at `z`, each computed where it is accurate.
#[inline]
fn tails(z: f64) -> (f64, f64) {
    if z >= 0.0 {
        let q = 0.5 * erfc(z * FRAC_1_SQRT_2);
        (1.0 - q, q)
    } else {
        let p = 0.5 * erfc(-z * FRAC_1_SQRT_2);
        (p, 1.0 - p)
    }
}

/// Standard normal quantile, by bisection on the accurately computed tails.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile level must lie in (0, 1)");
    if p == 0.5 {
        return 0.0;
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let (cdf, tail) = tails(mid);
        let below = if p < 0.5 { cdf < p } else { 1.0 - p < tail };
        if below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Standard normal mass of each interval `(t_{p−1}, t_p]` after the affine
/// map `z = (t − shift)/scale`.
pub(crate) fn interval_masses(thresholds: &[f64], shift: f64, scale: f64, out: &mut Vec<f64>) {
    out.clear();
    let (mut lo_cdf, mut lo_tail, mut lo_z) = (0.0, 1.0, f64::NEG_INFINITY);
    for t in thresholds.iter().copied().chain(std::iter::once(f64::INFINITY)) {
        let z = (t - shift) / scale;
        let (cdf, tail) = if z == f64::INFINITY { (1.0, 0.0) } else { tails(z) };
        let m = if lo_z >= 0.0 {
            lo_tail - tail
        } else if z <= 0.0 {
            cdf - lo_cdf
        } else {
            1.0 - lo_cdf - tail
        };
        out.push(m.max(0.0));
        (lo_cdf, lo_tail, lo_z) = (cdf, tail, z);
    }
}

/// `Σ_c min(m_{c,0}, m_{c,1})` for slice `k` (1-based).
pub(crate) fn slice_min_mass(masses: &[f64], k: u32, scratch: &mut Vec<[f64; 2]>) -> f64 {
    let count = masses.len();
    let mask = (1usize << (k - 1)) - 1;
    scratch.clear();
    scratch.resize(1 << (k - 1), [0.0; 2]);
    for (i, &m) in masses.iter().enumerate() {
        let code = (i + 1) % count;
        scratch[code & mask][(code >> (k - 1)) & 1] += m;
    }
    scratch.iter().map(|c| c[0].min(c[1])).sum()
}

fn entropy_bits(masses: &[f64]) -> f64 {
    -masses.iter().filter(|&&m| m > 0.0).map(|&m| m * m.ln()).sum::<f64>() / LN_2
}

#[inline]
fn std_normal_pdf(y: f64) -> f64 {
    (-0.5 * y * y).exp() * 0.398_942_280_401_432_7
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }
}

/// Quantizer statistics for one configuration at one signal-to-noise ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceAnalysis {
    pub snr: f64,
    /// `e_k`, the error probability of slice `k` given the true lower slices.
    pub error_probabilities: Vec<f64>,
    /// `H(Q)` of Alice's slice index.
    pub entropy: f64,
    /// `H(Q | Y)`.
    pub conditional_entropy: f64,
}

impl SliceAnalysis {
    /// `I(Q; Y)`, the most any reconciliation of these slices can reveal.
    pub fn mutual_information(&self) -> f64 {
        self.entropy - self.conditional_entropy
    }

    /// `H(Q) − Σ_k h(e_k)`: key bits per symbol left after ideal
    /// slice-by-slice correction.
    pub fn hard_decision_rate(&self) -> f64 {
        self.entropy - self.error_probabilities.iter().map(|&e| binary_entropy(e)).sum::<f64>()
    }

    /// Ideal efficiency `(H(Q) − Σ h(e_k)) / ½log₂(1 + Σ)`.
    pub fn ideal_efficiency(&self) -> f64 {
        self.hard_decision_rate() / (0.5 * self.snr.ln_1p() / LN_2)
    }

    /// Probability that Bob guesses slice `k` (1-based) correctly.
    pub fn correct_probability(&self, k: usize) -> f64 {
        1.0 - self.error_probabilities[k - 1]
    }
}

pub(crate) fn correlation_for_snr(snr: f64) -> (f64, f64) {
    if snr.is_infinite() {
        (1.0, 0.0)
    } else {
        let rho2 = snr / (1.0 + snr);
        (rho2.sqrt(), (1.0 / (1.0 + snr)).sqrt())
    }
}

fn check_snr(snr: f64) -> Result<()> {
    if !(snr > 0.0) {
        return Err(Error::invalid("snr", format!("signal-to-noise ratio must be > 0, got {snr}")));
    }
    Ok(())
}

/// Evaluates the integrand `[e_1 .. e_n, H(Q|Y=y)]` weighted by `φ(y)`.
fn integrand<'a>(config: &'a SliceConfig, snr: f64, with_errors: bool) -> impl Fn(f64, &mut [f64]) + Sync + 'a {
    let (rho, sd) = correlation_for_snr(snr);
    let n = config.n();
    move |y: f64, out: &mut [f64]| {
        let w = std_normal_pdf(y);
        let mut masses = Vec::with_capacity(config.intervals());
        interval_masses(config.thresholds(), rho * y, sd, &mut masses);
        let mut scratch = Vec::new();
        if with_errors {
            for k in 1..=n {
                out[k as usize - 1] = w * slice_min_mass(&masses, k, &mut scratch);
            }
        }
        *out.last_mut().expect("non-empty") = w * entropy_bits(&masses);
    }
}

fn prior_entropy(config: &SliceConfig) -> f64 {
    let mut masses = Vec::new();
    interval_masses(config.thresholds(), 0.0, 1.0, &mut masses);
    entropy_bits(&masses)
}

/// Full analysis by adaptive integration to [`INTEGRATION_TOLERANCE`].
pub fn analyze(snr: f64, config: &SliceConfig) -> Result<SliceAnalysis> {
    check_snr(snr)?;
    let n = config.n() as usize;
    let entropy = prior_entropy(config);
    if snr.is_infinite() {
        return Ok(SliceAnalysis {
            snr,
            error_probabilities: vec![0.0; n],
            entropy,
            conditional_entropy: 0.0,
        });
    }
    let f = integrand(config, snr, true);
    let v = integrate_adaptive(&f, -Y_LIMIT, Y_LIMIT, n + 1, INTEGRATION_TOLERANCE);
    Ok(SliceAnalysis {
        snr,
        error_probabilities: v[..n].iter().map(|e| e.clamp(0.0, 0.5)).collect(),
        entropy,
        conditional_entropy: v[n].max(0.0),
    })
}

/// Per-slice error probabilities `e_1 .. e_n`.
pub fn slice_error_probabilities(snr: f64, config: &SliceConfig) -> Result<Vec<f64>> {
    Ok(analyze(snr, config)?.error_probabilities)
}

/// Fast fixed-panel analysis for the optimizer inner loop. `with_errors`
/// false skips the slice errors and returns only the entropies.
pub(crate) fn analyze_panels(snr: f64, config: &SliceConfig, with_errors: bool) -> SliceAnalysis {
    let n = config.n() as usize;
    let (rho, sd) = correlation_for_snr(snr);
    // the slice errors have kinks where two posterior masses cross
    let refine = if with_errors { 0.2 } else { 1.0 };
    let width = refine * (sd / rho).min(0.5);
    let span = 9.0;
    let panels = ((2.0 * span / width).ceil() as usize).max(8);
    let f = integrand(config, snr, with_errors);
    let v = integrate_panels(&f, -span, span, n + 1, panels);
    SliceAnalysis {
        snr,
        error_probabilities: v[..n].to_vec(),
        entropy: prior_entropy(config),
        conditional_entropy: v[n],
    }
}
