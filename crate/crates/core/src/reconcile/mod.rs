//! Sliced reconciliation.
//!
//! Alice's standardized value is quantized into one of `2ⁿ` intervals
//! `s_p = (t_{p−1}, t_p]`, `p = 1..2ⁿ`, and the interval index is spread over
//! `n` slice bits. Bob recovers the slices in order: for slice `k` he makes
//! a maximum a posteriori guess from his own value and the already agreed
//! slices `1..k−1`, then the slice is corrected by public discussion.

pub mod cascade;
pub mod optimize;
pub mod probability;
pub mod transcript;

use crate::channel::SiftedFrame;
use crate::error::{Error, Result};
use crate::par;
use crate::privacy::BinaryKey;
use crate::sampler::GaussianSampler;
use crate::stats;

use cascade::{assemble_key, cascade, key_hash, AliceLink, LiveAlice, Recorder, ReplayAlice};
use probability::{correlation_for_snr, interval_masses};

pub use optimize::{optimize_thresholds, optimize_thresholds_with, Objective, OptimizedSlices, OptimizerSettings};
pub use probability::{analyze, binary_entropy, slice_error_probabilities, SliceAnalysis};
pub use transcript::{Record, Transcript, HASH_BITS};

pub const MAX_SLICES: u32 = 8;

/// Slices whose predicted error rate exceeds this are disclosed outright;
/// parity search would leak more than the slice itself.
pub const REVEAL_ABOVE: f64 = 0.2;

/// Correction is skipped when the expected number of errors in the frame
/// is below this.
pub const SKIP_BELOW_EXPECTED_ERRORS: f64 = 1e-4;

/// Symmetric partition of the real line into `2ⁿ` intervals, thresholds in
/// units of Alice's standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceConfig {
    n: u32,
    thresholds: Vec<f64>,
}

impl SliceConfig {
    pub(crate) fn check_n(n: u32) -> Result<()> {
        if !(1..=MAX_SLICES).contains(&n) {
            return Err(Error::invalid("n", format!("slice count must be in 1..={MAX_SLICES}, got {n}")));
        }
        Ok(())
    }

    /// Validates `2ⁿ − 1` strictly increasing thresholds with
    /// `t_p = −t_{2ⁿ−p}` and a zero middle threshold.
    pub fn new(n: u32, thresholds: Vec<f64>) -> Result<Self> {
        Self::check_n(n)?;
        let count = (1usize << n) - 1;
        if thresholds.len() != count {
            return Err(Error::invalid(
                "thresholds",
                format!("need {count} thresholds for n = {n}, got {}", thresholds.len()),
            ));
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("thresholds", "thresholds must be finite"));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("thresholds", "thresholds must be strictly increasing"));
        }
        if thresholds[count / 2] != 0.0 {
            return Err(Error::invalid("thresholds", "middle threshold must be 0"));
        }
        for i in 0..count / 2 {
            let (lo, hi) = (thresholds[i], thresholds[count - 1 - i]);
            if (lo + hi).abs() > 1e-12 * hi.abs().max(1.0) {
                return Err(Error::invalid("thresholds", format!("not symmetric: {lo} vs {hi}")));
            }
        }
        Ok(Self { n, thresholds })
    }

    /// Builds the symmetric partition from its `2ⁿ⁻¹ − 1` positive thresholds.
    pub fn from_positive(n: u32, positive: &[f64]) -> Result<Self> {
        Self::check_n(n)?;
        let mut t: Vec<f64> = positive.iter().rev().map(|x| -x).collect();
        t.push(0.0);
        t.extend_from_slice(positive);
        Self::new(n, t)
    }

    /// Equal-width intervals of `step` standard deviations around 0.
    pub fn uniform(n: u32, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid("step", format!("must be finite and > 0, got {step}")));
        }
        Self::check_n(n)?;
        let half = 1i64 << (n - 1);
        Self::from_positive(n, &(1..half).map(|j| j as f64 * step).collect::<Vec<_>>())
    }

    /// Intervals of equal probability under the standard normal.
    pub fn equiprobable(n: u32) -> Result<Self> {
        Self::check_n(n)?;
        let count = 1u64 << n;
        let half = count / 2;
        let pos: Vec<f64> = (half + 1..count)
            .map(|p| probability::normal_quantile(p as f64 / count as f64))
            .collect();
        Self::from_positive(n, &pos)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn intervals(&self) -> usize {
        1 << self.n
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn positive_thresholds(&self) -> &[f64] {
        &self.thresholds[self.thresholds.len() / 2 + 1..]
    }
}

/// 1-based index `p` of the interval containing `value`.
pub fn slice_index(value: f64, config: &SliceConfig) -> usize {
    1 + config.thresholds.partition_point(|&t| t < value)
}

/// Slice bits packed in an integer: bit `k−1` holds slice `k`.
pub fn slice_code(value: f64, config: &SliceConfig) -> u32 {
    (slice_index(value, config) % config.intervals()) as u32
}

/// Bits `1..n` of `value`: bit `k` is `⌊p / 2^{k−1}⌋ mod 2`.
pub fn assign_slice_bits(value: f64, config: &SliceConfig) -> Vec<u8> {
    let code = slice_code(value, config);
    (0..config.n).map(|k| ((code >> k) & 1) as u8).collect()
}

/// How a slice was corrected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    /// Expected errors negligible; left to the final hash check.
    Skipped,
    /// Parity search.
    Cascade,
    /// Alice disclosed the slice.
    Revealed,
}

impl Correction {
    pub fn name(self) -> &'static str {
        match self {
            Correction::Skipped => "skipped",
            Correction::Cascade => "cascade",
            Correction::Revealed => "revealed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceDiagnostics {
    /// Predicted `e_k`.
    pub per_slice_error: Vec<f64>,
    /// Fraction of Bob's guesses that the correction flipped.
    pub observed_error: Vec<f64>,
    /// Disclosed bits per symbol during correction of each slice.
    pub per_slice_leak: Vec<f64>,
    pub corrections: Vec<Correction>,
    pub cascade_passes: Vec<u16>,
    /// `H(Q)` of the partition, bits per symbol.
    pub entropy: f64,
    /// `I(Q; Y)`, bits per symbol.
    pub quantizer_information: f64,
    /// `½ log₂(1 + Σ)`.
    pub shannon_bits: f64,
    /// `(n·N − leaked) / (N · ½log₂(1 + Σ))`, clamped to [0, 1].
    pub efficiency: f64,
    /// `(N·H(Q) − leaked) / (N · ½log₂(1 + Σ))`, clamped to [0, 1].
    pub entropy_efficiency: f64,
    /// `(H(Q) − Σ h(e_k)) / ½log₂(1 + Σ)`.
    pub ideal_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconciliationResult {
    pub alice_key: BinaryKey,
    pub bob_key: BinaryKey,
    pub frame_len: usize,
    pub slices: u32,
    /// Every disclosed parity and revealed bit plus the verification hash.
    pub leaked_bits: u64,
    /// Messages Bob sent or received: parity queries, disclosed slices and
    /// the hash.
    pub rounds: usize,
    pub diagnostics: SliceDiagnostics,
    pub transcript: Transcript,
}

impl ReconciliationResult {
    pub fn key_bits(&self) -> &BinaryKey {
        &self.bob_key
    }

    pub fn keys_agree(&self) -> bool {
        self.alice_key == self.bob_key
    }
}

/// An efficiency value with the clamping made visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    pub alpha: f64,
    pub unclamped: f64,
    pub out_of_range: bool,
}

impl Efficiency {
    fn from_raw(raw: f64) -> Self {
        let alpha = if raw.is_nan() { 0.0 } else { raw.clamp(0.0, 1.0) };
        Self {
            alpha,
            unclamped: raw,
            out_of_range: !(0.0..=1.0).contains(&raw),
        }
    }
}

fn shannon_bits(snr: f64) -> f64 {
    0.5 * snr.ln_1p() / std::f64::consts::LN_2
}

/// `α = (n·N − leaked) / (N · ½log₂(1 + Σ))`.
pub fn reconciliation_efficiency(result: &ReconciliationResult, snr: f64) -> Efficiency {
    let n = result.frame_len as f64;
    let bits = result.slices as f64 * n;
    Efficiency::from_raw((bits - result.leaked_bits as f64) / (n * shannon_bits(snr)))
}

/// Like [`reconciliation_efficiency`] but counts the slice bits by their
/// entropy `N·H(Q)` rather than their number.
pub fn entropy_efficiency(result: &ReconciliationResult, snr: f64) -> Efficiency {
    let n = result.frame_len as f64;
    Efficiency::from_raw((n * result.diagnostics.entropy - result.leaked_bits as f64) / (n * shannon_bits(snr)))
}

fn standardized(values: &[f64], side: &str) -> Result<Vec<f64>> {
    let sd = stats::rms(values);
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::DegenerateFrame(format!("{side} values have zero spread")));
    }
    Ok(values.iter().map(|v| v / sd).collect())
}

fn check_frame(frame: &SiftedFrame, config: &SliceConfig) -> Result<()> {
    if frame.alice_values.len() != frame.bob_values.len() {
        return Err(Error::LengthMismatch {
            what: "alice and bob values",
            left: frame.alice_values.len(),
            right: frame.bob_values.len(),
        });
    }
    let bits = frame.len() * config.n as usize;
    if bits < HASH_BITS as usize {
        return Err(Error::DegenerateFrame(format!(
            "{} symbols carry fewer key bits than the {HASH_BITS}-bit verification hash",
            frame.len()
        )));
    }
    if frame.len() > u32::MAX as usize {
        return Err(Error::DegenerateFrame("frame too long for 32-bit positions".into()));
    }
    Ok(())
}

/// Bob's MAP guesses of slice `k` for every symbol, given his values and
/// the agreed lower slices packed in `agreed`.
fn guess_slice(bob: &[f64], agreed: &[u32], k: u32, config: &SliceConfig, snr: f64) -> Vec<u8> {
    let count = config.intervals();
    if snr.is_infinite() {
        return bob.iter().map(|&y| ((slice_code(y, config) >> (k - 1)) & 1) as u8).collect();
    }
    let (rho, sd) = correlation_for_snr(snr);
    let mask = (1usize << (k - 1)) - 1;
    par::map_range(bob.len(), |i| {
        let mut masses = Vec::with_capacity(count);
        interval_masses(config.thresholds(), rho * bob[i], sd, &mut masses);
        let known = agreed[i] as usize & mask;
        let mut m = [0.0f64; 2];
        for (j, &w) in masses.iter().enumerate() {
            let code = (j + 1) % count;
            if code & mask == known {
                m[(code >> (k - 1)) & 1] += w;
            }
        }
        (m[1] > m[0]) as u8
    })
}

struct BobOutcome {
    slices: Vec<Vec<u8>>,
    leak: Vec<u64>,
    flips: Vec<usize>,
    corrections: Vec<Correction>,
    passes: Vec<u16>,
    rounds: usize,
}

fn run_bob<L: AliceLink + ?Sized>(
    link: &mut L,
    bob: &[f64],
    config: &SliceConfig,
    snr: f64,
    errors: &[f64],
    sampler: &GaussianSampler,
) -> Result<BobOutcome> {
    let n = bob.len();
    let mut agreed = vec![0u32; n];
    let mut out = BobOutcome {
        slices: Vec::new(),
        leak: Vec::new(),
        flips: Vec::new(),
        corrections: Vec::new(),
        passes: Vec::new(),
        rounds: 0,
    };
    for k in 1..=config.n {
        link.start_slice(k as u8)?;
        let mut bits = guess_slice(bob, &agreed, k, config, snr);
        let e = errors[k as usize - 1];
        let (correction, leak, flips, passes) = if e * n as f64 <= SKIP_BELOW_EXPECTED_ERRORS {
            (Correction::Skipped, 0, 0, 0)
        } else if e > REVEAL_ABOVE {
            let truth = link.reveal_slice()?;
            if truth.len() != n {
                return Err(Error::Transcript(format!("revealed {} bits for a slice of {n}", truth.len())));
            }
            let flips = bits.iter().zip(&truth).filter(|(a, b)| a != b).count();
            bits = truth;
            out.rounds += 1;
            (Correction::Revealed, n as u64, flips, 0)
        } else {
            let k1 = ((0.73 / e).ceil() as usize).max(1);
            let st = cascade(link, &mut bits, k as u8, k1, sampler)?;
            out.rounds += st.queries;
            (Correction::Cascade, st.leaked, st.flips, st.passes)
        };
        for (a, &b) in agreed.iter_mut().zip(&bits) {
            *a |= (b as u32) << (k - 1);
        }
        out.slices.push(bits);
        out.leak.push(leak);
        out.flips.push(flips);
        out.corrections.push(correction);
        out.passes.push(passes);
    }
    let theirs = link.verification_hash()?;
    out.rounds += 1;
    let ours = key_hash(&assemble_key(&out.slices), sampler)?;
    if theirs != ours {
        return Err(Error::ReconciliationFailed(format!(
            "verification hash mismatch ({theirs:08x} vs {ours:08x}): residual errors remain"
        )));
    }
    link.done()?;
    Ok(out)
}

/// Reconciles a sifted frame at signal-to-noise ratio `snr` (which may be
/// infinite for a noiseless link).
///
/// Each side divides its values by its own sample standard deviation.
/// Returns both parties' keys (slice-major, `n·N` bits) and the session
/// transcript. Fails with [`Error::ReconciliationFailed`] when the
/// correction cannot converge or the final hash disagrees.
pub fn reconcile(
    frame: &SiftedFrame,
    config: &SliceConfig,
    snr: f64,
    sampler: &GaussianSampler,
) -> Result<ReconciliationResult> {
    check_frame(frame, config)?;
    let analysis = analyze(snr, config)?;
    reconcile_with_analysis(frame, config, &analysis, sampler)
}

/// [`reconcile`] with a precomputed analysis of `config`.
pub fn reconcile_with_analysis(
    frame: &SiftedFrame,
    config: &SliceConfig,
    analysis: &SliceAnalysis,
    sampler: &GaussianSampler,
) -> Result<ReconciliationResult> {
    check_frame(frame, config)?;
    let snr = analysis.snr;
    let alice = standardized(&frame.alice_values, "alice")?;
    let bob = standardized(&frame.bob_values, "bob")?;
    let codes: Vec<u32> = par::map_slice(&alice, |&x| slice_code(x, config));
    let alice_slices: Vec<Vec<u8>> = (0..config.n)
        .map(|k| codes.iter().map(|c| ((c >> k) & 1) as u8).collect())
        .collect();
    let alice_key = assemble_key(&alice_slices);

    let mut link = Recorder::new(LiveAlice::new(alice_slices, *sampler));
    let outcome = run_bob(&mut link, &bob, config, snr, &analysis.error_probabilities, sampler)?;
    let transcript = link.transcript;
    let bob_key = assemble_key(&outcome.slices);

    let n = frame.len();
    let nf = n as f64;
    let leaked_bits = transcript.leaked_bits();
    debug_assert_eq!(leaked_bits, outcome.leak.iter().sum::<u64>() + HASH_BITS);
    let shannon = shannon_bits(snr);
    let diagnostics = SliceDiagnostics {
        per_slice_error: analysis.error_probabilities.clone(),
        observed_error: outcome.flips.iter().map(|&f| f as f64 / nf).collect(),
        per_slice_leak: outcome.leak.iter().map(|&l| l as f64 / nf).collect(),
        corrections: outcome.corrections,
        cascade_passes: outcome.passes,
        entropy: analysis.entropy,
        quantizer_information: analysis.mutual_information(),
        shannon_bits: shannon,
        efficiency: Efficiency::from_raw((config.n as f64 * nf - leaked_bits as f64) / (nf * shannon)).alpha,
        entropy_efficiency: Efficiency::from_raw((nf * analysis.entropy - leaked_bits as f64) / (nf * shannon)).alpha,
        ideal_efficiency: analysis.ideal_efficiency(),
    };
    Ok(ReconciliationResult {
        alice_key,
        bob_key,
        frame_len: n,
        slices: config.n,
        leaked_bits,
        rounds: outcome.rounds,
        diagnostics,
        transcript,
    })
}

/// Re-runs Bob's side against a recorded transcript and returns his key.
/// Any divergence from the recording is an [`Error::Transcript`].
pub fn replay_bob(
    bob_values: &[f64],
    config: &SliceConfig,
    snr: f64,
    sampler: &GaussianSampler,
    transcript: &Transcript,
) -> Result<BinaryKey> {
    let analysis = analyze(snr, config)?;
    let bob = standardized(bob_values, "bob")?;
    let mut link = ReplayAlice::new(transcript, bob.len());
    let outcome = run_bob(&mut link, &bob, config, snr, &analysis.error_probabilities, sampler)?;
    Ok(assemble_key(&outcome.slices))
}
