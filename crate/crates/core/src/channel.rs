//! Lossy/noisy line with the entangling-cloner-free optimal individual
//! attack: Eve taps a fraction `1 − η` of the beam at Alice's output and
//! forwards the rest to Bob over a lossless line.

use crate::error::{Error, Result};
use crate::model::{intrinsic_variance, AliceSymbol, ModulationConfig, Quadrature, QuadraturePair, Variant};
use crate::par;
use crate::sampler::GaussianSampler;

/// Input-referred added noise `χ = (1 − η)/η` of a pure-loss line.
pub fn chi_from_transmission(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(
            "eta",
            format!("line transmission must satisfy 0 < eta <= 1, got {eta}"),
        ));
    }
    Ok((1.0 - eta) / eta)
}

/// Line transmission `η` and Bob's input-referred added noise `χ` (N₀ units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    eta: f64,
    chi: f64,
}

impl ChannelParams {
    /// Pure-loss line of transmission `eta`.
    pub fn from_transmission(eta: f64) -> Result<Self> {
        let chi = chi_from_transmission(eta)?;
        Ok(Self { eta, chi })
    }

    /// Pure-loss line equivalent to added noise `chi`, i.e. `η = 1/(1 + χ)`.
    pub fn from_chi(chi: f64) -> Result<Self> {
        if !(chi.is_finite() && chi >= 0.0) {
            return Err(Error::invalid("chi", format!("added noise must be finite and >= 0, got {chi}")));
        }
        Ok(Self {
            eta: 1.0 / (1.0 + chi),
            chi,
        })
    }

    /// Line of transmission `eta` carrying excess noise on top of the loss,
    /// so that the total input-referred noise is `chi ≥ (1 − η)/η`.
    pub fn with_excess_noise(eta: f64, chi: f64) -> Result<Self> {
        let loss = chi_from_transmission(eta)?;
        if !chi.is_finite() || chi < loss * (1.0 - 1e-12) {
            return Err(Error::invalid(
                "chi",
                format!("added noise {chi} is below the loss floor (1 - eta)/eta = {loss}"),
            ));
        }
        Ok(Self { eta, chi: chi.max(loss) })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    /// Eve's minimum input-referred noise `1/χ`; infinite on a lossless line.
    pub fn eve_chi(&self) -> f64 {
        if self.chi == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.chi
        }
    }

    // Coefficients (on the outgoing field `a` and the vacuum `v`) of Bob's
    // and Eve's modes. For a pure-loss line this is the beam splitter
    // bob = √η a + √(1−η) v, eve = √(1−η) a − √η v.
    fn coefficients(&self) -> [f64; 4] {
        let eta = self.eta;
        let bob_v = (eta * self.chi).sqrt();
        let eve_v = if self.chi == 0.0 {
            eta.sqrt()
        } else {
            ((1.0 - eta) / self.chi).sqrt()
        };
        [eta.sqrt(), bob_v, (1.0 - eta).sqrt(), eve_v]
    }
}

/// Bob's homodyne detector. An ideal detector measures the selected
/// quadrature exactly.
///
/// Non-ideal detectors use a declared saturation model: the gain is scaled
/// so the r.m.s. signal fits the dynamics `σ`, which adds a penalty
/// `V² / (σ² b0)` to the electronic noise `b0`. The sum is added at the
/// detector output; referred to the line input it is divided by `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    pub b0: f64,
    pub dynamics: f64,
    pub ideal: bool,
}

impl DetectorModel {
    pub const IDEAL: DetectorModel = DetectorModel {
        b0: 0.0,
        dynamics: f64::INFINITY,
        ideal: true,
    };

    pub fn new(b0: f64, dynamics: f64) -> Result<Self> {
        if !(b0.is_finite() && b0 > 0.0) {
            return Err(Error::invalid(
                "b0",
                format!("non-ideal detector needs electronic noise b0 > 0, got {b0}"),
            ));
        }
        if !(dynamics > 1.0) {
            return Err(Error::invalid(
                "dynamics",
                format!("detector dynamics must exceed 1, got {dynamics}"),
            ));
        }
        Ok(Self {
            b0,
            dynamics,
            ideal: false,
        })
    }

    /// Noise variance added at the detector for a beam of total variance `v`.
    pub fn added_variance(&self, v: f64) -> f64 {
        if self.ideal {
            0.0
        } else {
            let sat = if self.dynamics.is_infinite() {
                0.0
            } else {
                v * v / (self.dynamics * self.dynamics * self.b0)
            };
            self.b0 + sat
        }
    }
}

/// Quadratures arriving at Bob and captured by Eve, one per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionRecord {
    pub bob: Vec<QuadraturePair>,
    pub eve: Vec<QuadraturePair>,
}

impl TransmissionRecord {
    pub fn len(&self) -> usize {
        self.bob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bob.is_empty()
    }
}

const STREAM_FIELD_X: u64 = 11;
const STREAM_FIELD_P: u64 = 12;
const STREAM_VAC_X: u64 = 13;
const STREAM_VAC_P: u64 = 14;

/// Sends Alice's symbols through the tapped line.
///
/// The outgoing field on each quadrature is modulation plus the variant's
/// intrinsic noise (1 for coherent states, `s` or `1/s` for squeezed ones,
/// `<N²>` or `V` for the EPR-equivalent beam). A fresh vacuum mode enters
/// the tap. Bob's input-referred noise is `χ` and Eve's is `1/χ`.
pub fn propagate(
    symbols: &[AliceSymbol],
    config: &ModulationConfig,
    channel: &ChannelParams,
    sampler: &GaussianSampler,
) -> Result<TransmissionRecord> {
    if symbols.is_empty() {
        return Err(Error::invalid("samples", "cannot propagate an empty symbol list"));
    }
    let [bob_a, bob_v, eve_a, eve_v] = channel.coefficients();
    let fx = sampler.fork(STREAM_FIELD_X);
    let fp = sampler.fork(STREAM_FIELD_P);
    let vx = sampler.fork(STREAM_VAC_X);
    let vp = sampler.fork(STREAM_VAC_P);

    let modes: Vec<(QuadraturePair, QuadraturePair)> = par::map_range(symbols.len(), |i| {
        let sym = &symbols[i];
        let idx = i as u64;
        let mut bob = QuadraturePair::default();
        let mut eve = QuadraturePair::default();
        for (q, field, vac) in [(Quadrature::X, &fx, &vx), (Quadrature::P, &fp, &vp)] {
            let a = sym.modulation.get(q) + field.gaussian(idx, intrinsic_variance(config, sym.axis, q));
            let v = vac.normal(idx);
            bob.set(q, bob_a * a + bob_v * v);
            eve.set(q, eve_a * a - eve_v * v);
        }
        (bob, eve)
    });
    let (bob, eve) = modes.into_iter().unzip();
    Ok(TransmissionRecord { bob, eve })
}

/// Values Bob records, with the detector noise variance that was added.
#[derive(Debug, Clone, PartialEq)]
pub struct BobMeasurement {
    pub values: Vec<f64>,
    pub added_variance: f64,
}

const STREAM_DETECTOR: u64 = 21;

/// Homodyne measurement of the quadrature selected in `bases` for each symbol.
pub fn bob_measure(
    record: &TransmissionRecord,
    bases: &[Quadrature],
    detector: &DetectorModel,
    config: &ModulationConfig,
    sampler: &GaussianSampler,
) -> Result<BobMeasurement> {
    if bases.len() != record.len() {
        return Err(Error::LengthMismatch {
            what: "bases vs transmission record",
            left: bases.len(),
            right: record.len(),
        });
    }
    if !detector.ideal && detector.b0 <= 0.0 {
        return Err(Error::invalid("b0", "non-ideal detector needs b0 > 0"));
    }
    let added = detector.added_variance(config.total_variance());
    let noise = sampler.fork(STREAM_DETECTOR);
    let values = par::map_range(record.len(), |i| {
        let clean = record.bob[i].get(bases[i]);
        if added == 0.0 {
            clean
        } else {
            clean + noise.gaussian(i as u64, added)
        }
    });
    Ok(BobMeasurement {
        values,
        added_variance: added,
    })
}

/// Bob's independent uniform basis choices.
pub fn random_bases(count: usize, sampler: &GaussianSampler) -> Vec<Quadrature> {
    par::map_range(count, |i| Quadrature::from_bit(sampler.bit(i as u64)))
}

/// Picks quadrature `bases[i]` out of `pairs[i]`.
pub fn select_quadratures(pairs: &[QuadraturePair], bases: &[Quadrature]) -> Vec<f64> {
    pairs.iter().zip(bases).map(|(pair, &q)| pair.get(q)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolNote {
    pub variant: Variant,
    /// Alice's random numbers left unused because Bob measured the other
    /// quadrature.
    pub unused_alice_components: usize,
    /// Symbols dropped entirely (EPR: Alice and Bob measured different quadratures).
    pub discarded_symbols: usize,
}

/// Aligned Alice/Bob data after the basis announcement.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftedFrame {
    pub alice_values: Vec<f64>,
    pub bob_values: Vec<f64>,
    pub basis_tags: Vec<Quadrature>,
    /// Original symbol index of each retained entry.
    pub indices: Vec<usize>,
    /// Squeezed variant: whether Bob measured the squeezed quadrature.
    /// Always true for the other variants.
    pub axis_match: Vec<bool>,
    pub note: ProtocolNote,
}

impl SiftedFrame {
    pub fn len(&self) -> usize {
        self.alice_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice_values.is_empty()
    }

    /// Builds a frame directly from paired values (all tagged X). Used for
    /// synthetic frames in tests and the noiseless reconciliation mode.
    pub fn from_values(alice_values: Vec<f64>, bob_values: Vec<f64>) -> Result<Self> {
        if alice_values.len() != bob_values.len() {
            return Err(Error::LengthMismatch {
                what: "alice vs bob values",
                left: alice_values.len(),
                right: bob_values.len(),
            });
        }
        let n = alice_values.len();
        Ok(Self {
            alice_values,
            bob_values,
            basis_tags: vec![Quadrature::X; n],
            indices: (0..n).collect(),
            axis_match: vec![true; n],
            note: ProtocolNote {
                variant: Variant::Coherent,
                unused_alice_components: 0,
                discarded_symbols: 0,
            },
        })
    }

    /// Sub-frame of the entries whose `axis_match` flag equals `matched`.
    pub fn filter_axis(&self, matched: bool) -> SiftedFrame {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.axis_match[i] == matched).collect();
        SiftedFrame {
            alice_values: keep.iter().map(|&i| self.alice_values[i]).collect(),
            bob_values: keep.iter().map(|&i| self.bob_values[i]).collect(),
            basis_tags: keep.iter().map(|&i| self.basis_tags[i]).collect(),
            indices: keep.iter().map(|&i| self.indices[i]).collect(),
            axis_match: vec![matched; keep.len()],
            note: self.note,
        }
    }
}

/// Keeps, for each symbol, Alice's modulation value on the quadrature Bob
/// measured. EPR symbols whose measured quadratures differ are dropped.
pub fn sift(
    alice: &[AliceSymbol],
    config: &ModulationConfig,
    bases: &[Quadrature],
    bob_values: &[f64],
) -> Result<SiftedFrame> {
    if alice.len() != bases.len() || alice.len() != bob_values.len() {
        return Err(Error::LengthMismatch {
            what: "alice symbols, bases and bob values",
            left: alice.len(),
            right: bases.len().min(bob_values.len()),
        });
    }
    let variant = config.variant();
    let n = alice.len();
    let mut frame = SiftedFrame {
        alice_values: Vec::with_capacity(n),
        bob_values: Vec::with_capacity(n),
        basis_tags: Vec::with_capacity(n),
        indices: Vec::with_capacity(n),
        axis_match: Vec::with_capacity(n),
        note: ProtocolNote {
            variant,
            unused_alice_components: 0,
            discarded_symbols: 0,
        },
    };
    for (i, ((sym, &basis), &bob)) in alice.iter().zip(bases).zip(bob_values).enumerate() {
        let matched = sym.axis.is_none_or(|a| a == basis);
        if variant == Variant::EprEquivalent && !matched {
            frame.note.discarded_symbols += 1;
            continue;
        }
        if variant != Variant::EprEquivalent {
            frame.note.unused_alice_components += 1;
        }
        frame.alice_values.push(sym.modulation.get(basis));
        frame.bob_values.push(bob);
        frame.basis_tags.push(basis);
        frame.indices.push(i);
        frame.axis_match.push(matched);
    }
    Ok(frame)
}
