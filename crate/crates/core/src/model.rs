//! State preparation in shot-noise units (N₀ = 1).
//!
//! All variances in this crate are expressed in units of the vacuum
//! quadrature variance, so a coherent state has unit variance on both
//! quadratures.

use crate::error::{Error, Result};
use crate::par;
use crate::sampler::GaussianSampler;

/// One of the two conjugate field quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Quadrature::P
        } else {
            Quadrature::X
        }
    }

    pub fn other(self) -> Self {
        match self {
            Quadrature::X => Quadrature::P,
            Quadrature::P => Quadrature::X,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Quadrature::X => 'X',
            Quadrature::P => 'P',
        }
    }
}

/// X and P amplitudes of one symbol, in √N₀ units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadraturePair {
    pub x: f64,
    pub p: f64,
}

impl QuadraturePair {
    pub const fn new(x: f64, p: f64) -> Self {
        Self { x, p }
    }

    pub fn get(&self, q: Quadrature) -> f64 {
        match q {
            Quadrature::X => self.x,
            Quadrature::P => self.p,
        }
    }

    pub fn set(&mut self, q: Quadrature, value: f64) {
        match q {
            Quadrature::X => self.x = value,
            Quadrature::P => self.p = value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Coherent,
    Squeezed,
    EprEquivalent,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Coherent => "coherent",
            Variant::Squeezed => "squeezed",
            Variant::EprEquivalent => "epr",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coherent" => Ok(Variant::Coherent),
            "squeezed" => Ok(Variant::Squeezed),
            "epr" | "epr-equivalent" | "eprequivalent" => Ok(Variant::EprEquivalent),
            other => Err(Error::invalid(
                "variant",
                format!("unknown variant `{other}` (expected coherent, squeezed or epr)"),
            )),
        }
    }
}

/// Protocol variant together with its modulation variances. The checked
/// constructors enforce:
///
/// * coherent: `V = V_A + 1`, `V_A ≥ 0`
/// * squeezed: `0 < s ≤ 1`, `V ≥ 1/s`
/// * EPR-equivalent: `0 < s ≤ 1`, `V = (s + 1/s) / 2`
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModulationConfig {
    Coherent { v_a: f64 },
    Squeezed { v: f64, s: f64 },
    EprEquivalent { s: f64 },
}

fn check_squeezing(s: f64) -> Result<()> {
    if !(s.is_finite() && s > 0.0 && s <= 1.0) {
        return Err(Error::invalid(
            "s",
            format!("squeezing factor must satisfy 0 < s <= 1, got {s}"),
        ));
    }
    Ok(())
}

impl ModulationConfig {
    pub fn coherent(v_a: f64) -> Result<Self> {
        if !(v_a.is_finite() && v_a >= 0.0) {
            return Err(Error::invalid(
                "va",
                format!("modulation variance must be finite and >= 0, got {v_a}"),
            ));
        }
        Ok(ModulationConfig::Coherent { v_a })
    }

    pub fn squeezed(v: f64, s: f64) -> Result<Self> {
        squeezed_variances(v, s)?;
        Ok(ModulationConfig::Squeezed { v, s })
    }

    pub fn epr(s: f64) -> Result<Self> {
        check_squeezing(s)?;
        Ok(ModulationConfig::EprEquivalent { s })
    }

    pub fn variant(&self) -> Variant {
        match self {
            ModulationConfig::Coherent { .. } => Variant::Coherent,
            ModulationConfig::Squeezed { .. } => Variant::Squeezed,
            ModulationConfig::EprEquivalent { .. } => Variant::EprEquivalent,
        }
    }

    /// Total variance V of either outgoing quadrature.
    pub fn total_variance(&self) -> f64 {
        match *self {
            ModulationConfig::Coherent { v_a } => v_a + 1.0,
            ModulationConfig::Squeezed { v, .. } => v,
            ModulationConfig::EprEquivalent { s } => 0.5 * (s + 1.0 / s),
        }
    }

    /// Squeezing factor; 1 for coherent states.
    pub fn squeezing(&self) -> f64 {
        match *self {
            ModulationConfig::Coherent { .. } => 1.0,
            ModulationConfig::Squeezed { s, .. } | ModulationConfig::EprEquivalent { s } => s,
        }
    }

    /// Fraction of transmitted pulses that survive sifting.
    pub fn sifting_factor(&self) -> f64 {
        match self {
            ModulationConfig::EprEquivalent { .. } => 0.5,
            _ => 1.0,
        }
    }
}

/// Modulation variances `(V_xA, V_pA)` of an X-squeezed beam with total
/// variance `v`, chosen so that X- and P-squeezed states are
/// indistinguishable: `V_xA + s = V_pA + 1/s = V`.
pub fn squeezed_variances(v: f64, s: f64) -> Result<(f64, f64)> {
    check_squeezing(s)?;
    if !v.is_finite() || v < 1.0 / s {
        return Err(Error::invalid(
            "v",
            format!(
                "squeezed protocol infeasible: V = {v} < 1/s = {} gives a negative P modulation variance",
                1.0 / s
            ),
        ));
    }
    Ok((v - s, v - 1.0 / s))
}

/// Bob's beam in the EPR scheme written as `X_out = g X_A + N`, with
/// `<X_A N> = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EprEquivalentBeam {
    pub g: f64,
    /// Residual quadrature noise `<N²>`.
    pub n2: f64,
    /// Total variance `(s + 1/s) / 2`.
    pub v: f64,
}

impl EprEquivalentBeam {
    /// Variance of the effective modulation `g X_A`.
    pub fn modulation_variance(&self) -> f64 {
        self.g * self.g * self.v
    }
}

/// Decomposes a non-modulated EPR beam of squeezing `s` into an effective
/// modulation plus residual noise. Both closed forms of `g` and `<N²>` are
/// evaluated and must agree.
pub fn epr_equivalent(s: f64) -> Result<EprEquivalentBeam> {
    check_squeezing(s)?;
    let v = 0.5 * (s + 1.0 / s);
    let g = 1.0 - s / v;
    let n2 = s * (2.0 - s / v);
    let s2 = s * s;
    let g_alt = (1.0 - s2) / (1.0 + s2);
    let n2_alt = 2.0 * s / (1.0 + s2);
    debug_assert!((g - g_alt).abs() <= 1e-12, "g closed forms disagree");
    debug_assert!((n2 - n2_alt).abs() <= 1e-12, "<N^2> closed forms disagree");
    Ok(EprEquivalentBeam { g, n2, v })
}

/// One of Alice's prepared symbols. `axis` is the squeezed quadrature
/// (squeezed variant) or the quadrature Alice measured on her half of the
/// pair (EPR variant); it is `None` for coherent states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliceSymbol {
    pub modulation: QuadraturePair,
    pub axis: Option<Quadrature>,
}

// Sub-stream labels inside the sampler handed to `draw_alice_symbols`.
const STREAM_X: u64 = 1;
const STREAM_P: u64 = 2;
const STREAM_AXIS: u64 = 3;

/// Draws `count` symbols for the configured variant.
///
/// * coherent: x and p i.i.d. `N(0, V_A)`
/// * squeezed: squeezed axis by one fair bit; the squeezed quadrature is
///   modulated with `V − s`, the other with `V − 1/s`
/// * EPR: Alice's measured quadrature by one fair bit; that quadrature
///   carries the effective modulation `g X_A` of variance `g² V`, the
///   other carries none
pub fn draw_alice_symbols(
    config: &ModulationConfig,
    count: usize,
    sampler: &GaussianSampler,
) -> Result<Vec<AliceSymbol>> {
    if count == 0 {
        return Err(Error::invalid("samples", "symbol count must be >= 1"));
    }
    let sx = sampler.fork(STREAM_X);
    let sp = sampler.fork(STREAM_P);
    let sa = sampler.fork(STREAM_AXIS);
    let symbols = match *config {
        ModulationConfig::Coherent { v_a } => {
            ModulationConfig::coherent(v_a)?;
            par::map_range(count, |i| AliceSymbol {
                modulation: QuadraturePair::new(
                    sx.gaussian(i as u64, v_a),
                    sp.gaussian(i as u64, v_a),
                ),
                axis: None,
            })
        }
        ModulationConfig::Squeezed { v, s } => {
            let (v_sq, v_anti) = squeezed_variances(v, s)?;
            par::map_range(count, |i| {
                let axis = Quadrature::from_bit(sa.bit(i as u64));
                let mut m = QuadraturePair::default();
                m.set(axis, sx.gaussian(i as u64, v_sq));
                m.set(axis.other(), sp.gaussian(i as u64, v_anti));
                AliceSymbol {
                    modulation: m,
                    axis: Some(axis),
                }
            })
        }
        ModulationConfig::EprEquivalent { s } => {
            let beam = epr_equivalent(s)?;
            let var = beam.modulation_variance();
            par::map_range(count, |i| {
                let axis = Quadrature::from_bit(sa.bit(i as u64));
                let mut m = QuadraturePair::default();
                m.set(axis, sx.gaussian(i as u64, var));
                AliceSymbol {
                    modulation: m,
                    axis: Some(axis),
                }
            })
        }
    };
    Ok(symbols)
}

/// Intrinsic (quantum) noise variance carried by quadrature `q` of a
/// symbol on top of its modulation.
pub(crate) fn intrinsic_variance(config: &ModulationConfig, axis: Option<Quadrature>, q: Quadrature) -> f64 {
    match *config {
        ModulationConfig::Coherent { .. } => 1.0,
        ModulationConfig::Squeezed { s, .. } => {
            if Some(q) == axis {
                s
            } else {
                1.0 / s
            }
        }
        ModulationConfig::EprEquivalent { s } => {
            let v = 0.5 * (s + 1.0 / s);
            if Some(q) == axis {
                2.0 * s / (1.0 + s * s)
            } else {
                // Alice's measurement projects this quadrature onto a
                // thermal state uncorrelated with her result.
                v
            }
        }
    }
}
