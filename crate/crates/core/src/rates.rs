//! Closed-form information rates (bits per symbol) and the Monte Carlo
//! mutual-information oracle used to check the simulator against them.
//!
//! Conventions: logarithms are base 2, variances are in shot-noise units,
//! and `χ` is Bob's input-referred added noise (Eve's is `1/χ`). At `χ = 0`
//! Eve's signal-to-noise ratio is taken as its limit, 0.

use std::f64::consts::LN_2;

use crate::channel::{ChannelParams, DetectorModel, SiftedFrame};
use crate::error::{Error, Result};
use crate::model::{epr_equivalent, ModulationConfig, Variant};
use crate::{par, stats};

/// Shannon capacity `½ log₂(1 + Σ)` of a gaussian channel.
pub fn shannon_rate(snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return Err(Error::invalid("snr", format!("signal-to-noise ratio must be >= 0, got {snr}")));
    }
    Ok(0.5 * snr.ln_1p() / LN_2)
}

fn check_v(v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 1.0) {
        return Err(Error::invalid("v", format!("total variance must satisfy V >= 1, got {v}")));
    }
    Ok(())
}

fn check_chi(chi: f64, strictly_positive: bool) -> Result<()> {
    let ok = chi.is_finite() && if strictly_positive { chi > 0.0 } else { chi >= 0.0 };
    if !ok {
        let bound = if strictly_positive { "> 0" } else { ">= 0" };
        return Err(Error::invalid("chi", format!("added noise must be finite and {bound}, got {chi}")));
    }
    Ok(())
}

/// Bob's and Eve's signal-to-noise ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrPair {
    pub sigma_b: f64,
    pub sigma_e: f64,
}

/// `Σ_B = (V − 1)/(1 + χ)`, `Σ_E = (V − 1)/(1 + 1/χ)` for coherent states.
pub fn coherent_snrs(v: f64, chi: f64) -> Result<SnrPair> {
    check_v(v)?;
    check_chi(chi, false)?;
    let v_a = v - 1.0;
    let sigma_e = if chi == 0.0 { 0.0 } else { v_a * chi / (1.0 + chi) };
    Ok(SnrPair {
        sigma_b: v_a / (1.0 + chi),
        sigma_e,
    })
}

/// Coherent-state SNRs with Bob's detector noise added. The detector noise
/// is referred to the line input through the transmission `η`.
pub fn detector_limited_snrs(v: f64, channel: &ChannelParams, detector: &DetectorModel) -> Result<SnrPair> {
    let mut snr = coherent_snrs(v, channel.chi())?;
    let extra = detector.added_variance(v) / channel.eta();
    snr.sigma_b = (v - 1.0) / (1.0 + channel.chi() + extra);
    Ok(snr)
}

/// Secret rate of the coherent protocol, `½ log₂((V + χ)/(1 + Vχ))`.
/// Negative for `χ > 1`.
pub fn delta_i_coherent(v: f64, chi: f64) -> Result<f64> {
    check_v(v)?;
    check_chi(chi, false)?;
    Ok(0.5 * ((v + chi) / (1.0 + v * chi)).log2())
}

/// Large-modulation limit `−½ log₂ χ`.
pub fn delta_i_asymptotic(chi: f64) -> Result<f64> {
    check_chi(chi, true)?;
    Ok(-0.5 * chi.log2())
}

/// `(I_AB, I_AE)` of the squeezed protocol, averaged over the four
/// squeezing-direction/measured-quadrature branches. Returns the branch
/// average; the `s`-dependent terms cancel in the difference.
pub fn squeezed_information_rates(v: f64, s: f64, chi: f64) -> Result<(f64, f64)> {
    let (v_sq, v_anti) = crate::model::squeezed_variances(v, s)?;
    check_chi(chi, true)?;
    let inv_chi = 1.0 / chi;
    let branch = |mod_var: f64, noise: f64, added: f64| 0.5 * (mod_var / (noise + added)).ln_1p() / LN_2;
    let i_ab = 0.5 * (branch(v_sq, s, chi) + branch(v_anti, 1.0 / s, chi));
    let i_ae = 0.5 * (branch(v_sq, s, inv_chi) + branch(v_anti, 1.0 / s, inv_chi));
    debug_assert!({
        let common = 0.25 * (chi + inv_chi + s + 1.0 / s).log2();
        let ab = 0.25 * ((v + chi) * (v + chi) / chi).log2() - common;
        let ae = 0.25 * ((v + inv_chi) * (v + inv_chi) / inv_chi).log2() - common;
        (ab - i_ab).abs() < 1e-9 && (ae - i_ae).abs() < 1e-9
    });
    Ok((i_ab, i_ae))
}

/// Squeezing factor `s ≤ 1` of the EPR pair whose beams have variance `V`.
pub fn epr_squeezing_for_variance(v: f64) -> Result<f64> {
    check_v(v)?;
    // smaller root of s² − 2Vs + 1 = 0, written without cancellation
    Ok(1.0 / (v + (v * v - 1.0).sqrt()))
}

/// Bob's and Eve's SNRs per retained EPR symbol.
pub fn epr_snrs(v: f64, chi: f64) -> Result<SnrPair> {
    let beam = epr_equivalent(epr_squeezing_for_variance(v)?)?;
    let signal = beam.modulation_variance();
    let sigma_e = if chi == 0.0 { 0.0 } else { signal / (beam.n2 + 1.0 / chi) };
    Ok(SnrPair {
        sigma_b: signal / (beam.n2 + chi),
        sigma_e,
    })
}

/// Secret rate of the EPR protocol per transmitted pulse.
///
/// Evaluated through the equivalent modulated beam: `Σ_B = g²V/(<N²> + χ)`
/// and `Σ_E = g²V/(<N²> + 1/χ)` per retained symbol, then weighted by ¼
/// (half of the pulses survive sifting). The result equals
/// `½ log₂((V + χ)/(1 + χV))`.
pub fn delta_i_epr(v: f64, chi: f64) -> Result<f64> {
    check_chi(chi, true)?;
    let snr = epr_snrs(v, chi)?;
    let rate = 0.25 * ((1.0 + snr.sigma_b) / (1.0 + snr.sigma_e)).log2();
    debug_assert!((rate - 0.5 * ((v + chi) / (1.0 + chi * v)).log2()).abs() < 1e-10);
    Ok(rate)
}

/// `ΔI_eff = α I_AB − I_AE`.
pub fn effective_delta_i(alpha: f64, i_ab: f64, i_ae: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("reconciliation efficiency must lie in [0, 1], got {alpha}")));
    }
    Ok(alpha * i_ab - i_ae)
}

/// Rates for one protocol configuration. `i_ab`, `i_ae` and the deltas are
/// per sifted symbol; multiply by `sifting_factor` for per-pulse figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub i_ab: f64,
    pub i_ae: f64,
    pub delta_i: f64,
    pub delta_i_eff: f64,
    pub alpha: f64,
    pub variant: Variant,
    pub v: f64,
    pub s: f64,
    pub chi: f64,
    pub sifting_factor: f64,
}

impl RateReport {
    pub fn per_pulse_delta_i(&self) -> f64 {
        self.sifting_factor * self.delta_i
    }

    pub fn per_pulse_delta_i_eff(&self) -> f64 {
        self.sifting_factor * self.delta_i_eff
    }
}

/// Evaluates the closed forms for any variant. Detector noise is only
/// modelled for coherent states.
pub fn rate_report(
    config: &ModulationConfig,
    channel: &ChannelParams,
    detector: &DetectorModel,
    alpha: f64,
) -> Result<RateReport> {
    let chi = channel.chi();
    let v = config.total_variance();
    let (i_ab, i_ae) = match *config {
        ModulationConfig::Coherent { .. } => {
            let snr = detector_limited_snrs(v, channel, detector)?;
            (shannon_rate(snr.sigma_b)?, shannon_rate(snr.sigma_e)?)
        }
        _ if !detector.ideal => {
            return Err(Error::invalid(
                "b0",
                "detector noise is modelled for the coherent variant only",
            ))
        }
        ModulationConfig::Squeezed { v, s } => {
            if chi == 0.0 {
                // Eve decouples; Bob averages his two branches.
                let (v_sq, v_anti) = crate::model::squeezed_variances(v, s)?;
                let i_ab = 0.5 * (shannon_rate(v_sq / s)? + shannon_rate(v_anti * s)?);
                (i_ab, 0.0)
            } else {
                squeezed_information_rates(v, s, chi)?
            }
        }
        ModulationConfig::EprEquivalent { .. } => {
            let snr = epr_snrs(v, chi)?;
            (shannon_rate(snr.sigma_b)?, shannon_rate(snr.sigma_e)?)
        }
    };
    Ok(RateReport {
        i_ab,
        i_ae,
        delta_i: i_ab - i_ae,
        delta_i_eff: effective_delta_i(alpha, i_ab, i_ae)?,
        alpha,
        variant: config.variant(),
        v,
        s: config.squeezing(),
        chi,
        sifting_factor: config.sifting_factor(),
    })
}

/// Largest mutual information the empirical estimator reports; reached
/// when `1 − ρ²` underflows `1e-12`.
pub const MI_CAP_BITS: f64 = 19.931568569324174;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub bits: f64,
    pub std_error: f64,
    pub rho: f64,
    pub samples: usize,
    pub capped: bool,
}

impl MiEstimate {
    /// Signal-to-noise ratio implied by the correlation, `ρ²/(1 − ρ²)`.
    pub fn snr(&self) -> f64 {
        let r2 = self.rho * self.rho;
        r2 / (1.0 - r2).max(1e-12)
    }

    /// Delta-method standard error of [`MiEstimate::snr`].
    pub fn snr_std_error(&self) -> f64 {
        let r2 = self.rho * self.rho;
        2.0 * self.rho.abs() / ((1.0 - r2).max(1e-12) * (self.samples as f64).sqrt())
    }
}

/// Gaussian mutual information `−½ log₂(1 − ρ²)` from the sample
/// correlation of a frame.
///
/// The standard error combines the delta-method term `|ρ| / (ln 2 √N)` with
/// the null spread of `ρ̂²`, so it stays meaningful near ρ = 0.
pub fn empirical_mutual_information(frame: &SiftedFrame) -> Result<MiEstimate> {
    let n = frame.len();
    if n < 100 {
        return Err(Error::DegenerateFrame(format!("need at least 100 entries, got {n}")));
    }
    let rho = stats::correlation(&frame.alice_values, &frame.bob_values)
        .ok_or_else(|| Error::DegenerateFrame("zero variance on one side".into()))?;
    let one_minus = 1.0 - rho * rho;
    let (bits, capped) = if one_minus < 1e-12 {
        (MI_CAP_BITS, true)
    } else {
        (-0.5 * one_minus.log2(), false)
    };
    let nf = n as f64;
    let std_error = (rho * rho + 0.5 / nf).sqrt() / (LN_2 * nf.sqrt());
    Ok(MiEstimate {
        bits,
        std_error,
        rho,
        samples: n,
        capped,
    })
}

/// Outcome of the modulation-variance search under the detector model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationOptimum {
    pub v_a: f64,
    pub delta_i_eff: f64,
    /// Number of local maxima seen on the scan grid (1 = unimodal).
    pub grid_maxima: usize,
}

/// `ΔI_eff` of the coherent protocol at modulation `v_a` with detector noise.
pub fn detector_limited_rate(v_a: f64, channel: &ChannelParams, detector: &DetectorModel, alpha: f64) -> Result<f64> {
    let snr = detector_limited_snrs(v_a + 1.0, channel, detector)?;
    effective_delta_i(alpha, shannon_rate(snr.sigma_b)?, shannon_rate(snr.sigma_e)?)
}

const SCAN_POINTS: usize = 4001;
const SCAN_LOG10_MIN: f64 = -3.0;
const SCAN_LOG10_MAX: f64 = 12.0;

/// Maximizes `ΔI_eff(V_A)` on a pure-loss line of noise `chi` seen through
/// a detector with electronic noise `b0` and dynamics `sigma`.
///
/// A dense log-spaced scan locates the maximum and counts local maxima;
/// golden-section search then refines it to 10⁻³ relative on `V_A`.
pub fn optimal_modulation(sigma: f64, b0: f64, chi: f64, alpha: f64) -> Result<ModulationOptimum> {
    let detector = DetectorModel::new(b0, sigma)?;
    let channel = ChannelParams::from_chi(chi)?;
    effective_delta_i(alpha, 0.0, 0.0)?;
    let step = (SCAN_LOG10_MAX - SCAN_LOG10_MIN) / (SCAN_POINTS - 1) as f64;
    let rate_at = |log_v: f64| detector_limited_rate(10f64.powf(log_v), &channel, &detector, alpha).unwrap_or(f64::NEG_INFINITY);
    let grid: Vec<f64> = par::map_range(SCAN_POINTS, |i| rate_at(SCAN_LOG10_MIN + step * i as f64));

    let (best, &best_rate) = grid
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    if best_rate <= 0.0 {
        return Err(Error::NoPositiveRate(format!(
            "ΔI_eff <= 0 for every V_A in [1e{SCAN_LOG10_MIN}, 1e{SCAN_LOG10_MAX}] at chi = {chi}"
        )));
    }
    if best == 0 || best == SCAN_POINTS - 1 {
        return Err(Error::NoPositiveRate(format!(
            "maximum sits on the scan boundary (V_A = 1e{})",
            SCAN_LOG10_MIN + step * best as f64
        )));
    }
    let grid_maxima = (1..SCAN_POINTS - 1)
        .filter(|&i| grid[i] > grid[i - 1] && grid[i] >= grid[i + 1])
        .count();

    // golden section on log10 V_A between the neighbours of the grid maximum
    let (mut lo, mut hi) = (
        SCAN_LOG10_MIN + step * (best - 1) as f64,
        SCAN_LOG10_MIN + step * (best + 1) as f64,
    );
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (rate_at(c), rate_at(d));
    // 10^(hi - lo) - 1 < 1e-4 keeps V_A well inside the 1e-3 tolerance
    while hi - lo > 4e-5 {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = rate_at(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = rate_at(d);
        }
    }
    let log_v = 0.5 * (lo + hi);
    Ok(ModulationOptimum {
        v_a: 10f64.powf(log_v),
        delta_i_eff: rate_at(log_v),
        grid_maxima,
    })
}

/// Log-log slope of the optimal `V_A` against the detector dynamics.
pub fn modulation_scaling_exponent(sigmas: &[f64], b0: f64, chi: f64, alpha: f64) -> Result<f64> {
    let mut xs = Vec::with_capacity(sigmas.len());
    let mut ys = Vec::with_capacity(sigmas.len());
    for &s in sigmas {
        let opt = optimal_modulation(s, b0, chi, alpha)?;
        xs.push(s.ln());
        ys.push(opt.v_a.ln());
    }
    Ok(stats::slope(&xs, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn shannon_examples() {
        assert_eq!(shannon_rate(0.0).unwrap(), 0.0);
        assert!((shannon_rate(15.0).unwrap() - 2.0).abs() < EPS);
        assert!((shannon_rate(3.0).unwrap() - 1.0).abs() < EPS);
        assert!(shannon_rate(-0.1).is_err());
        assert!(shannon_rate(f64::NAN).is_err());
    }

    #[test]
    fn coherent_snr_examples() {
        let s = coherent_snrs(51.0, 0.25).unwrap();
        assert!((s.sigma_b - 40.0).abs() < EPS && (s.sigma_e - 10.0).abs() < EPS);
        assert!((1.0 + s.sigma_b - 51.25 / 1.25).abs() < EPS);
        assert_eq!(coherent_snrs(51.0, 0.0).unwrap(), SnrPair { sigma_b: 50.0, sigma_e: 0.0 });
        assert_eq!(coherent_snrs(1.0, 0.7).unwrap(), SnrPair { sigma_b: 0.0, sigma_e: 0.0 });
        assert!(coherent_snrs(0.5, 0.1).is_err());
    }

    #[test]
    fn delta_i_coherent_examples() {
        for v in [1.0, 2.0, 51.0, 1000.0] {
            assert!(delta_i_coherent(v, 1.0).unwrap().abs() < EPS);
        }
        let d = delta_i_coherent(51.0, 0.25).unwrap();
        assert!((d - 0.5 * (51.25f64 / 13.75).log2()).abs() < EPS);
        assert!((d - 0.9491).abs() < 1e-4);
        let via_shannon = shannon_rate(40.0).unwrap() - shannon_rate(10.0).unwrap();
        assert!((d - via_shannon).abs() < EPS);
        assert_eq!(delta_i_coherent(1.0, 0.3).unwrap(), 0.0);
        assert!(delta_i_coherent(5.0, 1.5).unwrap() < 0.0);
    }

    #[test]
    fn asymptote_examples() {
        assert_eq!(delta_i_asymptotic(1.0).unwrap(), 0.0);
        assert!((delta_i_asymptotic(0.5).unwrap() - 0.5).abs() < EPS);
        assert!((delta_i_asymptotic(0.1).unwrap() - 1.6610).abs() < 1e-4);
        assert!((delta_i_coherent(1e12, 0.1).unwrap() - delta_i_asymptotic(0.1).unwrap()).abs() < 1e-9);
        assert!(delta_i_asymptotic(0.0).is_err());
        assert!(delta_i_asymptotic(-1.0).is_err());
        // eta form
        let eta: f64 = 0.8;
        let chi = (1.0 - eta) / eta;
        assert!((delta_i_asymptotic(chi).unwrap() - 0.5 * (eta / (1.0 - eta)).log2()).abs() < EPS);
    }

    #[test]
    fn squeezed_examples() {
        let (ab, ae) = squeezed_information_rates(10.0, 0.5, 0.25).unwrap();
        assert!((ab - 1.4901).abs() < 1e-4, "{ab}");
        assert!((ae - 0.7150).abs() < 1e-4, "{ae}");
        assert!((ab - ae - 0.7751).abs() < 1e-4);
        let (ab1, ae1) = squeezed_information_rates(10.0, 1.0, 0.25).unwrap();
        assert!((ab1 - ae1 - delta_i_coherent(10.0, 0.25).unwrap()).abs() < EPS);
        let (ab2, ae2) = squeezed_information_rates(10.0, 0.2, 0.25).unwrap();
        assert!((ab2 - ae2 - (ab - ae)).abs() < EPS);
        assert!(squeezed_information_rates(1.5, 0.5, 0.25).is_err());
    }

    #[test]
    fn epr_examples() {
        let d = delta_i_epr(1.25, 0.25).unwrap();
        assert!((d - 0.5 * (1.5f64 / 1.3125).log2()).abs() < EPS);
        assert!((d - 0.0963).abs() < 1e-4);
        assert!(delta_i_epr(1.0, 0.4).unwrap().abs() < EPS);
        assert!(delta_i_epr(1.25, 1.0).unwrap().abs() < EPS);
        assert!(delta_i_epr(0.9, 0.4).is_err());
        // 1 + Σ_B = V(V+χ)/(1+χV)
        let snr = epr_snrs(1.25, 0.25).unwrap();
        assert!((1.0 + snr.sigma_b - 1.25 * 1.5 / 1.3125).abs() < EPS);
    }

    #[test]
    fn effective_rate_examples() {
        let ab = shannon_rate(40.0).unwrap();
        let ae = shannon_rate(10.0).unwrap();
        assert_eq!(effective_delta_i(1.0, ab, ae).unwrap(), ab - ae);
        assert!(effective_delta_i(ae / ab, ab, ae).unwrap().abs() < EPS);
        let d = effective_delta_i(0.8, ab, ae).unwrap();
        assert!((d - 0.413305).abs() < 1e-6, "{d}");
        assert!(effective_delta_i(1.1, ab, ae).is_err());
    }

    #[test]
    fn rate_report_epr_carries_sifting() {
        let cfg = ModulationConfig::epr(0.5).unwrap();
        let ch = ChannelParams::from_chi(0.25).unwrap();
        let r = rate_report(&cfg, &ch, &DetectorModel::IDEAL, 1.0).unwrap();
        assert!((r.per_pulse_delta_i() - delta_i_epr(1.25, 0.25).unwrap()).abs() < EPS);
        assert!((r.delta_i - 2.0 * 0.0963).abs() < 2e-4);
    }

    #[test]
    fn rate_report_coherent_matches_closed_form() {
        let cfg = ModulationConfig::coherent(50.0).unwrap();
        let ch = ChannelParams::from_transmission(0.8).unwrap();
        let r = rate_report(&cfg, &ch, &DetectorModel::IDEAL, 1.0).unwrap();
        assert!((r.delta_i - delta_i_coherent(51.0, 0.25).unwrap()).abs() < EPS);
        assert_eq!(r.delta_i, r.delta_i_eff);
        let noisy = DetectorModel::new(0.01, 1e4).unwrap();
        assert!(rate_report(&ModulationConfig::epr(0.5).unwrap(), &ch, &noisy, 1.0).is_err());
        let rn = rate_report(&cfg, &ch, &noisy, 1.0).unwrap();
        assert!(rn.i_ab < r.i_ab && rn.i_ae == r.i_ae);
    }

    #[test]
    fn empirical_mi_edges() {
        let a: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = SiftedFrame::from_values(a.clone(), a.iter().map(|x| 2.0 * x).collect()).unwrap();
        let est = empirical_mutual_information(&f).unwrap();
        assert!(est.capped);
        assert_eq!(est.bits, MI_CAP_BITS);
        let short = SiftedFrame::from_values(vec![1.0; 50], vec![1.0; 50]).unwrap();
        assert!(empirical_mutual_information(&short).is_err());
        let flat = SiftedFrame::from_values(vec![0.0; 200], a[..200].to_vec()).unwrap();
        assert!(matches!(empirical_mutual_information(&flat), Err(Error::DegenerateFrame(_))));
    }

    #[test]
    fn mi_cap_constant() {
        assert!((MI_CAP_BITS + 0.5 * 1e-12f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn optimum_rejects_insecure_line() {
        assert!(matches!(optimal_modulation(1e4, 0.01, 1.0, 1.0), Err(Error::NoPositiveRate(_))));
        assert!(matches!(optimal_modulation(1e4, 0.01, 1.5, 1.0), Err(Error::NoPositiveRate(_))));
    }

    #[test]
    fn optimum_is_interior_and_unimodal() {
        let opt = optimal_modulation(1e4, 0.01, 0.25, 1.0).unwrap();
        assert_eq!(opt.grid_maxima, 1);
        assert!(opt.v_a > 1.0 && opt.v_a < 1e6, "{opt:?}");
        // no grid point beats the refined optimum
        let ch = ChannelParams::from_chi(0.25).unwrap();
        let det = DetectorModel::new(0.01, 1e4).unwrap();
        for k in [0.5, 0.9, 0.99, 1.01, 1.1, 2.0] {
            assert!(detector_limited_rate(opt.v_a * k, &ch, &det, 1.0).unwrap() <= opt.delta_i_eff + 1e-12);
        }
    }
}
