//! Command implementations behind the CLI. Each `cmd_*` returns a typed
//! outcome with a printable summary and writes its CSV (plus any key or
//! transcript files) when `out` is set.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::channel::{
    bob_measure, propagate, random_bases, select_quadratures, sift, ChannelParams, DetectorModel, ProtocolNote,
    SiftedFrame,
};
use crate::error::{Error, Result};
use crate::model::{draw_alice_symbols, squeezed_variances, ModulationConfig, Variant};
use crate::privacy::{compress, final_key_length, seed_length, AmplificationBudget, BinaryKey};
use crate::rates::{
    coherent_snrs, detector_limited_snrs, empirical_mutual_information, epr_snrs, rate_report, shannon_rate,
    MiEstimate, RateReport, SnrPair,
};
use crate::reconcile::{
    analyze, entropy_efficiency, optimize_thresholds, reconcile_with_analysis, reconciliation_efficiency,
    Efficiency, ReconciliationResult, SliceAnalysis, SliceConfig,
};
use crate::sampler::GaussianSampler;
use crate::par;

pub use config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const OTHER: u8 = 1;
    pub const INVALID_CONFIG: u8 = 2;
    pub const SELF_TEST: u8 = 3;
    pub const RECONCILIATION: u8 = 4;
    pub const NO_KEY: u8 = 5;
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter { .. } | Error::LengthMismatch { .. } => exit::INVALID_CONFIG,
        Error::ReconciliationFailed(_) => exit::RECONCILIATION,
        _ => exit::OTHER,
    }
}

/// Minimum frame length for `simulate`.
pub const MIN_SIMULATION_SAMPLES: usize = 1000;

/// Standard errors allowed between simulation and closed form.
pub const SELF_TEST_SIGMAS: f64 = 5.0;

/// A CSV body: fixed columns, preformatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

fn num(x: f64) -> String {
    x.to_string()
}

/// CSV text: `#` comment lines with the tool version, the command and
/// every config key, then the header row and the data rows, LF-terminated.
pub fn render_csv(command: &str, cfg: &RunConfig, table: &Table) -> Result<Vec<u8>> {
    let mut out = format!("# cvqkd {VERSION}\n# command={command}\n").into_bytes();
    for (k, v) in cfg.pairs() {
        out.extend(format!("# {k}={v}\n").bytes());
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&table.columns).map_err(io)?;
    for row in &table.rows {
        w.write_record(row).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn write_csv(command: &str, cfg: &RunConfig, table: &Table) -> Result<()> {
    if let Some(path) = &cfg.out {
        fs::write(path, render_csv(command, cfg, table)?)?;
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

// ---------------------------------------------------------------- rates

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Secure,
    Boundary,
    Insecure,
}

impl Verdict {
    pub fn from_chi(chi: f64) -> Self {
        if (chi - 1.0).abs() <= 1e-12 {
            Verdict::Boundary
        } else if chi < 1.0 {
            Verdict::Secure
        } else {
            Verdict::Insecure
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Secure => "SECURE",
            Verdict::Boundary => "BOUNDARY",
            Verdict::Insecure => "INSECURE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesOutcome {
    pub report: RateReport,
    pub eta: f64,
    pub verdict: Verdict,
}

impl RatesOutcome {
    pub fn table(&self) -> Table {
        let r = &self.report;
        Table {
            columns: vec![
                "variant",
                "v",
                "s",
                "chi",
                "eta",
                "alpha",
                "i_ab",
                "i_ae",
                "delta_i",
                "delta_i_eff",
                "sifting_factor",
                "delta_i_per_pulse",
                "delta_i_eff_per_pulse",
                "verdict",
            ],
            rows: vec![vec![
                r.variant.name().to_string(),
                num(r.v),
                num(r.s),
                num(r.chi),
                num(self.eta),
                num(r.alpha),
                num(r.i_ab),
                num(r.i_ae),
                num(r.delta_i),
                num(r.delta_i_eff),
                num(r.sifting_factor),
                num(r.per_pulse_delta_i()),
                num(r.per_pulse_delta_i_eff()),
                self.verdict.name().to_string(),
            ]],
        }
    }

    pub fn summary(&self) -> String {
        let r = &self.report;
        let mut s = String::new();
        let _ = writeln!(s, "variant            {}", r.variant.name());
        let _ = writeln!(s, "V                  {}", r.v);
        let _ = writeln!(s, "s                  {}", r.s);
        let _ = writeln!(s, "chi                {}  (eta = {})", r.chi, self.eta);
        let _ = writeln!(s, "I_AB               {:.6} bits/symbol", r.i_ab);
        let _ = writeln!(s, "I_AE               {:.6} bits/symbol", r.i_ae);
        let _ = writeln!(s, "delta_I            {:.6} bits/symbol", r.delta_i);
        let _ = writeln!(s, "delta_I_eff        {:.6} bits/symbol (alpha = {})", r.delta_i_eff, r.alpha);
        let _ = writeln!(s, "sifting factor     {}", r.sifting_factor);
        let _ = writeln!(s, "delta_I per pulse  {:.6} bits", r.per_pulse_delta_i());
        let _ = writeln!(s, "delta_I_eff/pulse  {:.6} bits", r.per_pulse_delta_i_eff());
        match r.variant {
            Variant::Coherent => {
                let _ = writeln!(s, "note               every pulse is kept; the unmeasured quadrature's random number is discarded");
            }
            Variant::Squeezed => {
                let _ = writeln!(s, "note               every pulse is kept; rates average the squeezed and anti-squeezed branches");
            }
            Variant::EprEquivalent => {
                let _ = writeln!(s, "note               half of the pulses survive sifting; per-pulse = sifting factor x per-symbol");
            }
        }
        let _ = writeln!(s, "verdict            {}", self.verdict.name());
        s
    }
}

pub fn cmd_rates(cfg: &RunConfig) -> Result<RatesOutcome> {
    cfg.validate()?;
    let channel = cfg.channel()?;
    let report = rate_report(&cfg.modulation()?, &channel, &cfg.detector()?, cfg.alpha)?;
    let out = RatesOutcome {
        report,
        eta: channel.eta(),
        verdict: Verdict::from_chi(channel.chi()),
    };
    write_csv("rates", cfg, &out.table())?;
    Ok(out)
}

// ---------------------------------------------------------------- fig1

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig1Row {
    pub chi: f64,
    pub v_a: f64,
    pub alpha: f64,
    pub delta_i_eff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroCrossing {
    pub v_a: f64,
    pub alpha: f64,
    /// `χ*` where `α I_AB = I_AE`; `None` when the curve is identically zero.
    pub chi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Outcome {
    /// Curves in order: the `α = 1` curves, then the reduced-efficiency
    /// ones; each curve by increasing `χ`.
    pub rows: Vec<Fig1Row>,
    pub curves: Vec<(f64, f64)>,
    pub crossings: Vec<ZeroCrossing>,
}

impl Fig1Outcome {
    pub fn curve(&self, v_a: f64, alpha: f64) -> Vec<Fig1Row> {
        self.rows.iter().copied().filter(|r| r.v_a == v_a && r.alpha == alpha).collect()
    }

    pub fn table(&self) -> Table {
        Table {
            columns: vec!["chi", "v_a", "alpha", "delta_i_eff"],
            rows: self
                .rows
                .iter()
                .map(|r| vec![num(r.chi), num(r.v_a), num(r.alpha), num(r.delta_i_eff)])
                .collect(),
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} curves, {} rows\n", self.curves.len(), self.rows.len());
        for c in &self.crossings {
            match c.chi {
                Some(chi) => {
                    let _ = writeln!(s, "V_A = {:<5} alpha = {:<5} crosses zero at chi = {chi:.6}", c.v_a, c.alpha);
                }
                None => {
                    let _ = writeln!(s, "V_A = {:<5} alpha = {:<5} is identically zero", c.v_a, c.alpha);
                }
            }
        }
        s
    }
}

/// `α I_AB − I_AE` for coherent modulation `v_a` on a line of noise `chi`.
pub fn fig1_value(chi: f64, v_a: f64, alpha: f64) -> Result<f64> {
    let snr = coherent_snrs(v_a + 1.0, chi)?;
    Ok(alpha * shannon_rate(snr.sigma_b)? - shannon_rate(snr.sigma_e)?)
}

/// Root of `α I_AB = I_AE` in `(0, 1]` by bisection.
pub fn fig1_zero_crossing(v_a: f64, alpha: f64) -> Result<Option<f64>> {
    if v_a == 0.0 {
        return Ok(None);
    }
    if alpha == 1.0 {
        return Ok(Some(1.0));
    }
    let (mut lo, mut hi) = (1e-12, 1.0);
    if fig1_value(lo, v_a, alpha)? <= 0.0 {
        return Ok(Some(0.0));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fig1_value(mid, v_a, alpha)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

pub fn cmd_fig1(cfg: &RunConfig) -> Result<Fig1Outcome> {
    if cfg.fig1_points < 2 {
        return Err(Error::invalid("fig1_points", "need at least 2 grid points"));
    }
    if !(cfg.fig1_chi_max > 0.0 && cfg.fig1_chi_max.is_finite()) {
        return Err(Error::invalid("fig1_chi_max", "must be finite and > 0"));
    }
    if cfg.fig1_va.len() != cfg.fig1_alpha.len() {
        return Err(Error::invalid("fig1_alpha", "need one alpha per V_A value"));
    }
    for &v in &cfg.fig1_va {
        ModulationConfig::coherent(v).map_err(|_| Error::invalid("fig1_va", format!("bad V_A {v}")))?;
    }
    for &a in &cfg.fig1_alpha {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::invalid("fig1_alpha", format!("alpha {a} outside [0, 1]")));
        }
    }
    let mut curves: Vec<(f64, f64)> = cfg.fig1_va.iter().map(|&v| (v, 1.0)).collect();
    curves.extend(cfg.fig1_va.iter().copied().zip(cfg.fig1_alpha.iter().copied()));
    let points = cfg.fig1_points;
    let chis: Vec<f64> = (1..=points).map(|i| cfg.fig1_chi_max * i as f64 / points as f64).collect();
    let rows = par::map_range(curves.len() * points, |idx| {
        let (v_a, alpha) = curves[idx / points];
        let chi = chis[idx % points];
        fig1_value(chi, v_a, alpha).map(|d| Fig1Row {
            chi,
            v_a,
            alpha,
            delta_i_eff: d,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let crossings = cfg
        .fig1_va
        .iter()
        .zip(&cfg.fig1_alpha)
        .map(|(&v_a, &alpha)| {
            Ok(ZeroCrossing {
                v_a,
                alpha,
                chi: fig1_zero_crossing(v_a, alpha)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = Fig1Outcome { rows, curves, crossings };
    write_csv("fig1", cfg, &out.table())?;
    Ok(out)
}

// ---------------------------------------------------------------- simulate

/// Alice's frame against Bob and against Eve, plus the raw counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFrames {
    pub bob: SiftedFrame,
    pub eve: SiftedFrame,
    pub detector_variance: f64,
}

/// Runs draw, propagate, measure and sift. Eve measures the quadrature Bob
/// announces.
pub fn simulate_frames(
    modulation: &ModulationConfig,
    channel: &ChannelParams,
    detector: &DetectorModel,
    samples: usize,
    root: &GaussianSampler,
) -> Result<SimulatedFrames> {
    let symbols = draw_alice_symbols(modulation, samples, &root.fork_named("alice"))?;
    let record = propagate(&symbols, modulation, channel, &root.fork_named("channel"))?;
    let bases = random_bases(samples, &root.fork_named("bases"));
    let meas = bob_measure(&record, &bases, detector, modulation, &root.fork_named("detector"))?;
    let bob = sift(&symbols, modulation, &bases, &meas.values)?;
    let eve_all = select_quadratures(&record.eve, &bases);
    let mut eve = bob.clone();
    eve.bob_values = bob.indices.iter().map(|&i| eve_all[i]).collect();
    Ok(SimulatedFrames {
        bob,
        eve,
        detector_variance: meas.added_variance,
    })
}

/// One group of frame entries sharing the same closed-form SNRs.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: &'static str,
    /// `Some(flag)` selects entries by `axis_match`; `None` takes all.
    pub axis: Option<bool>,
    pub snr: SnrPair,
}

fn eve_snr(signal: f64, noise: f64, chi: f64) -> f64 {
    if chi == 0.0 {
        0.0
    } else {
        signal / (noise + 1.0 / chi)
    }
}

/// Closed-form SNRs for each branch of the sifted data.
pub fn analytic_branches(modulation: &ModulationConfig, channel: &ChannelParams, detector: &DetectorModel) -> Result<Vec<Branch>> {
    let chi = channel.chi();
    if !detector.ideal && modulation.variant() != Variant::Coherent {
        return Err(Error::invalid("b0", "detector noise is modelled for the coherent variant only"));
    }
    Ok(match *modulation {
        ModulationConfig::Coherent { v_a } => vec![Branch {
            label: "all",
            axis: None,
            snr: detector_limited_snrs(v_a + 1.0, channel, detector)?,
        }],
        ModulationConfig::Squeezed { v, s } => {
            let (v_sq, v_anti) = squeezed_variances(v, s)?;
            vec![
                Branch {
                    label: "squeezed",
                    axis: Some(true),
                    snr: SnrPair {
                        sigma_b: v_sq / (s + chi),
                        sigma_e: eve_snr(v_sq, s, chi),
                    },
                },
                Branch {
                    label: "anti-squeezed",
                    axis: Some(false),
                    snr: SnrPair {
                        sigma_b: v_anti / (1.0 / s + chi),
                        sigma_e: eve_snr(v_anti, 1.0 / s, chi),
                    },
                },
            ]
        }
        ModulationConfig::EprEquivalent { .. } => vec![Branch {
            label: "matched",
            axis: None,
            snr: epr_snrs(modulation.total_variance(), chi)?,
        }],
    })
}

/// Empirical mutual information, reading a frame with no modulation as 0.
fn mi_or_zero(frame: &SiftedFrame) -> Result<MiEstimate> {
    match empirical_mutual_information(frame) {
        Err(Error::DegenerateFrame(_)) if frame.len() >= 100 => Ok(MiEstimate {
            bits: 0.0,
            std_error: 0.0,
            rho: 0.0,
            samples: frame.len(),
            capped: false,
        }),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchCheck {
    pub branch: Branch,
    pub count: usize,
    pub bob: MiEstimate,
    pub eve: MiEstimate,
    pub bob_analytic_bits: f64,
    pub eve_analytic_bits: f64,
}

impl BranchCheck {
    /// Discrepancies in units of the standard error.
    pub fn bob_z(&self) -> f64 {
        z_score(self.bob.bits, self.bob_analytic_bits, self.bob.std_error)
    }

    pub fn eve_z(&self) -> f64 {
        z_score(self.eve.bits, self.eve_analytic_bits, self.eve.std_error)
    }
}

fn z_score(emp: f64, analytic: f64, se: f64) -> f64 {
    let d = (emp - analytic).abs();
    if d <= 1e-12 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        d / se
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub samples: usize,
    pub frame_len: usize,
    pub note: ProtocolNote,
    pub checks: Vec<BranchCheck>,
    pub tolerance_sigmas: f64,
}

impl SimulationOutcome {
    pub fn passed(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.bob_z() <= self.tolerance_sigmas && c.eve_z() <= self.tolerance_sigmas)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "pulses {}  sifted {}  unused alice components {}  discarded {}\n",
            self.samples, self.frame_len, self.note.unused_alice_components, self.note.discarded_symbols
        );
        for c in &self.checks {
            let _ = writeln!(
                s,
                "[{}] n={}  Sigma_B {:.4} +- {:.4} (analytic {:.4})  Sigma_E {:.4} +- {:.4} (analytic {:.4})",
                c.branch.label,
                c.count,
                c.bob.snr(),
                c.bob.snr_std_error(),
                c.branch.snr.sigma_b,
                c.eve.snr(),
                c.eve.snr_std_error(),
                c.branch.snr.sigma_e
            );
            let _ = writeln!(
                s,
                "[{}] I_AB {:.5} +- {:.5} (analytic {:.5}, z {:.2})  I_AE {:.5} +- {:.5} (analytic {:.5}, z {:.2})",
                c.branch.label,
                c.bob.bits,
                c.bob.std_error,
                c.bob_analytic_bits,
                c.bob_z(),
                c.eve.bits,
                c.eve.std_error,
                c.eve_analytic_bits,
                c.eve_z()
            );
        }
        let _ = writeln!(
            s,
            "self-test ({} standard errors): {}",
            self.tolerance_sigmas,
            if self.passed() { "pass" } else { "FAIL" }
        );
        s
    }
}

fn frame_table(frames: &SimulatedFrames) -> Table {
    let f = &frames.bob;
    Table {
        columns: vec!["index", "basis", "axis_match", "alice", "bob", "eve"],
        rows: (0..f.len())
            .map(|i| {
                vec![
                    f.indices[i].to_string(),
                    f.basis_tags[i].as_char().to_string(),
                    (f.axis_match[i] as u8).to_string(),
                    num(f.alice_values[i]),
                    num(f.bob_values[i]),
                    num(frames.eve.bob_values[i]),
                ]
            })
            .collect(),
    }
}

/// Simulates a frame and compares empirical and closed-form information.
/// The outcome reports failure when any discrepancy exceeds
/// [`SELF_TEST_SIGMAS`] standard errors.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationOutcome> {
    cfg.validate()?;
    if cfg.samples < MIN_SIMULATION_SAMPLES {
        return Err(Error::invalid(
            "samples",
            format!("simulate needs at least {MIN_SIMULATION_SAMPLES} samples, got {}", cfg.samples),
        ));
    }
    let modulation = cfg.modulation()?;
    let channel = cfg.channel()?;
    let detector = cfg.detector()?;
    let branches = analytic_branches(&modulation, &channel, &detector)?;
    let frames = simulate_frames(&modulation, &channel, &detector, cfg.samples, &GaussianSampler::new(cfg.seed))?;
    let mut checks = Vec::new();
    for branch in branches {
        let (bob, eve) = match branch.axis {
            None => (frames.bob.clone(), frames.eve.clone()),
            Some(m) => (frames.bob.filter_axis(m), frames.eve.filter_axis(m)),
        };
        checks.push(BranchCheck {
            count: bob.len(),
            bob: mi_or_zero(&bob)?,
            eve: mi_or_zero(&eve)?,
            bob_analytic_bits: shannon_rate(branch.snr.sigma_b)?,
            eve_analytic_bits: shannon_rate(branch.snr.sigma_e)?,
            branch,
        });
    }
    write_csv("simulate", cfg, &frame_table(&frames))?;
    Ok(SimulationOutcome {
        samples: cfg.samples,
        frame_len: frames.bob.len(),
        note: frames.bob.note,
        checks,
        tolerance_sigmas: SELF_TEST_SIGMAS,
    })
}

// ---------------------------------------------------------------- reconcile

fn load_thresholds(path: &Path, slices: u32) -> Result<SliceConfig> {
    let text = fs::read_to_string(path)?;
    let mut n = None;
    let mut thresholds = None;
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::invalid("thresholds_file", format!("cannot parse `{line}`"));
        let (k, v) = line.split_once('=').ok_or_else(bad)?;
        match k.trim() {
            "slices" => n = Some(v.trim().parse::<u32>().map_err(|_| bad())?),
            "thresholds" => {
                thresholds = Some(
                    v.split(',')
                        .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "snr" => {}
            _ => return Err(bad()),
        }
    }
    let (Some(n), Some(t)) = (n, thresholds) else {
        return Err(Error::invalid("thresholds_file", "needs slices and thresholds"));
    };
    if n != slices {
        return Err(Error::invalid(
            "thresholds_file",
            format!("file holds {n} slices but the run asks for {slices}"),
        ));
    }
    SliceConfig::new(n, t).map_err(|e| Error::invalid("thresholds_file", e.to_string()))
}

fn save_thresholds(path: &Path, config: &SliceConfig, snr: f64) -> Result<()> {
    let t: Vec<String> = config.thresholds().iter().map(|x| num(*x)).collect();
    fs::write(
        path,
        format!("snr={snr}\nslices={}\nthresholds={}\n", config.n(), t.join(",")),
    )?;
    Ok(())
}

/// Thresholds from the cache file when present, otherwise optimized (and
/// cached when a file is named).
fn thresholds_for(cfg: &RunConfig, snr: f64) -> Result<SliceConfig> {
    if let Some(path) = &cfg.thresholds_file {
        if path.exists() {
            return load_thresholds(path, cfg.slices);
        }
    }
    let config = if snr.is_infinite() {
        SliceConfig::equiprobable(cfg.slices)?
    } else {
        optimize_thresholds(snr, cfg.slices)?
    };
    if let Some(path) = &cfg.thresholds_file {
        save_thresholds(path, &config, snr)?;
    }
    Ok(config)
}

/// Synthetic frame: Alice draws unit gaussians and Bob sees them through
/// additive noise of variance `1/snr` (none when `snr` is infinite).
pub fn synthetic_frame(snr: f64, samples: usize, root: &GaussianSampler) -> Result<SiftedFrame> {
    let a = root.fork_named("alice");
    let b = root.fork_named("channel");
    let alice: Vec<f64> = par::map_range(samples, |i| a.normal(i as u64));
    let noise_var = if snr.is_infinite() { 0.0 } else { 1.0 / snr };
    let bob = par::map_range(samples, |i| alice[i] + b.gaussian(i as u64, noise_var));
    SiftedFrame::from_values(alice, bob)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileOutcome {
    pub snr: f64,
    pub config: SliceConfig,
    pub analysis: SliceAnalysis,
    pub result: ReconciliationResult,
    pub efficiency: Efficiency,
    pub entropy_efficiency: Efficiency,
    pub transcript_path: Option<PathBuf>,
}

impl ReconcileOutcome {
    pub fn table(&self) -> Table {
        let d = &self.result.diagnostics;
        Table {
            columns: vec![
                "slice",
                "predicted_error",
                "correct_probability",
                "observed_error",
                "leak_bits_per_symbol",
                "correction",
                "passes",
            ],
            rows: (0..d.per_slice_error.len())
                .map(|k| {
                    vec![
                        (k + 1).to_string(),
                        num(d.per_slice_error[k]),
                        num(1.0 - d.per_slice_error[k]),
                        num(d.observed_error[k]),
                        num(d.per_slice_leak[k]),
                        d.corrections[k].name().to_string(),
                        d.cascade_passes[k].to_string(),
                    ]
                })
                .collect(),
        }
    }

    pub fn summary(&self) -> String {
        let r = &self.result;
        let d = &r.diagnostics;
        let mut s = String::new();
        let _ = writeln!(s, "Sigma {}  slices {}  symbols {}", self.snr, r.slices, r.frame_len);
        let _ = writeln!(s, "thresholds (positive) {:?}", self.config.positive_thresholds());
        for k in 0..d.per_slice_error.len() {
            let _ = writeln!(
                s,
                "slice {}: e = {:.3e} (correct {:.6})  observed {:.5}  leak {:.4} bits/symbol  {}",
                k + 1,
                d.per_slice_error[k],
                1.0 - d.per_slice_error[k],
                d.observed_error[k],
                d.per_slice_leak[k],
                d.corrections[k].name()
            );
        }
        let _ = writeln!(s, "H(Q) {:.5}  I(Q;Y) {:.5}  Shannon {:.5} bits/symbol", d.entropy, d.quantizer_information, d.shannon_bits);
        let _ = writeln!(s, "leaked bits {}  rounds {}  keys identical {}", r.leaked_bits, r.rounds, r.keys_agree());
        let _ = writeln!(
            s,
            "alpha realized {:.4}{}  entropy-based {:.4}{}  ideal {:.4}",
            self.efficiency.alpha,
            if self.efficiency.out_of_range { " (clamped)" } else { "" },
            self.entropy_efficiency.alpha,
            if self.entropy_efficiency.out_of_range { " (clamped)" } else { "" },
            d.ideal_efficiency
        );
        if let Some(p) = &self.transcript_path {
            let _ = writeln!(s, "transcript {}", p.display());
        }
        s
    }
}

fn reconcile_frame(cfg: &RunConfig, root: &GaussianSampler) -> Result<(SiftedFrame, f64)> {
    if let Some(snr) = cfg.snr {
        return Ok((synthetic_frame(snr, cfg.samples, root)?, snr));
    }
    let modulation = cfg.modulation()?;
    if modulation.variant() != Variant::Coherent {
        return Err(Error::invalid(
            "variant",
            "reconcile simulates coherent frames; set snr for a synthetic frame",
        ));
    }
    let channel = cfg.channel()?;
    let detector = cfg.detector()?;
    let snr = analytic_branches(&modulation, &channel, &detector)?[0].snr.sigma_b;
    if !(snr > 0.0) {
        return Err(Error::invalid("va", "no signal reaches Bob (V_A = 0)"));
    }
    let frames = simulate_frames(&modulation, &channel, &detector, cfg.samples, root)?;
    Ok((frames.bob, snr))
}

pub fn cmd_reconcile(cfg: &RunConfig) -> Result<ReconcileOutcome> {
    cfg.validate()?;
    let root = GaussianSampler::new(cfg.seed);
    let (frame, snr) = reconcile_frame(cfg, &root)?;
    let config = thresholds_for(cfg, snr)?;
    let analysis = analyze(snr, &config)?;
    let result = reconcile_with_analysis(&frame, &config, &analysis, &root.fork_named("reconcile"))?;
    let transcript_path = match &cfg.out {
        Some(out) => {
            let p = sibling(out, ".transcript");
            fs::write(&p, result.transcript.to_bytes())?;
            Some(p)
        }
        None => None,
    };
    let out = ReconcileOutcome {
        snr,
        efficiency: reconciliation_efficiency(&result, snr),
        entropy_efficiency: entropy_efficiency(&result, snr),
        config,
        analysis,
        result,
        transcript_path,
    };
    write_csv("reconcile", cfg, &out.table())?;
    Ok(out)
}

// ---------------------------------------------------------------- keygen

#[derive(Debug, Clone, PartialEq)]
pub struct KeygenOutcome {
    pub samples: usize,
    pub slices: u32,
    pub snr: SnrPair,
    pub i_ab: f64,
    pub i_ae: f64,
    pub entropy: f64,
    pub budget: AmplificationBudget,
    pub final_bits: u64,
    /// `(N·H(Q) − leaked) / (N·I_AB)`, not clamped.
    pub alpha_realized: f64,
    /// `α_realized·I_AB − I_AE`.
    pub predicted_rate: f64,
    /// Final key bits per symbol.
    pub final_rate: f64,
    pub alice_key: BinaryKey,
    pub bob_key: BinaryKey,
    pub leaked_bits: u64,
    pub files: Vec<PathBuf>,
}

impl KeygenOutcome {
    pub fn keys_identical(&self) -> bool {
        self.alice_key == self.bob_key
    }

    /// `|final − predicted| / |predicted|`.
    pub fn relative_gap(&self) -> f64 {
        (self.final_rate - self.predicted_rate).abs() / self.predicted_rate.abs()
    }

    pub fn table(&self) -> Table {
        Table {
            columns: vec![
                "samples",
                "slices",
                "sigma_b",
                "sigma_e",
                "i_ab",
                "i_ae",
                "entropy",
                "raw_bits",
                "leaked_bits",
                "eve_bits",
                "margin",
                "final_bits",
                "final_rate",
                "alpha_realized",
                "predicted_rate",
                "keys_identical",
            ],
            rows: vec![vec![
                self.samples.to_string(),
                self.slices.to_string(),
                num(self.snr.sigma_b),
                num(self.snr.sigma_e),
                num(self.i_ab),
                num(self.i_ae),
                num(self.entropy),
                self.budget.raw_bits.to_string(),
                self.budget.leaked_bits.to_string(),
                self.budget.eve_bits.to_string(),
                self.budget.safety_margin.to_string(),
                self.final_bits.to_string(),
                num(self.final_rate),
                num(self.alpha_realized),
                num(self.predicted_rate),
                (self.keys_identical() as u8).to_string(),
            ]],
        }
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "symbols {}  slices {}", self.samples, self.slices);
        let _ = writeln!(s, "Sigma_B {:.4}  Sigma_E {:.4}", self.snr.sigma_b, self.snr.sigma_e);
        let _ = writeln!(s, "I_AB {:.5}  I_AE {:.5}  H(Q) {:.5} bits/symbol", self.i_ab, self.i_ae, self.entropy);
        let b = &self.budget;
        let _ = writeln!(
            s,
            "raw {}  leaked {}  eve {}  margin {}  ->  final {} bits",
            b.raw_bits, b.leaked_bits, b.eve_bits, b.safety_margin, self.final_bits
        );
        let _ = writeln!(s, "alpha realized {:.4}", self.alpha_realized);
        let _ = writeln!(
            s,
            "final rate {:.5} bits/symbol  predicted {:.5}  gap {:.2}%",
            self.final_rate,
            self.predicted_rate,
            100.0 * self.relative_gap()
        );
        let _ = writeln!(s, "keys identical {}", self.keys_identical());
        for f in &self.files {
            let _ = writeln!(s, "wrote {}", f.display());
        }
        if self.final_bits == 0 {
            let _ = writeln!(s, "no key extractable");
        }
        s
    }
}

/// Full pipeline: simulate, reconcile, amplify. A zero `final_bits` means
/// no key could be extracted.
pub fn cmd_keygen(cfg: &RunConfig) -> Result<KeygenOutcome> {
    cfg.validate()?;
    let modulation = cfg.modulation()?;
    if modulation.variant() != Variant::Coherent {
        return Err(Error::invalid("variant", "keygen runs the coherent protocol"));
    }
    let channel = cfg.channel()?;
    let detector = cfg.detector()?;
    let snr = analytic_branches(&modulation, &channel, &detector)?[0].snr;
    if !(snr.sigma_b > 0.0) {
        return Err(Error::invalid("va", "no signal reaches Bob (V_A = 0)"));
    }
    let root = GaussianSampler::new(cfg.seed);
    let frames = simulate_frames(&modulation, &channel, &detector, cfg.samples, &root)?;
    let config = thresholds_for(cfg, snr.sigma_b)?;
    let analysis = analyze(snr.sigma_b, &config)?;
    let result = reconcile_with_analysis(&frames.bob, &config, &analysis, &root.fork_named("reconcile"))?;

    let n = result.frame_len as f64;
    let i_ab = shannon_rate(snr.sigma_b)?;
    let i_ae = shannon_rate(snr.sigma_e)?;
    let budget = AmplificationBudget {
        raw_bits: (n * analysis.entropy).floor() as u64,
        leaked_bits: result.leaked_bits,
        eve_bits: (n * i_ae).ceil() as u64,
        safety_margin: cfg.margin,
    };
    let final_bits = final_key_length(&budget);
    let (alice_key, bob_key) = if final_bits == 0 {
        (BinaryKey::new(), BinaryKey::new())
    } else {
        let len = final_bits as usize;
        let seed = BinaryKey::random(seed_length(result.alice_key.len(), len), &root.fork_named("privacy"));
        (compress(&result.alice_key, &seed, len)?, compress(&result.bob_key, &seed, len)?)
    };
    let alpha_realized = (n * analysis.entropy - result.leaked_bits as f64) / (n * i_ab);
    let mut files = Vec::new();
    if let Some(out) = &cfg.out {
        let t = sibling(out, ".transcript");
        fs::write(&t, result.transcript.to_bytes())?;
        files.push(t);
        if final_bits > 0 {
            for (suffix, key) in [(".alice.key", &alice_key), (".bob.key", &bob_key)] {
                let p = sibling(out, suffix);
                fs::write(&p, key.serialize())?;
                files.push(p);
            }
        }
        files.push(out.clone());
    }
    let out = KeygenOutcome {
        samples: result.frame_len,
        slices: result.slices,
        snr,
        i_ab,
        i_ae,
        entropy: analysis.entropy,
        budget,
        final_bits,
        alpha_realized,
        predicted_rate: alpha_realized * i_ab - i_ae,
        final_rate: final_bits as f64 / n,
        alice_key,
        bob_key,
        leaked_bits: result.leaked_bits,
        files,
    };
    write_csv("keygen", cfg, &out.table())?;
    Ok(out)
}
