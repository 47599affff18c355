//! Derivative-free threshold optimization.
//!
//! The positive thresholds are parametrized by the logarithms of their
//! successive gaps, which keeps every trial vector strictly increasing.
//! A compass search (one coordinate at a time, step halved when no move
//! improves) runs from several scaled equiprobable starts in parallel and
//! the best result wins; ties go to the earlier start.

use super::probability::{analyze_panels, SliceAnalysis};
use super::SliceConfig;
use crate::error::{Error, Result};
use crate::par;

/// What the optimizer maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// `I(Q; Y)`: information Bob's measurement carries about Alice's slice
    /// index.
    #[default]
    QuantizerInformation,
    /// `H(Q) − Σ h(e_k)`: the key rate of ideal slice-by-slice correction.
    HardDecisionRate,
}

impl Objective {
    fn value(self, a: &SliceAnalysis) -> f64 {
        match self {
            Objective::QuantizerInformation => a.mutual_information(),
            Objective::HardDecisionRate => a.hard_decision_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub objective: Objective,
    pub initial_step: f64,
    pub min_step: f64,
    /// Per-start cap on objective evaluations.
    pub max_evaluations: usize,
    /// Each start is the equiprobable partition scaled by one of these.
    pub start_scales: Vec<f64>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            objective: Objective::default(),
            initial_step: 0.25,
            min_step: 1e-4,
            max_evaluations: 100_000,
            start_scales: vec![0.8, 1.0, 1.25],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedSlices {
    pub config: SliceConfig,
    pub objective_value: f64,
    pub evaluations: usize,
}

/// Optimizes with the default settings.
pub fn optimize_thresholds(snr: f64, n: u32) -> Result<SliceConfig> {
    Ok(optimize_thresholds_with(snr, n, &OptimizerSettings::default())?.config)
}

pub fn optimize_thresholds_with(snr: f64, n: u32, settings: &OptimizerSettings) -> Result<OptimizedSlices> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::invalid("snr", format!("signal-to-noise ratio must be finite and > 0, got {snr}")));
    }
    SliceConfig::check_n(n)?;
    if settings.start_scales.is_empty() || settings.start_scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("start_scales", "need at least one positive scale"));
    }
    if n == 1 {
        let config = SliceConfig::new(1, vec![0.0])?;
        let value = settings.objective.value(&analyze_panels(snr, &config, true));
        return Ok(OptimizedSlices {
            config,
            objective_value: value,
            evaluations: 1,
        });
    }
    let base = SliceConfig::equiprobable(n)?;
    let runs = par::map_slice(&settings.start_scales, |&scale| {
        let start: Vec<f64> = base.positive_thresholds().iter().map(|t| t * scale).collect();
        compass_search(snr, n, &to_log_gaps(&start), settings)
    });
    let mut best: Option<OptimizedSlices> = None;
    let mut evaluations = 0;
    for run in runs {
        let run = run?;
        evaluations += run.evaluations;
        if best.as_ref().is_none_or(|b| run.objective_value > b.objective_value) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one start");
    best.evaluations = evaluations;
    Ok(best)
}

fn to_log_gaps(positive: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    positive
        .iter()
        .map(|&t| {
            let g = (t - prev).ln();
            prev = t;
            g
        })
        .collect()
}

fn from_log_gaps(n: u32, theta: &[f64]) -> Result<SliceConfig> {
    let mut acc = 0.0;
    let positive: Vec<f64> = theta
        .iter()
        .map(|g| {
            acc += g.exp();
            acc
        })
        .collect();
    SliceConfig::from_positive(n, &positive)
}

fn compass_search(snr: f64, n: u32, start: &[f64], settings: &OptimizerSettings) -> Result<OptimizedSlices> {
    let with_errors = settings.objective == Objective::HardDecisionRate;
    let eval = |theta: &[f64]| -> f64 {
        match from_log_gaps(n, theta) {
            Ok(cfg) => settings.objective.value(&analyze_panels(snr, &cfg, with_errors)),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let mut theta = start.to_vec();
    let mut best = eval(&theta);
    let mut evaluations = 1;
    let mut step = settings.initial_step;
    while step >= settings.min_step {
        let mut improved = false;
        for i in 0..theta.len() {
            for dir in [1.0, -1.0] {
                let mut trial = theta.clone();
                trial[i] += dir * step;
                let v = eval(&trial);
                evaluations += 1;
                if v > best + 1e-14 {
                    best = v;
                    theta = trial;
                    improved = true;
                    break;
                }
            }
        }
        if evaluations > settings.max_evaluations {
            return Err(Error::NonConvergence { evaluations });
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(OptimizedSlices {
        config: from_log_gaps(n, &theta)?,
        objective_value: best,
        evaluations,
    })
}
