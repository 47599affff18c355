//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use crate::channel::{ChannelParams, DetectorModel};
use crate::error::{Error, Result};
use crate::model::{ModulationConfig, Variant};
use crate::privacy::DEFAULT_SAFETY_MARGIN;
use crate::reconcile::MAX_SLICES;

/// Every key a config file may set, in the order they are reported.
pub const KEYS: &[&str] = &[
    "variant",
    "va",
    "v",
    "s",
    "eta",
    "chi",
    "alpha",
    "b0",
    "sigma",
    "slices",
    "samples",
    "seed",
    "margin",
    "snr",
    "thresholds_file",
    "fig1_points",
    "fig1_chi_max",
    "fig1_va",
    "fig1_alpha",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    /// Coherent modulation variance `V_A`.
    pub va: f64,
    /// Squeezed total variance `V`.
    pub v: f64,
    pub s: f64,
    pub eta: Option<f64>,
    pub chi: Option<f64>,
    pub alpha: f64,
    pub b0: Option<f64>,
    pub sigma: Option<f64>,
    pub slices: u32,
    pub samples: usize,
    pub seed: u64,
    pub margin: u64,
    /// Reconcile a synthetic gaussian frame at this SNR (`inf` for a
    /// noiseless frame) instead of a simulated channel.
    pub snr: Option<f64>,
    pub thresholds_file: Option<PathBuf>,
    pub fig1_points: usize,
    pub fig1_chi_max: f64,
    pub fig1_va: Vec<f64>,
    pub fig1_alpha: Vec<f64>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Coherent,
            va: 50.0,
            v: 10.0,
            s: 0.5,
            eta: None,
            chi: None,
            alpha: 1.0,
            b0: None,
            sigma: None,
            slices: 5,
            samples: 10_000,
            seed: 1,
            margin: DEFAULT_SAFETY_MARGIN,
            snr: None,
            thresholds_file: None,
            fig1_points: 200,
            fig1_chi_max: 2.0,
            fig1_va: vec![1.0, 5.0, 50.0],
            fig1_alpha: vec![0.6, 0.8, 0.95],
            out: None,
        }
    }
}

fn key_name(key: &str) -> Result<&'static str> {
    KEYS.iter()
        .copied()
        .find(|k| *k == key)
        .ok_or_else(|| Error::invalid("config", format!("unknown key `{key}`")))
}

fn num<T: std::str::FromStr>(name: &'static str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(name, format!("cannot parse `{value}`")))
}

fn float(name: &'static str, value: &str) -> Result<f64> {
    let x: f64 = num(name, value)?;
    if x.is_nan() {
        return Err(Error::invalid(name, "NaN is not allowed"));
    }
    Ok(x)
}

fn list(name: &'static str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|p| float(name, p.trim())).collect()
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let name = key_name(key.trim())?;
        let value = value.trim();
        match name {
            "variant" => self.variant = value.parse()?,
            "va" => self.va = float(name, value)?,
            "v" => self.v = float(name, value)?,
            "s" => self.s = float(name, value)?,
            "eta" => self.eta = Some(float(name, value)?),
            "chi" => self.chi = Some(float(name, value)?),
            "alpha" => self.alpha = float(name, value)?,
            "b0" => self.b0 = Some(float(name, value)?),
            "sigma" => self.sigma = Some(float(name, value)?),
            "slices" => self.slices = num(name, value)?,
            "samples" => self.samples = num(name, value)?,
            "seed" => self.seed = num(name, value)?,
            "margin" => self.margin = num(name, value)?,
            "snr" => self.snr = Some(float(name, value)?),
            "thresholds_file" => self.thresholds_file = Some(PathBuf::from(value)),
            "fig1_points" => self.fig1_points = num(name, value)?,
            "fig1_chi_max" => self.fig1_chi_max = float(name, value)?,
            "fig1_va" => self.fig1_va = list(name, value)?,
            "fig1_alpha" => self.fig1_alpha = list(name, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => unreachable!("key table and match arms agree"),
        }
        Ok(())
    }

    /// Parses config text: one `key = value` per line, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::invalid("config", format!("line {}: expected key = value, got `{line}`", lineno + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn modulation(&self) -> Result<ModulationConfig> {
        match self.variant {
            Variant::Coherent => ModulationConfig::coherent(self.va),
            Variant::Squeezed => ModulationConfig::squeezed(self.v, self.s),
            Variant::EprEquivalent => ModulationConfig::epr(self.s),
        }
    }

    /// Pure-loss line from `eta` or `chi` (default `eta = 0.8`).
    pub fn channel(&self) -> Result<ChannelParams> {
        match (self.eta, self.chi) {
            (Some(_), Some(_)) => Err(Error::invalid("eta", "set either eta or chi, not both")),
            (_, Some(chi)) => ChannelParams::from_chi(chi),
            (eta, None) => ChannelParams::from_transmission(eta.unwrap_or(0.8)),
        }
    }

    pub fn detector(&self) -> Result<DetectorModel> {
        match (self.b0, self.sigma) {
            (None, None) => Ok(DetectorModel::IDEAL),
            (Some(b0), Some(sigma)) => DetectorModel::new(b0, sigma),
            (None, Some(_)) => Err(Error::invalid("b0", "sigma needs b0")),
            (Some(_), None) => Err(Error::invalid("sigma", "b0 needs sigma")),
        }
    }

    /// Checks the keys every command depends on.
    pub fn validate(&self) -> Result<()> {
        self.modulation()?;
        self.channel()?;
        self.detector()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        if !(1..=MAX_SLICES).contains(&self.slices) {
            return Err(Error::invalid("slices", format!("must be in 1..={MAX_SLICES}, got {}", self.slices)));
        }
        if self.samples == 0 {
            return Err(Error::invalid("samples", "must be positive"));
        }
        if let Some(snr) = self.snr {
            if !(snr > 0.0) {
                return Err(Error::invalid("snr", format!("must be > 0, got {snr}")));
            }
        }
        Ok(())
    }

    /// All settings as `(key, value)` pairs in [`KEYS`] order; unset
    /// optional keys are reported as `-`.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| v.to_string());
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "variant" => self.variant.name().to_string(),
                    "va" => self.va.to_string(),
                    "v" => self.v.to_string(),
                    "s" => self.s.to_string(),
                    "eta" => opt(self.eta),
                    "chi" => opt(self.chi),
                    "alpha" => self.alpha.to_string(),
                    "b0" => opt(self.b0),
                    "sigma" => opt(self.sigma),
                    "slices" => self.slices.to_string(),
                    "samples" => self.samples.to_string(),
                    "seed" => self.seed.to_string(),
                    "margin" => self.margin.to_string(),
                    "snr" => opt(self.snr),
                    "thresholds_file" => path(&self.thresholds_file),
                    "fig1_points" => self.fig1_points.to_string(),
                    "fig1_chi_max" => self.fig1_chi_max.to_string(),
                    "fig1_va" => fmt_list(&self.fig1_va),
                    "fig1_alpha" => fmt_list(&self.fig1_alpha),
                    "out" => path(&self.out),
                    _ => unreachable!(),
                };
                (k, v)
            })
            .collect()
    }
}
