//! Run configuration: a small sectioned TOML file, every field optional with
//! physically sensible defaults, unknown keys rejected.
//!
//! The same struct both deserializes user files and serializes the effective
//! configuration for `--print-config`, so an echoed config re-parses to an
//! identical configuration by construction.

use serde::{Deserialize, Serialize};
use spinpair::dynamics::{HyperfineCoupling, RadicalPairModel, DEFAULT_GAMMA};
use spinpair::entanglement::LifetimeSettings;
use spinpair::magnetometry::MagnetometryParams;
use spinpair::spin::SystemLayout;

/// Which artifact kinds a command writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormats {
    Csv,
    Svg,
    Both,
}

impl OutputFormats {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormats::Csv | OutputFormats::Both)
    }

    pub fn svg(self) -> bool {
        matches!(self, OutputFormats::Svg | OutputFormats::Both)
    }
}

/// `[model]`: the radical pair being simulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Electron gyromagnetic ratio, rad ns^-1 mT^-1.
    pub gamma: f64,
    /// Isotropic hyperfine couplings, one per nucleus, in MHz (linear
    /// frequency; converted to angular rad/ns internally).
    pub hyperfine_mhz: Vec<f64>,
    /// Singlet recombination rate, ns^-1.
    pub k_s: f64,
    /// Triplet recombination rate, ns^-1.
    pub k_t: f64,
    /// Number of spin-1/2 nuclei; must match the hyperfine list length.
    pub nuclei: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gamma: DEFAULT_GAMMA,
            hyperfine_mhz: vec![20.0],
            k_s: 0.0,
            k_t: 0.0,
            nuclei: 1,
        }
    }
}

/// `[sweep]`: the field grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Lowest field, mT.
    pub b_min: f64,
    /// Highest field, mT.
    pub b_max: f64,
    /// Coarse grid step, mT.
    pub b_step: f64,
    /// Whether scan/figure commands add the fine zoom pass around the
    /// steepest stretch of the coarse curve.
    pub zoom: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            b_min: 0.0,
            b_max: 10.0,
            b_step: 0.02,
            zoom: true,
        }
    }
}

/// `[lifetime]`: entanglement-death detection settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifetimeConfig {
    /// Concurrence death threshold.
    pub threshold: f64,
    /// Scan horizon, ns.
    pub horizon: f64,
    /// Scan grid step, ns.
    pub scan_dt: f64,
}

impl Default for LifetimeConfig {
    fn default() -> Self {
        let s = LifetimeSettings::default();
        LifetimeConfig {
            threshold: s.threshold,
            horizon: s.horizon,
            scan_dt: s.scan_dt,
        }
    }
}

/// `[metrology]`: measurement budget for the sensitivity audit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetrologyConfig {
    /// Signal-to-noise ratio, dimensionless.
    pub snr: f64,
    /// Reaction time T_r, ns.
    pub t_r: f64,
}

impl Default for MetrologyConfig {
    fn default() -> Self {
        MetrologyConfig { snr: 1.0, t_r: 100.0 }
    }
}

/// `[output]`: where and what to write.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; overridden by `--out`.
    pub directory: String,
    pub formats: OutputFormats,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: "out".into(),
            formats: OutputFormats::Both,
        }
    }
}

/// The complete, effective run configuration.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub sweep: SweepConfig,
    pub lifetime: LifetimeConfig,
    pub metrology: MetrologyConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parse and fully validate a configuration file's contents.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    /// The effective configuration as TOML — every field explicit.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Validate every numeric field against the owning module's invariants
    /// before any computation starts.
    pub fn validate(&self) -> Result<(), String> {
        let m = &self.model;
        if !(m.gamma > 0.0 && m.gamma.is_finite()) {
            return Err(format!(
                "model.gamma must be positive and finite, got {}",
                m.gamma
            ));
        }
        for (name, v) in [("model.k_s", m.k_s), ("model.k_t", m.k_t)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be non-negative and finite, got {v}"));
            }
        }
        if m.hyperfine_mhz.len() != m.nuclei {
            return Err(format!(
                "model.hyperfine_mhz has {} entries but model.nuclei = {}",
                m.hyperfine_mhz.len(),
                m.nuclei
            ));
        }
        if let Some(bad) = m.hyperfine_mhz.iter().find(|a| !a.is_finite()) {
            return Err(format!("model.hyperfine_mhz entries must be finite, got {bad}"));
        }
        if m.nuclei > 8 {
            return Err(format!(
                "model.nuclei = {} exceeds the supported maximum of 8 (state dimension 2^(2+n))",
                m.nuclei
            ));
        }

        let s = &self.sweep;
        if !(s.b_min >= 0.0 && s.b_min.is_finite() && s.b_max.is_finite() && s.b_max >= s.b_min) {
            return Err(format!(
                "sweep requires 0 <= b_min <= b_max, got [{}, {}]",
                s.b_min, s.b_max
            ));
        }
        if !(s.b_step > 0.0 && s.b_step.is_finite()) {
            return Err(format!(
                "sweep.b_step must be positive and finite, got {}",
                s.b_step
            ));
        }

        self.lifetime_settings()
            .validate()
            .map_err(|e| format!("lifetime section: {e}"))?;

        let t = &self.metrology;
        for (name, v) in [("metrology.snr", t.snr), ("metrology.t_r", t.t_r)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }

        self.build_model()?;
        Ok(())
    }

    /// Construct the radical-pair model at zero field (sweeps set the field
    /// per grid point). Hyperfine MHz entries convert to angular rad/ns.
    pub fn build_model(&self) -> Result<RadicalPairModel, String> {
        let m = &self.model;
        let layout = SystemLayout::radical_pair(m.nuclei).map_err(|e| e.to_string())?;
        let hyperfine = m
            .hyperfine_mhz
            .iter()
            .enumerate()
            .map(|(i, &mhz)| {
                HyperfineCoupling::new(0, 2 + i, 2.0 * std::f64::consts::PI * 1e-3 * mhz)
            })
            .collect();
        let model = RadicalPairModel {
            layout,
            gamma: m.gamma,
            field: 0.0,
            hyperfine,
            k_singlet: m.k_s,
            k_triplet: m.k_t,
        };
        model.validate().map_err(|e| e.to_string())?;
        Ok(model)
    }

    pub fn lifetime_settings(&self) -> LifetimeSettings {
        LifetimeSettings {
            threshold: self.lifetime.threshold,
            horizon: self.lifetime.horizon,
            scan_dt: self.lifetime.scan_dt,
            ..LifetimeSettings::default()
        }
    }

    pub fn metrology_params(&self) -> Result<MagnetometryParams, String> {
        MagnetometryParams::new(self.metrology.snr, self.metrology.t_r, self.model.gamma)
            .map_err(|e| e.to_string())
    }
}
