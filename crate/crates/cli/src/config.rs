//! Flat `key = value` configuration. Every key is optional; missing keys take
//! the defaults below.

use crate::CliError;
use serde::{Deserialize, Serialize};
use skilltrace::ingest::{DiffOptions, GroupLabel, LoadOptions};
use skilltrace::primitives::PrimitiveLibrary;
use skilltrace::pwarx::{IdentOptions, StateSource};
use skilltrace::stats::Binning;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // ingest
    pub sg_window: usize,
    pub sg_order: usize,
    /// mm/s
    pub v_floor: f64,
    pub min_samples: usize,

    // stats
    pub speed_bins: usize,
    pub kappa_bins: usize,
    /// 1/mm
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub alpha: f64,
    pub dominant_mass: f64,

    // primitives
    /// mm/s
    pub v_min: f64,
    /// 1/mm
    pub kappa_thresh: f64,
    /// mm/s^2
    pub a_thresh: f64,
    /// s
    pub min_duration: f64,

    // pwarx
    pub k_modes: usize,
    pub local_window: usize,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub max_iter: usize,
    pub min_cluster: usize,
    pub state_source: StateSource,
    pub seed: u64,

    // synth
    pub synth_skill: GroupLabel,
    /// mm/s per step
    pub pwa_noise: f64,
    pub pwa_horizon: usize,
}

impl Default for Config {
    fn default() -> Self {
        let diff = DiffOptions::default();
        let bins = Binning::default();
        let lib = PrimitiveLibrary::default();
        let ident = IdentOptions::default();
        Self {
            sg_window: diff.window,
            sg_order: diff.order,
            v_floor: diff.v_floor,
            min_samples: LoadOptions::default().min_samples,
            speed_bins: bins.speed_bins,
            kappa_bins: bins.kappa_bins,
            kappa_min: bins.kappa_min,
            kappa_max: bins.kappa_max,
            alpha: bins.alpha,
            dominant_mass: 0.5,
            v_min: lib.v_min,
            kappa_thresh: lib.kappa_thresh,
            a_thresh: lib.a_thresh,
            min_duration: lib.min_duration,
            k_modes: 3,
            local_window: ident.local_window,
            kmeans_restarts: ident.kmeans_restarts,
            kmeans_max_iter: ident.kmeans_max_iter,
            max_iter: ident.max_iter,
            min_cluster: ident.min_cluster,
            state_source: ident.state_source,
            seed: ident.seed,
            synth_skill: GroupLabel::Expert,
            pwa_noise: 1.0,
            pwa_horizon: 10_000,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let config: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sg_window.is_multiple_of(2) || self.sg_order >= self.sg_window {
            return Err("sg_window must be odd and larger than sg_order".into());
        }
        self.binning_template().validate().map_err(|e| e.to_string())?;
        if !(self.dominant_mass > 0.0 && self.dominant_mass <= 1.0) {
            return Err("dominant_mass must lie in (0, 1]".into());
        }
        if !(self.v_min > 0.0 && self.kappa_thresh > 0.0 && self.a_thresh > 0.0 && self.min_duration >= 0.0) {
            return Err("primitive thresholds must be positive".into());
        }
        if self.k_modes == 0 || self.local_window < 3 || self.min_cluster < 3 {
            return Err("need k_modes >= 1, local_window >= 3, min_cluster >= 3".into());
        }
        if !(self.pwa_noise >= 0.0) || self.pwa_horizon < 2 {
            return Err("pwa_noise must be >= 0 and pwa_horizon >= 2".into());
        }
        Ok(())
    }

    pub fn diff_options(&self) -> DiffOptions {
        DiffOptions { window: self.sg_window, order: self.sg_order, v_floor: self.v_floor }
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions { min_samples: self.min_samples }
    }

    /// Binning with `v_max` still to be fitted to the data.
    pub fn binning_template(&self) -> Binning {
        Binning {
            speed_bins: self.speed_bins,
            kappa_bins: self.kappa_bins,
            kappa_min: self.kappa_min,
            kappa_max: self.kappa_max,
            alpha: self.alpha,
            ..Binning::default()
        }
    }

    pub fn primitive_library(&self) -> PrimitiveLibrary {
        PrimitiveLibrary {
            v_min: self.v_min,
            kappa_thresh: self.kappa_thresh,
            a_thresh: self.a_thresh,
            min_duration: self.min_duration,
        }
    }

    pub fn ident_options(&self) -> IdentOptions {
        IdentOptions {
            local_window: self.local_window,
            seed: self.seed,
            kmeans_restarts: self.kmeans_restarts,
            kmeans_max_iter: self.kmeans_max_iter,
            max_iter: self.max_iter,
            min_cluster: self.min_cluster,
            state_source: self.state_source,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn flat_keys_override() {
        let c = Config::parse("k_modes = 2\nspeed_bins = 20\nstate_source = \"Smoothed\"\nsynth_skill = \"Novice\"\n").unwrap();
        assert_eq!(c.k_modes, 2);
        assert_eq!(c.speed_bins, 20);
        assert_eq!(c.state_source, StateSource::Smoothed);
        assert_eq!(c.synth_skill, GroupLabel::Novice);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(Config::parse("speed_binz = 3").is_err());
        assert!(Config::parse("sg_window = 10").is_err());
        assert!(Config::parse("dominant_mass = 0").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = Config { seed: 9, a_thresh: 12.5, ..Config::default() };
        let text = toml::to_string(&c).unwrap();
        assert_eq!(Config::parse(&text).unwrap(), c);
    }
}
