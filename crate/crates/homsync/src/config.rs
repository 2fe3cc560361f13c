//! Experiment configuration: TOML file schema, reference defaults,
//! validation, and resolution into the runtime parameter types.
//!
//! Every knob has a default, so an empty file (or no file at all) runs the
//! reference experiment: 1e5 pulses per delay setting at 10 MHz, effective
//! mean photon number 1.0 behind 2 dB of fiber and 85% detectors, 10 ns
//! pulses, 150 ps jitter FWHM, a reciprocal 50 us channel, 180 ps delay
//! resolution and a true offset of 230.456 ns.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::security::{AttackConfig, AttackKind, EveBasisStrategy};
use crate::sim::{
    self, ChannelConfig, ClockPair, DetectorConfig, JitterMode, SourceConfig, WidthConvention,
};
use crate::Error;

/// Output file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!(
                "unknown output format {other:?} (expected csv or json)"
            ))),
        }
    }
}

/// On-disk configuration schema. All fields optional with reference
/// defaults; time units are spelled out in the key names.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub source: SourceSection,
    pub channel: ChannelSection,
    pub detector: DetectorSection,
    pub clocks: ClockSection,
    pub scan: ScanSection,
    pub attack: AttackSection,
    pub curves: CurvesSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub n_pulses: u64,
    pub rep_period_ns: f64,
    /// Requested mean photon number at each beamsplitter input. The source
    /// intensity is back-computed through channel loss and detector
    /// efficiency. Mutually exclusive with `mu_source`.
    pub mu_effective: Option<f64>,
    /// Mean photon number at the transmitter, if given directly.
    pub mu_source: Option<f64>,
    pub temporal_width_ns: f64,
    pub width_convention: WidthConvention,
    pub wavelength_nm: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            n_pulses: 100_000,
            rep_period_ns: 100.0,
            mu_effective: None,
            mu_source: None,
            temporal_width_ns: 10.0,
            width_convention: WidthConvention::Stddev,
            wavelength_nm: 1550.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub prop_delay_ab_ns: f64,
    /// Defaults to the forward delay when the channel is reciprocal.
    pub prop_delay_ba_ns: Option<f64>,
    pub loss_db: f64,
    pub reciprocal: bool,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            prop_delay_ab_ns: 50_000.0,
            prop_delay_ba_ns: None,
            loss_db: 2.0,
            reciprocal: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub efficiency: f64,
    pub jitter_fwhm_ps: f64,
    pub jitter_mode: JitterMode,
    pub dark_count_prob: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            efficiency: 0.85,
            jitter_fwhm_ps: 150.0,
            jitter_mode: JitterMode::BothDetectors,
            dark_count_prob: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockSection {
    pub delta_true_ns: f64,
}

impl Default for ClockSection {
    fn default() -> Self {
        Self {
            delta_true_ns: 230.456,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub vdl_step_ns: f64,
    /// Half-span of the scan around the coarse center; defaults to five
    /// temporal widths, capped at half a repetition period.
    pub vdl_span_ns: Option<f64>,
    /// Correlation candidates scanned on each side of the coarse offset.
    pub k_range: i64,
    /// Frames aggregated per delay setting.
    pub frames: u32,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            vdl_step_ns: 0.18,
            vdl_span_ns: None,
            k_range: 10,
            frames: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub kind: AttackKind,
    pub eve_basis_strategy: EveBasisStrategy,
    /// One-sided false-alarm probability of the detection threshold.
    pub significance: f64,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            eve_basis_strategy: EveBasisStrategy::UniformRandom,
            // One-sided 3-sigma tail.
            significance: 1.349_898_031_630_094e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesSection {
    pub mu_grid: Vec<f64>,
    pub phi_degrees: Vec<f64>,
    pub sigma_t_grid_ns: Vec<f64>,
    pub tau_half_span_ns: f64,
    pub tau_step_ns: f64,
}

impl Default for CurvesSection {
    fn default() -> Self {
        Self {
            mu_grid: vec![0.1, 0.5, 1.0, 2.0],
            phi_degrees: vec![0.0, 45.0, 90.0],
            sigma_t_grid_ns: vec![5.0, 10.0, 20.0],
            tau_half_span_ns: 50.0,
            tau_step_ns: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub format: OutputFormat,
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            format: OutputFormat::Csv,
            dir: PathBuf::from("out"),
        }
    }
}

/// Resolved scan settings, ns.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScanSettings {
    pub vdl_step: f64,
    pub vdl_half_span: f64,
    pub k_range: i64,
    pub frames: u32,
}

/// Resolved analytic-curve grids.
#[derive(Debug, Clone, Serialize)]
pub struct CurvesSettings {
    pub mu_grid: Vec<f64>,
    pub phi_degrees: Vec<f64>,
    pub sigma_t_grid: Vec<f64>,
    pub tau_half_span: f64,
    pub tau_step: f64,
}

/// Resolved output settings.
#[derive(Debug, Clone, Serialize)]
pub struct OutputSettings {
    pub format: OutputFormat,
    pub dir: PathBuf,
}

/// A validated, fully resolved experiment description.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub source: SourceConfig,
    pub channel: ChannelConfig,
    pub detector: DetectorConfig,
    pub clocks: ClockPair,
    pub scan: ScanSettings,
    pub attack: AttackConfig,
    pub significance: f64,
    pub curves: CurvesSettings,
    pub output: OutputSettings,
    mu_eff: f64,
    #[serde(skip_serializing)]
    hash: String,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    /// Validates the file values and produces the runtime configuration.
    pub fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let s = &self.source;
        ensure(s.rep_period_ns > 0.0, "source.rep_period_ns must be positive")?;
        ensure(
            s.temporal_width_ns > 0.0,
            "source.temporal_width_ns must be positive",
        )?;
        ensure(s.wavelength_nm > 0.0, "source.wavelength_nm must be positive")?;

        let c = &self.channel;
        ensure(c.prop_delay_ab_ns >= 0.0, "channel delays must be >= 0")?;
        ensure(c.loss_db >= 0.0, "channel.loss_db must be >= 0")?;
        let prop_delay_ba = match (c.reciprocal, c.prop_delay_ba_ns) {
            (true, None) => c.prop_delay_ab_ns,
            (true, Some(ba)) => {
                ensure(
                    ba == c.prop_delay_ab_ns,
                    "reciprocal channel requires equal delays (set reciprocal = false to inject asymmetry)",
                )?;
                ba
            }
            (false, Some(ba)) => {
                ensure(ba >= 0.0, "channel delays must be >= 0")?;
                ba
            }
            (false, None) => c.prop_delay_ab_ns,
        };

        let d = &self.detector;
        ensure(
            d.efficiency > 0.0 && d.efficiency <= 1.0,
            "detector.efficiency must be in (0, 1]",
        )?;
        ensure(d.jitter_fwhm_ps >= 0.0, "detector.jitter_fwhm_ps must be >= 0")?;
        ensure(
            (0.0..=1.0).contains(&d.dark_count_prob),
            "detector.dark_count_prob must be in [0, 1]",
        )?;

        let attenuation = 10f64.powf(-c.loss_db / 10.0) * d.efficiency;
        let (mu_source, mu_eff) = match (s.mu_source, s.mu_effective) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set either source.mu_source or source.mu_effective, not both".into(),
                ))
            }
            (Some(src), None) => (src, src * attenuation),
            (None, requested) => {
                let eff = requested.unwrap_or(1.0);
                (eff / attenuation, eff)
            }
        };
        ensure(
            mu_source > 0.0 && mu_source.is_finite(),
            "source intensity must resolve to a positive mean photon number",
        )?;

        let source = SourceConfig {
            n_pulses: s.n_pulses,
            rep_period: s.rep_period_ns,
            mu_source,
            temporal_width: s.temporal_width_ns,
            width_convention: s.width_convention,
            wavelength_nm: s.wavelength_nm,
        };
        ensure(
            source.rep_period >= 4.0 * source.sigma_t(),
            "rep_period_ns must be at least four temporal widths for unambiguous pairing",
        )?;

        let sc = &self.scan;
        ensure(sc.vdl_step_ns > 0.0, "scan.vdl_step_ns must be positive")?;
        ensure(sc.k_range >= 1, "scan.k_range must be >= 1")?;
        ensure(sc.frames >= 1, "scan.frames must be >= 1")?;
        let requested_span = sc.vdl_span_ns.unwrap_or(5.0 * source.sigma_t());
        ensure(requested_span > 0.0, "scan.vdl_span_ns must be positive")?;
        // Beyond half a period the pairing hops to the next pulse and the
        // dip repeats; there is nothing to scan out there.
        let vdl_half_span = requested_span.min(0.5 * source.rep_period);

        let a = &self.attack;
        ensure(
            a.significance > 0.0 && a.significance < 0.5,
            "attack.significance must be in (0, 0.5)",
        )?;

        let cv = &self.curves;
        ensure(!cv.mu_grid.is_empty(), "curves.mu_grid must not be empty")?;
        ensure(
            cv.mu_grid.iter().all(|&m| m >= 0.0 && m.is_finite()),
            "curves.mu_grid entries must be >= 0",
        )?;
        ensure(
            !cv.phi_degrees.is_empty(),
            "curves.phi_degrees must not be empty",
        )?;
        ensure(
            cv.sigma_t_grid_ns.iter().all(|&w| w > 0.0),
            "curves.sigma_t_grid_ns entries must be positive",
        )?;
        ensure(cv.tau_step_ns > 0.0, "curves.tau_step_ns must be positive")?;
        ensure(
            cv.tau_half_span_ns > 0.0,
            "curves.tau_half_span_ns must be positive",
        )?;

        let mut cfg = ExperimentConfig {
            seed: self.seed.unwrap_or(1),
            source,
            channel: ChannelConfig {
                prop_delay_ab: c.prop_delay_ab_ns,
                prop_delay_ba,
                loss_db: c.loss_db,
                reciprocal: c.reciprocal,
            },
            detector: DetectorConfig {
                efficiency: d.efficiency,
                jitter_fwhm_ps: d.jitter_fwhm_ps,
                jitter_mode: d.jitter_mode,
                dark_count_prob: d.dark_count_prob,
            },
            clocks: ClockPair {
                delta_true: self.clocks.delta_true_ns,
            },
            scan: ScanSettings {
                vdl_step: sc.vdl_step_ns,
                vdl_half_span,
                k_range: sc.k_range,
                frames: sc.frames,
            },
            attack: AttackConfig {
                kind: a.kind,
                eve_basis_strategy: a.eve_basis_strategy,
            },
            significance: a.significance,
            curves: CurvesSettings {
                mu_grid: cv.mu_grid.clone(),
                phi_degrees: cv.phi_degrees.clone(),
                sigma_t_grid: cv.sigma_t_grid_ns.clone(),
                tau_half_span: cv.tau_half_span_ns,
                tau_step: cv.tau_step_ns,
            },
            output: OutputSettings {
                format: self.output.format,
                dir: self.output.dir.clone(),
            },
            mu_eff,
            hash: String::new(),
        };
        cfg.hash = cfg.compute_hash();
        Ok(cfg)
    }
}

impl ExperimentConfig {
    /// The reference experiment.
    pub fn defaults() -> Self {
        FileConfig::default()
            .resolve()
            .expect("reference defaults are valid")
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        FileConfig::load(path)?.resolve()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        FileConfig::from_toml_str(text)?.resolve()
    }

    /// Mean photon number at each beamsplitter input.
    pub fn mu_eff(&self) -> f64 {
        self.mu_eff
    }

    /// Short hex digest of the resolved configuration (seed included);
    /// stamped into every output header.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Bundles the per-frame simulation parameters.
    pub fn frame_params(&self) -> sim::FrameParams<'_> {
        sim::FrameParams {
            source: &self.source,
            channel: &self.channel,
            detector: &self.detector,
            clocks: &self.clocks,
            attack: self.attack,
            mu_eff: self.mu_eff,
        }
    }

    fn compute_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in &digest[..8] {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

fn ensure(cond: bool, msg: &str) -> Result<(), Error> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_table() {
        let cfg = ExperimentConfig::defaults();
        assert_eq!(cfg.source.n_pulses, 100_000);
        assert_eq!(cfg.source.rep_period, 100.0);
        assert_eq!(cfg.source.temporal_width, 10.0);
        assert_eq!(cfg.detector.efficiency, 0.85);
        assert_eq!(cfg.detector.jitter_fwhm_ps, 150.0);
        assert_eq!(cfg.channel.prop_delay_ab, 50_000.0);
        assert_eq!(cfg.channel.prop_delay_ba, 50_000.0);
        assert_eq!(cfg.channel.loss_db, 2.0);
        assert_eq!(cfg.clocks.delta_true, 230.456);
        assert_eq!(cfg.scan.vdl_step, 0.18);
        assert_eq!(cfg.scan.vdl_half_span, 50.0);
        assert!((cfg.mu_eff() - 1.0).abs() < 1e-12);
        // Back-computed source intensity compensating 2 dB + 85%.
        assert!((cfg.source.mu_source - 1.864_580_226_424_839_4).abs() < 1e-12);
        assert!(!cfg.hash().is_empty());
    }

    #[test]
    fn partial_toml_overrides_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            seed = 9
            [source]
            n_pulses = 5000
            temporal_width_ns = 5.0
            [attack]
            kind = "intercept-resend"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.source.n_pulses, 5000);
        assert_eq!(cfg.source.temporal_width, 5.0);
        // Span default follows the smaller width.
        assert_eq!(cfg.scan.vdl_half_span, 25.0);
        assert_eq!(cfg.attack.kind, AttackKind::InterceptResend);
        // Untouched sections keep their defaults.
        assert_eq!(cfg.detector.jitter_fwhm_ps, 150.0);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = ExperimentConfig::from_toml_str("[source]\nn_pulse = 10\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn mu_specifications_are_exclusive() {
        let err = ExperimentConfig::from_toml_str(
            "[source]\nmu_source = 1.86\nmu_effective = 1.0\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        let cfg =
            ExperimentConfig::from_toml_str("[source]\nmu_source = 1.864580226424839\n").unwrap();
        assert!((cfg.mu_eff() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reciprocal_channel_fills_and_checks_the_return_delay() {
        let cfg = ExperimentConfig::from_toml_str("[channel]\nprop_delay_ab_ns = 42000\n").unwrap();
        assert_eq!(cfg.channel.prop_delay_ba, 42_000.0);

        let err = ExperimentConfig::from_toml_str(
            "[channel]\nprop_delay_ab_ns = 42000\nprop_delay_ba_ns = 42001\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        let cfg = ExperimentConfig::from_toml_str(
            "[channel]\nreciprocal = false\nprop_delay_ab_ns = 50001\nprop_delay_ba_ns = 49999\n",
        )
        .unwrap();
        assert_eq!(cfg.channel.prop_delay_ab, 50_001.0);
        assert_eq!(cfg.channel.prop_delay_ba, 49_999.0);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for toml in [
            "[source]\nrep_period_ns = 0.0\n",
            "[source]\ntemporal_width_ns = -1.0\n",
            "[source]\ntemporal_width_ns = 30.0\n", // pairing ambiguity at T/4
            "[detector]\nefficiency = 0.0\n",
            "[detector]\nefficiency = 1.2\n",
            "[scan]\nvdl_step_ns = 0.0\n",
            "[scan]\nframes = 0\n",
            "[attack]\nsignificance = 0.7\n",
            "[source]\nmu_effective = 0.0\n",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml_str(toml), Err(Error::Config(_))),
                "accepted: {toml}"
            );
        }
    }

    #[test]
    fn span_is_capped_at_half_a_period() {
        let cfg = ExperimentConfig::from_toml_str("[scan]\nvdl_span_ns = 400.0\n").unwrap();
        assert_eq!(cfg.scan.vdl_half_span, 50.0);
    }

    #[test]
    fn hash_tracks_the_seed_and_contents() {
        let a = ExperimentConfig::from_toml_str("seed = 1\n").unwrap();
        let b = ExperimentConfig::from_toml_str("seed = 1\n").unwrap();
        let c = ExperimentConfig::from_toml_str("seed = 2\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn fwhm_width_convention_converts() {
        let cfg = ExperimentConfig::from_toml_str(
            "[source]\ntemporal_width_ns = 10.0\nwidth_convention = \"fwhm\"\n",
        )
        .unwrap();
        assert!((cfg.source.sigma_t() - 10.0 / sim::FWHM_PER_SIGMA).abs() < 1e-12);
    }
}
