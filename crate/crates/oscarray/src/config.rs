//! Run configuration: a TOML file with explicit unit-suffixed keys, strict
//! about unknown keys, with paper values as defaults. CLI flags override file
//! values; the canonical config hash goes into every output's manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::{CavityConfig, Oscillator};
use crate::error::{Error, Result};
use crate::spectra::{DetectionConfig, FrequencyGrid, TechnicalSpike};
use crate::superlattice::{superlattice_period, AtomCloud, LatticeConfig};
use crate::units;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: u64,
    pub lattice: LatticeSection,
    pub cavity: CavitySection,
    pub detection: DetectionSection,
    pub cloud: CloudSection,
    pub simulate: SimulateSection,
    pub mri: MriSection,
    pub drive: DriveSection,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            seed: 1,
            lattice: LatticeSection::default(),
            cavity: CavitySection::default(),
            detection: DetectionSection::default(),
            cloud: CloudSection::default(),
            simulate: SimulateSection::default(),
            mri: MriSection::default(),
            drive: DriveSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    pub wavelength_a_nm: f64,
    pub wavelength_b_nm: f64,
    #[serde(rename = "depth_a_over_h_kHz")]
    pub depth_a_over_h_khz: Option<f64>,
    #[serde(rename = "depth_b_over_h_kHz")]
    pub depth_b_over_h_khz: Option<f64>,
    pub atom_mass_amu: f64,
}

impl Default for LatticeSection {
    fn default() -> Self {
        LatticeSection {
            wavelength_a_nm: 862.0,
            wavelength_b_nm: 843.0,
            // Back-computed from the 127/128 kHz single-color frequencies
            // when left unset.
            depth_a_over_h_khz: None,
            depth_b_over_h_khz: None,
            atom_mass_amu: units::DEFAULT_ATOM_MASS_AMU,
        }
    }
}

impl LatticeSection {
    pub fn to_physics(&self) -> Result<LatticeConfig> {
        let mass = units::kg_from_amu(self.atom_mass_amu);
        let defaults = LatticeConfig::from_single_color_frequencies(
            units::metres_from_nm(self.wavelength_a_nm),
            units::metres_from_nm(self.wavelength_b_nm),
            units::angular_from_khz(127.0),
            units::angular_from_khz(128.0),
            mass,
        );
        let cfg = LatticeConfig {
            depth_a: self
                .depth_a_over_h_khz
                .map_or(defaults.depth_a, units::joules_from_h_khz),
            depth_b: self
                .depth_b_over_h_khz
                .map_or(defaults.depth_b, units::joules_from_h_khz),
            ..defaults
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavitySection {
    #[serde(rename = "kappa_half_kHz")]
    pub kappa_half_khz: f64,
    #[serde(rename = "g0_MHz")]
    pub g0_mhz: f64,
    #[serde(rename = "detuning_GHz")]
    pub detuning_ghz: f64,
    pub probe_wavelength_nm: f64,
    pub mean_photon_number: f64,
    pub probe_phase_offset_nm: f64,
}

impl Default for CavitySection {
    fn default() -> Self {
        CavitySection {
            kappa_half_khz: 1820.0,
            g0_mhz: 13.1,
            detuning_ghz: -40.0,
            probe_wavelength_nm: 780.0,
            mean_photon_number: 2.9,
            probe_phase_offset_nm: 0.0,
        }
    }
}

impl CavitySection {
    pub fn to_physics(&self) -> Result<CavityConfig> {
        let cfg = CavityConfig {
            half_linewidth: units::angular_from_khz(self.kappa_half_khz),
            single_atom_coupling: units::angular_from_khz(self.g0_mhz * 1e3),
            atom_detuning: units::angular_from_khz(self.detuning_ghz * 1e6),
            probe_wavelength: units::metres_from_nm(self.probe_wavelength_nm),
            mean_photon_number: self.mean_photon_number,
            probe_phase_offset: units::metres_from_nm(self.probe_phase_offset_nm),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    pub efficiency: f64,
    #[serde(rename = "lo_power_mW")]
    pub lo_power_mw: f64,
    pub averages: u32,
}

impl Default for DetectionSection {
    fn default() -> Self {
        DetectionSection {
            efficiency: 0.13,
            lo_power_mw: 1.0,
            averages: 500,
        }
    }
}

impl DetectionSection {
    pub fn to_physics(&self, cavity: &CavitySection) -> Result<DetectionConfig> {
        let cfg = DetectionConfig {
            efficiency: self.efficiency,
            lo_power: self.lo_power_mw * 1e-3,
            probe_photon_energy: units::photon_energy(units::metres_from_nm(
                cavity.probe_wavelength_nm,
            )),
            averages: self.averages,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloudSection {
    pub center_um: f64,
    pub width_fwhm_um: f64,
    pub position_jitter_um: f64,
    pub total_atoms: u32,
}

impl Default for CloudSection {
    fn default() -> Self {
        // Imaging-scan cloud: sigma_tot = sqrt(0.3^2 + 0.294^2) = 0.42 um.
        CloudSection {
            center_um: 11.7,
            width_fwhm_um: 0.3,
            position_jitter_um: 0.294,
            total_atoms: 1000,
        }
    }
}

impl CloudSection {
    pub fn to_physics(&self) -> Result<AtomCloud> {
        let cloud = AtomCloud {
            center: units::metres_from_um(self.center_um),
            width_fwhm: units::metres_from_um(self.width_fwhm_um),
            position_jitter: units::metres_from_um(self.position_jitter_um),
            total_atoms: self.total_atoms,
        };
        cloud.validate()?;
        Ok(cloud)
    }
}

/// One synthetic oscillator in the `simulate` experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorSpec {
    #[serde(rename = "freq_kHz")]
    pub freq_khz: f64,
    #[serde(rename = "fwhm_kHz")]
    pub fwhm_khz: f64,
    pub cooperativity: f64,
    pub nu_bar: f64,
    /// Output label (e.g. the site letter).
    pub label: String,
}

impl OscillatorSpec {
    pub fn to_oscillator(&self, atom_mass: f64) -> Result<Oscillator> {
        Oscillator::from_parameters(
            units::angular_from_khz(self.freq_khz),
            units::angular_from_khz(self.fwhm_khz),
            self.cooperativity,
            self.nu_bar,
            atom_mass,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeSpec {
    #[serde(rename = "freq_kHz")]
    pub freq_khz: f64,
    /// Peak height in photon-density units.
    pub height: f64,
    #[serde(rename = "fwhm_kHz")]
    pub fwhm_khz: f64,
}

impl SpikeSpec {
    pub fn to_spike(&self) -> TechnicalSpike {
        TechnicalSpike {
            frequency: units::angular_from_khz(self.freq_khz),
            height: self.height,
            fwhm: units::angular_from_khz(self.fwhm_khz),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    #[serde(rename = "grid_span_kHz")]
    pub grid_span_khz: f64,
    #[serde(rename = "grid_step_Hz")]
    pub grid_step_hz: f64,
    pub oscillators: Vec<OscillatorSpec>,
    pub spikes: Vec<SpikeSpec>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            grid_span_khz: 250.0,
            grid_step_hz: 50.0,
            oscillators: default_six_oscillators(),
            spikes: Vec::new(),
        }
    }
}

impl SimulateSection {
    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid::symmetric(
            units::angular_from_khz(self.grid_span_khz),
            units::TWO_PI * self.grid_step_hz,
        )
    }
}

/// The six-oscillator array: measured occupations 1.8, 2.2, 1.0, 0.9, 1.3,
/// 1.8 at 12 kHz spacings. Cooperativities sit at 95% of the backaction cap
/// `C <= 2 nu`, clipped at 4.
pub fn default_six_oscillators() -> Vec<OscillatorSpec> {
    let freqs = [100.0, 112.0, 124.0, 136.0, 148.0, 160.0];
    let nus: [f64; 6] = [1.8, 2.2, 1.0, 0.9, 1.3, 1.8];
    let labels = ["alpha", "beta", "gamma", "zeta", "eta", "theta"];
    freqs
        .iter()
        .zip(nus)
        .zip(labels)
        .map(|((&f, nu), label)| OscillatorSpec {
            freq_khz: f,
            fwhm_khz: 1.2,
            cooperativity: (0.95 * 2.0 * nu).min(4.0),
            nu_bar: nu,
            label: label.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MriSection {
    pub start_um: f64,
    /// Scan end; one superlattice period when unset.
    pub stop_um: Option<f64>,
    pub step_um: f64,
    #[serde(rename = "linewidth_kHz")]
    pub linewidth_khz: f64,
    pub thermal_occupation: f64,
    pub occupancy_cutoff: f64,
    #[serde(rename = "grid_span_kHz")]
    pub grid_span_khz: f64,
    #[serde(rename = "grid_step_Hz")]
    pub grid_step_hz: f64,
}

impl Default for MriSection {
    fn default() -> Self {
        MriSection {
            start_um: 0.0,
            stop_um: None,
            step_um: 0.2,
            linewidth_khz: 1.2,
            thermal_occupation: 1.0,
            occupancy_cutoff: 0.05,
            grid_span_khz: 250.0,
            grid_step_hz: 50.0,
        }
    }
}

impl MriSection {
    pub fn positions(&self, lattice: &LatticeConfig) -> Result<Vec<f64>> {
        let start = units::metres_from_um(self.start_um);
        let stop = match self.stop_um {
            Some(s) => units::metres_from_um(s),
            None => start + superlattice_period(lattice)?,
        };
        let step = units::metres_from_um(self.step_um);
        if !(step > 0.0) || stop <= start {
            return Err(Error::Config("mri scan range is empty".into()));
        }
        let n = ((stop - start) / step).floor() as usize + 1;
        Ok((0..n).map(|i| start + i as f64 * step).collect())
    }

    pub fn scan(&self) -> crate::imaging::ScanConfig {
        crate::imaging::ScanConfig {
            linewidth: units::angular_from_khz(self.linewidth_khz),
            thermal_occupation: self.thermal_occupation,
            occupancy_cutoff: self.occupancy_cutoff,
            grid: FrequencyGrid::positive(
                units::angular_from_khz(self.grid_span_khz),
                units::TWO_PI * self.grid_step_hz,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    #[serde(rename = "freq_alpha_kHz")]
    pub freq_alpha_khz: f64,
    #[serde(rename = "freq_beta_kHz")]
    pub freq_beta_khz: f64,
    #[serde(rename = "linewidth_kHz")]
    pub linewidth_khz: f64,
    pub cooperativity: f64,
    pub base_occupation: f64,
    pub target: crate::addressing::Target,
    pub amplitudes: Vec<f64>,
    pub confidence: f64,
    #[serde(rename = "grid_span_kHz")]
    pub grid_span_khz: f64,
    #[serde(rename = "grid_step_Hz")]
    pub grid_step_hz: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        DriveSection {
            freq_alpha_khz: 138.0,
            freq_beta_khz: 143.0,
            linewidth_khz: 1.2,
            cooperativity: 2.0,
            base_occupation: 1.3,
            target: crate::addressing::Target::Alpha,
            amplitudes: vec![0.0, 0.8, 1.6, 2.4, 3.2, 4.0],
            confidence: 0.97,
            grid_span_khz: 250.0,
            grid_step_hz: 50.0,
        }
    }
}

impl DriveSection {
    pub fn pair(&self, atom_mass: f64) -> Result<[Oscillator; 2]> {
        let mk = |f_khz: f64| {
            Oscillator::from_parameters(
                units::angular_from_khz(f_khz),
                units::angular_from_khz(self.linewidth_khz),
                self.cooperativity,
                self.base_occupation,
                atom_mass,
            )
        };
        Ok([mk(self.freq_alpha_khz)?, mk(self.freq_beta_khz)?])
    }

    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid::positive(
            units::angular_from_khz(self.grid_span_khz),
            units::TWO_PI * self.grid_step_hz,
        )
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical (re-serialized) configuration.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

/// A fully-resolved run: configuration, experiment, seed, output directory.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub file: FileConfig,
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Excluded frequency intervals in kHz (e.g. known technical spikes).
    pub exclusions_khz: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Simulate,
    Analyze { on: PathBuf, off: PathBuf },
    Mri,
    Drive,
    Roundtrip,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Analyze { .. } => "analyze",
            Experiment::Mri => "mri",
            Experiment::Drive => "drive",
            Experiment::Roundtrip => "roundtrip",
        }
    }
}

impl RunConfig {
    /// Exclusions converted to angular rad/s intervals.
    pub fn exclusions(&self) -> Vec<(f64, f64)> {
        self.exclusions_khz
            .iter()
            .map(|&(lo, hi)| (units::angular_from_khz(lo), units::angular_from_khz(hi)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_hash_stability() {
        let cfg = FileConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = FileConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "[lattice]\nwavelength_a = 862.0\n";
        assert!(FileConfig::parse(text).is_err());
        let text = "[cavity]\nkappa_half = 1820.0\n";
        assert!(FileConfig::parse(text).is_err());
    }

    #[test]
    fn default_lattice_reproduces_paper_numbers() {
        let cfg = FileConfig::default();
        let lattice = cfg.lattice.to_physics().unwrap();
        // U_A/h = 1305.118 kHz, U_B/h = 1267.952 kHz (frozen oracle values)
        assert!((units::h_khz_from_joules(lattice.depth_a) - 1305.118_058_077_317_1).abs() < 1e-9);
        assert!((units::h_khz_from_joules(lattice.depth_b) - 1267.952_293_951_799_9).abs() < 1e-9);
    }

    #[test]
    fn explicit_depth_overrides_default() {
        let text = "[lattice]\ndepth_a_over_h_kHz = 1000.0\n";
        let cfg = FileConfig::parse(text).unwrap();
        let lattice = cfg.lattice.to_physics().unwrap();
        assert!((units::h_khz_from_joules(lattice.depth_a) - 1000.0).abs() < 1e-9);
        // depth_b keeps the computed default
        assert!((units::h_khz_from_joules(lattice.depth_b) - 1267.952_293_951_799_9).abs() < 1e-9);
    }

    #[test]
    fn six_oscillator_defaults_respect_backaction_cap() {
        for spec in default_six_oscillators() {
            assert!(spec.cooperativity <= 2.0 * spec.nu_bar);
            assert!(spec.cooperativity <= 4.0);
        }
    }

    #[test]
    fn mri_positions_cover_one_period() {
        let cfg = FileConfig::default();
        let lattice = cfg.lattice.to_physics().unwrap();
        let positions = cfg.mri.positions(&lattice).unwrap();
        assert!(positions.len() >= 95);
        let period = superlattice_period(&lattice).unwrap();
        assert!(*positions.last().unwrap() <= period + 1e-9);
    }
}
