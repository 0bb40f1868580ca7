//! Spectrum synthesis and the detection chain.
//!
//! Forward models, all evaluated on uniform frequency grids:
//!
//! * the intracavity probe photon spectrum for an array of oscillators probed
//!   on cavity resonance — per oscillator an anti-Stokes Lorentzian at +omega_i
//!   weighted nu and a Stokes one at -omega_i weighted nu+1, both filtered by
//!   the cavity response;
//! * the phase-quadrature spectrum, where both sidebands map onto a single
//!   Lorentzian at omega_i with weight 2 nu + 1;
//! * the heterodyne detection model converting either density to a detected
//!   power spectral density above a shot-noise floor;
//! * a seeded averaged-periodogram noise model (per-bin Gamma with relative
//!   variance 1/M);
//! * coherent-drive energy deposition with a Lorentzian resonance response.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::coupling::{CavityConfig, Oscillator};
use crate::error::{Error, Result};
use crate::units;

/// Uniform frequency grid (rad/s). Signed for photon spectra (Stokes sidebands
/// sit at negative detunings), non-negative for phase spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl FrequencyGrid {
    /// Symmetric grid covering `[-span, +span]`, always including 0.
    pub fn symmetric(span: f64, step: f64) -> Self {
        let half = (span / step).round() as usize;
        FrequencyGrid {
            start: -(half as f64) * step,
            step,
            len: 2 * half + 1,
        }
    }

    /// Non-negative grid covering `[0, hi]`.
    pub fn positive(hi: f64, step: f64) -> Self {
        let n = (hi / step).round() as usize;
        FrequencyGrid {
            start: 0.0,
            step,
            len: n + 1,
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.value(i))
    }

    /// Index range (inclusive, exclusive) covering `[lo, hi]`, clamped.
    pub fn index_range(&self, lo: f64, hi: f64) -> (usize, usize) {
        let a = ((lo - self.start) / self.step).ceil().max(0.0) as usize;
        let b = (((hi - self.start) / self.step).floor() as isize + 1).max(0) as usize;
        (a.min(self.len), b.min(self.len))
    }
}

/// Default grids from the paper's band: 50 Hz bins over +-250 kHz (photon)
/// or 0..250 kHz (phase).
pub fn default_photon_grid() -> FrequencyGrid {
    FrequencyGrid::symmetric(units::angular_from_khz(250.0), units::angular_from_khz(0.05))
}

pub fn default_phase_grid() -> FrequencyGrid {
    FrequencyGrid::positive(units::angular_from_khz(250.0), units::angular_from_khz(0.05))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    /// Intracavity photon-number density n(omega).
    PhotonDensity,
    /// Phase-quadrature photon density n^(pi/2)(omega).
    PhaseDensity,
    /// Detected heterodyne PSD, full quadrature.
    HeterodynePsd,
    /// Detected phase-modulation PSD.
    PhasePsd,
}

impl SpectrumKind {
    pub fn is_density(self) -> bool {
        matches!(self, SpectrumKind::PhotonDensity | SpectrumKind::PhaseDensity)
    }

    pub fn is_psd(self) -> bool {
        !self.is_density()
    }
}

impl std::fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SpectrumKind::PhotonDensity => "photon_density",
            SpectrumKind::PhaseDensity => "phase_density",
            SpectrumKind::HeterodynePsd => "heterodyne_psd",
            SpectrumKind::PhasePsd => "phase_psd",
        };
        f.write_str(s)
    }
}

/// A narrow technical-noise spike injected into the detection model (e.g. the
/// 99 kHz artifact). Frequencies are signed angular rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechnicalSpike {
    pub frequency: f64,
    /// Peak height in photon-density units.
    pub height: f64,
    pub fwhm: f64,
}

impl TechnicalSpike {
    fn eval(&self, omega: f64) -> f64 {
        let hw = self.fwhm / 2.0;
        self.height * hw * hw / ((omega - self.frequency).powi(2) + hw * hw)
    }
}

/// Provenance carried alongside spectrum values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    /// Sampling seed, when the spectrum is a noisy realization.
    pub seed: Option<u64>,
    /// Technical-noise spikes added by the detection model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spikes: Vec<TechnicalSpike>,
    /// Fraction of bins that were negative after calibration.
    pub clamp_fraction: Option<f64>,
    /// Hash of the run configuration that produced this spectrum.
    pub config_hash: Option<String>,
    /// Free-form label.
    pub label: Option<String>,
}

/// A frequency grid plus values, tagged with its physical kind.
///
/// Values are non-negative for synthesized densities and detected PSDs.
/// Calibrated spectra keep their signed noise floor in memory so downstream
/// fits stay unbiased; negatives are clamped (and the clamped fraction
/// recorded) when the spectrum is serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub grid: FrequencyGrid,
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
    /// Number of averaged periodograms M for sampled spectra.
    pub averages: u32,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn new(grid: FrequencyGrid, values: Vec<f64>, kind: SpectrumKind) -> Self {
        debug_assert_eq!(grid.len, values.len());
        Spectrum {
            grid,
            values,
            kind,
            averages: 1,
            meta: SpectrumMeta::default(),
        }
    }

    pub fn same_grid(&self, other: &Spectrum) -> bool {
        self.grid == other.grid
    }
}

/// Detection chain parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Overall cavity-photon detection efficiency, in (0, 1].
    pub efficiency: f64,
    /// Local-oscillator optical power (W).
    pub lo_power: f64,
    /// Probe photon energy (J).
    pub probe_photon_energy: f64,
    /// Number of averaged periodograms M.
    pub averages: u32,
}

impl DetectionConfig {
    /// 13% efficiency, 1 mW local oscillator at 780 nm, M = 500.
    pub fn paper_defaults() -> Self {
        DetectionConfig {
            efficiency: 0.13,
            lo_power: 1e-3,
            probe_photon_energy: units::photon_energy(units::metres_from_nm(780.0)),
            averages: 500,
        }
    }

    /// Mean shot-noise floor for the given PSD kind:
    /// `S_SN = P_LO hbar omega_0` (full) or `S_SN / 2` (phase quadrature).
    pub fn shot_floor(&self, kind: SpectrumKind) -> Result<f64> {
        let s = self.lo_power * self.probe_photon_energy;
        match kind {
            SpectrumKind::HeterodynePsd => Ok(s),
            SpectrumKind::PhasePsd => Ok(s / 2.0),
            other => Err(Error::KindMismatch {
                expected: "a detected PSD kind".into(),
                got: other.to_string(),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invalid("DetectionConfig", "efficiency must be in (0, 1]"));
        }
        if !(self.lo_power > 0.0) || !(self.probe_photon_energy > 0.0) {
            return Err(Error::invalid("DetectionConfig", "shot-noise floor must be positive"));
        }
        if self.averages == 0 {
            return Err(Error::invalid("DetectionConfig", "averages must be >= 1"));
        }
        Ok(())
    }
}

/// Which detected quadrature a density is converted into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    Full,
    Phase,
}

/// Intracavity photon spectrum of the oscillator array on a signed grid.
///
/// For each oscillator: prefactor `C Gamma^2 / 2`, anti-Stokes Lorentzian at
/// `+omega_i` weighted `nu`, Stokes at `-omega_i` weighted `nu + 1`, each with
/// half-width `Gamma/2`, all filtered by `kappa^2/(kappa^2 + omega^2)`.
pub fn photon_spectrum(
    oscillators: &[Oscillator],
    cavity: &CavityConfig,
    grid: &FrequencyGrid,
) -> Spectrum {
    let mut values = vec![0.0; grid.len];
    for osc in oscillators {
        let nu = osc.total_occupation();
        let g = osc.linewidth;
        let hw2 = (g / 2.0) * (g / 2.0);
        let pre = osc.cooperativity / 2.0 * g * g;
        let w0 = osc.site.frequency;
        for (i, v) in values.iter_mut().enumerate() {
            let w = grid.value(i);
            let anti = nu / ((w - w0) * (w - w0) + hw2);
            let stokes = (nu + 1.0) / ((w + w0) * (w + w0) + hw2);
            *v += pre * cavity.filter(w) * (anti + stokes);
        }
    }
    Spectrum::new(*grid, values, SpectrumKind::PhotonDensity)
}

/// Phase-quadrature spectrum on a non-negative grid: one Lorentzian per
/// oscillator at `omega_i` with weight `C Gamma^2 (2 nu + 1)`, cavity-filtered.
pub fn phase_spectrum(
    oscillators: &[Oscillator],
    cavity: &CavityConfig,
    grid: &FrequencyGrid,
) -> Spectrum {
    let mut values = vec![0.0; grid.len];
    for osc in oscillators {
        let nu = osc.total_occupation();
        let g = osc.linewidth;
        let hw2 = (g / 2.0) * (g / 2.0);
        let pre = osc.cooperativity * g * g * (2.0 * nu + 1.0);
        let w0 = osc.site.frequency;
        for (i, v) in values.iter_mut().enumerate() {
            let w = grid.value(i);
            *v += pre * cavity.filter(w) / ((w - w0) * (w - w0) + hw2);
        }
    }
    Spectrum::new(*grid, values, SpectrumKind::PhaseDensity)
}

/// Convert a density spectrum to the detected PSD above the shot-noise floor:
/// `S = S_SN [1 + eps (n + n0)/2]` (full) or
/// `S = (S_SN/2) [1 + (eps/2)(n + n0)]` (phase). Technical-noise spikes in the
/// input's metadata contribute to `n0`.
pub fn to_detected_psd(
    s: &Spectrum,
    det: &DetectionConfig,
    quadrature: Quadrature,
) -> Result<Spectrum> {
    det.validate()?;
    let (expected, out_kind) = match quadrature {
        Quadrature::Full => (SpectrumKind::PhotonDensity, SpectrumKind::HeterodynePsd),
        Quadrature::Phase => (SpectrumKind::PhaseDensity, SpectrumKind::PhasePsd),
    };
    if s.kind != expected {
        return Err(Error::KindMismatch {
            expected: expected.to_string(),
            got: s.kind.to_string(),
        });
    }
    let floor = det.shot_floor(out_kind)?;
    let half_eps = det.efficiency / 2.0;
    let values = s
        .values
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let w = s.grid.value(i);
            let n0: f64 = s.meta.spikes.iter().map(|sp| sp.eval(w)).sum();
            floor * (1.0 + half_eps * (n + n0))
        })
        .collect();
    let mut out = Spectrum::new(s.grid, values, out_kind);
    out.averages = s.averages;
    out.meta = s.meta.clone();
    Ok(out)
}

/// Draw a noisy realization of an M-averaged periodogram: each bin is the mean
/// times an independent Gamma(shape = M, scale = 1/M) variate. Deterministic
/// for a fixed seed.
pub fn sample_noisy(mean: &Spectrum, det: &DetectionConfig, seed: u64) -> Spectrum {
    let m = f64::from(det.averages.max(1));
    let gamma = Gamma::new(m, 1.0 / m).expect("shape and scale are positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = mean
        .values
        .iter()
        .map(|&v| v * gamma.sample(&mut rng))
        .collect();
    let mut out = Spectrum::new(mean.grid, values, mean.kind);
    out.averages = det.averages;
    out.meta = mean.meta.clone();
    out.meta.seed = Some(seed);
    out
}

/// Deposit coherent-drive energy: each oscillator's drive occupation grows by
/// `A_d (Gamma/2)^2 / ((omega_d - omega_i)^2 + (Gamma/2)^2)`, so `A_d` is the
/// on-resonance phonon addition.
pub fn apply_drive(
    oscillators: &[Oscillator],
    drive_freq: f64,
    drive_amplitude: f64,
) -> Vec<Oscillator> {
    oscillators
        .iter()
        .map(|osc| {
            let hw = osc.linewidth / 2.0;
            let det = drive_freq - osc.site.frequency;
            let mut out = *osc;
            out.drive_occupation += drive_amplitude * hw * hw / (det * det + hw * hw);
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{angular_from_khz, kg_from_amu};

    fn osc(freq_khz: f64, c: f64, nu: f64) -> Oscillator {
        Oscillator::from_parameters(
            angular_from_khz(freq_khz),
            angular_from_khz(1.2),
            c,
            nu,
            kg_from_amu(86.909),
        )
        .unwrap()
    }

    #[test]
    fn empty_array_gives_zero() {
        let cavity = CavityConfig::paper_defaults();
        let grid = FrequencyGrid::symmetric(angular_from_khz(50.0), angular_from_khz(0.5));
        assert!(photon_spectrum(&[], &cavity, &grid).values.iter().all(|&v| v == 0.0));
        assert!(phase_spectrum(&[], &cavity, &grid).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ground_state_emits_no_anti_stokes() {
        let cavity = CavityConfig::paper_defaults();
        let o = osc(120.0, 0.8, 0.4); // nu_total = nu_ba = C/2, nu_th = 0
        let mut cold = o;
        cold.thermal_occupation = 0.0;
        cold.backaction_occupation = 0.0;
        cold.cooperativity = 1.0;
        let grid = FrequencyGrid::symmetric(angular_from_khz(250.0), angular_from_khz(0.05));
        let s = photon_spectrum(&[cold], &cavity, &grid);
        let at = |f_khz: f64| {
            let (i, _) = grid.index_range(angular_from_khz(f_khz), angular_from_khz(f_khz));
            s.values[i]
        };
        assert!(at(120.0) <= 0.01 * at(-120.0));
    }

    #[test]
    fn stokes_peak_matches_direct_substitution() {
        // C=1, nu=1, omega=2pi x 120 kHz, kappa=2pi x 1.82 MHz: peak at -omega
        // equals 3.9827 (both Lorentzian terms, frozen from direct evaluation).
        let cavity = CavityConfig::paper_defaults();
        let o = osc(120.0, 1.0, 1.0);
        let grid = FrequencyGrid::symmetric(angular_from_khz(250.0), angular_from_khz(0.05));
        let s = photon_spectrum(&[o], &cavity, &grid);
        let (i, _) = grid.index_range(angular_from_khz(-120.0), angular_from_khz(-120.0));
        let expected = 3.982_698_510_502_951_9;
        assert!((s.values[i] - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn phase_peak_height_unresolved_sideband() {
        // C=1, nu_th=1 -> nu=1.5; with kappa >> omega the peak is 16.
        let mut cavity = CavityConfig::paper_defaults();
        cavity.half_linewidth = angular_from_khz(1.82e6); // enormous kappa
        let o = osc(120.0, 1.0, 1.5);
        let grid = FrequencyGrid::positive(angular_from_khz(250.0), angular_from_khz(0.05));
        let s = phase_spectrum(&[o], &cavity, &grid);
        let (i, _) = grid.index_range(angular_from_khz(120.0), angular_from_khz(120.0));
        assert!((s.values[i] - 16.0).abs() < 1e-9);
    }

    #[test]
    fn phase_peak_linear_in_two_nu_plus_one() {
        let cavity = CavityConfig::paper_defaults();
        let grid = FrequencyGrid::positive(angular_from_khz(200.0), angular_from_khz(0.1));
        let peak = |nu: f64| {
            let o = osc(120.0, 1.0, nu);
            let s = phase_spectrum(&[o], &cavity, &grid);
            let (i, _) = grid.index_range(angular_from_khz(120.0), angular_from_khz(120.0));
            s.values[i]
        };
        let p1 = peak(1.0);
        let p2 = peak(2.0);
        assert!((p2 / p1 - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn spectra_are_additive_over_oscillators() {
        let cavity = CavityConfig::paper_defaults();
        let a = osc(110.0, 1.2, 1.0);
        let b = osc(130.0, 0.7, 2.0);
        let grid = FrequencyGrid::symmetric(angular_from_khz(200.0), angular_from_khz(0.2));
        let joint = photon_spectrum(&[a, b], &cavity, &grid);
        let sa = photon_spectrum(&[a], &cavity, &grid);
        let sb = photon_spectrum(&[b], &cavity, &grid);
        for i in 0..grid.len {
            assert_eq!(joint.values[i], sa.values[i] + sb.values[i]);
        }
    }

    #[test]
    fn detection_floor_and_scaling() {
        let cavity = CavityConfig::paper_defaults();
        let det = DetectionConfig::paper_defaults();
        let grid = FrequencyGrid::symmetric(angular_from_khz(50.0), angular_from_khz(0.5));
        let empty = photon_spectrum(&[], &cavity, &grid);
        let psd = to_detected_psd(&empty, &det, Quadrature::Full).unwrap();
        let floor = det.shot_floor(SpectrumKind::HeterodynePsd).unwrap();
        assert!(psd.values.iter().all(|&v| v == floor));

        // n = 2 at a bin with eps = 0.13 gives 1.13 S_SN.
        let mut two = empty.clone();
        two.values[7] = 2.0;
        let psd = to_detected_psd(&two, &det, Quadrature::Full).unwrap();
        assert!((psd.values[7] / floor - 1.13).abs() < 1e-12);

        // kind mismatch rejected
        assert!(to_detected_psd(&two, &det, Quadrature::Phase).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_concentrates() {
        let det = DetectionConfig {
            averages: 1_000_000,
            ..DetectionConfig::paper_defaults()
        };
        let grid = FrequencyGrid::positive(angular_from_khz(10.0), angular_from_khz(0.5));
        let mean = Spectrum::new(grid, vec![3.0; grid.len], SpectrumKind::PhasePsd);
        let a = sample_noisy(&mean, &det, 5);
        let b = sample_noisy(&mean, &det, 5);
        assert_eq!(a.values, b.values);
        for &v in &a.values {
            assert!((v - 3.0).abs() / 3.0 < 0.01);
        }
    }

    #[test]
    fn gamma_noise_has_one_over_m_variance() {
        // M=100: empirical relative variance over 10^4 draws within 5% of 1/M.
        let det = DetectionConfig {
            averages: 100,
            ..DetectionConfig::paper_defaults()
        };
        let grid = FrequencyGrid::positive(angular_from_khz(5.0), angular_from_khz(0.5));
        let mean = Spectrum::new(grid, vec![1.0; grid.len], SpectrumKind::PhasePsd);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut count = 0usize;
        for trial in 0..1000 {
            let s = sample_noisy(&mean, &det, 10_000 + trial);
            for &v in &s.values {
                sum += v;
                sumsq += v * v;
                count += 1;
            }
        }
        let n = count as f64;
        let m1 = sum / n;
        let var = sumsq / n - m1 * m1;
        assert!((var * 100.0 - 1.0).abs() < 0.05, "rel var {var}");
    }

    #[test]
    fn drive_on_and_off_resonance() {
        let a = osc(138.0, 1.0, 1.3);
        let b = osc(143.0, 1.0, 1.3);
        let same = apply_drive(&[a, b], a.site.frequency, 0.0);
        assert_eq!(same[0].total_occupation(), a.total_occupation());

        let driven = apply_drive(&[a, b], a.site.frequency, 2.0);
        assert!((driven[0].drive_occupation - 2.0).abs() < 1e-12);
        // 5 kHz detuning, Gamma = 2pi x 1.2 kHz: ratio frozen from direct evaluation
        let expected = 0.014_195_583_596_214_511;
        assert!((driven[1].drive_occupation / 2.0 - expected).abs() < 1e-15);
    }
}
