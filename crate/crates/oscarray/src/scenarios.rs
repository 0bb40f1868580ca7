//! Canonical experiment fixtures shared by the CLI recipes, the round-trip
//! report, and the acceptance suite.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    calibrate, fit_sidebands, occupation_from_asymmetry, pair_sidebands, OccupationEstimate,
};
use crate::config::OscillatorSpec;
use crate::coupling::CavityConfig;
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::spectra::{
    photon_spectrum, sample_noisy, to_detected_psd, DetectionConfig, FrequencyGrid, Quadrature,
    Spectrum, SpectrumKind,
};
use crate::units;

/// Acceptance tolerances on the recovered occupations of the six-oscillator
/// array (the published per-oscillator error bars).
pub const SIX_OSCILLATOR_TOLERANCES: [f64; 6] = [0.2, 0.2, 0.1, 0.1, 0.2, 0.4];

/// Analysis grid for thermometry round trips: 1 Hz bins over +-185 kHz.
/// The default 50 Hz grid does not carry enough information per record to
/// reach the published error bars at physical cooperativities (the per-bin
/// noise model is record-length equivalent, so finer bins stand in for
/// longer averaging).
pub fn thermometry_grid() -> FrequencyGrid {
    FrequencyGrid::symmetric(units::angular_from_khz(185.0), units::TWO_PI * 1.0)
}

/// One recovered occupation alongside its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermometryEstimate {
    pub label: String,
    #[serde(rename = "freq_kHz")]
    pub freq_khz: f64,
    pub truth: f64,
    pub estimate: OccupationEstimate,
}

/// Full thermometry round trip: synthesize the array's photon spectrum,
/// detect, sample on/off records, calibrate, fit, pair, and estimate each
/// oscillator's occupation from the sideband asymmetry.
pub fn thermometry_trial(
    specs: &[OscillatorSpec],
    atom_mass: f64,
    cavity: &CavityConfig,
    det: &DetectionConfig,
    grid: &FrequencyGrid,
    seed: u64,
) -> Result<Vec<ThermometryEstimate>> {
    let oscillators: Vec<_> = specs
        .iter()
        .map(|s| s.to_oscillator(atom_mass))
        .collect::<Result<_>>()?;
    let mean = photon_spectrum(&oscillators, cavity, grid);
    let mean_psd = to_detected_psd(&mean, det, Quadrature::Full)?;
    let floor = det.shot_floor(SpectrumKind::HeterodynePsd)?;
    let mean_off = Spectrum::new(*grid, vec![floor; grid.len], SpectrumKind::HeterodynePsd);
    let on = sample_noisy(&mean_psd, det, derive_seed(seed, "thermometry/on"));
    let off = sample_noisy(&mean_off, det, derive_seed(seed, "thermometry/off"));
    let calibrated = calibrate(&on, &off, det)?;

    let fits = fit_sidebands(&calibrated, &[]);
    let pairs = pair_sidebands(&fits);

    specs
        .iter()
        .map(|spec| {
            let target = units::angular_from_khz(spec.freq_khz);
            let gamma = units::angular_from_khz(spec.fwhm_khz);
            let best = pairs
                .iter()
                .min_by(|&&(_, a), &&(_, b)| {
                    (fits[a].center - target)
                        .abs()
                        .total_cmp(&(fits[b].center - target).abs())
                })
                .filter(|&&(_, a)| (fits[a].center - target).abs() <= 2.0 * gamma)
                .ok_or_else(|| {
                    Error::invalid(
                        "thermometry_trial",
                        format!("no sideband pair found near {} kHz", spec.freq_khz),
                    )
                })?;
            let estimate = occupation_from_asymmetry(&fits[best.0], &fits[best.1])?;
            Ok(ThermometryEstimate {
                label: spec.label.clone(),
                freq_khz: spec.freq_khz,
                truth: spec.nu_bar,
                estimate,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_six_oscillators;
    use crate::units::kg_from_amu;

    #[test]
    fn single_trial_recovers_all_six() {
        let specs = default_six_oscillators();
        let cavity = CavityConfig::paper_defaults();
        let det = DetectionConfig::paper_defaults();
        let grid = thermometry_grid();
        let mass = kg_from_amu(86.909);
        let out = thermometry_trial(&specs, mass, &cavity, &det, &grid, 20_001).unwrap();
        assert_eq!(out.len(), 6);
        for (est, tol) in out.iter().zip(SIX_OSCILLATOR_TOLERANCES) {
            assert!(
                (est.estimate.value - est.truth).abs() <= tol,
                "{}: {} vs {} (tol {tol})",
                est.label,
                est.estimate.value,
                est.truth
            );
        }
    }
}
