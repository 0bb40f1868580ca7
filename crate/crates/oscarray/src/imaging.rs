//! Mechanical resonance imaging: sweep the loading position across the
//! superlattice, record the phase-modulation response per position, extract
//! the resonance ridge, and reconstruct the potential minima.
//!
//! Rows are independent: each loading position derives its own seeds from the
//! top-level seed, so the scan parallelizes with bit-identical results.

use serde::{Deserialize, Serialize};

use crate::analysis::{calibrate, fit_sidebands_with, DetectionOptions};
use crate::coupling::{dispersive_shift, CavityConfig, Oscillator};
use crate::error::{Error, Result};
use crate::exec;
use crate::seed::derive_seed;
use crate::spectra::{
    phase_spectrum, sample_noisy, to_detected_psd, DetectionConfig, FrequencyGrid, Quadrature,
    Spectrum, SpectrumKind,
};
use crate::superlattice::{find_sites, load_atoms_with, AtomCloud, LatticeConfig, Site};
use crate::units::{self, TWO_PI};

/// Per-scan knobs beyond the physical configs.
#[derive(Debug, Clone, Copy)]
pub struct ScanConfig {
    /// Mechanical linewidth assigned to every loaded oscillator (rad/s).
    pub linewidth: f64,
    /// Thermal occupation of loaded oscillators.
    pub thermal_occupation: f64,
    /// Sites holding less than this fraction of the cloud are ignored.
    pub occupancy_cutoff: f64,
    /// Phase-spectrum grid for each row.
    pub grid: FrequencyGrid,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            linewidth: TWO_PI * 1.2e3,
            thermal_occupation: 1.0,
            occupancy_cutoff: 0.05,
            grid: crate::spectra::default_phase_grid(),
        }
    }
}

/// Position x frequency response map plus the per-position dispersive shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceMap {
    /// Loading positions (m), in scan order.
    pub positions: Vec<f64>,
    pub grid: FrequencyGrid,
    /// One calibrated phase-density row per position.
    pub power: Vec<Vec<f64>>,
    /// Dispersive cavity shift per position (rad/s), the imaging overlay trace.
    pub shifts: Vec<f64>,
}

impl ResonanceMap {
    /// View one row as a spectrum for the analysis pipeline.
    pub fn row_spectrum(&self, row: usize) -> Spectrum {
        Spectrum::new(self.grid, self.power[row].clone(), SpectrumKind::PhaseDensity)
    }
}

/// One detected resonance in the map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgePoint {
    /// Loading position of the row (m).
    pub position: f64,
    /// Fitted sideband center (rad/s).
    pub frequency: f64,
    /// Fitted peak power (phase-density units).
    pub strength: f64,
    /// Fitted full linewidth (rad/s).
    pub linewidth: f64,
}

/// A reconstructed potential minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteEstimate {
    pub position: f64,
    pub frequency: f64,
    /// Resolution floor: site spacing or the cloud's effective width,
    /// whichever is larger.
    pub position_uncertainty: f64,
}

/// Simulate the full imaging scan. Deterministic for a fixed seed; rows run
/// in parallel with per-row derived seeds.
pub fn scan_map(
    lattice: &LatticeConfig,
    cavity: &CavityConfig,
    det: &DetectionConfig,
    cloud_template: &AtomCloud,
    positions: &[f64],
    seed: u64,
    scan: &ScanConfig,
) -> Result<ResonanceMap> {
    if positions.is_empty() {
        return Err(Error::invalid("scan_map", "no loading positions"));
    }
    if cloud_template.total_atoms == 0 {
        return Err(Error::invalid("scan_map", "cloud has no atoms"));
    }
    cloud_template.validate()?;
    cavity.validate()?;
    det.validate()?;

    let lo = positions.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = positions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 4.0 * cloud_template.total_width() + units::metres_from_um(2.0);
    let sites = find_sites(lattice, lo - pad, hi + pad)?;

    let rows: Vec<Result<(Vec<f64>, f64)>> = exec::map_indexed(positions.len(), |i| {
        scan_row(
            lattice, cavity, det, cloud_template, &sites, positions[i], seed, i, scan,
        )
    });

    let mut power = Vec::with_capacity(rows.len());
    let mut shifts = Vec::with_capacity(rows.len());
    for row in rows {
        let (values, shift) = row?;
        power.push(values);
        shifts.push(shift);
    }
    Ok(ResonanceMap {
        positions: positions.to_vec(),
        grid: scan.grid,
        power,
        shifts,
    })
}

/// Simulate a single scan row: load the cloud at `position`, derive the
/// oscillators, synthesize and sample the phase PSD, and calibrate it back to
/// a phase density. Returns the row values and the dispersive shift.
#[allow(clippy::too_many_arguments)]
pub fn scan_row(
    lattice: &LatticeConfig,
    cavity: &CavityConfig,
    det: &DetectionConfig,
    cloud_template: &AtomCloud,
    sites: &[Site],
    position: f64,
    seed: u64,
    row_index: usize,
    scan: &ScanConfig,
) -> Result<(Vec<f64>, f64)> {
    let cloud = AtomCloud {
        center: position,
        ..*cloud_template
    };
    let row_seed = derive_seed(seed, &format!("mri/row/{row_index}"));
    let loaded = load_atoms_with(&cloud, sites, row_seed, scan.occupancy_cutoff);

    let mut oscillators = Vec::with_capacity(loaded.len());
    for (site, count) in loaded {
        oscillators.push(Oscillator::derive(
            site,
            count,
            scan.linewidth,
            scan.thermal_occupation,
            cavity,
            lattice.atom_mass,
        )?);
    }
    let shift = dispersive_shift(&oscillators, cavity);

    let mean = phase_spectrum(&oscillators, cavity, &scan.grid);
    let mean_psd = to_detected_psd(&mean, det, Quadrature::Phase)?;
    let floor = det.shot_floor(SpectrumKind::PhasePsd)?;
    let mean_off = Spectrum::new(scan.grid, vec![floor; scan.grid.len], SpectrumKind::PhasePsd);
    let on = sample_noisy(&mean_psd, det, derive_seed(seed, &format!("mri/row/{row_index}/on")));
    let off = sample_noisy(&mean_off, det, derive_seed(seed, &format!("mri/row/{row_index}/off")));
    let cal = calibrate(&on, &off, det)?;
    Ok((cal.values, shift))
}

/// Fit every row of the map and return all significant resonances.
pub fn extract_ridge(map: &ResonanceMap, exclusions: &[(f64, f64)]) -> Vec<RidgePoint> {
    extract_ridge_with(map, exclusions, &DetectionOptions::default())
}

pub fn extract_ridge_with(
    map: &ResonanceMap,
    exclusions: &[(f64, f64)],
    opts: &DetectionOptions,
) -> Vec<RidgePoint> {
    let per_row: Vec<Vec<RidgePoint>> = exec::map_indexed(map.positions.len(), |row| {
        let spectrum = map.row_spectrum(row);
        fit_sidebands_with(&spectrum, exclusions, opts)
            .into_iter()
            .filter(|f| f.is_clean() && f.center > 0.0)
            .map(|f| RidgePoint {
                position: map.positions[row],
                frequency: f.center,
                strength: f.peak_height,
                linewidth: f.linewidth,
            })
            .collect()
    });
    per_row.into_iter().flatten().collect()
}

/// Cluster ridge points into sites and estimate each site's position as the
/// strength-weighted centroid of the contributing loading positions.
///
/// Clustering uses the frequency gap threshold (median fitted linewidth) with
/// a scan-position adjacency constraint: site frequencies repeat across the
/// superlattice period, so frequency alone cannot separate distant sites.
pub fn reconstruct_sites(
    ridge: &[RidgePoint],
    cfg: &LatticeConfig,
    cloud: &AtomCloud,
) -> Result<Vec<SiteEstimate>> {
    if ridge.is_empty() {
        return Err(Error::EmptyRidge);
    }

    let mut widths: Vec<f64> = ridge.iter().map(|p| p.linewidth).collect();
    widths.sort_by(f64::total_cmp);
    let gap = widths[widths.len() / 2];

    let mut points: Vec<RidgePoint> = ridge.to_vec();
    points.sort_by(|a, b| {
        a.position
            .total_cmp(&b.position)
            .then(a.frequency.total_cmp(&b.frequency))
    });

    let mut positions: Vec<f64> = points.iter().map(|p| p.position).collect();
    positions.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut steps: Vec<f64> = positions.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(f64::total_cmp);
    let adjacency = if steps.is_empty() {
        cloud.total_width().max(1e-9)
    } else {
        3.5 * steps[steps.len() / 2]
    };
    let min_cluster = if positions.len() > 3 { 2 } else { 1 };

    struct Cluster {
        sum_strength: f64,
        sum_zs: f64,
        sum_fs: f64,
        last_position: f64,
        count: usize,
    }
    impl Cluster {
        fn mean_freq(&self) -> f64 {
            self.sum_fs / self.sum_strength
        }
    }

    let mut clusters: Vec<Cluster> = Vec::new();
    for p in &points {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in clusters.iter().enumerate() {
            if p.position - c.last_position > adjacency {
                continue;
            }
            let df = (p.frequency - c.mean_freq()).abs();
            if df <= gap && best.map_or(true, |(_, d)| df < d) {
                best = Some((i, df));
            }
        }
        match best {
            Some((i, _)) => {
                let c = &mut clusters[i];
                c.sum_strength += p.strength;
                c.sum_zs += p.position * p.strength;
                c.sum_fs += p.frequency * p.strength;
                c.last_position = p.position;
                c.count += 1;
            }
            None => clusters.push(Cluster {
                sum_strength: p.strength,
                sum_zs: p.position * p.strength,
                sum_fs: p.frequency * p.strength,
                last_position: p.position,
                count: 1,
            }),
        }
    }

    let spacing = mean_site_spacing(cfg, &points).unwrap_or(0.0);
    let floor = spacing.max(cloud.total_width());
    let mut estimates: Vec<SiteEstimate> = clusters
        .iter()
        .filter(|c| c.count >= min_cluster && c.sum_strength > 0.0)
        .map(|c| SiteEstimate {
            position: c.sum_zs / c.sum_strength,
            frequency: c.sum_fs / c.sum_strength,
            position_uncertainty: floor,
        })
        .collect();
    estimates.sort_by(|a, b| a.position.total_cmp(&b.position));
    Ok(estimates)
}

fn mean_site_spacing(cfg: &LatticeConfig, points: &[RidgePoint]) -> Option<f64> {
    let lo = points.first()?.position;
    let hi = points.last()?.position;
    let pad = units::metres_from_um(1.0);
    let sites = find_sites(cfg, lo - pad, hi + pad).ok()?;
    if sites.len() < 2 {
        return None;
    }
    let span = sites.last()?.position - sites.first()?.position;
    Some(span / (sites.len() - 1) as f64)
}
