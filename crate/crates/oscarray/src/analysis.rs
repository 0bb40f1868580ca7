//! Inverse pipeline: calibration of raw PSDs to photon spectra, sideband
//! detection and fitting, and phonon/cooperativity estimation.

use serde::{Deserialize, Serialize};

use crate::coupling::CavityConfig;
use crate::error::{Error, Result};
use crate::fit::{fit_lorentzian, FitResult};
use crate::spectra::{DetectionConfig, Spectrum, SpectrumKind};
use crate::units::TWO_PI;

/// A fitted motional sideband.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidebandFit {
    /// Fitted center (rad/s, signed on photon-spectrum axes).
    pub center: f64,
    /// Fitted full width Gamma (rad/s).
    pub linewidth: f64,
    /// Fitted peak height above the constant baseline, in the spectrum's
    /// density units (not corrected for the cavity filter).
    pub peak_height: f64,
    /// Fitted constant baseline.
    pub baseline: f64,
    /// Analytic integral of the fitted Lorentzian, `pi * height * Gamma / 2`
    /// (density units x rad/s). Divide by the cavity filter at `center` for
    /// the physical sideband rate; see [`kappa_corrected_area`].
    pub area: f64,
    /// First-order uncertainty on `area` from the fit covariance.
    pub area_uncertainty: f64,
    /// Frequency interval used for the fit (rad/s).
    pub band: (f64, f64),
    /// Residual RMS over the fit window.
    pub goodness: f64,
    /// One-sigma uncertainties on (height, center, fwhm, offset).
    pub uncertainties: [f64; 4],
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl SidebandFit {
    pub fn is_clean(&self) -> bool {
        self.converged && self.flags.is_empty()
    }
}

/// Phonon-occupation estimate and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationEstimate {
    pub value: f64,
    pub uncertainty: f64,
    pub method: OccupationMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupationMethod {
    Asymmetry,
    PhasePeak,
}

/// Peak detection and fitting knobs.
#[derive(Debug, Clone, Copy)]
pub struct DetectionOptions {
    /// Detection threshold in units of the local noise standard deviation.
    pub significance: f64,
    /// Width of the sliding window used for the local noise estimate (rad/s).
    pub noise_window: f64,
    /// Boxcar width of the detection statistic (rad/s). Peak significance is
    /// judged on the smoothed trace; fits always run on the raw values.
    pub smoothing_width: f64,
    /// Fit window half-width in units of the guessed linewidth.
    pub fit_halfwidth_linewidths: f64,
    /// Floor on the guessed linewidth, in bins.
    pub min_fwhm_bins: usize,
}

impl Default for DetectionOptions {
    fn default() -> Self {
        DetectionOptions {
            significance: 4.0,
            noise_window: TWO_PI * 20e3,
            smoothing_width: TWO_PI * 300.0,
            fit_halfwidth_linewidths: 5.0,
            min_fwhm_bins: 3,
        }
    }
}

/// Convert a measured PSD and its atoms-released reference into a photon
/// density: `n(omega) = 2 (on - off) / (eps S_SN)` bin-wise.
///
/// The returned values keep their signed noise floor so downstream fits stay
/// unbiased; the fraction of negative bins is recorded in the metadata and
/// negatives are clamped to zero when the spectrum is exported.
pub fn calibrate(on: &Spectrum, off: &Spectrum, det: &DetectionConfig) -> Result<Spectrum> {
    if !on.same_grid(off) || on.values.len() != off.values.len() {
        return Err(Error::GridMismatch);
    }
    if on.kind != off.kind {
        return Err(Error::KindMismatch {
            expected: on.kind.to_string(),
            got: off.kind.to_string(),
        });
    }
    if !(det.efficiency > 0.0) {
        return Err(Error::ZeroEfficiency);
    }
    let out_kind = match on.kind {
        SpectrumKind::HeterodynePsd => SpectrumKind::PhotonDensity,
        SpectrumKind::PhasePsd => SpectrumKind::PhaseDensity,
        other => {
            return Err(Error::KindMismatch {
                expected: "a detected PSD kind".into(),
                got: other.to_string(),
            })
        }
    };
    let floor = det.shot_floor(on.kind)?;
    let scale = 2.0 / (det.efficiency * floor);
    let values: Vec<f64> = on
        .values
        .iter()
        .zip(&off.values)
        .map(|(&a, &b)| scale * (a - b))
        .collect();
    let negative = values.iter().filter(|&&v| v < 0.0).count();
    let mut out = Spectrum::new(on.grid, values, out_kind);
    out.averages = on.averages;
    out.meta = on.meta.clone();
    out.meta.clamp_fraction = Some(negative as f64 / on.values.len() as f64);
    Ok(out)
}

/// Detect and fit all significant sidebands, skipping excluded intervals
/// (pairs of angular frequencies). Returns fits sorted by center; peaks whose
/// fit did not converge come back flagged rather than failing the pipeline.
pub fn fit_sidebands(s: &Spectrum, exclusions: &[(f64, f64)]) -> Vec<SidebandFit> {
    fit_sidebands_with(s, exclusions, &DetectionOptions::default())
}

pub fn fit_sidebands_with(
    s: &Spectrum,
    exclusions: &[(f64, f64)],
    opts: &DetectionOptions,
) -> Vec<SidebandFit> {
    let n = s.values.len();
    if n < 16 {
        return Vec::new();
    }
    let excluded = exclusion_mask(s, exclusions);
    let smooth_bins = ((opts.smoothing_width / s.grid.step).round() as usize).clamp(1, n / 4);
    let smoothed = boxcar(&s.values, &excluded, smooth_bins);
    let (baseline, sigma) = local_noise_stats(&smoothed, &s.grid, &excluded, opts.noise_window);

    // Absolute significance floor so noiseless spectra (MAD = 0) still detect
    // their peaks while exactly-flat ones detect nothing.
    let scale = s.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let sigma_floor = 1e-12 * scale;

    // Candidates: local maxima of the smoothed trace above the significance
    // threshold. The maximum window matches the boxcar so one physical peak
    // yields one candidate even when two peaks share a threshold run.
    let m = smooth_bins.max(opts.min_fwhm_bins);
    let mut candidates: Vec<(usize, f64, usize)> = Vec::new(); // (index, excess, fwhm_bins)
    for i in 0..n {
        if excluded[i] {
            continue;
        }
        let excess = smoothed[i] - baseline[i];
        let thresh = opts.significance * sigma[i].max(sigma_floor);
        if !(excess > thresh) || sigma[i].max(sigma_floor) <= 0.0 {
            continue;
        }
        let lo = i.saturating_sub(m);
        let hi = (i + m + 1).min(n);
        let is_max = (lo..hi).all(|j| {
            if j < i {
                smoothed[j] <= smoothed[i]
            } else if j > i {
                smoothed[j] < smoothed[i]
            } else {
                true
            }
        });
        if !is_max {
            continue;
        }
        // Width at half the smoothed excess.
        let half = baseline[i] + excess / 2.0;
        let mut a = i;
        while a > 0 && smoothed[a - 1] > half {
            a -= 1;
        }
        let mut b = i;
        while b + 1 < n && smoothed[b + 1] > half {
            b += 1;
        }
        let fwhm_bins = (b - a + 1).max(opts.min_fwhm_bins);
        candidates.push((i, excess, fwhm_bins));
    }

    // Merge duplicate candidates of one peak (closer than a guessed width).
    candidates.sort_by_key(|c| c.0);
    let mut peaks: Vec<(usize, f64, usize)> = Vec::new();
    for cand in candidates {
        match peaks.last_mut() {
            Some(last) if cand.0 - last.0 <= last.2.max(cand.2) => {
                if cand.1 > last.1 {
                    *last = cand;
                }
            }
            _ => peaks.push(cand),
        }
    }

    let mut fits: Vec<SidebandFit> = peaks
        .iter()
        .map(|&(peak, _, fwhm_bins)| {
            let g0 = fwhm_bins as f64 * s.grid.step;
            let x0 = s.grid.value(peak);
            let h0 = (s.values[peak] - baseline[peak]).max(sigma[peak]);
            let half_window = opts.fit_halfwidth_linewidths * g0;
            let (a, b) = s.grid.index_range(x0 - half_window, x0 + half_window);
            let mut xs = Vec::with_capacity(b - a);
            let mut ys = Vec::with_capacity(b - a);
            for i in a..b {
                if excluded[i] {
                    continue;
                }
                // Mask the cores of other detected peaks out of this window.
                let shadowed = peaks.iter().any(|&(other, _, other_w)| {
                    other != peak && i.abs_diff(other) <= 2 * other_w.max(fwhm_bins)
                });
                if !shadowed {
                    xs.push(s.grid.value(i));
                    ys.push(s.values[i]);
                }
            }
            let init = [h0, x0, g0, baseline[peak]];
            let fit = fit_lorentzian(&xs, &ys, init);
            build_sideband(&fit, (s.grid.value(a), s.grid.value(b.saturating_sub(1))), xs.len())
        })
        .collect();
    fits.sort_by(|p, q| p.center.total_cmp(&q.center));
    fits
}

/// Boxcar average of width `2k+1` bins around each bin, skipping excluded
/// bins. `width` is the full width in bins.
fn boxcar(values: &[f64], excluded: &[bool], width: usize) -> Vec<f64> {
    let n = values.len();
    let k = width / 2;
    if k == 0 {
        return values.to_vec();
    }
    let mut out = vec![0.0; n];
    // Running sums over the valid bins in the window.
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut lo = 0usize; // inclusive
    let mut hi = 0usize; // exclusive
    for (i, o) in out.iter_mut().enumerate() {
        let want_lo = i.saturating_sub(k);
        let want_hi = (i + k + 1).min(n);
        while hi < want_hi {
            if !excluded[hi] {
                sum += values[hi];
                count += 1;
            }
            hi += 1;
        }
        while lo < want_lo {
            if !excluded[lo] {
                sum -= values[lo];
                count -= 1;
            }
            lo += 1;
        }
        *o = if count > 0 { sum / count as f64 } else { 0.0 };
    }
    out
}

fn build_sideband(fit: &FitResult, band: (f64, f64), n_bins: usize) -> SidebandFit {
    let [h, x0, g, c] = fit.params;
    let area = std::f64::consts::PI * h * g / 2.0;
    let area_uncertainty = match &fit.covariance {
        Some(cov) => {
            let var = (std::f64::consts::PI / 2.0).powi(2)
                * (g * g * cov[0][0] + h * h * cov[2][2] + 2.0 * h * g * cov[0][2]);
            var.max(0.0).sqrt()
        }
        None => 0.0,
    };
    let mut flags = Vec::new();
    if !fit.converged {
        flags.push("non-converged".to_string());
    }
    if h <= 0.0 {
        flags.push("non-positive height".to_string());
    }
    if x0 < band.0 || x0 > band.1 {
        flags.push("center left fit window".to_string());
    }
    SidebandFit {
        center: x0,
        linewidth: g,
        peak_height: h,
        baseline: c,
        area,
        area_uncertainty,
        band,
        goodness: (fit.cost / n_bins.max(1) as f64).sqrt(),
        uncertainties: fit.uncertainties(),
        converged: fit.converged,
        flags,
    }
}

/// Pair Stokes (negative-center) and anti-Stokes (positive-center) fits on a
/// signed axis by matching |center| within a linewidth. Returns
/// `(stokes, antistokes)` index pairs into the input slice.
pub fn pair_sidebands(fits: &[SidebandFit]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut used = vec![false; fits.len()];
    for (i, f) in fits.iter().enumerate() {
        if f.center >= 0.0 || !f.is_clean() {
            continue;
        }
        let target = -f.center;
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in fits.iter().enumerate() {
            if used[j] || g.center <= 0.0 || !g.is_clean() {
                continue;
            }
            let d = (g.center - target).abs();
            if d <= f.linewidth.max(g.linewidth) && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Divide the cavity filter (evaluated at the fitted center) out of the fit's
/// analytic area: the physical sideband rate of Eqs. for `n_dot`.
pub fn kappa_corrected_area(fit: &SidebandFit, cavity: &CavityConfig) -> (f64, f64) {
    let f = cavity.filter(fit.center);
    (fit.area / f, fit.area_uncertainty / f)
}

/// Mean phonon occupation from the sideband-rate asymmetry,
/// `nu = rate_b / (rate_r - rate_b)`, with first-order error propagation.
///
/// The cavity filter is symmetric in +-omega, so raw fit areas can be used
/// directly. Errors with `NonphysicalOrdering` when the anti-Stokes area is
/// not below the Stokes area (a noise-dominated fit).
pub fn occupation_from_asymmetry(
    stokes: &SidebandFit,
    antistokes: &SidebandFit,
) -> Result<OccupationEstimate> {
    let r = stokes.area;
    let b = antistokes.area;
    if b >= r {
        return Err(Error::NonphysicalOrdering {
            stokes: r,
            antistokes: b,
        });
    }
    let d = r - b;
    let value = b / d;
    let var = (r * antistokes.area_uncertainty).powi(2) + (b * stokes.area_uncertainty).powi(2);
    Ok(OccupationEstimate {
        value,
        uncertainty: var.sqrt() / (d * d),
        method: OccupationMethod::Asymmetry,
    })
}

/// Solve the phase-quadrature peak relation `peak = 4C (2 nu_th + C + 1)` for
/// its unique non-negative root. The peak height must already be corrected
/// for the cavity filter.
pub fn cooperativity_from_peak(peak_height: f64, thermal_occupation: f64) -> f64 {
    if peak_height <= 0.0 {
        return 0.0;
    }
    let t = 2.0 * thermal_occupation + 1.0;
    ((t * t + peak_height).sqrt() - t) / 2.0
}

/// Invert a phase-spectrum peak for the total occupation:
/// `nu = (peak / filter / (4C) - 1) / 2`, clamped at zero.
pub fn occupation_from_phase_peak(
    fit: &SidebandFit,
    cooperativity: f64,
    cavity: &CavityConfig,
) -> Result<OccupationEstimate> {
    if !(cooperativity > 0.0) {
        return Err(Error::ZeroCooperativity);
    }
    let f = cavity.filter(fit.center);
    let corrected = fit.peak_height / f;
    let value = ((corrected / (4.0 * cooperativity) - 1.0) / 2.0).max(0.0);
    let uncertainty = fit.uncertainties[0] / f / (8.0 * cooperativity);
    Ok(OccupationEstimate {
        value,
        uncertainty,
        method: OccupationMethod::PhasePeak,
    })
}

fn exclusion_mask(s: &Spectrum, exclusions: &[(f64, f64)]) -> Vec<bool> {
    let mut mask = vec![false; s.values.len()];
    for &(lo, hi) in exclusions {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let (a, b) = s.grid.index_range(lo, hi);
        for m in &mut mask[a..b] {
            *m = true;
        }
    }
    mask
}

/// Local baseline (median) and noise scale (1.4826 x MAD) over a sliding
/// window, evaluated on a decimated set of anchors and nearest-assigned to
/// each bin. Excluded bins do not contribute to the statistics.
fn local_noise_stats(
    values: &[f64],
    grid: &crate::spectra::FrequencyGrid,
    excluded: &[bool],
    window: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let w_bins = ((window / grid.step).round() as usize).clamp(16, n);
    let hop = (w_bins / 8).max(1);
    let stride = (w_bins / 256).max(1);

    let mut anchors = Vec::new();
    let mut scratch: Vec<f64> = Vec::with_capacity(w_bins / stride + 2);
    let mut center = 0usize;
    while center < n {
        let lo = center.saturating_sub(w_bins / 2);
        let hi = (center + w_bins / 2 + 1).min(n);
        scratch.clear();
        let mut i = lo;
        while i < hi {
            if !excluded[i] {
                scratch.push(values[i]);
            }
            i += stride;
        }
        let (med, mad) = median_mad(&mut scratch);
        anchors.push((center, med, 1.4826 * mad));
        if center == n - 1 {
            break;
        }
        center = (center + hop).min(n - 1);
    }

    let mut baseline = vec![0.0; n];
    let mut sigma = vec![0.0; n];
    let mut a = 0usize;
    for i in 0..n {
        while a + 1 < anchors.len()
            && anchors[a + 1].0.abs_diff(i) <= anchors[a].0.abs_diff(i)
        {
            a += 1;
        }
        baseline[i] = anchors[a].1;
        sigma[i] = anchors[a].2;
    }
    (baseline, sigma)
}

fn median_mad(values: &mut Vec<f64>) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    values.sort_by(f64::total_cmp);
    let med = values[values.len() / 2];
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    (med, dev[dev.len() / 2])
}
