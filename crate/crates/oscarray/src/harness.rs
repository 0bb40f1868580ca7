//! Experiment orchestration behind the CLI: dispatches a validated run
//! configuration to one of the five experiments and writes its outputs plus a
//! deterministic manifest.

use serde::{Deserialize, Serialize};

use crate::addressing::{crosstalk_slopes_with, run_drive_series};
use crate::analysis::{
    calibrate, fit_sidebands, kappa_corrected_area, occupation_from_asymmetry, pair_sidebands,
    cooperativity_from_peak,
};
use crate::config::{Experiment, RunConfig};
use crate::coupling::Oscillator;
use crate::error::{Error, Result};
use crate::imaging::{extract_ridge, reconstruct_sites, scan_map};
use crate::io::{FitRecord, MapSidecar, OutputWriter, SiteEstimateRecord};
use crate::scenarios::{thermometry_grid, thermometry_trial, SIX_OSCILLATOR_TOLERANCES};
use crate::seed::derive_seed;
use crate::spectra::{
    apply_drive, phase_spectrum, photon_spectrum, sample_noisy, to_detected_psd, Quadrature,
    Spectrum, SpectrumKind,
};
use crate::units;

/// Run the configured experiment, writing outputs and `manifest.json` into
/// the output directory. The round-trip experiment additionally fails the run
/// when any of its checks fail.
pub fn execute(run: &RunConfig) -> Result<()> {
    let mut out = OutputWriter::new(&run.output_dir)?;
    match &run.experiment {
        Experiment::Simulate => simulate(run, &mut out)?,
        Experiment::Analyze { on, off } => analyze(run, on, off, &mut out)?,
        Experiment::Mri => mri(run, &mut out)?,
        Experiment::Drive => drive(run, &mut out)?,
        Experiment::Roundtrip => {
            let report = roundtrip(run)?;
            out.write_json("roundtrip.json", &report)?;
            out.finish(run.experiment.name(), run.seed, &run.file.hash())?;
            if !report.all_passed {
                let failed: Vec<_> = report
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.name.clone())
                    .collect();
                return Err(Error::invalid(
                    "roundtrip",
                    format!("checks failed: {}", failed.join(", ")),
                ));
            }
            return Ok(());
        }
    }
    out.finish(run.experiment.name(), run.seed, &run.file.hash())
}

/// Ground truth written by `simulate`, consumed only by humans and the
/// cross-run comparison in tests (never by `analyze`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateTruth {
    pub oscillators: Vec<crate::config::OscillatorSpec>,
}

fn simulate(run: &RunConfig, out: &mut OutputWriter) -> Result<()> {
    let cfg = &run.file;
    let mass = units::kg_from_amu(cfg.lattice.atom_mass_amu);
    let cavity = cfg.cavity.to_physics()?;
    let det = cfg.detection.to_physics(&cfg.cavity)?;
    let grid = cfg.simulate.grid();

    let oscillators: Vec<Oscillator> = cfg
        .simulate
        .oscillators
        .iter()
        .map(|s| s.to_oscillator(mass))
        .collect::<Result<_>>()?;

    let mut mean = photon_spectrum(&oscillators, &cavity, &grid);
    mean.meta.spikes = cfg.simulate.spikes.iter().map(|s| s.to_spike()).collect();
    mean.meta.config_hash = Some(cfg.hash());
    let mean_on = to_detected_psd(&mean, &det, Quadrature::Full)?;
    let floor = det.shot_floor(SpectrumKind::HeterodynePsd)?;
    let mut mean_off = Spectrum::new(grid, vec![floor; grid.len], SpectrumKind::HeterodynePsd);
    mean_off.meta.spikes = mean.meta.spikes.clone();
    mean_off.meta.config_hash = mean.meta.config_hash.clone();
    // Technical noise stays in the released-atoms reference record.
    let mean_off = to_detected_psd(
        &Spectrum {
            values: vec![0.0; grid.len],
            kind: SpectrumKind::PhotonDensity,
            ..mean_off.clone()
        },
        &det,
        Quadrature::Full,
    )?;

    let on = sample_noisy(&mean_on, &det, derive_seed(run.seed, "simulate/on"));
    let off = sample_noisy(&mean_off, &det, derive_seed(run.seed, "simulate/off"));

    out.write_spectrum("spectrum_on", &on)?;
    out.write_spectrum("spectrum_off", &off)?;
    out.write_json(
        "truth.json",
        &SimulateTruth {
            oscillators: cfg.simulate.oscillators.clone(),
        },
    )
}

fn analyze(
    run: &RunConfig,
    on_path: &std::path::Path,
    off_path: &std::path::Path,
    out: &mut OutputWriter,
) -> Result<()> {
    let cfg = &run.file;
    let cavity = cfg.cavity.to_physics()?;
    let det = cfg.detection.to_physics(&cfg.cavity)?;
    let on = crate::io::read_spectrum(on_path)?;
    let off = crate::io::read_spectrum(off_path)?;
    let calibrated = calibrate(&on, &off, &det)?;
    let exclusions = run.exclusions();
    let fits = fit_sidebands(&calibrated, &exclusions);
    let pairs = pair_sidebands(&fits);

    let mut records = Vec::new();
    let mut paired = vec![false; fits.len()];
    for &(si, ai) in &pairs {
        paired[si] = true;
        paired[ai] = true;
        let stokes = &fits[si];
        let anti = &fits[ai];
        let mut record = FitRecord::of(anti);
        match occupation_from_asymmetry(stokes, anti) {
            Ok(nu) => {
                record.nu_bar = Some(nu.value);
                record.nu_err = Some(nu.uncertainty);
                record.method = Some("asymmetry".to_string());
                // C from the Stokes rate: rate_r = pi C Gamma (nu + 1).
                let (rate_r, _) = kappa_corrected_area(stokes, &cavity);
                let c = rate_r / (std::f64::consts::PI * stokes.linewidth * (nu.value + 1.0));
                record.cooperativity = Some(c);
            }
            Err(e) => record.flags.push(e.to_string()),
        }
        records.push(record);
    }
    for (i, fit) in fits.iter().enumerate() {
        if !paired[i] {
            records.push(FitRecord::of(fit));
        }
    }
    records.sort_by(|a, b| a.center_khz.total_cmp(&b.center_khz));

    out.write_spectrum("calibrated", &calibrated)?;
    out.write_json("fits.json", &records)
}

fn mri(run: &RunConfig, out: &mut OutputWriter) -> Result<()> {
    let cfg = &run.file;
    let lattice = cfg.lattice.to_physics()?;
    let cavity = cfg.cavity.to_physics()?;
    let det = cfg.detection.to_physics(&cfg.cavity)?;
    let cloud = cfg.cloud.to_physics()?;
    let positions = cfg.mri.positions(&lattice)?;
    let scan = cfg.mri.scan();

    let map = scan_map(&lattice, &cavity, &det, &cloud, &positions, run.seed, &scan)?;
    let ridge = extract_ridge(&map, &run.exclusions());
    let sites = reconstruct_sites(&ridge, &lattice, &cloud)?;

    out.write("map.csv", &crate::io::map_matrix_csv(&map)?)?;
    out.write("map_long.csv", &crate::io::map_long_csv(&map)?)?;
    out.write_json("map.meta.json", &MapSidecar::of(&map))?;
    let site_records: Vec<SiteEstimateRecord> = sites.iter().map(SiteEstimateRecord::of).collect();
    out.write_json("sites.json", &site_records)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SeriesRow {
    amplitude: f64,
    oscillator: String,
    nu_bar: f64,
    nu_err: f64,
}

fn drive(run: &RunConfig, out: &mut OutputWriter) -> Result<()> {
    let cfg = &run.file;
    let mass = units::kg_from_amu(cfg.lattice.atom_mass_amu);
    let cavity = cfg.cavity.to_physics()?;
    let det = cfg.detection.to_physics(&cfg.cavity)?;
    let pair = cfg.drive.pair(mass)?;
    let grid = cfg.drive.grid();

    let series = run_drive_series(
        &pair,
        cfg.drive.target,
        &cfg.drive.amplitudes,
        &cavity,
        &det,
        &grid,
        run.seed,
    )?;
    let report = crosstalk_slopes_with(&series, cfg.drive.confidence)?;

    let mut rows = Vec::new();
    let names = ["alpha", "beta"];
    for (j, &a) in series.amplitudes.iter().enumerate() {
        for (i, name) in names.iter().enumerate() {
            rows.push(SeriesRow {
                amplitude: a,
                oscillator: name.to_string(),
                nu_bar: series.occupations[j][i].value,
                nu_err: series.occupations[j][i].uncertainty,
            });
        }
    }
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["amplitude", "oscillator", "nu_bar", "nu_err"])?;
    for row in &rows {
        csv.serialize((row.amplitude, &row.oscillator, row.nu_bar, row.nu_err))?;
    }
    let csv_bytes = csv
        .into_inner()
        .map_err(|e| Error::invalid("drive", e.to_string()))?;

    out.write_json("series.json", &series)?;
    out.write("series.csv", &csv_bytes)?;
    out.write_json("report.json", &report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

/// Estimator round-trip battery: each check exercises a full synthesize ->
/// detect -> recover loop against internal ground truth.
pub fn roundtrip(run: &RunConfig) -> Result<RoundtripReport> {
    let cfg = &run.file;
    let mass = units::kg_from_amu(cfg.lattice.atom_mass_amu);
    let cavity = cfg.cavity.to_physics()?;
    let det = cfg.detection.to_physics(&cfg.cavity)?;
    let mut checks = Vec::new();

    // Noiseless detection chain inverts exactly.
    {
        let oscillators: Vec<Oscillator> = cfg
            .simulate
            .oscillators
            .iter()
            .map(|s| s.to_oscillator(mass))
            .collect::<Result<_>>()?;
        let grid = cfg.simulate.grid();
        let truth = photon_spectrum(&oscillators, &cavity, &grid);
        let on = to_detected_psd(&truth, &det, Quadrature::Full)?;
        let floor = det.shot_floor(SpectrumKind::HeterodynePsd)?;
        let off = Spectrum::new(grid, vec![floor; grid.len], SpectrumKind::HeterodynePsd);
        let cal = calibrate(&on, &off, &det)?;
        let scale = truth.values.iter().cloned().fold(0.0_f64, f64::max);
        let worst = cal
            .values
            .iter()
            .zip(&truth.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        checks.push(CheckResult {
            name: "calibrate_noiseless_inverse".into(),
            passed: worst <= 1e-9 * scale,
            detail: format!("max |calibrated - truth| = {worst:.3e} (scale {scale:.3e})"),
        });
    }

    // Phase-peak relation inverts to 1e-12 on a parameter grid.
    {
        let mut worst = 0.0_f64;
        for i in 0..=20 {
            for j in 0..=20 {
                let c = 0.5 * i as f64;
                let nu_th = 0.25 * j as f64;
                let peak = 4.0 * c * (2.0 * nu_th + c + 1.0);
                worst = worst.max((cooperativity_from_peak(peak, nu_th) - c).abs());
            }
        }
        checks.push(CheckResult {
            name: "phase_peak_inverse".into(),
            passed: worst < 1e-12,
            detail: format!("max |C_recovered - C| = {worst:.3e}"),
        });
    }

    // Seeded thermometry trial on the six-oscillator array.
    {
        let grid = thermometry_grid();
        let trial = thermometry_trial(
            &cfg.simulate.oscillators,
            mass,
            &cavity,
            &det,
            &grid,
            derive_seed(run.seed, "roundtrip/thermometry"),
        );
        match trial {
            Ok(estimates) if estimates.len() == SIX_OSCILLATOR_TOLERANCES.len() => {
                let mut detail = String::new();
                let mut passed = true;
                for (est, tol) in estimates.iter().zip(SIX_OSCILLATOR_TOLERANCES) {
                    let err = est.estimate.value - est.truth;
                    if err.abs() > tol {
                        passed = false;
                    }
                    detail.push_str(&format!("{}: {:+.3} (tol {tol}); ", est.label, err));
                }
                checks.push(CheckResult {
                    name: "asymmetry_thermometry".into(),
                    passed,
                    detail,
                });
            }
            Ok(estimates) => checks.push(CheckResult {
                name: "asymmetry_thermometry".into(),
                passed: false,
                detail: format!("expected 6 oscillators, matched {}", estimates.len()),
            }),
            Err(e) => checks.push(CheckResult {
                name: "asymmetry_thermometry".into(),
                passed: false,
                detail: e.to_string(),
            }),
        }
    }

    // Noiseless drive response is affine with the prescribed crosstalk ratio.
    {
        let pair = cfg.drive.pair(mass)?;
        let grid = cfg.drive.grid();
        let target_freq = pair[0].site.frequency;
        let hw = pair[0].linewidth / 2.0;
        let det_ab = pair[1].site.frequency - target_freq;
        let expected_ratio = hw * hw / (det_ab * det_ab + hw * hw);
        let mut worst = 0.0_f64;
        for &a in &[0.0, 1.0, 2.0] {
            let driven = apply_drive(pair.as_slice(), target_freq, a);
            let spec = phase_spectrum(&driven, &cavity, &grid);
            let peak = |freq: f64| {
                let (i, _) = grid.index_range(freq, freq);
                spec.values[i] / cavity.filter(freq)
            };
            let nu_target =
                (peak(driven[0].site.frequency) / (4.0 * driven[0].cooperativity) - 1.0) / 2.0;
            let nu_neighbor =
                (peak(driven[1].site.frequency) / (4.0 * driven[1].cooperativity) - 1.0) / 2.0;
            worst = worst.max((nu_target - (cfg.drive.base_occupation + a)).abs());
            worst = worst
                .max((nu_neighbor - (cfg.drive.base_occupation + a * expected_ratio)).abs());
        }
        checks.push(CheckResult {
            name: "drive_linearity".into(),
            passed: worst < 1e-6,
            detail: format!("max occupation deviation {worst:.3e}"),
        });
    }

    // Sampling preserves the mean.
    {
        let grid = crate::spectra::FrequencyGrid::positive(
            units::angular_from_khz(5.0),
            units::angular_from_khz(0.5),
        );
        let floor = det.shot_floor(SpectrumKind::PhasePsd)?;
        let mean = Spectrum::new(grid, vec![floor; grid.len], SpectrumKind::PhasePsd);
        let trials = 400usize;
        let mut acc = vec![0.0; grid.len];
        for t in 0..trials {
            let s = sample_noisy(
                &mean,
                &det,
                derive_seed(run.seed, &format!("roundtrip/sample/{t}")),
            );
            for (a, v) in acc.iter_mut().zip(&s.values) {
                *a += v;
            }
        }
        let m = f64::from(det.averages);
        let bound = 5.0 / (m * trials as f64).sqrt();
        let worst = acc
            .iter()
            .map(|a| (a / trials as f64 / floor - 1.0).abs())
            .fold(0.0_f64, f64::max);
        checks.push(CheckResult {
            name: "sampling_mean".into(),
            passed: worst < bound,
            detail: format!("max relative mean deviation {worst:.3e} (bound {bound:.3e})"),
        });
    }

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(RoundtripReport { checks, all_passed })
}
