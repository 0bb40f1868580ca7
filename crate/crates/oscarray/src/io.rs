//! File formats: spectrum CSV + JSON sidecar, resonance-map exports, fit
//! records, and the deterministic run manifest.
//!
//! Every output is written atomically (temp file + rename). The manifest
//! carries the config hash, seed, crate version, and a SHA-256 per output
//! file; wall-clock time lives in a separate `run_info.json` so data files
//! and the manifest are byte-identical across reruns.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::SidebandFit;
use crate::error::{Error, Result};
use crate::imaging::{ResonanceMap, SiteEstimate};
use crate::spectra::{FrequencyGrid, Spectrum, SpectrumKind, SpectrumMeta};
use crate::units;

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Collects outputs for one run directory and assembles the manifest.
pub struct OutputWriter {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl OutputWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputWriter {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        self.hashes.insert(name.to_string(), format!("{:x}", hasher.finalize()));
        atomic_write(&self.dir.join(name), bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn write_spectrum(&mut self, stem: &str, spectrum: &Spectrum) -> Result<()> {
        self.write(&format!("{stem}.csv"), &spectrum_csv(spectrum)?)?;
        self.write_json(&format!("{stem}.meta.json"), &SpectrumSidecar::of(spectrum))
    }

    /// Finish the run: write `manifest.json` (deterministic) and
    /// `run_info.json` (timestamps only).
    pub fn finish(mut self, experiment: &str, seed: u64, config_hash: &str) -> Result<()> {
        let manifest = Manifest {
            experiment: experiment.to_string(),
            seed,
            config_hash: config_hash.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: std::mem::take(&mut self.hashes),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        atomic_write(&self.dir.join("manifest.json"), &bytes)?;

        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let info = serde_json::json!({ "written_at_unix": now });
        let mut bytes = serde_json::to_vec_pretty(&info)?;
        bytes.push(b'\n');
        atomic_write(&self.dir.join("run_info.json"), &bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub crate_version: String,
    /// SHA-256 per output file.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Sidecar record accompanying each spectrum CSV. The grid is stored exactly
/// so a reimported spectrum is bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSidecar {
    pub kind: SpectrumKind,
    pub units: String,
    pub grid: FrequencyGrid,
    pub averages: u32,
    #[serde(flatten)]
    pub meta: SpectrumMeta,
}

impl SpectrumSidecar {
    pub fn of(s: &Spectrum) -> Self {
        let units = match s.kind {
            SpectrumKind::PhotonDensity => "photons per bin (dimensionless density)",
            SpectrumKind::PhaseDensity => "phase-quadrature photon density",
            SpectrumKind::HeterodynePsd => "W/Hz",
            SpectrumKind::PhasePsd => "W/Hz",
        };
        SpectrumSidecar {
            kind: s.kind,
            units: units.to_string(),
            grid: s.grid,
            averages: s.averages,
            meta: s.meta.clone(),
        }
    }
}

/// CSV rows: `detuning_kHz,value`. Calibrated densities are clamped at zero
/// on export (their in-memory values keep the signed noise floor).
pub fn spectrum_csv(s: &Spectrum) -> Result<Vec<u8>> {
    let clamp = s.kind.is_density() && s.meta.clamp_fraction.is_some();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["detuning_kHz", "value"])?;
    for (i, &v) in s.values.iter().enumerate() {
        let khz = units::khz_from_angular(s.grid.value(i));
        let v = if clamp { v.max(0.0) } else { v };
        w.serialize((khz, v))?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid("spectrum_csv", e.to_string()))
}

/// Read a spectrum written by [`OutputWriter::write_spectrum`]; `csv_path`
/// names the CSV, with the sidecar next to it.
pub fn read_spectrum(csv_path: &Path) -> Result<Spectrum> {
    let sidecar_path = sidecar_path(csv_path);
    let sidecar: SpectrumSidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path)?)?;
    let mut reader = csv::Reader::from_path(csv_path)?;
    let mut values = Vec::with_capacity(sidecar.grid.len);
    for record in reader.deserialize::<(f64, f64)>() {
        let (_khz, v) = record?;
        values.push(v);
    }
    if values.len() != sidecar.grid.len {
        return Err(Error::invalid(
            "read_spectrum",
            format!(
                "{} rows in {} but sidecar grid has {}",
                values.len(),
                csv_path.display(),
                sidecar.grid.len
            ),
        ));
    }
    let mut s = Spectrum::new(sidecar.grid, values, sidecar.kind);
    s.averages = sidecar.averages;
    s.meta = sidecar.meta;
    Ok(s)
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".meta.json");
    csv_path.with_file_name(name)
}

/// Map matrix CSV: first row is the frequency axis in kHz, first column the
/// loading position in um.
pub fn map_matrix_csv(map: &ResonanceMap) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = Vec::with_capacity(map.grid.len + 1);
    header.push("position_um".to_string());
    for f in map.grid.values() {
        header.push(format!("{}", units::khz_from_angular(f)));
    }
    w.write_record(&header)?;
    for (i, row) in map.power.iter().enumerate() {
        let mut record = Vec::with_capacity(row.len() + 1);
        record.push(format!("{}", units::um_from_metres(map.positions[i])));
        for &v in row {
            record.push(format!("{}", v.max(0.0)));
        }
        w.write_record(&record)?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid("map_matrix_csv", e.to_string()))
}

/// Long-format export for heat-map plotting: position, frequency, power.
pub fn map_long_csv(map: &ResonanceMap) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["position_um", "frequency_kHz", "power"])?;
    for (i, row) in map.power.iter().enumerate() {
        let pos = units::um_from_metres(map.positions[i]);
        for (j, &v) in row.iter().enumerate() {
            w.serialize((pos, units::khz_from_angular(map.grid.value(j)), v.max(0.0)))?;
        }
    }
    w.into_inner()
        .map_err(|e| Error::invalid("map_long_csv", e.to_string()))
}

/// JSON sidecar for the map: positions, dispersive shifts, and the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSidecar {
    pub positions_um: Vec<f64>,
    #[serde(rename = "shifts_kHz")]
    pub shifts_khz: Vec<f64>,
    pub grid: FrequencyGrid,
}

impl MapSidecar {
    pub fn of(map: &ResonanceMap) -> Self {
        MapSidecar {
            positions_um: map.positions.iter().map(|&z| units::um_from_metres(z)).collect(),
            shifts_khz: map.shifts.iter().map(|&s| units::khz_from_angular(s)).collect(),
            grid: map.grid,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteEstimateRecord {
    pub position_um: f64,
    #[serde(rename = "frequency_kHz")]
    pub frequency_khz: f64,
    pub position_uncertainty_um: f64,
}

impl SiteEstimateRecord {
    pub fn of(site: &SiteEstimate) -> Self {
        SiteEstimateRecord {
            position_um: units::um_from_metres(site.position),
            frequency_khz: units::khz_from_angular(site.frequency),
            position_uncertainty_um: units::um_from_metres(site.position_uncertainty),
        }
    }
}

/// Exported site list CSV: position_nm, depth_over_h_kHz, frequency_kHz.
pub fn sites_csv(sites: &[crate::superlattice::Site]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["position_nm", "depth_over_h_kHz", "frequency_kHz"])?;
    for s in sites {
        w.serialize((
            units::nm_from_metres(s.position),
            units::h_khz_from_joules(s.depth),
            units::khz_from_angular(s.frequency),
        ))?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid("sites_csv", e.to_string()))
}

/// One exported fit/estimate record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    #[serde(rename = "center_kHz")]
    pub center_khz: f64,
    #[serde(rename = "fwhm_kHz")]
    pub fwhm_khz: f64,
    pub peak: f64,
    pub area: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_bar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_err: Option<f64>,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub cooperativity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl FitRecord {
    pub fn of(fit: &SidebandFit) -> Self {
        FitRecord {
            center_khz: units::khz_from_angular(fit.center),
            fwhm_khz: units::khz_from_angular(fit.linewidth),
            peak: fit.peak_height,
            area: fit.area,
            nu_bar: None,
            nu_err: None,
            cooperativity: None,
            method: None,
            flags: fit.flags.clone(),
        }
    }
}
