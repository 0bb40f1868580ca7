//! Per-site optomechanical quantities: linear coupling, dispersive cavity
//! shift, cooperativity, and measurement backaction.
//!
//! The displacement of the collective oscillator at site i modulates the
//! cavity resonance through `G_i = N_i k_p g0^2 / Delta_ca * sin(2 k_p z_i)`;
//! the detuning is stored signed, so shift directions are physical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::superlattice::Site;
use crate::units::{self, HBAR, TWO_PI};

/// Cavity and probe parameters. Frequencies are angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityConfig {
    /// Cavity half-linewidth kappa (rad/s).
    pub half_linewidth: f64,
    /// Single-atom cavity QED coupling g0 (rad/s).
    pub single_atom_coupling: f64,
    /// Probe detuning from the atomic transition, signed (rad/s).
    pub atom_detuning: f64,
    /// Probe wavelength (m).
    pub probe_wavelength: f64,
    /// Mean intracavity probe photon number.
    pub mean_photon_number: f64,
    /// Spatial offset of the probe standing wave relative to the lattice
    /// origin (m). The paper fixes this only implicitly; default 0.
    pub probe_phase_offset: f64,
}

impl CavityConfig {
    /// kappa = 2pi x 1.82 MHz, g0 = 2pi x 13.1 MHz, Delta_ca = -2pi x 40 GHz,
    /// 780 nm probe, 2.9 mean photons.
    pub fn paper_defaults() -> Self {
        CavityConfig {
            half_linewidth: TWO_PI * 1.82e6,
            single_atom_coupling: TWO_PI * 13.1e6,
            atom_detuning: -TWO_PI * 40e9,
            probe_wavelength: units::metres_from_nm(780.0),
            mean_photon_number: 2.9,
            probe_phase_offset: 0.0,
        }
    }

    pub fn probe_wavenumber(&self) -> f64 {
        TWO_PI / self.probe_wavelength
    }

    /// Lorentzian cavity filter `kappa^2 / (kappa^2 + omega^2)`.
    pub fn filter(&self, omega: f64) -> f64 {
        let k2 = self.half_linewidth * self.half_linewidth;
        k2 / (k2 + omega * omega)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_linewidth > 0.0) {
            return Err(Error::invalid("CavityConfig", "half_linewidth must be positive"));
        }
        if !(self.single_atom_coupling > 0.0) {
            return Err(Error::invalid("CavityConfig", "g0 must be positive"));
        }
        if self.atom_detuning == 0.0 || !self.atom_detuning.is_finite() {
            return Err(Error::invalid("CavityConfig", "atom detuning must be nonzero"));
        }
        if self.mean_photon_number < 0.0 {
            return Err(Error::invalid("CavityConfig", "photon number must be >= 0"));
        }
        Ok(())
    }
}

/// A collective mechanical element: the atoms of one occupied site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillator {
    pub site: Site,
    pub atom_count: u32,
    /// Mechanical full linewidth Gamma (rad/s).
    pub linewidth: f64,
    /// Thermal phonon occupation nu_th.
    pub thermal_occupation: f64,
    /// Optomechanical cooperativity C.
    pub cooperativity: f64,
    /// Probe backaction occupation, exactly C/2.
    pub backaction_occupation: f64,
    /// Phonons added by a coherent drive.
    pub drive_occupation: f64,
    /// Linear optomechanical coupling G (rad/s per m), signed.
    pub linear_coupling: f64,
}

impl Oscillator {
    /// Total occupation `nu = nu_th + nu_ba + nu_drive`.
    pub fn total_occupation(&self) -> f64 {
        self.thermal_occupation + self.backaction_occupation + self.drive_occupation
    }

    /// Build an oscillator from a populated site, deriving coupling,
    /// cooperativity, and backaction from the cavity parameters.
    pub fn derive(
        site: Site,
        atom_count: u32,
        linewidth: f64,
        thermal_occupation: f64,
        cavity: &CavityConfig,
        atom_mass: f64,
    ) -> Result<Self> {
        if !(linewidth > 0.0) {
            return Err(Error::ZeroLinewidth);
        }
        let g = linear_coupling(&site, atom_count, cavity);
        let mut osc = Oscillator {
            site,
            atom_count,
            linewidth,
            thermal_occupation,
            cooperativity: 0.0,
            backaction_occupation: 0.0,
            drive_occupation: 0.0,
            linear_coupling: g,
        };
        let (c, nu_ba) = cooperativity(&osc, cavity, atom_mass)?;
        osc.cooperativity = c;
        osc.backaction_occupation = nu_ba;
        Ok(osc)
    }

    /// Build an oscillator directly from its spectroscopic parameters, with
    /// the thermal occupation chosen so the total equals `total_occupation`.
    /// Used for fixture arrays where couplings are prescribed rather than
    /// derived from geometry.
    pub fn from_parameters(
        frequency: f64,
        linewidth: f64,
        cooperativity: f64,
        total_occupation: f64,
        atom_mass: f64,
    ) -> Result<Self> {
        if !(linewidth > 0.0) {
            return Err(Error::ZeroLinewidth);
        }
        if cooperativity < 0.0 {
            return Err(Error::invalid("Oscillator", "cooperativity must be >= 0"));
        }
        let nu_ba = cooperativity / 2.0;
        let nu_th = total_occupation - nu_ba;
        if nu_th < 0.0 {
            return Err(Error::invalid(
                "Oscillator",
                format!(
                    "total occupation {total_occupation} is below the backaction floor C/2 = {nu_ba}"
                ),
            ));
        }
        let curvature = atom_mass * frequency * frequency;
        Ok(Oscillator {
            site: Site {
                position: 0.0,
                depth: 10.0 * HBAR * frequency,
                curvature,
                frequency,
            },
            atom_count: 600,
            linewidth,
            thermal_occupation: nu_th,
            cooperativity,
            backaction_occupation: nu_ba,
            drive_occupation: 0.0,
            linear_coupling: 0.0,
        })
    }
}

/// Linear optomechanical coupling `G = N k_p g0^2 / Delta_ca * sin(2 k_p z)`
/// (rad/s per m), sign retained.
pub fn linear_coupling(site: &Site, n_atoms: u32, cavity: &CavityConfig) -> f64 {
    let kp = cavity.probe_wavenumber();
    let g0 = cavity.single_atom_coupling;
    let z = site.position - cavity.probe_phase_offset;
    f64::from(n_atoms) * kp * g0 * g0 / cavity.atom_detuning * (2.0 * kp * z).sin()
}

/// Mean dispersive cavity shift `sum_i N_i g0^2 / Delta_ca * sin^2(k_p z_i)`
/// (rad/s); sign follows the detuning.
pub fn dispersive_shift(oscillators: &[Oscillator], cavity: &CavityConfig) -> f64 {
    let kp = cavity.probe_wavenumber();
    let g0 = cavity.single_atom_coupling;
    oscillators
        .iter()
        .map(|o| {
            let s = (kp * (o.site.position - cavity.probe_phase_offset)).sin();
            f64::from(o.atom_count) * g0 * g0 / cavity.atom_detuning * s * s
        })
        .sum()
}

/// Cooperativity `C = 4 g^2 / (kappa Gamma)` with `g = |G| z_zpf sqrt(n_cav)`
/// and collective zero-point amplitude `z_zpf = sqrt(hbar / (2 N m omega))`.
/// Returns `(C, nu_ba = C/2)`.
pub fn cooperativity(osc: &Oscillator, cavity: &CavityConfig, atom_mass: f64) -> Result<(f64, f64)> {
    if !(osc.linewidth > 0.0) {
        return Err(Error::ZeroLinewidth);
    }
    if !(osc.site.frequency > 0.0) {
        return Err(Error::invalid("Oscillator", "site frequency must be positive"));
    }
    if osc.atom_count == 0 {
        return Ok((0.0, 0.0));
    }
    let n = f64::from(osc.atom_count);
    let z_zpf = (HBAR / (2.0 * n * atom_mass * osc.site.frequency)).sqrt();
    let g = osc.linear_coupling.abs() * z_zpf * cavity.mean_photon_number.sqrt();
    let c = 4.0 * g * g / (cavity.half_linewidth * osc.linewidth);
    Ok((c, c / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{angular_from_khz, kg_from_amu};

    fn test_site(position: f64, frequency: f64, mass: f64) -> Site {
        Site {
            position,
            depth: 1e-27,
            curvature: mass * frequency * frequency,
            frequency,
        }
    }

    #[test]
    fn coupling_vanishes_at_nodes_and_empty_sites() {
        let cavity = CavityConfig::paper_defaults();
        let mass = kg_from_amu(86.909);
        // sin(2 k_p z) = 0 at z = lambda_p / 2
        let site = test_site(cavity.probe_wavelength / 2.0, angular_from_khz(120.0), mass);
        assert!(linear_coupling(&site, 600, &cavity).abs() < 1e-3);
        let site2 = test_site(1.1e-6, angular_from_khz(120.0), mass);
        assert_eq!(linear_coupling(&site2, 0, &cavity), 0.0);
    }

    #[test]
    fn coupling_prefactor_matches_oracle() {
        // N=600, sin factor 1: frozen from a 40-digit direct evaluation.
        let cavity = CavityConfig::paper_defaults();
        let mass = kg_from_amu(86.909);
        let z_max = cavity.probe_wavelength / 8.0; // sin(2 k_p z) = 1
        let site = test_site(z_max, angular_from_khz(120.0), mass);
        let g = linear_coupling(&site, 600, &cavity);
        let expected = -1.302_863_700_977_649_9e14;
        assert!((g - expected).abs() / expected.abs() < 1e-12);
    }

    #[test]
    fn dispersive_shift_sign_and_magnitude() {
        let cavity = CavityConfig::paper_defaults();
        let mass = kg_from_amu(86.909);
        assert_eq!(dispersive_shift(&[], &cavity), 0.0);

        // Single site at a probe antinode: |shift| = N g0^2/|Delta| ~ 2pi x 2.6 MHz.
        let site = test_site(cavity.probe_wavelength / 4.0, angular_from_khz(120.0), mass);
        let osc = Oscillator::derive(site, 600, angular_from_khz(1.2), 1.0, &cavity, mass).unwrap();
        let shift = dispersive_shift(&[osc], &cavity);
        assert!(shift < 0.0, "negative detuning must give negative shift");
        let expected = -1.617_386_145_847_633_3e7;
        assert!((shift - expected).abs() / expected.abs() < 1e-12);
    }

    #[test]
    fn dispersive_shift_additive() {
        let cavity = CavityConfig::paper_defaults();
        let mass = kg_from_amu(86.909);
        let mk = |z: f64, n: u32| {
            let site = test_site(z, angular_from_khz(115.0), mass);
            Oscillator::derive(site, n, angular_from_khz(1.2), 1.0, &cavity, mass).unwrap()
        };
        let a = mk(0.31e-6, 400);
        let b = mk(0.74e-6, 700);
        let joint = dispersive_shift(&[a, b], &cavity);
        assert_eq!(joint, dispersive_shift(&[a], &cavity) + dispersive_shift(&[b], &cavity));
    }

    #[test]
    fn cooperativity_chain_matches_oracle() {
        // N=600, omega=2pi x 120 kHz, Gamma=2pi x 1.2 kHz, n_cav=2.9, |sin|=1.
        let cavity = CavityConfig::paper_defaults();
        let mass = kg_from_amu(86.909);
        let site = test_site(cavity.probe_wavelength / 8.0, angular_from_khz(120.0), mass);
        let osc =
            Oscillator::derive(site, 600, angular_from_khz(1.2), 1.0, &cavity, mass).unwrap();
        let (c, nu_ba) = cooperativity(&osc, &cavity, mass).unwrap();
        let expected = 1.844_435_775_162_690_5;
        assert!((c - expected).abs() / expected < 1e-12);
        assert_eq!(nu_ba, c / 2.0);
        assert!((0.5..5.0).contains(&c), "C should be of order unity, got {c}");
    }

    #[test]
    fn cooperativity_zero_photons_or_atoms() {
        let mut cavity = CavityConfig::paper_defaults();
        let mass = kg_from_amu(86.909);
        let site = test_site(0.1e-6, angular_from_khz(120.0), mass);
        cavity.mean_photon_number = 0.0;
        let osc = Oscillator::derive(site, 600, angular_from_khz(1.2), 1.0, &cavity, mass).unwrap();
        assert_eq!(osc.cooperativity, 0.0);
        assert_eq!(osc.backaction_occupation, 0.0);
    }

    #[test]
    fn cooperativity_linear_in_atom_number() {
        let cavity = CavityConfig::paper_defaults();
        let mass = kg_from_amu(86.909);
        let site = test_site(0.13e-6, angular_from_khz(122.0), mass);
        let c1 = Oscillator::derive(site, 350, angular_from_khz(1.2), 1.0, &cavity, mass)
            .unwrap()
            .cooperativity;
        let c2 = Oscillator::derive(site, 700, angular_from_khz(1.2), 1.0, &cavity, mass)
            .unwrap()
            .cooperativity;
        assert!((c2 / c1 - 2.0).abs() < 1e-3);
    }

    #[test]
    fn fixture_oscillator_occupation_split() {
        let mass = kg_from_amu(86.909);
        let osc =
            Oscillator::from_parameters(angular_from_khz(120.0), angular_from_khz(1.2), 1.0, 1.5, mass)
                .unwrap();
        assert_eq!(osc.backaction_occupation, 0.5);
        assert_eq!(osc.thermal_occupation, 1.0);
        assert_eq!(osc.total_occupation(), 1.5);
        assert!(Oscillator::from_parameters(
            angular_from_khz(120.0),
            angular_from_khz(1.2),
            4.0,
            0.9,
            mass
        )
        .is_err());
    }
}
