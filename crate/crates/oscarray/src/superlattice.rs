//! Two-color one-dimensional optical superlattice: potential, trap minima,
//! site frequencies, and atom loading.
//!
//! The potential is `U(z) = U_A sin^2(k_A z) + U_B sin^2(k_B z)`. Because the
//! two standing waves have different wavenumbers, the local curvature (and so
//! the mechanical frequency of atoms trapped at each minimum) varies from site
//! to site, repeating with the superlattice period `pi / |k_A - k_B|`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{self, HBAR, TWO_PI};

/// Fractional occupancy below which a site is dropped by [`load_atoms`].
pub const DEFAULT_OCCUPANCY_CUTOFF: f64 = 0.01;

/// Minimum barrier height, in units of one mechanical quantum, for a trap
/// minimum to count as a bound site.
pub const DEFAULT_MIN_BOUND_QUANTA: f64 = 1.0;

/// Physical parameters of the two-color lattice. All fields SI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    /// Wavelength of lattice beam A (m).
    pub wavelength_a: f64,
    /// Wavelength of lattice beam B (m).
    pub wavelength_b: f64,
    /// Trap depth of beam A's standing wave (J).
    pub depth_a: f64,
    /// Trap depth of beam B's standing wave (J).
    pub depth_b: f64,
    /// Atom mass (kg).
    pub atom_mass: f64,
}

impl LatticeConfig {
    /// Lattice with the trap depths back-computed from the single-color
    /// mechanical frequencies `omega = sqrt(2 k^2 U / m)`.
    pub fn from_single_color_frequencies(
        wavelength_a: f64,
        wavelength_b: f64,
        freq_a: f64,
        freq_b: f64,
        atom_mass: f64,
    ) -> Self {
        let ka = TWO_PI / wavelength_a;
        let kb = TWO_PI / wavelength_b;
        LatticeConfig {
            wavelength_a,
            wavelength_b,
            depth_a: atom_mass * freq_a * freq_a / (2.0 * ka * ka),
            depth_b: atom_mass * freq_b * freq_b / (2.0 * kb * kb),
            atom_mass,
        }
    }

    /// 862/843 nm beams with single-color frequencies 2pi x 127/128 kHz.
    pub fn paper_defaults() -> Self {
        Self::from_single_color_frequencies(
            units::metres_from_nm(862.0),
            units::metres_from_nm(843.0),
            units::angular_from_khz(127.0),
            units::angular_from_khz(128.0),
            units::kg_from_amu(units::DEFAULT_ATOM_MASS_AMU),
        )
    }

    pub fn wavenumber_a(&self) -> f64 {
        TWO_PI / self.wavelength_a
    }

    pub fn wavenumber_b(&self) -> f64 {
        TWO_PI / self.wavelength_b
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_a > 0.0) || !(self.wavelength_b > 0.0) {
            return Err(Error::invalid("LatticeConfig", "wavelengths must be positive"));
        }
        if self.depth_a < 0.0 || self.depth_b < 0.0 {
            return Err(Error::invalid("LatticeConfig", "depths must be non-negative"));
        }
        if !(self.atom_mass > 0.0) {
            return Err(Error::invalid("LatticeConfig", "atom mass must be positive"));
        }
        Ok(())
    }
}

/// One trap minimum of the combined potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    /// Location of the minimum (m).
    pub position: f64,
    /// Barrier height to the nearest adjacent saddle (J).
    pub depth: f64,
    /// Analytic second derivative of the potential at the minimum (J/m^2).
    pub curvature: f64,
    /// Mechanical frequency `sqrt(curvature / m)` (rad/s).
    pub frequency: f64,
}

/// Initial atomic ensemble: loading position, spatial width, and shot-to-shot
/// position jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomCloud {
    /// Loading position z_a (m).
    pub center: f64,
    /// Spatial FWHM of the ensemble (m).
    pub width_fwhm: f64,
    /// RMS jitter of the loading position (m).
    pub position_jitter: f64,
    pub total_atoms: u32,
}

impl AtomCloud {
    /// Effective width `sigma_tot = sqrt(width^2 + jitter^2)`, the spatial
    /// resolution of resonance imaging.
    pub fn total_width(&self) -> f64 {
        self.width_fwhm.hypot(self.position_jitter)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_fwhm < 0.0 || self.position_jitter < 0.0 {
            return Err(Error::invalid("AtomCloud", "widths must be non-negative"));
        }
        Ok(())
    }
}

/// Combined optical potential at `z` (J). Bounded by `[0, U_A + U_B]`.
pub fn potential(z: f64, cfg: &LatticeConfig) -> f64 {
    let sa = (cfg.wavenumber_a() * z).sin();
    let sb = (cfg.wavenumber_b() * z).sin();
    cfg.depth_a * sa * sa + cfg.depth_b * sb * sb
}

/// Analytic first derivative dU/dz (J/m).
pub fn potential_derivative(z: f64, cfg: &LatticeConfig) -> f64 {
    let ka = cfg.wavenumber_a();
    let kb = cfg.wavenumber_b();
    cfg.depth_a * ka * (2.0 * ka * z).sin() + cfg.depth_b * kb * (2.0 * kb * z).sin()
}

/// Analytic second derivative d2U/dz2 (J/m^2).
pub fn potential_curvature(z: f64, cfg: &LatticeConfig) -> f64 {
    let ka = cfg.wavenumber_a();
    let kb = cfg.wavenumber_b();
    2.0 * cfg.depth_a * ka * ka * (2.0 * ka * z).cos()
        + 2.0 * cfg.depth_b * kb * kb * (2.0 * kb * z).cos()
}

/// Superlattice period `pi / |k_A - k_B|` (m).
pub fn superlattice_period(cfg: &LatticeConfig) -> Result<f64> {
    cfg.validate()?;
    if cfg.wavelength_a == cfg.wavelength_b {
        return Err(Error::DegenerateWavelengths);
    }
    Ok(std::f64::consts::PI / (cfg.wavenumber_a() - cfg.wavenumber_b()).abs())
}

/// All bound trap minima in `[z_min, z_max]`, sorted by position.
///
/// Minima are located by sign-change bracketing of the analytic derivative on
/// a grid of step `lambda_B / 50` and refined by bisection to |dz| < 0.01 nm.
/// Minima whose barrier to the nearest saddle is below one mechanical quantum
/// are dropped; use [`find_sites_filtered`] to change that threshold.
pub fn find_sites(cfg: &LatticeConfig, z_min: f64, z_max: f64) -> Result<Vec<Site>> {
    find_sites_filtered(cfg, z_min, z_max, DEFAULT_MIN_BOUND_QUANTA)
}

/// [`find_sites`] with a configurable bound-state threshold: a site is kept
/// when its barrier height is at least `min_bound_quanta * hbar * omega`.
pub fn find_sites_filtered(
    cfg: &LatticeConfig,
    z_min: f64,
    z_max: f64,
    min_bound_quanta: f64,
) -> Result<Vec<Site>> {
    cfg.validate()?;
    if z_min >= z_max {
        return Err(Error::invalid("find_sites", "z_min must be below z_max"));
    }
    if cfg.depth_a == 0.0 && cfg.depth_b == 0.0 {
        return Err(Error::FlatPotential);
    }

    let step = cfg.wavelength_b / 50.0;
    // Pad the search so edge minima still have bracketing maxima for their
    // barrier height.
    let pad = cfg.wavelength_a.max(cfg.wavelength_b);
    let lo = z_min - pad;
    let n_steps = ((z_max + pad - lo) / step).ceil() as usize + 1;

    let mut minima = Vec::new();
    let mut maxima = Vec::new();
    let mut prev_z = lo;
    let mut prev_d = potential_derivative(prev_z, cfg);
    for i in 1..=n_steps {
        let z = lo + i as f64 * step;
        let d = potential_derivative(z, cfg);
        if prev_d < 0.0 && d >= 0.0 {
            minima.push(bisect_root(prev_z, z, cfg, false));
        } else if prev_d > 0.0 && d <= 0.0 {
            maxima.push(bisect_root(prev_z, z, cfg, true));
        }
        prev_z = z;
        prev_d = d;
    }

    let mut sites = Vec::new();
    for &z in &minima {
        if z < z_min || z > z_max {
            continue;
        }
        let curvature = potential_curvature(z, cfg);
        if curvature <= 0.0 {
            continue;
        }
        let frequency = (curvature / cfg.atom_mass).sqrt();
        // Barrier: lower of the two adjacent maxima relative to this minimum.
        let left = maxima.iter().rev().find(|&&m| m < z);
        let right = maxima.iter().find(|&&m| m > z);
        let u_here = potential(z, cfg);
        let barrier = match (left, right) {
            (Some(&l), Some(&r)) => potential(l, cfg).min(potential(r, cfg)) - u_here,
            (Some(&l), None) => potential(l, cfg) - u_here,
            (None, Some(&r)) => potential(r, cfg) - u_here,
            (None, None) => 0.0,
        };
        if barrier < min_bound_quanta * HBAR * frequency {
            continue;
        }
        sites.push(Site {
            position: z,
            depth: barrier,
            curvature,
            frequency,
        });
    }
    Ok(sites)
}

/// Bisection on the derivative sign change. `falling` selects maxima
/// (derivative goes + -> -).
fn bisect_root(mut lo: f64, mut hi: f64, cfg: &LatticeConfig, falling: bool) -> f64 {
    // |dz| < 0.01 nm
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        let d = potential_derivative(mid, cfg);
        let going_up = if falling { d > 0.0 } else { d < 0.0 };
        if going_up {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Partition a cloud's atoms among sites with a Gaussian envelope of FWHM
/// `sigma_tot` centered on the jittered loading position.
///
/// Weights are normalized over the whole site list; sites below the default
/// occupancy cutoff are dropped; per-site counts are `floor(weight * total)`,
/// so counts sum to at most `total_atoms`. Deterministic for a fixed seed.
pub fn load_atoms(cloud: &AtomCloud, sites: &[Site], seed: u64) -> Vec<(Site, u32)> {
    load_atoms_with(cloud, sites, seed, DEFAULT_OCCUPANCY_CUTOFF)
}

/// [`load_atoms`] with an explicit occupancy cutoff (fraction of the total).
pub fn load_atoms_with(
    cloud: &AtomCloud,
    sites: &[Site],
    seed: u64,
    occupancy_cutoff: f64,
) -> Vec<(Site, u32)> {
    if sites.is_empty() || cloud.total_atoms == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = if cloud.position_jitter > 0.0 {
        let jitter = Normal::new(0.0, cloud.position_jitter)
            .expect("jitter std is finite and non-negative")
            .sample(&mut rng);
        cloud.center + jitter
    } else {
        cloud.center
    };

    let sigma = cloud.total_width() / (8.0 * std::f64::consts::LN_2).sqrt();
    let weights: Vec<f64> = if sigma > 0.0 {
        sites
            .iter()
            .map(|s| {
                let d = (s.position - center) / sigma;
                (-0.5 * d * d).exp()
            })
            .collect()
    } else {
        // Delta-function envelope: everything on the nearest site.
        let nearest = sites
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (a.position - center)
                    .abs()
                    .total_cmp(&(b.position - center).abs())
            })
            .map(|(i, _)| i)
            .expect("sites non-empty");
        let mut w = vec![0.0; sites.len()];
        w[nearest] = 1.0;
        w
    };

    let norm: f64 = weights.iter().sum();
    if norm == 0.0 {
        return Vec::new();
    }
    let total = f64::from(cloud.total_atoms);
    sites
        .iter()
        .zip(&weights)
        .filter_map(|(site, &w)| {
            let frac = w / norm;
            if frac < occupancy_cutoff {
                return None;
            }
            let count = (frac * total).floor() as u32;
            (count > 0).then_some((*site, count))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{angular_from_khz, metres_from_nm, metres_from_um};

    #[test]
    fn potential_at_origin_vanishes() {
        let cfg = LatticeConfig::paper_defaults();
        assert_eq!(potential(0.0, &cfg), 0.0);
    }

    #[test]
    fn potential_single_color_quarter_wave() {
        let mut cfg = LatticeConfig::paper_defaults();
        cfg.depth_b = 0.0;
        let u = potential(cfg.wavelength_a / 4.0, &cfg);
        assert!((u - cfg.depth_a).abs() / cfg.depth_a < 1e-12);
    }

    #[test]
    fn potential_matches_high_precision_oracle() {
        // U(5.000 um) for the paper defaults, frozen from a 40-digit
        // evaluation of the closed form.
        let cfg = LatticeConfig::paper_defaults();
        let u = potential(metres_from_um(5.0), &cfg);
        assert!((u - 9.281_804_400_291_453e-28).abs() / u < 1e-12);
    }

    #[test]
    fn period_closed_form_and_degenerate() {
        let cfg = LatticeConfig {
            wavelength_a: metres_from_nm(800.0),
            wavelength_b: metres_from_nm(400.0),
            depth_a: 1e-28,
            depth_b: 1e-28,
            atom_mass: units::kg_from_amu(86.909),
        };
        let p = superlattice_period(&cfg).unwrap();
        assert!((p - metres_from_nm(400.0)).abs() < 1e-18);

        let degenerate = LatticeConfig {
            wavelength_b: cfg.wavelength_a,
            ..cfg
        };
        assert!(matches!(
            superlattice_period(&degenerate),
            Err(Error::DegenerateWavelengths)
        ));
    }

    #[test]
    fn paper_period_within_two_percent() {
        let p = superlattice_period(&LatticeConfig::paper_defaults()).unwrap();
        assert!((p - 1.912_278_947_368_421_1e-5).abs() / p < 1e-12);
        assert!((p - 19.4e-6).abs() / 19.4e-6 < 0.02);
    }

    #[test]
    fn single_color_sites_at_half_wavelength() {
        let mut cfg = LatticeConfig::paper_defaults();
        cfg.depth_b = 0.0;
        let target = angular_from_khz(127.0);
        let sites = find_sites(&cfg, -1e-9, 5.0 * cfg.wavelength_a).unwrap();
        assert_eq!(sites.len(), 10);
        for (n, site) in sites.iter().enumerate() {
            let expected = n as f64 * cfg.wavelength_a / 2.0;
            assert!((site.position - expected).abs() < 1e-12);
            assert!((site.frequency - target).abs() / target < 1e-4);
        }
    }

    #[test]
    fn flat_potential_rejected() {
        let mut cfg = LatticeConfig::paper_defaults();
        cfg.depth_a = 0.0;
        cfg.depth_b = 0.0;
        assert!(matches!(
            find_sites(&cfg, 0.0, 1e-6),
            Err(Error::FlatPotential)
        ));
    }

    #[test]
    fn sites_are_local_minima_and_sorted() {
        let cfg = LatticeConfig::paper_defaults();
        let period = superlattice_period(&cfg).unwrap();
        let sites = find_sites(&cfg, 0.0, period).unwrap();
        assert!(sites.len() > 40);
        let delta = 1e-9;
        for pair in sites.windows(2) {
            assert!(pair[0].position < pair[1].position);
        }
        for site in &sites {
            let u = potential(site.position, &cfg);
            assert!(potential(site.position - delta, &cfg) > u);
            assert!(potential(site.position + delta, &cfg) > u);
            assert!(site.curvature > 0.0);
            let expected = (site.curvature / cfg.atom_mass).sqrt();
            assert_eq!(site.frequency, expected);
        }
    }

    #[test]
    fn delta_cloud_loads_one_site() {
        let cfg = LatticeConfig::paper_defaults();
        let sites = find_sites(&cfg, 0.0, 5e-6).unwrap();
        let cloud = AtomCloud {
            center: sites[3].position,
            width_fwhm: 0.0,
            position_jitter: 0.0,
            total_atoms: 1000,
        };
        let loaded = load_atoms(&cloud, &sites, 7);
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].1, 1000);
        assert_eq!(loaded[0].0.position, sites[3].position);
    }

    #[test]
    fn broad_cloud_occupies_at_least_eight_sites() {
        let cfg = LatticeConfig::paper_defaults();
        let period = superlattice_period(&cfg).unwrap();
        let sites = find_sites(&cfg, 0.0, period).unwrap();
        let cloud = AtomCloud {
            center: metres_from_um(11.7),
            width_fwhm: metres_from_um(3.1),
            position_jitter: 0.0,
            total_atoms: 4800,
        };
        let loaded = load_atoms(&cloud, &sites, 1);
        assert!(loaded.len() >= 8, "occupied {} sites", loaded.len());
        let total: u32 = loaded.iter().map(|(_, n)| n).sum();
        assert!(total <= cloud.total_atoms);
    }

    #[test]
    fn load_matches_direct_weight_oracle() {
        let cfg = LatticeConfig::paper_defaults();
        let sites = find_sites(&cfg, 0.0, 8e-6).unwrap();
        let cloud = AtomCloud {
            center: metres_from_um(4.1),
            width_fwhm: metres_from_um(0.9),
            position_jitter: 0.0,
            total_atoms: 1234,
        };
        let loaded = load_atoms(&cloud, &sites, 99);

        // Independent weight computation.
        let sigma = cloud.width_fwhm / (8.0_f64 * std::f64::consts::LN_2).sqrt();
        let weights: Vec<f64> = sites
            .iter()
            .map(|s| (-0.5 * ((s.position - cloud.center) / sigma).powi(2)).exp())
            .collect();
        let norm: f64 = weights.iter().sum();
        let expected: Vec<(f64, u32)> = sites
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w / norm >= DEFAULT_OCCUPANCY_CUTOFF)
            .map(|(s, &w)| (s.position, (w / norm * 1234.0).floor() as u32))
            .filter(|&(_, n)| n > 0)
            .collect();
        let got: Vec<(f64, u32)> = loaded.iter().map(|(s, n)| (s.position, *n)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn load_is_reproducible_with_jitter() {
        let cfg = LatticeConfig::paper_defaults();
        let sites = find_sites(&cfg, 0.0, 8e-6).unwrap();
        let cloud = AtomCloud {
            center: metres_from_um(4.0),
            width_fwhm: metres_from_um(0.4),
            position_jitter: metres_from_um(0.3),
            total_atoms: 1000,
        };
        let a = load_atoms(&cloud, &sites, 42);
        let b = load_atoms(&cloud, &sites, 42);
        assert_eq!(a.len(), b.len());
        for ((sa, na), (sb, nb)) in a.iter().zip(&b) {
            assert_eq!(sa.position.to_bits(), sb.position.to_bits());
            assert_eq!(na, nb);
        }
    }
}
