//! Benchmarks for the data-parallel hot paths, comparing the scan as shipped
//! (rayon when the `parallel` feature is on) against an explicitly sequential
//! per-row loop over the same public API.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use oscarray::coupling::{CavityConfig, Oscillator};
use oscarray::exec;
use oscarray::imaging::{scan_map, scan_row, ScanConfig};
use oscarray::spectra::{
    photon_spectrum, sample_noisy, to_detected_psd, DetectionConfig, FrequencyGrid, Quadrature,
};
use oscarray::superlattice::{find_sites, AtomCloud, LatticeConfig};
use oscarray::units::{angular_from_khz, kg_from_amu, metres_from_um};

fn scan_inputs() -> (
    LatticeConfig,
    CavityConfig,
    DetectionConfig,
    AtomCloud,
    Vec<f64>,
    ScanConfig,
) {
    let lattice = LatticeConfig::paper_defaults();
    let cavity = CavityConfig::paper_defaults();
    let det = DetectionConfig::paper_defaults();
    let cloud = AtomCloud {
        center: 0.0,
        width_fwhm: metres_from_um(0.3),
        position_jitter: metres_from_um(0.294),
        total_atoms: 1000,
    };
    let positions: Vec<f64> = (0..32).map(|i| metres_from_um(0.2 * i as f64)).collect();
    (lattice, cavity, det, cloud, positions, ScanConfig::default())
}

fn bench_mri_scan(c: &mut Criterion) {
    let (lattice, cavity, det, cloud, positions, scan) = scan_inputs();
    let mut group = c.benchmark_group("mri_scan_32_rows");
    group.sample_size(10);

    group.bench_function("library (parallel feature when enabled)", |b| {
        b.iter(|| scan_map(&lattice, &cavity, &det, &cloud, &positions, 7, &scan).unwrap())
    });

    let pad = 4.0 * cloud.total_width() + metres_from_um(2.0);
    let sites = find_sites(&lattice, -pad, positions[positions.len() - 1] + pad).unwrap();
    group.bench_function("sequential per-row loop", |b| {
        b.iter(|| {
            exec::map_indexed_seq(positions.len(), |i| {
                scan_row(
                    &lattice,
                    &cavity,
                    &det,
                    &cloud,
                    &sites,
                    positions[i],
                    7,
                    i,
                    &scan,
                )
                .unwrap()
            })
        })
    });
    group.finish();
}

fn bench_spectrum_sampling(c: &mut Criterion) {
    let cavity = CavityConfig::paper_defaults();
    let det = DetectionConfig::paper_defaults();
    let mass = kg_from_amu(86.909);
    let oscillators: Vec<Oscillator> = (0..6)
        .map(|i| {
            Oscillator::from_parameters(
                angular_from_khz(100.0 + 12.0 * i as f64),
                angular_from_khz(1.2),
                1.8,
                1.5,
                mass,
            )
            .unwrap()
        })
        .collect();
    let grid = FrequencyGrid::symmetric(angular_from_khz(250.0), angular_from_khz(0.05));

    let mut group = c.benchmark_group("six_oscillator_spectrum");
    group.bench_function("synthesize 10k bins", |b| {
        b.iter(|| photon_spectrum(&oscillators, &cavity, &grid))
    });

    let mean = photon_spectrum(&oscillators, &cavity, &grid);
    let psd = to_detected_psd(&mean, &det, Quadrature::Full).unwrap();
    group.bench_function("gamma sample 10k bins", |b| {
        b.iter_batched(
            || psd.clone(),
            |m| sample_noisy(&m, &det, 42),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_mri_scan, bench_spectrum_sampling);
criterion_main!(benches);
