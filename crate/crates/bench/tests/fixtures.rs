use fluctuant_bench::{harmonic, random_quantum, unit_ramp};
use fluctuant_core::quantum::propagator;
use fluctuant_core::spectral::unitarity_defect;

#[test]
fn fixtures_are_usable_by_the_engines() {
    let ramp = unit_ramp(64);
    assert_eq!(ramp.grid_points(), 64);
    let record =
        fluctuant_core::classical::integrate(&harmonic(), &ramp, fluctuant_core::PhasePoint::new(0.5, 0.0), 64, false)
            .unwrap();
    assert!((record.work_energy - record.work_integral).abs() < 1e-3);
    let u = propagator(&random_quantum(8), &ramp, 16).unwrap();
    assert!(unitarity_defect(&u) < 1e-12);
}
