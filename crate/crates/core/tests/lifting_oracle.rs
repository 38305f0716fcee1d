//! Modal projections of the lifting `D_γ` against a direct finite-difference
//! solve of the nonlocal boundary-value problem.

use parstab::lifting::{lifted_projection, LiftedProjectionTable};
use parstab::{BasisProvider, Face, PlantConfig, SeparableBasis, Side};
use parstab_oracles::Lifting1d;
use std::f64::consts::PI;

const ETA: f64 = 1.0;

fn plant() -> PlantConfig {
    PlantConfig::new(vec![PI], vec![3.0], 10.0, Face::new(0, Side::Lower), 0.5).unwrap()
}

fn problem(gamma: f64) -> Lifting1d {
    Lifting1d {
        length: PI,
        b: 3.0,
        c: 10.0,
        gamma,
        eta: ETA,
        n0: 2,
        boundary_value: 1.0,
        m: 2000,
    }
}

#[test]
fn spectrum_of_the_variant_plant() {
    let basis = SeparableBasis::new(&plant(), 6).unwrap();
    for k in 0..6 {
        let expected = ((k + 1) * (k + 1)) as f64 - 7.75;
        assert!((basis.lambda(k) - expected).abs() < 1e-12);
        assert!((problem(10.0).lambda(k + 1) - expected).abs() < 1e-12);
    }
}

#[test]
fn lifted_projections_match_finite_differences() {
    let basis = SeparableBasis::new(&plant(), 6).unwrap();
    let lambdas = basis.lambdas(0..6);
    for gamma in [10.0, 50.0] {
        let table = LiftedProjectionTable::new(gamma, ETA, 2, &lambdas);
        let fd = problem(gamma);
        let (xs, sol) = fd.solve();
        for k in 0..6 {
            // u ≡ 1 on the single boundary point
            let trace = basis.conormal_trace(k, &[0.0]).unwrap();
            let modal = lifted_projection(&table, trace, k).unwrap();
            let numeric = fd.projection(&xs, &sol, k + 1);
            let rel = (modal - numeric).abs() / numeric.abs();
            assert!(rel < 1e-3, "gamma {gamma}, k {}: {modal} vs {numeric} ({rel:e})", k + 1);
            let closed = fd.predicted_projection(k + 1);
            assert!((modal - closed).abs() < 1e-12 * closed.abs());
        }
    }
}
