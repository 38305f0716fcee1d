use nalgebra::{DMatrix, DVector};
use parstab::lifting::{residual_norm_sq, TraceTable};
use parstab::linalg::sym_min_eigenvalue;
use parstab::simulation::{estimate_decay_rate, SimOptions, SimState, Simulator};
use parstab::synthesis::{projection_identity_residual, synthesize, Sensors, SynthesisArtifacts, SynthesisOptions};
use parstab::{PlantConfig, SeparableBasis};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

struct Fixture {
    art: SynthesisArtifacts,
    sim: Simulator,
    table: TraceTable,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let basis = SeparableBasis::new(&PlantConfig::example_2d(0.5), 400).unwrap();
        let sensors = Sensors::new(vec![PI / 2.0, PI / 3.0], vec![PI / 3.0, PI / 4.0]);
        let art = synthesize(&basis, &sensors, 20, &SynthesisOptions::default()).unwrap();
        let opts = SimOptions {
            n_sim: Some(60),
            ..SimOptions::default()
        };
        let sim = Simulator::new(&basis, &art, opts).unwrap();
        let table = TraceTable::new(&basis, art.n0, 399).unwrap();
        Fixture { art, sim, table }
    })
}

fn vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_identity_for_any_input(u in vector(3)) {
        let fx = fixture();
        let u = DVector::from_vec(u);
        let scale = u.amax().max(1.0);
        prop_assert!(projection_identity_residual(&fx.art, &u).unwrap() < 1e-10 * scale);
        prop_assert!(fx.sim.identity_check(&u).unwrap() < 1e-10 * scale);
    }

    #[test]
    fn one_step_is_linear(a in vector(60), b in vector(60), ha in vector(20), hb in vector(20),
                          alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
        let sim = &fixture().sim;
        let s = |z: &[f64], zh: &[f64]| SimState {
            t: 0.0,
            z: DVector::from_column_slice(z),
            zhat: DVector::from_column_slice(zh),
        };
        let (sa, sb) = (s(&a, &ha), s(&b, &hb));
        let combo = SimState {
            t: 0.0,
            z: &sa.z * alpha + &sb.z * beta,
            zhat: &sa.zhat * alpha + &sb.zhat * beta,
        };
        let h = 1e-3;
        let (na, nb, nc) = (sim.step(&sa, h).unwrap(), sim.step(&sb, h).unwrap(), sim.step(&combo, h).unwrap());
        let ez = (&nc.z - (&na.z * alpha + &nb.z * beta)).amax();
        let eh = (&nc.zhat - (&na.zhat * alpha + &nb.zhat * beta)).amax();
        let scale = nc.z.amax().max(nc.zhat.amax()).max(na.z.amax() + nb.z.amax()).max(1.0);
        prop_assert!(ez.max(eh) < 1e-10 * scale);
    }

    #[test]
    fn tail_residuals_grow_with_the_tail(l in 0usize..3, n in 20usize..100, extra in 1usize..200) {
        let fx = fixture();
        let g = fx.art.ladder.gammas[0];
        let short = residual_norm_sq(&fx.table, g, l, n, n + extra).unwrap();
        let long = residual_norm_sq(&fx.table, g, l, n, (n + 2 * extra).min(399)).unwrap();
        prop_assert!(short >= 0.0);
        prop_assert!(long >= short);
    }

    #[test]
    fn decay_fit_recovers_exponential_rates(rate in -5.0..5.0f64, amp in 1e-3..1e3f64, dt in 0.005..0.1f64) {
        let series: Vec<(f64, f64)> = (0..200).map(|i| {
            let t = i as f64 * dt;
            (t, amp * (rate * t).exp())
        }).collect();
        let fit = estimate_decay_rate(&series, 0.0).unwrap();
        prop_assert!((fit - rate).abs() < 1e-8 * rate.abs().max(1.0));
    }
}

#[test]
fn ladder_matrices_are_consistent() {
    let art = &fixture().art;
    let n0 = art.n0;
    let sum = art
        .ladder
        .bk
        .iter()
        .fold(DMatrix::zeros(n0, n0), |acc, m| acc + m);
    let id = &sum * &art.ladder.a;
    assert!((id - DMatrix::identity(n0, n0)).amax() < 1e-10);
    for bk in &art.ladder.bk {
        assert!((bk - bk.transpose()).amax() < 1e-12 * bk.amax());
        assert!(sym_min_eigenvalue(bk) > -1e-12 * bk.amax());
    }
    assert!(sym_min_eigenvalue(&art.b) > -1e-12 * art.b.amax());
}
