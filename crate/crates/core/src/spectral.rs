//! Weighted eigenbasis of the separable plant.
//!
//! Modes are addressed by a zero-based position `n` in the ascending
//! enumeration, so mode "1" of the usual notation is `n = 0`.
//!
//! For the box `Π (0, Lᵢ)` with drift `b` and reaction `c`,
//! `λ_k = Σ (kᵢπ/Lᵢ)² + |b|²/4 − c` and
//! `φ_k(x) = Π √(2/Lᵢ) e^{−bᵢxᵢ/2} sin(kᵢπxᵢ/Lᵢ)`, with `ψ_k = μφ_k`.

use crate::error::{Error, Result};
use crate::plant::{Face, PlantConfig, Side};
use crate::quadrature::BoundaryGrid;
use nalgebra::DMatrix;
use std::ops::Range;

pub use crate::plant::riesz_constants;

/// Relative tolerance used to group equal eigenvalues.
pub const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub multi_index: Vec<usize>,
    pub lambda: f64,
    /// `Π √(2/Lᵢ)`
    pub norm: f64,
    /// Modes with equal `lambda` share a group id; ids increase with `lambda`.
    pub group: usize,
}

/// Everything downstream needs from a basis: eigenvalues, point values and
/// conormal traces on the control face.
pub trait BasisProvider: Send + Sync {
    fn plant(&self) -> &PlantConfig;

    fn eigenpairs(&self) -> &[Eigenpair];

    fn len(&self) -> usize {
        self.eigenpairs().len()
    }

    fn is_empty(&self) -> bool {
        self.eigenpairs().is_empty()
    }

    fn lambda(&self, n: usize) -> f64 {
        self.eigenpairs()[n].lambda
    }

    fn lambdas(&self, range: Range<usize>) -> Vec<f64> {
        self.eigenpairs()[range].iter().map(|e| e.lambda).collect()
    }

    fn phi(&self, n: usize, x: &[f64]) -> Result<f64>;

    fn psi(&self, n: usize, x: &[f64]) -> Result<f64> {
        Ok(self.plant().mu(x) * self.phi(n, x)?)
    }

    /// `Σᵢ nᵢ ãᵢ ∂ᵢφ_n` at a point of the control face.
    fn conormal_trace(&self, n: usize, s: &[f64]) -> Result<f64>;

    /// `⟨trace_m, trace_n⟩_{L²(Γ₁)}` for `m ∈ rows`, `n ∈ cols`.
    fn trace_gram(&self, rows: Range<usize>, cols: Range<usize>) -> Result<DMatrix<f64>>;

    /// Trace samples of mode `n` on a boundary grid.
    fn trace_samples(&self, n: usize, grid: &BoundaryGrid) -> Result<Vec<f64>> {
        grid.points()
            .iter()
            .map(|s| self.conormal_trace(n, s))
            .collect()
    }
}

/// Closed-form basis for constant drift and reaction on a box.
#[derive(Debug, Clone)]
pub struct SeparableBasis {
    plant: PlantConfig,
    eigs: Vec<Eigenpair>,
}

impl SeparableBasis {
    pub fn new(plant: &PlantConfig, count: usize) -> Result<Self> {
        let eigs = enumerate_eigenpairs(plant, count)?;
        Ok(Self {
            plant: plant.clone(),
            eigs,
        })
    }

    fn check_closed(&self, x: &[f64]) -> Result<()> {
        if self.plant.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                point: x.to_vec(),
                reason: "outside the closed box".into(),
            })
        }
    }

    fn check_mode(&self, n: usize) -> Result<&Eigenpair> {
        self.eigs.get(n).ok_or_else(|| {
            Error::InsufficientEigenvalues(format!(
                "mode {} requested but only {} enumerated",
                n + 1,
                self.eigs.len()
            ))
        })
    }

    fn omega(&self, axis: usize, k: usize) -> f64 {
        k as f64 * std::f64::consts::PI / self.plant.lengths()[axis]
    }

    /// Value, gradient and pure second derivatives `∂ᵢ²φ_n` at `x`.
    pub fn derivatives(&self, n: usize, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.check_closed(x)?;
        let e = self.check_mode(n)?;
        let d = x.len();
        let b = self.plant.drift();
        let mut f = vec![0.0; d];
        let mut df = vec![0.0; d];
        let mut d2f = vec![0.0; d];
        for i in 0..d {
            let w = self.omega(i, e.multi_index[i]);
            let ex = (-0.5 * b[i] * x[i]).exp();
            let (s, c) = (w * x[i]).sin_cos();
            f[i] = ex * s;
            df[i] = ex * (w * c - 0.5 * b[i] * s);
            d2f[i] = ex * ((0.25 * b[i] * b[i] - w * w) * s - b[i] * w * c);
        }
        let value = e.norm * f.iter().product::<f64>();
        let others = |i: usize| -> f64 {
            (0..d).filter(|&j| j != i).map(|j| f[j]).product::<f64>() * e.norm
        };
        let grad = (0..d).map(|i| df[i] * others(i)).collect();
        let second = (0..d).map(|i| d2f[i] * others(i)).collect();
        Ok((value, grad, second))
    }

    /// `∫₀^L e^{bt} sin(kπt/L) sin(k'πt/L) dt` in closed form.
    fn axis_integral(&self, axis: usize, k: usize, kp: usize) -> f64 {
        let l = self.plant.lengths()[axis];
        let b = self.plant.drift()[axis];
        let j = |m: i64| -> f64 {
            let w = m as f64 * std::f64::consts::PI / l;
            if m == 0 {
                if b == 0.0 {
                    l
                } else {
                    (b * l).exp_m1() / b
                }
            } else if m % 2 == 0 {
                b * (b * l).exp_m1() / (b * b + w * w)
            } else {
                -b * ((b * l).exp() + 1.0) / (b * b + w * w)
            }
        };
        let (k, kp) = (k as i64, kp as i64);
        0.5 * (j(k - kp) - j(k + kp))
    }

    /// Factor of the trace that depends only on the normal axis:
    /// `n_a · norm · ω_a · cos(ω_a x_a) · e^{b_a x_a/2}` at the face.
    fn normal_factor(&self, e: &Eigenpair, face: Face) -> f64 {
        let a = face.axis;
        let k = e.multi_index[a];
        let b = self.plant.drift()[a];
        let (cos, shift) = match face.side {
            Side::Lower => (1.0, 1.0),
            Side::Upper => (
                if k % 2 == 0 { 1.0 } else { -1.0 },
                (0.5 * b * self.plant.lengths()[a]).exp(),
            ),
        };
        face.normal_sign() * e.norm * self.omega(a, k) * cos * shift
    }
}

impl BasisProvider for SeparableBasis {
    fn plant(&self) -> &PlantConfig {
        &self.plant
    }

    fn eigenpairs(&self) -> &[Eigenpair] {
        &self.eigs
    }

    fn phi(&self, n: usize, x: &[f64]) -> Result<f64> {
        self.check_closed(x)?;
        let e = self.check_mode(n)?;
        let b = self.plant.drift();
        let mut v = e.norm;
        for (i, &xi) in x.iter().enumerate() {
            v *= (-0.5 * b[i] * xi).exp() * (self.omega(i, e.multi_index[i]) * xi).sin();
        }
        Ok(v)
    }

    fn conormal_trace(&self, n: usize, s: &[f64]) -> Result<f64> {
        if !self.plant.on_control_face(s) {
            return Err(Error::Domain {
                point: s.to_vec(),
                reason: "not on the control face".into(),
            });
        }
        let e = self.check_mode(n)?;
        let face = self.plant.control_face();
        let b = self.plant.drift();
        let mut v = self.normal_factor(e, face);
        for (i, &si) in s.iter().enumerate() {
            if i != face.axis {
                v *= (0.5 * b[i] * si).exp() * (self.omega(i, e.multi_index[i]) * si).sin();
            }
        }
        Ok(v)
    }

    fn trace_gram(&self, rows: Range<usize>, cols: Range<usize>) -> Result<DMatrix<f64>> {
        let end = rows.end.max(cols.end);
        if end > self.eigs.len() {
            return Err(Error::InsufficientEigenvalues(format!(
                "trace Gram needs {end} modes, {} enumerated",
                self.eigs.len()
            )));
        }
        let face = self.plant.control_face();
        let d = self.plant.dimension();
        let (r0, c0) = (rows.start, cols.start);
        let mut g = DMatrix::zeros(rows.len(), cols.len());
        for m in rows.clone() {
            let em = &self.eigs[m];
            let fm = self.normal_factor(em, face);
            for n in cols.clone() {
                let en = &self.eigs[n];
                let mut v = fm * self.normal_factor(en, face);
                for i in (0..d).filter(|&i| i != face.axis) {
                    v *= self.axis_integral(i, em.multi_index[i], en.multi_index[i]);
                }
                if !v.is_finite() {
                    return Err(Error::Quadrature(format!(
                        "non-finite trace inner product for modes ({}, {})",
                        m + 1,
                        n + 1
                    )));
                }
                g[(m - r0, n - c0)] = v;
            }
        }
        Ok(g)
    }
}

/// First `count` eigenpairs in ascending order, ties broken by
/// lexicographic multi-index.
pub fn enumerate_eigenpairs(plant: &PlantConfig, count: usize) -> Result<Vec<Eigenpair>> {
    let d = plant.dimension();
    let scale = plant
        .lengths()
        .iter()
        .map(|l| (std::f64::consts::PI / l).powi(2))
        .fold(0.0, f64::max);
    let radius = 2.0 * (count as f64).powf(2.0 / d as f64) + 64.0;
    enumerate_eigenpairs_within(plant, count, radius * scale)
}

/// Same as [`enumerate_eigenpairs`] with an explicit bound on the kinetic
/// part `Σ (kᵢπ/Lᵢ)²` of the candidates.
pub fn enumerate_eigenpairs_within(
    plant: &PlantConfig,
    count: usize,
    bound: f64,
) -> Result<Vec<Eigenpair>> {
    if count == 0 {
        return Err(Error::InvalidArgument("eigenpair count must be >= 1".into()));
    }
    let lengths = plant.lengths();
    let d = lengths.len();
    let w: Vec<f64> = lengths.iter().map(|l| std::f64::consts::PI / l).collect();
    let norm: f64 = lengths.iter().map(|l| (2.0 / l).sqrt()).product();

    let mut candidates: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut k = vec![1usize; d];
    'outer: loop {
        let kinetic: f64 = k.iter().zip(&w).map(|(&ki, wi)| (ki as f64 * wi).powi(2)).sum();
        if kinetic <= bound {
            candidates.push((kinetic, k.clone()));
            k[d - 1] += 1;
            continue;
        }
        // Overflowed along the last axis: carry into earlier axes.
        let mut axis = d - 1;
        loop {
            if axis == 0 {
                break 'outer;
            }
            k[axis] = 1;
            axis -= 1;
            k[axis] += 1;
            let kin: f64 = k.iter().zip(&w).map(|(&ki, wi)| (ki as f64 * wi).powi(2)).sum();
            if kin <= bound {
                break;
            }
        }
    }

    if candidates.len() < count {
        return Err(Error::SearchRadiusExhausted {
            requested: count,
            found: candidates.len(),
            bound,
        });
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    // Nothing outside the region can undercut the count-th kept value.
    if candidates[count - 1].0 > bound {
        return Err(Error::SearchRadiusExhausted {
            requested: count,
            found: count - 1,
            bound,
        });
    }
    candidates.truncate(count);

    let shift = plant.spectral_shift();
    let mut eigs: Vec<Eigenpair> = Vec::with_capacity(count);
    let mut group = 0;
    for (kinetic, multi_index) in candidates {
        let lambda = kinetic + shift;
        if let Some(prev) = eigs.last() {
            if !same_eigenvalue(prev.lambda, lambda) {
                group += 1;
            }
        }
        eigs.push(Eigenpair {
            multi_index,
            lambda,
            norm,
            group,
        });
    }
    Ok(eigs)
}

fn same_eigenvalue(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Number of modes with `λ_n ≤ δ` and the multiplicities of their groups.
///
/// Unless `allow_generalized`, the pattern must be all simple, or simple
/// except a double second/third eigenvalue.
pub fn count_unstable(
    eigs: &[Eigenpair],
    delta: f64,
    allow_generalized: bool,
) -> Result<(usize, Vec<usize>)> {
    let n0 = eigs.iter().take_while(|e| e.lambda <= delta).count();
    if n0 == eigs.len() {
        return Err(Error::InsufficientEigenvalues(format!(
            "all {} enumerated eigenvalues are <= delta = {delta}; no stable mode witnessed",
            eigs.len()
        )));
    }
    let mut pattern: Vec<usize> = Vec::new();
    for (i, e) in eigs[..n0].iter().enumerate() {
        if i > 0 && e.group == eigs[i - 1].group {
            *pattern.last_mut().expect("non-empty") += 1;
        } else {
            pattern.push(1);
        }
    }
    if !allow_generalized && !supported_pattern(&pattern) {
        return Err(Error::UnsupportedMultiplicity { pattern });
    }
    Ok((n0, pattern))
}

/// Patterns the two-output design handles: all simple, or `[1, 2, 1, …]`.
pub fn supported_pattern(pattern: &[usize]) -> bool {
    let all_simple = pattern.iter().all(|&m| m == 1);
    let one_double = pattern.len() >= 2
        && pattern[0] == 1
        && pattern[1] == 2
        && pattern[2..].iter().all(|&m| m == 1);
    all_simple || one_double
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{panels_for_mode, DEFAULT_ORDER};
    use std::f64::consts::PI;

    fn heat_1d() -> PlantConfig {
        PlantConfig::new(vec![PI], vec![0.0], 0.0, Face::new(0, Side::Lower), 0.5).unwrap()
    }

    #[test]
    fn dirichlet_laplacian_on_unit_interval() {
        let basis = SeparableBasis::new(&heat_1d(), 5).unwrap();
        for n in 0..5 {
            assert_eq!(basis.lambda(n), ((n + 1) * (n + 1)) as f64);
            let x = 0.3;
            let expected = (2.0 / PI).sqrt() * ((n + 1) as f64 * x).sin();
            assert!((basis.phi(n, &[x]).unwrap() - expected).abs() < 1e-15);
        }
        assert!(basis.phi(1, &[PI / 2.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn example_spectrum_and_groups() {
        let basis = SeparableBasis::new(&PlantConfig::example_2d(0.5), 6).unwrap();
        let e = basis.eigenpairs();
        assert_eq!(e[0].multi_index, vec![1, 1]);
        assert!((e[0].lambda + 3.5).abs() < 1e-12);
        assert_eq!(e[1].multi_index, vec![1, 2]);
        assert_eq!(e[2].multi_index, vec![2, 1]);
        assert!((e[1].lambda + 0.5).abs() < 1e-12);
        assert_eq!(e[1].group, e[2].group);
        assert!((e[3].lambda - 2.5).abs() < 1e-12);
        assert_eq!((e[4].multi_index.clone(), e[5].multi_index.clone()), (vec![1, 3], vec![3, 1]));
    }

    #[test]
    fn example_phi_at_center() {
        let basis = SeparableBasis::new(&PlantConfig::example_2d(0.5), 1).unwrap();
        let v = basis.phi(0, &[PI / 2.0, PI / 2.0]).unwrap();
        assert!((v - 2.0 / PI * (-1.5 * PI).exp()).abs() < 1e-15);
        let psi = basis.psi(0, &[1.0, 2.0]).unwrap();
        let mu = (9.0f64).exp();
        assert_eq!(psi, mu * basis.phi(0, &[1.0, 2.0]).unwrap());
    }

    #[test]
    fn boundary_values_vanish_and_outside_points_fail() {
        let basis = SeparableBasis::new(&PlantConfig::example_2d(0.5), 4).unwrap();
        for n in 0..4 {
            assert!(basis.phi(n, &[0.0, 1.0]).unwrap().abs() < 1e-15);
            assert!(basis.phi(n, &[1.0, PI]).unwrap().abs() < 1e-14);
        }
        assert!(matches!(basis.phi(0, &[-0.1, 1.0]), Err(Error::Domain { .. })));
        assert!(matches!(basis.phi(0, &[1.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn one_dimensional_trace() {
        let basis = SeparableBasis::new(&heat_1d(), 4).unwrap();
        for n in 0..4 {
            let t = basis.conormal_trace(n, &[0.0]).unwrap();
            assert!((t + (n + 1) as f64 * (2.0 / PI).sqrt()).abs() < 1e-14);
        }
        assert!(basis.conormal_trace(0, &[PI]).is_err());
    }

    #[test]
    fn example_trace_formula() {
        let basis = SeparableBasis::new(&PlantConfig::example_2d(0.5), 6).unwrap();
        for n in 0..6 {
            let (i, j) = {
                let m = &basis.eigenpairs()[n].multi_index;
                (m[0] as f64, m[1] as f64)
            };
            for x1 in [0.2, 1.0, 2.9] {
                let t = basis.conormal_trace(n, &[x1, 0.0]).unwrap();
                let expected = -(2.0 * j / PI) * (1.5 * x1).exp() * (i * x1).sin();
                assert!((t - expected).abs() < 1e-12 * expected.abs().max(1.0));
            }
        }
        assert!(basis.conormal_trace(0, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn upper_face_trace_matches_finite_difference() {
        let plant = PlantConfig::new(
            vec![1.0, 2.0],
            vec![0.7, -0.4],
            1.0,
            Face::new(0, Side::Upper),
            0.5,
        )
        .unwrap();
        let basis = SeparableBasis::new(&plant, 8).unwrap();
        let h = 1e-6;
        for n in 0..8 {
            let s = [1.0, 0.77];
            let dphi = (basis.phi(n, &[1.0, 0.77]).unwrap()
                - basis.phi(n, &[1.0 - h, 0.77]).unwrap())
                / h;
            let expected = plant.mu(&s) * dphi;
            let t = basis.conormal_trace(n, &s).unwrap();
            assert!((t - expected).abs() < 1e-4 * expected.abs().max(1.0), "mode {n}");
        }
    }

    #[test]
    fn trace_gram_matches_boundary_quadrature() {
        let plant = PlantConfig::example_2d(0.5);
        let basis = SeparableBasis::new(&plant, 12).unwrap();
        let kmax = basis.eigenpairs().iter().map(|e| e.multi_index[0]).max().unwrap();
        let grid = BoundaryGrid::new(
            plant.lengths(),
            plant.control_face(),
            &[panels_for_mode(kmax), 1],
            DEFAULT_ORDER,
        );
        let g = basis.trace_gram(0..3, 0..12).unwrap();
        for m in 0..3 {
            let tm = basis.trace_samples(m, &grid).unwrap();
            for n in 0..12 {
                let tn = basis.trace_samples(n, &grid).unwrap();
                let q = grid.inner(&tm, &tn).unwrap();
                assert!((q - g[(m, n)]).abs() < 1e-10 * q.abs().max(1.0), "({m},{n})");
            }
        }
    }

    #[test]
    fn zero_drift_axis_integral_is_orthogonal() {
        let basis = SeparableBasis::new(
            &PlantConfig::new(vec![2.0, 3.0], vec![0.0, 0.0], 0.0, Face::new(1, Side::Lower), 0.5)
                .unwrap(),
            1,
        )
        .unwrap();
        assert!((basis.axis_integral(0, 3, 3) - 1.0).abs() < 1e-15);
        assert_eq!(basis.axis_integral(0, 2, 3), 0.0);
    }

    #[test]
    fn count_unstable_cases() {
        let plant = PlantConfig::example_2d(0.5);
        let eigs = enumerate_eigenpairs(&plant, 10).unwrap();
        assert_eq!(count_unstable(&eigs, 0.1, false).unwrap(), (3, vec![1, 2]));
        assert_eq!(count_unstable(&eigs, 0.6, false).unwrap(), (3, vec![1, 2]));
        assert_eq!(count_unstable(&eigs, 3.0, false).unwrap(), (4, vec![1, 2, 1]));
        // (1,3) and (3,1) at 4.5 make a second double.
        assert!(matches!(
            count_unstable(&eigs, 5.0, false),
            Err(Error::UnsupportedMultiplicity { .. })
        ));
        assert_eq!(count_unstable(&eigs, 5.0, true).unwrap(), (6, vec![1, 2, 1, 2]));
        assert!(count_unstable(&eigs[..3], 0.5, false).is_err());

        let heat = enumerate_eigenpairs(&heat_1d(), 3).unwrap();
        assert_eq!(count_unstable(&heat, 0.5, false).unwrap(), (0, vec![]));
    }

    #[test]
    fn search_radius_exhaustion_is_reported() {
        let err = enumerate_eigenpairs_within(&heat_1d(), 10, 20.0).unwrap_err();
        assert!(matches!(err, Error::SearchRadiusExhausted { requested: 10, found: 4, .. }));
    }

    #[test]
    fn enumeration_is_complete_for_anisotropic_boxes() {
        let plant = PlantConfig::new(
            vec![1.0, 3.0, 0.5],
            vec![0.0, 1.0, 0.0],
            0.0,
            Face::new(2, Side::Lower),
            0.5,
        )
        .unwrap();
        let eigs = enumerate_eigenpairs(&plant, 200).unwrap();
        // brute force over a generous box
        let mut all = Vec::new();
        for i in 1..40 {
            for j in 1..120 {
                for k in 1..20 {
                    let w = [PI * i as f64, PI * j as f64 / 3.0, 2.0 * PI * k as f64];
                    all.push(w.iter().map(|x| x * x).sum::<f64>() + plant.spectral_shift());
                }
            }
        }
        all.sort_by(f64::total_cmp);
        for (e, l) in eigs.iter().zip(&all) {
            assert!((e.lambda - l).abs() < 1e-9 * l.abs().max(1.0));
        }
    }
}
