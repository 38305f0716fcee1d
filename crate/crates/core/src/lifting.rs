//! Modal projections of the lifting operators `D_γ`, the boundary Gram
//! matrix, and the tail sums used by the certificate.
//!
//! `D_γ v` solves `𝒜D − 2Σ_{i≤N₀} λᵢ⟨D,ψᵢ⟩φᵢ − η⟨D,ψ₂⟩φ₂ + γD = 0` with
//! `D = v` on Γ₁. It is never formed: testing against `ψ_n` gives
//! `⟨D_γ v, ψ_n⟩ = p_n ⟨v, trace_n⟩` with
//! `p_n = −1/(γ − λ_n − ηδ_{2,n})` for `n ≤ N₀` (the `−2λ` shift flips the
//! sign of `λ_n`) and `p_n = −1/(γ + λ_n)` above.

use crate::error::{Error, Result};
use crate::quadrature::{panels_for_mode, BoundaryGrid, DEFAULT_ORDER};
use crate::spectral::BasisProvider;
use nalgebra::DMatrix;

/// Denominators smaller than this (relative to `γ`) count as zero.
const SINGULAR_DENOMINATOR: f64 = 1e-12;

/// Index (zero-based) of the mode carrying the `η` shift: the first member
/// of the double eigenvalue.
pub const SHIFTED_MODE: usize = 1;

/// `η δ_{2,n}` for a design with `n0` unstable modes.
pub fn eta_shift(n: usize, n0: usize, eta: f64) -> f64 {
    if n == SHIFTED_MODE && n0 > SHIFTED_MODE {
        eta
    } else {
        0.0
    }
}

/// Per-mode factors `p_n(γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedProjectionTable {
    pub gamma: f64,
    pub eta: f64,
    pub n0: usize,
    coeffs: Vec<Option<f64>>,
}

impl LiftedProjectionTable {
    pub fn new(gamma: f64, eta: f64, n0: usize, lambdas: &[f64]) -> Self {
        let coeffs = lambdas
            .iter()
            .enumerate()
            .map(|(n, &l)| {
                let den = lifted_denominator(gamma, eta, n0, n, l);
                (den.abs() > SINGULAR_DENOMINATOR * gamma.abs().max(1.0)).then(|| -1.0 / den)
            })
            .collect();
        Self {
            gamma,
            eta,
            n0,
            coeffs,
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.coeffs.iter().all(Option::is_some)
    }

    /// First invalid mode, if any.
    pub fn first_invalid(&self) -> Option<usize> {
        self.coeffs.iter().position(Option::is_none)
    }

    pub fn coefficient(&self, n: usize) -> Result<f64> {
        self.coeffs
            .get(n)
            .copied()
            .flatten()
            .ok_or(Error::InvalidTable(n + 1))
    }
}

/// `γ − λ_n − ηδ_{2,n}` below `n0`, `γ + λ_n` from `n0` on.
pub fn lifted_denominator(gamma: f64, eta: f64, n0: usize, n: usize, lambda: f64) -> f64 {
    if n < n0 {
        gamma - lambda - eta_shift(n, n0, eta)
    } else {
        gamma + lambda
    }
}

/// `Λ_γ = diag(1/(γ − λ_k − ηδ_{2,k}))_{k ≤ N₀}`.
pub fn lambda_gamma(gamma: f64, eta: f64, unstable_lambdas: &[f64]) -> Result<DMatrix<f64>> {
    let n0 = unstable_lambdas.len();
    let mut m = DMatrix::zeros(n0, n0);
    for (k, &l) in unstable_lambdas.iter().enumerate() {
        let den = gamma - l - eta_shift(k, n0, eta);
        if den.abs() <= SINGULAR_DENOMINATOR * gamma.abs().max(1.0) {
            return Err(Error::Admissibility {
                index: k + 1,
                reason: format!("gamma = {gamma} makes 1/(gamma - lambda - eta) singular"),
            });
        }
        m[(k, k)] = 1.0 / den;
    }
    Ok(m)
}

/// `⟨D_γ v, ψ_n⟩` from `⟨v, trace_n⟩_{L²(Γ₁)}`.
pub fn lifted_projection(
    table: &LiftedProjectionTable,
    boundary_inner: f64,
    n: usize,
) -> Result<f64> {
    Ok(table.coefficient(n)? * boundary_inner)
}

/// `⟨f, g⟩_{L²(Γ₁)}` from samples on a shared boundary grid.
pub fn boundary_inner(grid: &BoundaryGrid, f: &[f64], g: &[f64]) -> Result<f64> {
    grid.inner(f, g)
}

/// Boundary grid resolving the traces of the first `modes` modes.
pub fn trace_grid(basis: &dyn BasisProvider, modes: usize) -> BoundaryGrid {
    let plant = basis.plant();
    let d = plant.dimension();
    let panels: Vec<usize> = (0..d)
        .map(|i| {
            let kmax = basis.eigenpairs()[..modes]
                .iter()
                .map(|e| e.multi_index[i])
                .max()
                .unwrap_or(1);
            panels_for_mode(kmax)
        })
        .collect();
    BoundaryGrid::new(plant.lengths(), plant.control_face(), &panels, DEFAULT_ORDER)
}

/// `B[k][l] = ⟨trace_k, trace_l⟩_{L²(Γ₁)}`, `k, l < N₀`, by boundary
/// quadrature. Each unordered pair is integrated once.
pub fn gram_matrix(basis: &dyn BasisProvider, n0: usize) -> Result<DMatrix<f64>> {
    if n0 == 0 {
        return Err(Error::InvalidArgument("Gram matrix needs N0 >= 1".into()));
    }
    if n0 > basis.len() {
        return Err(Error::InsufficientEigenvalues(format!(
            "Gram matrix needs {n0} modes, {} enumerated",
            basis.len()
        )));
    }
    let grid = trace_grid(basis, n0);
    let samples: Vec<Vec<f64>> = (0..n0)
        .map(|k| basis.trace_samples(k, &grid))
        .collect::<Result<_>>()?;
    let mut b = DMatrix::zeros(n0, n0);
    for k in 0..n0 {
        for l in k..n0 {
            let v = grid.inner(&samples[k], &samples[l])?;
            b[(k, l)] = v;
            b[(l, k)] = v;
        }
    }
    Ok(b)
}

/// Trace inner products `G[l][n] = ⟨trace_l, trace_n⟩` for `l < N₀` and all
/// enumerated `n`, together with the eigenvalues. Shared by the tail sums
/// and the simulator.
#[derive(Debug, Clone)]
pub struct TraceTable {
    pub g: DMatrix<f64>,
    pub lambdas: Vec<f64>,
}

impl TraceTable {
    pub fn new(basis: &dyn BasisProvider, n0: usize, modes: usize) -> Result<Self> {
        let g = basis.trace_gram(0..n0, 0..modes)?;
        Ok(Self {
            g,
            lambdas: basis.lambdas(0..modes),
        })
    }

    pub fn modes(&self) -> usize {
        self.lambdas.len()
    }
}

/// `Σ_{n=N+1}^{N_tail} (⟨trace_l, trace_n⟩ / (γ + λ_n))²` — the coefficient
/// form of `‖R_N D_γ trace_l‖²`. `l` is zero-based; `n_modes` and `n_tail`
/// count modes.
pub fn residual_norm_sq(
    table: &TraceTable,
    gamma: f64,
    l: usize,
    n_modes: usize,
    n_tail: usize,
) -> Result<f64> {
    if n_tail < n_modes {
        return Err(Error::InvalidArgument(format!(
            "tail end N_tail = {n_tail} is below N = {n_modes}"
        )));
    }
    if n_tail > table.modes() {
        return Err(Error::InsufficientEigenvalues(format!(
            "tail sum to {n_tail} needs more than the {} tabulated modes",
            table.modes()
        )));
    }
    let mut acc = 0.0;
    for n in n_modes..n_tail {
        let den = gamma + table.lambdas[n];
        if den.abs() <= SINGULAR_DENOMINATOR * gamma.abs().max(1.0) {
            return Err(Error::Admissibility {
                index: n + 1,
                reason: format!("gamma + lambda vanishes for gamma = {gamma}"),
            });
        }
        acc += (table.g[(l, n)] / den).powi(2);
    }
    Ok(acc)
}

/// Tail truncation rule: start at `max(4N, 400)`, double while the last
/// doubling block carries ≥ 1% of the sum, never past `max(16N, start)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPolicy {
    pub min_tail: usize,
    pub start_factor: usize,
    pub cap_factor: usize,
    pub block_tolerance: f64,
}

impl Default for TailPolicy {
    fn default() -> Self {
        Self {
            min_tail: 400,
            start_factor: 4,
            cap_factor: 16,
            block_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSum {
    pub value: f64,
    pub n_tail: usize,
    pub converged: bool,
}

impl TailPolicy {
    pub fn start(&self, n: usize) -> usize {
        (self.start_factor * n).max(self.min_tail)
    }

    pub fn cap(&self, n: usize) -> usize {
        (self.cap_factor * n).max(self.start(n))
    }

    /// Evaluates `sum(N_tail)` under the doubling rule.
    pub fn evaluate(
        &self,
        n: usize,
        mut sum: impl FnMut(usize) -> Result<f64>,
    ) -> Result<TailSum> {
        let cap = self.cap(n);
        let mut n_tail = self.start(n);
        loop {
            let value = sum(n_tail)?;
            let half = sum((n_tail / 2).max(n))?;
            let block = value - half;
            if value == 0.0 || block <= self.block_tolerance * value {
                return Ok(TailSum {
                    value,
                    n_tail,
                    converged: true,
                });
            }
            if n_tail >= cap {
                return Ok(TailSum {
                    value,
                    n_tail,
                    converged: false,
                });
            }
            n_tail = (2 * n_tail).min(cap);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{Face, PlantConfig, Side};
    use crate::spectral::SeparableBasis;
    use std::f64::consts::PI;

    #[test]
    fn lambda_gamma_entries() {
        let m = lambda_gamma(1.0, 0.0, &[0.0]).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        let m = lambda_gamma(10.0, 0.25, &[-3.5, -0.5, -0.5]).unwrap();
        assert!((m[(0, 0)] - 1.0 / 13.5).abs() < 1e-16);
        assert!((m[(1, 1)] - 1.0 / 10.25).abs() < 1e-16);
        assert!((m[(2, 2)] - 1.0 / 10.5).abs() < 1e-16);
        assert_eq!(m[(0, 1)], 0.0);
        let err = lambda_gamma(-3.5, 0.0, &[-3.5, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Admissibility { index: 1, .. }));
    }

    #[test]
    fn projection_sign_split() {
        let table = LiftedProjectionTable::new(2.0, 0.0, 2, &[1.0, 0.5, 1.0]);
        assert_eq!(lifted_projection(&table, 1.0, 0).unwrap(), -1.0);
        assert!((lifted_projection(&table, 1.0, 2).unwrap() + 1.0 / 3.0).abs() < 1e-16);
        let bad = LiftedProjectionTable::new(2.0, 0.0, 1, &[2.0, -2.0]);
        assert!(!bad.is_valid());
        assert_eq!(bad.first_invalid(), Some(0));
        assert!(matches!(lifted_projection(&bad, 1.0, 1), Err(Error::InvalidTable(2))));
    }

    #[test]
    fn one_dimensional_gram_is_rank_one() {
        let plant =
            PlantConfig::new(vec![PI], vec![0.0], 3.0, Face::new(0, Side::Lower), 0.5).unwrap();
        let basis = SeparableBasis::new(&plant, 5).unwrap();
        let b = gram_matrix(&basis, 2).unwrap();
        for k in 0..2 {
            for l in 0..2 {
                let expected = ((k + 1) * (l + 1)) as f64 * 2.0 / PI;
                assert!((b[(k, l)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn example_gram_is_symmetric_psd() {
        let plant = PlantConfig::example_2d(0.5);
        let basis = SeparableBasis::new(&plant, 3).unwrap();
        let b = gram_matrix(&basis, 3).unwrap();
        assert_eq!(b.transpose(), b);
        let eig = b.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-10);
        let closed = basis.trace_gram(0..3, 0..3).unwrap();
        assert!((b - closed).amax() < 1e-10 * 1e3);
    }

    #[test]
    fn residual_sums() {
        let plant = PlantConfig::example_2d(0.5);
        let basis = SeparableBasis::new(&plant, 900).unwrap();
        let table = TraceTable::new(&basis, 3, 900).unwrap();
        assert_eq!(residual_norm_sq(&table, 50.0, 0, 30, 30).unwrap(), 0.0);
        assert!(residual_norm_sq(&table, 50.0, 0, 30, 29).is_err());
        assert!(residual_norm_sq(&table, 50.0, 0, 30, 901).is_err());
        let r400 = residual_norm_sq(&table, 50.0, 0, 30, 400).unwrap();
        let r800 = residual_norm_sq(&table, 50.0, 0, 30, 800).unwrap();
        assert!(r800 >= r400 && r400 >= 0.0);
        let r100 = residual_norm_sq(&table, 50.0, 0, 100, 900).unwrap();
        let r200 = residual_norm_sq(&table, 50.0, 0, 200, 900).unwrap();
        // G₁ₙ ~ j/i³ along the i = 1 column, so the tail shrinks like N^{-1/2}.
        let ratio = r100 / r200;
        assert!(ratio > 1.2 && ratio < 2.0, "{r100} {r200}");
    }

    #[test]
    fn tail_policy_doubles_until_flat() {
        let policy = TailPolicy::default();
        // Σ_{n>N} 1/n⁴ settles quickly
        let s = policy
            .evaluate(10, |t| Ok((11..=t).map(|n| (n as f64).powi(-4)).sum()))
            .unwrap();
        assert!(s.converged);
        assert_eq!(s.n_tail, 400);
        // Σ 1/n never passes the block test before the cap
        let s = policy
            .evaluate(30, |t| Ok((31..=t).map(|n| 1.0 / n as f64).sum()))
            .unwrap();
        assert!(!s.converged);
        assert_eq!(s.n_tail, 480);
    }
}
