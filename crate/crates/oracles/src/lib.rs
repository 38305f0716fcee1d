//! Independent oracles for tests: closed-form eigenpairs of the separable
//! plant, a finite-difference solver for the 1-D lifting problem, symbolic
//! integrals and brute-force enumeration. Nothing here depends on `parstab`.

use std::f64::consts::PI;

/// `λ = Σ (kᵢπ/Lᵢ)² + |b|²/4 − c` for every multi-index with entries up to
/// `kmax`, sorted ascending.
pub fn brute_force_eigenvalues(lengths: &[f64], b: &[f64], c: f64, kmax: usize) -> Vec<f64> {
    let d = lengths.len();
    let shift: f64 = b.iter().map(|v| v * v).sum::<f64>() / 4.0 - c;
    let mut out = Vec::new();
    let mut idx = vec![1usize; d];
    loop {
        let s: f64 = idx
            .iter()
            .zip(lengths)
            .map(|(&k, &l)| (k as f64 * PI / l).powi(2))
            .sum();
        out.push(s + shift);
        let mut axis = 0;
        loop {
            if axis == d {
                out.sort_by(|a, b| a.partial_cmp(b).unwrap());
                return out;
            }
            idx[axis] += 1;
            if idx[axis] <= kmax {
                break;
            }
            idx[axis] = 1;
            axis += 1;
        }
    }
}

/// `φ_k(x) = Π √(2/Lᵢ) e^{−bᵢxᵢ/2} sin(kᵢπxᵢ/Lᵢ)`.
pub fn phi(k: &[usize], lengths: &[f64], b: &[f64], x: &[f64]) -> f64 {
    k.iter()
        .zip(lengths)
        .zip(b)
        .zip(x)
        .map(|(((&k, &l), &b), &x)| {
            (2.0 / l).sqrt() * (-b * x / 2.0).exp() * (k as f64 * PI * x / l).sin()
        })
        .product()
}

/// `ψ_k = e^{b·x} φ_k`.
pub fn psi(k: &[usize], lengths: &[f64], b: &[f64], x: &[f64]) -> f64 {
    let w: f64 = b.iter().zip(x).map(|(b, x)| b * x).sum::<f64>().exp();
    w * phi(k, lengths, b, x)
}

/// `∫₀^L e^{ax} cos(kx) dx` from the antiderivative
/// `e^{ax}(a cos kx + k sin kx)/(a² + k²)`.
pub fn exp_cos_integral(a: f64, k: f64, length: f64) -> f64 {
    if a == 0.0 && k == 0.0 {
        return length;
    }
    let f = |x: f64| (a * x).exp() * (a * (k * x).cos() + k * (k * x).sin()) / (a * a + k * k);
    f(length) - f(0.0)
}

/// `∫₀^L e^{ax} sin(mx) sin(nx) dx = ½[∫e^{ax}cos((m−n)x) − ∫e^{ax}cos((m+n)x)]`.
pub fn exp_sin_sin_integral(a: f64, m: f64, n: f64, length: f64) -> f64 {
    0.5 * (exp_cos_integral(a, m - n, length) - exp_cos_integral(a, m + n, length))
}

/// Composite trapezoid weights on `M + 1` equispaced nodes of `[0, L]`.
pub fn trapezoid_weights(length: f64, m: usize) -> Vec<f64> {
    let h = length / m as f64;
    (0..=m)
        .map(|j| if j == 0 || j == m { h / 2.0 } else { h })
        .collect()
}

/// Composite Simpson rule on `[a, b]` with `2m` subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let n = 2 * m;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + j as f64 * h);
    }
    acc * h / 3.0
}

/// Thomas algorithm for `sub[i] x[i−1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]`.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / m } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Small dense solve by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (rhs[i] - s) / a[i][i];
    }
    x
}

/// 1-D lifting problem on `(0, L)`:
/// `−D'' − bD' − cD − 2Σ_{i≤N₀} λᵢ⟨D,ψᵢ⟩φᵢ − η⟨D,ψ₂⟩φ₂ + γD = 0`,
/// `D(0) = v`, `D(L) = 0`.
#[derive(Debug, Clone)]
pub struct Lifting1d {
    pub length: f64,
    pub b: f64,
    pub c: f64,
    pub gamma: f64,
    pub eta: f64,
    pub n0: usize,
    pub boundary_value: f64,
    /// Grid intervals.
    pub m: usize,
}

impl Lifting1d {
    pub fn lambda(&self, k: usize) -> f64 {
        (k as f64 * PI / self.length).powi(2) + self.b * self.b / 4.0 - self.c
    }

    fn phi1(&self, k: usize, x: f64) -> f64 {
        phi(&[k], &[self.length], &[self.b], &[x])
    }

    fn psi1(&self, k: usize, x: f64) -> f64 {
        psi(&[k], &[self.length], &[self.b], &[x])
    }

    /// Nodes `x_j = jL/M`, `j = 0..=M`, and the solution there.
    ///
    /// Central differences give a tridiagonal operator `T`; the nonlocal part
    /// is rank `N₀` and is folded in with the Sherman–Morrison–Woodbury
    /// identity, using trapezoid weights for `⟨·,ψᵢ⟩`.
    pub fn solve(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        let h = self.length / m as f64;
        let xs: Vec<f64> = (0..=m).map(|j| j as f64 * h).collect();
        let n = m - 1;
        let diag = vec![2.0 / (h * h) - self.c + self.gamma; n];
        let sub = vec![-1.0 / (h * h) + self.b / (2.0 * h); n];
        let sup = vec![-1.0 / (h * h) - self.b / (2.0 * h); n];
        let mut rhs = vec![0.0; n];
        rhs[0] = -sub[0] * self.boundary_value;

        // Coefficient of φᵢ in the nonlocal term: −(2λᵢ + ηδ_{2,i}).
        let w = trapezoid_weights(self.length, m);
        let modes: Vec<usize> = (1..=self.n0).collect();
        let coef: Vec<f64> = modes
            .iter()
            .map(|&i| -(2.0 * self.lambda(i) + if i == 2 { self.eta } else { 0.0 }))
            .collect();
        // ⟨D,ψᵢ⟩ = Σ_j w_j ψᵢ(x_j) D_j; the boundary node x₀ carries v ψᵢ(0) = 0.
        let rows: Vec<Vec<f64>> = modes
            .iter()
            .map(|&i| (1..m).map(|j| w[j] * self.psi1(i, xs[j])).collect())
            .collect();
        let cols: Vec<Vec<f64>> = modes
            .iter()
            .zip(&coef)
            .map(|(&i, &a)| (1..m).map(|j| a * self.phi1(i, xs[j])).collect())
            .collect();

        // (T + U Vᵀ) D = r with U = cols, V = rows.
        let y = solve_tridiagonal(&sub, &diag, &sup, &rhs);
        let z: Vec<Vec<f64>> = cols
            .iter()
            .map(|u| solve_tridiagonal(&sub, &diag, &sup, u))
            .collect();
        let k = modes.len();
        let mut cap = vec![vec![0.0; k]; k];
        let mut vy = vec![0.0; k];
        for a in 0..k {
            vy[a] = dot(&rows[a], &y);
            for bb in 0..k {
                cap[a][bb] = dot(&rows[a], &z[bb]) + if a == bb { 1.0 } else { 0.0 };
            }
        }
        let t = if k > 0 { solve_dense(cap, vy) } else { Vec::new() };
        let mut sol = vec![0.0; m + 1];
        sol[0] = self.boundary_value;
        for j in 0..n {
            let corr: f64 = (0..k).map(|a| z[a][j] * t[a]).sum();
            sol[j + 1] = y[j] - corr;
        }
        (xs, sol)
    }

    /// `⟨D, ψ_k⟩` by the trapezoid rule on the solution grid.
    pub fn projection(&self, xs: &[f64], sol: &[f64], k: usize) -> f64 {
        let w = trapezoid_weights(self.length, self.m);
        xs.iter()
            .zip(sol)
            .zip(&w)
            .map(|((&x, &d), &w)| w * d * self.psi1(k, x))
            .sum()
    }

    /// Closed-form prediction: `⟨v, trace_k⟩ = v·(−1)·μ(0)·φ_k'(0) = −v√(2/L)kπ/L`,
    /// divided by `−(γ − λ_k − ηδ_{2,k})` for `k ≤ N₀` and `−(γ + λ_k)` otherwise.
    pub fn predicted_projection(&self, k: usize) -> f64 {
        let trace = -(2.0 / self.length).sqrt() * k as f64 * PI / self.length;
        let inner = self.boundary_value * trace;
        let lam = self.lambda(k);
        let den = if k <= self.n0 {
            self.gamma - lam - if k == 2 { self.eta } else { 0.0 }
        } else {
            self.gamma + lam
        };
        -inner / den
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
