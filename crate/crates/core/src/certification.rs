//! Lyapunov certificate for the closed loop.
//!
//! With `V = XᵀPX + Σ_{n>N}(λ_n+ν)w_n²` and `FᵀP + PF + 2δP = −I`, the decay
//! `V̇ + 2δV ≤ 0` follows from `Θ₁ ⪯ 0` and `Θ₂ = −½λ_{N+1} + 3ν/2 + 2δ ≤ 0`
//! once `η S_φ ≤ ½`, with `ε = 2N₀²` and `η = 1/√S_φ`.

use crate::error::{Error, Result};
use crate::lifting::{residual_norm_sq, TailPolicy, TailSum, TraceTable};
use crate::linalg::{lyapunov_residual, norm2, solve_shifted_lyapunov, sym_max_eigenvalue, sym_min_eigenvalue};
use crate::spectral::BasisProvider;
use crate::synthesis::{Sensors, SynthesisArtifacts};
use log::{info, warn};
use nalgebra::DMatrix;

/// Absolute slack on "≤ 0" for symmetric eigenvalue checks.
pub const NONPOSITIVE_SLACK: f64 = 1e-9;

/// Largest accepted `‖FᵀP + PF + 2δP + I‖_max`.
pub const LYAPUNOV_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationOptions {
    pub tail: TailPolicy,
}

impl Default for CertificationOptions {
    fn default() -> Self {
        Self {
            tail: TailPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateStatus {
    Certified,
    Failed(String),
}

impl CertificateStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Certified => "certified",
            Self::Failed(_) => "failed",
        }
    }
}

/// One `N` round of the search.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub n: usize,
    pub nu: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub eta_cert: f64,
    pub s1: f64,
    pub s2: f64,
    pub sphi: f64,
    pub theta1_max: f64,
    pub psi_bound: f64,
    pub p: DMatrix<f64>,
    pub p_norm: f64,
    pub p_min_eig: f64,
    pub lyapunov_residual: f64,
    pub tail_converged: bool,
    pub n_tail: usize,
    pub status: CertificateStatus,
    /// Every failed check of this round.
    pub blocking: Vec<String>,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        self.status == CertificateStatus::Certified
    }
}

/// Outcome of [`certify`]: the selected round plus the history.
#[derive(Debug, Clone)]
pub struct CertificationRun {
    pub certificate: Certificate,
    pub rounds: Vec<Certificate>,
    pub p_norm_history: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
}

/// `P` with `FᵀP + PF + 2δP = −I`.
pub fn solve_lyapunov(f: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>> {
    solve_shifted_lyapunov(f, delta)
}

fn s_sum(
    artifacts: &SynthesisArtifacts,
    table: &TraceTable,
    n: usize,
    n_tail: usize,
    with_gamma: bool,
) -> Result<f64> {
    let n0 = artifacts.n0;
    let a = &artifacts.ladder.a;
    let mut acc = 0.0;
    for (&g, lg) in artifacts.ladder.gammas.iter().zip(&artifacts.ladder.lambda_gammas) {
        let weight = if with_gamma { g * g } else { 1.0 };
        for l in 0..n0 {
            let row = a.row(l).norm_squared();
            let r = residual_norm_sq(table, g, l, n, n_tail)?;
            acc += weight * lg[(l, l)].powi(2) * row * r;
        }
    }
    Ok(acc)
}

/// `S₁,N = Σ_{k,l} γ_k² γ̃²_{k,l} ‖A_l‖² Σ_{n=N+1}^{N_tail} ⟨D_{γ_k}ℒ_l, ψ_n⟩²`.
pub fn compute_s1(
    artifacts: &SynthesisArtifacts,
    table: &TraceTable,
    n: usize,
    n_tail: usize,
) -> Result<f64> {
    s_sum(artifacts, table, n, n_tail, true)
}

/// `S₂,N`: as `S₁,N` without the `γ_k²` weight.
pub fn compute_s2(
    artifacts: &SynthesisArtifacts,
    table: &TraceTable,
    n: usize,
    n_tail: usize,
) -> Result<f64> {
    s_sum(artifacts, table, n, n_tail, false)
}

/// `S_φ,N = Σ_{n=N+1}^{N_tail} (φ_n(ξ₁)² + φ_n(ξ₂)²)/(λ_n + ν)²`.
pub fn compute_sphi(
    basis: &dyn BasisProvider,
    sensors: &Sensors,
    n: usize,
    n_tail: usize,
    nu: f64,
) -> Result<f64> {
    if n_tail < n {
        return Err(Error::InvalidArgument(format!(
            "tail end N_tail = {n_tail} is below N = {n}"
        )));
    }
    if n_tail > basis.len() {
        return Err(Error::InsufficientEigenvalues(format!(
            "S_phi to {n_tail} needs more than the {} enumerated modes",
            basis.len()
        )));
    }
    let mut acc = 0.0;
    for m in n..n_tail {
        let den = basis.lambda(m) + nu;
        if den <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda_{} + nu = {den} is not positive",
                m + 1
            )));
        }
        let a = basis.phi(m, &sensors.xi1)?;
        let b = basis.phi(m, &sensors.xi2)?;
        acc += (a * a + b * b) / (den * den);
    }
    Ok(acc)
}

/// `η = 1/√S_φ`, or `N` when `S_φ = 0`.
pub fn eta_cert(sphi: f64, n: usize) -> f64 {
    if sphi > 0.0 {
        1.0 / sphi.sqrt()
    } else {
        n as f64
    }
}

/// Largest eigenvalue of
/// `[[FᵀP+PF+2δP+εS₁E₁ᵀE₁, P𝓛], [𝓛ᵀP, −ηI]] + εS₂E₂ᵀE₂`.
pub fn check_theta1(
    p: &DMatrix<f64>,
    artifacts: &SynthesisArtifacts,
    s1: f64,
    s2: f64,
    epsilon: f64,
    eta: f64,
) -> Result<f64> {
    Ok(sym_max_eigenvalue(&theta1_matrix(p, artifacts, s1, s2, epsilon, eta)?))
}

pub fn theta1_matrix(
    p: &DMatrix<f64>,
    artifacts: &SynthesisArtifacts,
    s1: f64,
    s2: f64,
    epsilon: f64,
    eta: f64,
) -> Result<DMatrix<f64>> {
    let cl = &artifacts.closed_loop;
    let f = &cl.f;
    let dim = f.nrows();
    let n0 = artifacts.n0;
    if p.nrows() != dim || p.ncols() != dim {
        return Err(Error::Dimension(format!(
            "P is {}x{}, F is {dim}x{dim}",
            p.nrows(),
            p.ncols()
        )));
    }
    let delta = artifacts.delta;
    let mut theta = DMatrix::zeros(dim + 2, dim + 2);
    let top = f.transpose() * p + p * f + p * (2.0 * delta);
    theta.view_mut((0, 0), (dim, dim)).copy_from(&top);
    for i in 0..n0 {
        theta[(i, i)] += epsilon * s1;
    }
    let pg = p * &cl.stacked_gain;
    theta.view_mut((0, dim), (dim, 2)).copy_from(&pg);
    theta.view_mut((dim, 0), (2, dim)).copy_from(&pg.transpose());
    theta[(dim, dim)] = -eta;
    theta[(dim + 1, dim + 1)] = -eta;

    // E₂ = [−Σγ_kB_kA + Ξ, LC₀, LC̃₁, L]
    let mut e2 = DMatrix::zeros(n0, dim + 2);
    e2.view_mut((0, 0), (n0, n0)).copy_from(&artifacts.ladder.gain_matrix);
    e2.view_mut((0, n0), (n0, n0)).copy_from(&(&artifacts.l * &artifacts.c0));
    e2.view_mut((0, 2 * n0), (n0, dim - 2 * n0))
        .copy_from(&(&artifacts.l * &cl.c1_tilde));
    e2.view_mut((0, dim), (n0, 2)).copy_from(&artifacts.l);
    theta += e2.transpose() * e2 * (epsilon * s2);
    Ok(theta)
}

/// `Θ₂ = −½λ_{N+1} + 3ν/2 + 2δ`, after checking the `Ψ_n` slope
/// `−2(1 − N₀²/ε) + ηS_φ ≤ −½`.
#[allow(clippy::too_many_arguments)]
pub fn check_psi(
    lambda_next: f64,
    nu: f64,
    delta: f64,
    epsilon: f64,
    eta: f64,
    sphi: f64,
    n0: usize,
) -> Result<f64> {
    let slope = -2.0 * (1.0 - (n0 * n0) as f64 / epsilon) + eta * sphi;
    if slope > -0.5 {
        return Err(Error::NotYetCertifiable(format!(
            "Psi_n slope {slope:.4} > -1/2 (eta S_phi = {:.4})",
            eta * sphi
        )));
    }
    if lambda_next <= 0.0 {
        return Err(Error::NotYetCertifiable(format!(
            "lambda_(N+1) = {lambda_next} is not positive"
        )));
    }
    Ok(-0.5 * lambda_next + 1.5 * nu + 2.0 * delta)
}

/// One round at fixed `N`.
pub fn certify_at(
    artifacts: &SynthesisArtifacts,
    basis: &dyn BasisProvider,
    table: &TraceTable,
    options: &CertificationOptions,
) -> Result<Certificate> {
    let n = artifacts.n();
    let n0 = artifacts.n0;
    let delta = artifacts.delta;
    let nu = basis.plant().nu();
    let f = &artifacts.closed_loop.f;

    let p = solve_lyapunov(f, delta)?;
    let residual = lyapunov_residual(f, delta, &p);
    let p_min_eig = sym_min_eigenvalue(&p);
    let p_norm = norm2(&p);

    let s1 = options.tail.evaluate(n, |t| compute_s1(artifacts, table, n, t))?;
    let s2 = options.tail.evaluate(n, |t| compute_s2(artifacts, table, n, t))?;
    let sphi = options
        .tail
        .evaluate(n, |t| compute_sphi(basis, &artifacts.sensors, n, t, nu))?;
    let tails: [&TailSum; 3] = [&s1, &s2, &sphi];
    let tail_converged = tails.iter().all(|t| t.converged);
    let n_tail = tails.iter().map(|t| t.n_tail).max().unwrap_or(n);

    let epsilon = 2.0 * (n0 * n0) as f64;
    let eta = eta_cert(sphi.value, n);
    let theta1_max = check_theta1(&p, artifacts, s1.value, s2.value, epsilon, eta)?;

    let mut blocking = Vec::new();
    let psi_bound = match check_psi(basis.lambda(n), nu, delta, epsilon, eta, sphi.value, n0) {
        Ok(v) => v,
        Err(e) => {
            blocking.push(e.to_string());
            -0.5 * basis.lambda(n) + 1.5 * nu + 2.0 * delta
        }
    };
    if !(residual < LYAPUNOV_TOLERANCE) {
        blocking.push(format!("Lyapunov residual {residual:.3e} >= {LYAPUNOV_TOLERANCE:e}"));
    }
    if !(p_min_eig > 0.0) {
        blocking.push(format!("P is not positive definite (min eig {p_min_eig:.3e})"));
    }
    if theta1_max > NONPOSITIVE_SLACK {
        blocking.push(format!("theta1_max = {theta1_max:.4e} > 0"));
    }
    if !(psi_bound < 0.0) {
        blocking.push(format!("Theta2 = {psi_bound:.4} >= 0"));
    }
    let status = if blocking.is_empty() {
        CertificateStatus::Certified
    } else {
        CertificateStatus::Failed(blocking.join("; "))
    };
    Ok(Certificate {
        n,
        nu,
        delta,
        epsilon,
        eta_cert: eta,
        s1: s1.value,
        s2: s2.value,
        sphi: sphi.value,
        theta1_max,
        psi_bound,
        p,
        p_norm,
        p_min_eig,
        lyapunov_residual: residual,
        tail_converged,
        n_tail,
        status,
        blocking,
    })
}

/// Rounds `N = N_start, 2N_start, …`, ending with `N_max` itself if the
/// doubling overshoots it; returns the first certified round, else the last.
pub fn certify(
    artifacts: &SynthesisArtifacts,
    basis: &dyn BasisProvider,
    n_start: usize,
    n_max: usize,
    options: &CertificationOptions,
) -> Result<CertificationRun> {
    if n_max < n_start {
        return Err(Error::InvalidArgument(format!(
            "N_max = {n_max} is below N_start = {n_start}"
        )));
    }
    if n_start <= artifacts.n0 {
        return Err(Error::InvalidArgument(format!(
            "N_start = {n_start} must exceed N0 = {}",
            artifacts.n0
        )));
    }
    let schedule = n_schedule(n_start, n_max);
    let needed = options.tail.cap(n_max);
    if basis.len() < needed + 1 {
        return Err(Error::InsufficientEigenvalues(format!(
            "certification up to N = {n_max} needs {} modes, basis has {}",
            needed + 1,
            basis.len()
        )));
    }
    let table = TraceTable::new(basis, artifacts.n0, needed)?;

    let mut rounds: Vec<Certificate> = Vec::new();
    let mut warnings = Vec::new();
    for &n in &schedule {
        let art = artifacts.with_n(basis, n)?;
        let cert = certify_at(&art, basis, &table, options)?;
        info!(
            "N = {n}: theta1_max {:.3e}, Theta2 {:.3}, S1 {:.3e}, S_phi {:.3e}, |P| {:.3e}",
            cert.theta1_max, cert.psi_bound, cert.s1, cert.sphi, cert.p_norm
        );
        if !cert.tail_converged {
            warnings.push(format!(
                "N = {n}: tail block heuristic not met at N_tail = {}",
                cert.n_tail
            ));
        }
        if let Some(prev) = rounds.last() {
            let growth = cert.p_norm / prev.p_norm;
            let doublings = (n as f64 / prev.n as f64).log2().max(f64::MIN_POSITIVE);
            if growth > 2f64.powf(doublings) {
                let msg = format!(
                    "|P| grew from {:.3e} (N = {}) to {:.3e} (N = {n})",
                    prev.p_norm, prev.n, cert.p_norm
                );
                warn!("{msg}");
                warnings.push(msg);
            }
        }
        let done = cert.is_certified();
        rounds.push(cert);
        if done {
            break;
        }
    }
    let p_norm_history = rounds.iter().map(|c| (c.n, c.p_norm)).collect();
    let certificate = rounds.last().cloned().ok_or_else(|| {
        Error::InvalidArgument("empty certification schedule".into())
    })?;
    Ok(CertificationRun {
        certificate,
        rounds,
        p_norm_history,
        warnings,
    })
}

/// `N_start, 2N_start, …` below `N_max`, then `N_max`.
pub fn n_schedule(n_start: usize, n_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = n_start;
    while n < n_max {
        out.push(n);
        n *= 2;
    }
    out.push(n_max);
    out
}

/// Modes a basis needs for [`certify`] up to `n_max`.
pub fn required_modes(n_max: usize, options: &CertificationOptions) -> usize {
    options.tail.cap(n_max) + 1
}
