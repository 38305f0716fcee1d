//! Truncated modal simulation of the closed loop.
//!
//! The plant carries `N_sim` modes `z_n`, the observer exactly `N` modes
//! `ẑ_n`, and `U = Ẑ^{N₀}`. Plant modes follow
//! `ż_n = −λ_n z_n + Σ_k (λ_n + γ_k)⟨D_{γ_k}u_k, ψ_n⟩ − 2λ_n⟨·,ψ_n⟩δ_{n≤N₀} − η⟨·,ψ₂⟩δ_{2,n}`,
//! with every lifted projection linear in `U`; the whole loop is one linear
//! system `ṡ = G s` on `s = (z, ẑ)`.

use crate::error::{Error, Result};
use crate::lifting::{lifted_projection, LiftedProjectionTable};
use crate::quadrature::{TensorGrid, DEFAULT_ORDER};
use crate::spectral::BasisProvider;
use crate::synthesis::{projection_identity_residual, SynthesisArtifacts};
use log::debug;
use nalgebra::{DMatrix, DVector};

/// Smallest value kept before taking logs in the decay fit.
pub const LOG_FLOOR: f64 = 1e-300;

/// Samples needed after `t_skip` for a decay fit.
pub const MIN_FIT_SAMPLES: usize = 10;

const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// `s(t+h) = e^{Gh}s(t)`; exact for the truncated linear loop.
    Exact,
    /// Integrating factor on the diagonal `−λ_n` part, explicit midpoint on
    /// the coupling.
    IfMidpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Plant modes; default `max(4N, 200)`.
    pub n_sim: Option<usize>,
    /// Step; default `min(0.5/λ_{N_sim}, 1e−2)`.
    pub h: Option<f64>,
    pub integrator: Integrator,
    /// Forces `U ≡ 0`: the plant runs uncontrolled and the observer is held at zero.
    pub open_loop: bool,
    /// Start of the decay-fit window; default `min(2, T/10)`.
    pub t_skip: Option<f64>,
    pub identity_every: usize,
    /// A state norm above `factor · (initial norm)` counts as divergence.
    pub divergence_factor: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            n_sim: None,
            h: None,
            integrator: Integrator::Exact,
            open_loop: false,
            t_skip: None,
            identity_every: 100,
            divergence_factor: 1e12,
        }
    }
}

pub fn default_n_sim(n: usize) -> usize {
    (4 * n).max(200)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    /// Plant coefficients `z_n = ⟨z, ψ_n⟩`, `n < N_sim`.
    pub z: DVector<f64>,
    /// Observer coefficients `ẑ_n`, `n < N`.
    pub zhat: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub l2_proxy: f64,
    pub h1_proxy: f64,
    pub y1: f64,
    pub y2: f64,
    pub u_l2_gamma1: f64,
    /// `‖E^{N₀}‖`
    pub err_finite: f64,
    /// `‖Ẽ^{N−N₀}‖`
    pub err_residual: f64,
    /// `Σ_{k≤N} |ẑ_k|`
    pub zhat_l1: f64,
}

impl StepRecord {
    /// The quantity bounded by the stability estimate: `H¹-proxy + Σ|ẑ_k|`.
    pub fn combined(&self) -> f64 {
        self.h1_proxy + self.zhat_l1
    }
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub records: Vec<StepRecord>,
    pub steps: usize,
    pub h: f64,
    pub n_sim: usize,
    /// Fitted rate of `H¹-proxy + Σ|ẑ_k|` on `[t_skip, T]`.
    pub decay_rate: f64,
    pub t_skip: f64,
    /// Largest projection-identity residual over the sampled steps.
    pub identity_max: f64,
    pub identity_checks: usize,
    pub final_state: SimState,
}

/// Precomputed maps for one design and one plant truncation.
#[derive(Debug, Clone)]
pub struct Simulator {
    artifacts: SynthesisArtifacts,
    n_sim: usize,
    lambdas: Vec<f64>,
    /// `φ_n(ξᵢ)`, `2 × N_sim`.
    phi: DMatrix<f64>,
    /// `⟨D_{γ_k}u_k, ψ_n⟩ = lifted[k] U`, each `N_sim × N₀`.
    lifted: Vec<DMatrix<f64>>,
    /// `Σ_k lifted[k]`
    dsum: DMatrix<f64>,
    /// Plant input map `N_sim × N₀`.
    input: DMatrix<f64>,
    generator: DMatrix<f64>,
    generator_open: DMatrix<f64>,
    nu: f64,
    nu0: f64,
    options: SimOptions,
}

struct Propagator {
    h: f64,
    kind: PropagatorKind,
}

enum PropagatorKind {
    Exact(DMatrix<f64>),
    IfMidpoint {
        full: DVector<f64>,
        half: DVector<f64>,
        coupling: DMatrix<f64>,
    },
}

impl Simulator {
    pub fn new(
        basis: &dyn BasisProvider,
        artifacts: &SynthesisArtifacts,
        options: SimOptions,
    ) -> Result<Self> {
        let n = artifacts.n();
        let n0 = artifacts.n0;
        let n_sim = options.n_sim.unwrap_or_else(|| default_n_sim(n));
        if n_sim < n {
            return Err(Error::Dimension(format!("N_sim = {n_sim} is below N = {n}")));
        }
        if n_sim > basis.len() {
            return Err(Error::InsufficientEigenvalues(format!(
                "N_sim = {n_sim} exceeds the {} enumerated modes",
                basis.len()
            )));
        }
        if options.identity_every == 0 {
            return Err(Error::InvalidArgument("identity_every must be positive".into()));
        }
        let lambdas = basis.lambdas(0..n_sim);
        let mut phi = DMatrix::zeros(2, n_sim);
        for m in 0..n_sim {
            phi[(0, m)] = basis.phi(m, &artifacts.sensors.xi1)?;
            phi[(1, m)] = basis.phi(m, &artifacts.sensors.xi2)?;
        }

        // ⟨u_k, trace_n⟩ = (Gᵀ Λ_k A U)_n
        let gt = basis.trace_gram(0..n0, 0..n_sim)?.transpose();
        let a = &artifacts.ladder.a;
        let mut lifted = Vec::with_capacity(n0);
        for (&g, lg) in artifacts.gammas().iter().zip(&artifacts.ladder.lambda_gammas) {
            let table = LiftedProjectionTable::new(g, artifacts.eta, n0, &lambdas);
            let inner = &gt * (lg * a);
            let mut p = DMatrix::zeros(n_sim, n0);
            for m in 0..n_sim {
                for j in 0..n0 {
                    p[(m, j)] = lifted_projection(&table, inner[(m, j)], m)?;
                }
            }
            lifted.push(p);
        }
        let dsum = lifted.iter().fold(DMatrix::zeros(n_sim, n0), |acc, p| acc + p);

        let mut input = DMatrix::zeros(n_sim, n0);
        for (p, &g) in lifted.iter().zip(artifacts.gammas()) {
            for m in 0..n_sim {
                let scale = lambdas[m] + g;
                for j in 0..n0 {
                    input[(m, j)] += scale * p[(m, j)];
                }
            }
        }
        for m in 0..n0 {
            for j in 0..n0 {
                input[(m, j)] -= 2.0 * lambdas[m] * dsum[(m, j)];
            }
        }
        if n0 >= 2 {
            for j in 0..n0 {
                input[(1, j)] -= artifacts.eta * dsum[(1, j)];
            }
        }

        let nu = basis.plant().nu();
        let min_lambda = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        let nu0 = nu + min_lambda + 1.0;

        let mut sim = Self {
            artifacts: artifacts.clone(),
            n_sim,
            lambdas,
            phi,
            lifted,
            dsum,
            input,
            generator: DMatrix::zeros(0, 0),
            generator_open: DMatrix::zeros(0, 0),
            nu,
            nu0,
            options,
        };
        sim.generator = sim.build_generator(false);
        sim.generator_open = sim.build_generator(true);
        Ok(sim)
    }

    fn build_generator(&self, open_loop: bool) -> DMatrix<f64> {
        let art = &self.artifacts;
        let (ns, n, n0) = (self.n_sim, art.n(), art.n0);
        let dim = ns + n;
        let mut g = DMatrix::zeros(dim, dim);
        for m in 0..ns {
            g[(m, m)] = -self.lambdas[m];
        }
        if open_loop {
            // Plant alone; the observer is held at zero.
            return g;
        }
        g.view_mut((0, ns), (ns, n0)).copy_from(&self.input);

        // Observer, unstable block:
        // M U − L{C_N(ẑ − D_N U) + Φ D U − Φ z}
        let phi_n = self.phi.columns(0, n).into_owned();
        let d_n = self.dsum.rows(0, n).into_owned();
        let l = &art.l;
        let u_map = &art.ladder.gain_matrix + l * (&phi_n * &d_n) - l * (&self.phi * &self.dsum);
        let mut top = g.view_mut((ns, ns), (n0, n));
        top -= l * &phi_n;
        let mut u_block = g.view_mut((ns, ns), (n0, n0));
        u_block += &u_map;
        g.view_mut((ns, 0), (n0, ns)).copy_from(&(l * &self.phi));

        // Observer, residual block: A₁Ẑ + H U.
        let r = n - n0;
        for j in 0..r {
            g[(ns + n0 + j, ns + n0 + j)] = -self.lambdas[n0 + j];
        }
        g.view_mut((ns + n0, ns), (r, n0))
            .copy_from(&art.closed_loop.h);
        g
    }

    pub fn n_sim(&self) -> usize {
        self.n_sim
    }

    pub fn artifacts(&self) -> &SynthesisArtifacts {
        &self.artifacts
    }

    /// Full generator `G` of `ṡ = Gs`.
    pub fn generator(&self) -> &DMatrix<f64> {
        if self.options.open_loop {
            &self.generator_open
        } else {
            &self.generator
        }
    }

    pub fn default_step(&self) -> f64 {
        let top = self.lambdas[self.n_sim - 1];
        if top > 0.0 {
            (0.5 / top).min(1e-2)
        } else {
            1e-2
        }
    }

    /// `z` from `z0` padded or truncated to `N_sim`; `ẑ = 0`.
    pub fn init_state(&self, z0: &[f64]) -> Result<SimState> {
        if let Some(i) = z0.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "initial coefficient {} is not finite",
                i + 1
            )));
        }
        let z = DVector::from_fn(self.n_sim, |i, _| z0.get(i).copied().unwrap_or(0.0));
        Ok(SimState {
            t: 0.0,
            z,
            zhat: DVector::zeros(self.artifacts.n()),
        })
    }

    /// `U = Ẑ^{N₀}` (zero in open loop).
    pub fn control_input(&self, state: &SimState) -> DVector<f64> {
        if self.options.open_loop {
            DVector::zeros(self.artifacts.n0)
        } else {
            state.zhat.rows(0, self.artifacts.n0).into_owned()
        }
    }

    /// Lifted projections `⟨D_{γ_k}u_k, ψ_n⟩` for each `k`, `n < N_sim`.
    pub fn lifted_projections(&self, u: &DVector<f64>) -> Vec<DVector<f64>> {
        self.lifted.iter().map(|p| p * u).collect()
    }

    /// `w_n = z_n − Σ_k⟨D_{γ_k}u_k, ψ_n⟩`.
    pub fn w(&self, state: &SimState) -> DVector<f64> {
        &state.z - &self.dsum * self.control_input(state)
    }

    /// `ŵ_n = ẑ_n − Σ_k⟨D_{γ_k}u_k, ψ_n⟩`, `n < N`.
    pub fn w_hat(&self, state: &SimState) -> DVector<f64> {
        let n = self.artifacts.n();
        &state.zhat - self.dsum.rows(0, n) * self.control_input(state)
    }

    /// `y = (z(ξ₁), z(ξ₂))` from the `N_sim` modes.
    pub fn output(&self, state: &SimState) -> DVector<f64> {
        &self.phi * &state.z
    }

    /// `X = (Ẑ^{N₀}, E^{N₀}, Ẽ^{N−N₀})`.
    pub fn closed_loop_coordinates(&self, state: &SimState) -> DVector<f64> {
        let n = self.artifacts.n();
        let n0 = self.artifacts.n0;
        let mut x = DVector::zeros(n + n0);
        for i in 0..n0 {
            x[i] = state.zhat[i];
            x[n0 + i] = state.z[i] - state.zhat[i];
        }
        for j in n0..n {
            x[n0 + j] = self.lambdas[j] * (state.z[j] - state.zhat[j]);
        }
        x
    }

    /// `V = XᵀPX + Σ_{N<n≤N_sim}(λ_n+ν)w_n²`.
    pub fn lyapunov_value(&self, p: &DMatrix<f64>, state: &SimState) -> Result<f64> {
        let x = self.closed_loop_coordinates(state);
        if p.nrows() != x.len() || p.ncols() != x.len() {
            return Err(Error::Dimension(format!(
                "P is {}x{}, X has {} entries",
                p.nrows(),
                p.ncols(),
                x.len()
            )));
        }
        let w = self.w(state);
        let tail: f64 = (self.artifacts.n()..self.n_sim)
            .map(|m| (self.lambdas[m] + self.nu) * w[m] * w[m])
            .sum();
        Ok(x.dot(&(p * &x)) + tail)
    }

    pub fn record(&self, state: &SimState) -> StepRecord {
        let art = &self.artifacts;
        let n0 = art.n0;
        let n = art.n();
        let w = self.w(state);
        let h1 = self
            .lambdas
            .iter()
            .zip(w.iter())
            .map(|(&l, &wn)| (l + self.nu).max(self.nu0) * wn * wn)
            .sum::<f64>()
            .sqrt();
        let y = self.output(state);
        let u = self.control_input(state);
        let c = &art.k * &u;
        let u_l2 = c.dot(&(&art.b * &c)).max(0.0).sqrt();
        let err_finite = (0..n0)
            .map(|i| (state.z[i] - state.zhat[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let err_residual = (n0..n)
            .map(|j| (self.lambdas[j] * (state.z[j] - state.zhat[j])).powi(2))
            .sum::<f64>()
            .sqrt();
        StepRecord {
            t: state.t,
            l2_proxy: state.z.norm(),
            h1_proxy: h1,
            y1: y[0],
            y2: y[1],
            u_l2_gamma1: u_l2,
            err_finite,
            err_residual,
            zhat_l1: state.zhat.iter().map(|v| v.abs()).sum(),
        }
    }

    fn propagator(&self, h: f64) -> Propagator {
        let g = self.generator();
        let kind = match self.options.integrator {
            Integrator::Exact => PropagatorKind::Exact((g * h).exp()),
            Integrator::IfMidpoint => {
                let diag = g.diagonal();
                let mut coupling = g.clone();
                coupling.set_diagonal(&DVector::zeros(g.nrows()));
                PropagatorKind::IfMidpoint {
                    full: diag.map(|d| (d * h).exp()),
                    half: diag.map(|d| (0.5 * d * h).exp()),
                    coupling,
                }
            }
        };
        Propagator { h, kind }
    }

    fn advance(&self, prop: &Propagator, s: &DVector<f64>) -> DVector<f64> {
        match &prop.kind {
            PropagatorKind::Exact(e) => e * s,
            PropagatorKind::IfMidpoint {
                full,
                half,
                coupling,
            } => {
                let h = prop.h;
                let ns = coupling * s;
                let mid = (s + &ns * (0.5 * h)).component_mul(half);
                let nm = coupling * mid;
                s.component_mul(full) + nm.component_mul(half) * h
            }
        }
    }

    fn pack(state: &SimState) -> DVector<f64> {
        let mut s = DVector::zeros(state.z.len() + state.zhat.len());
        s.rows_mut(0, state.z.len()).copy_from(&state.z);
        s.rows_mut(state.z.len(), state.zhat.len()).copy_from(&state.zhat);
        s
    }

    fn unpack(&self, s: DVector<f64>, t: f64) -> SimState {
        SimState {
            t,
            z: s.rows(0, self.n_sim).into_owned(),
            zhat: s.rows(self.n_sim, self.artifacts.n()).into_owned(),
        }
    }

    /// One step of length `h`; a non-finite result is retried as `2^j`
    /// substeps of `h/2^j`, up to 20 halvings.
    pub fn step(&self, state: &SimState, h: f64) -> Result<SimState> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
        }
        let prop = self.propagator(h);
        self.step_with(&prop, state)
    }

    fn step_with(&self, prop: &Propagator, state: &SimState) -> Result<SimState> {
        let s = Self::pack(state);
        let next = self.advance(prop, &s);
        if next.iter().all(|v| v.is_finite()) {
            return Ok(self.unpack(next, state.t + prop.h));
        }
        for j in 1..=MAX_HALVINGS {
            let parts = 1usize << j;
            let sub = self.propagator(prop.h / parts as f64);
            let mut cur = s.clone();
            for _ in 0..parts {
                cur = self.advance(&sub, &cur);
                if !cur.iter().all(|v| v.is_finite()) {
                    break;
                }
            }
            if cur.iter().all(|v| v.is_finite()) {
                debug!("step at t = {} accepted after {j} halvings", state.t);
                return Ok(self.unpack(cur, state.t + prop.h));
            }
        }
        Err(Error::Divergence {
            t: state.t,
            reason: format!("state not finite after {MAX_HALVINGS} step halvings"),
        })
    }

    /// Runs `[0, T]` from plant coefficients `z0` and zero observer.
    pub fn run(&self, z0: &[f64], t_end: f64, h: Option<f64>) -> Result<SimulationRun> {
        if !(t_end > 0.0) {
            return Err(Error::InvalidArgument(format!("T = {t_end} must be positive")));
        }
        let h = h.or(self.options.h).unwrap_or_else(|| self.default_step());
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
        }
        let steps = (t_end / h).round().max(1.0) as usize;
        let h = t_end / steps as f64;
        let prop = self.propagator(h);

        let mut state = self.init_state(z0)?;
        let mut records = Vec::with_capacity(steps + 1);
        records.push(self.record(&state));
        let initial_norm = Self::pack(&state).norm();
        let limit = self.options.divergence_factor * initial_norm.max(f64::MIN_POSITIVE);
        let mut identity_max: f64 = 0.0;
        let mut identity_checks = 0;
        for i in 1..=steps {
            let next = self.step_with(&prop, &state)?;
            state = SimState {
                t: i as f64 * h,
                ..next
            };
            let norm = Self::pack(&state).norm();
            if norm > limit {
                return Err(Error::Divergence {
                    t: state.t,
                    reason: format!("state norm {norm:.3e} exceeds {limit:.3e}"),
                });
            }
            if i % self.options.identity_every == 0 && !self.options.open_loop {
                let u = self.control_input(&state);
                identity_max = identity_max.max(self.identity_check(&u)?);
                identity_checks += 1;
            }
            records.push(self.record(&state));
        }
        let t_skip = self.options.t_skip.unwrap_or((t_end / 10.0).min(2.0));
        let series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.combined())).collect();
        let decay_rate = if initial_norm == 0.0 {
            0.0
        } else {
            estimate_decay_rate(&series, t_skip)?
        };
        Ok(SimulationRun {
            records,
            steps,
            h,
            n_sim: self.n_sim,
            decay_rate,
            t_skip,
            identity_max,
            identity_checks,
            final_state: state,
        })
    }

    /// Largest deviation of the stacked lifted projections (`n < N₀`) from
    /// `−B_k A U`, over `k`, cross-checked against the synthesis-side route.
    pub fn identity_check(&self, u: &DVector<f64>) -> Result<f64> {
        let n0 = self.artifacts.n0;
        let au = &self.artifacts.ladder.a * u;
        let here = self
            .lifted_projections(u)
            .iter()
            .zip(&self.artifacts.ladder.bk)
            .map(|(p, bk)| (p.rows(0, n0) + bk * &au).amax())
            .fold(0.0, f64::max);
        Ok(here.max(projection_identity_residual(&self.artifacts, u)?))
    }
}

/// `⟨f, ψ_n⟩` for `n < modes` by tensor Gauss–Legendre quadrature.
pub fn project_initial(
    basis: &dyn BasisProvider,
    f: impl Fn(&[f64]) -> f64,
    modes: usize,
) -> Result<Vec<f64>> {
    if modes > basis.len() {
        return Err(Error::InsufficientEigenvalues(format!(
            "projection onto {modes} modes, basis has {}",
            basis.len()
        )));
    }
    let plant = basis.plant();
    let d = plant.dimension();
    let kmax: Vec<usize> = (0..d)
        .map(|a| {
            basis.eigenpairs()[..modes]
                .iter()
                .map(|e| e.multi_index[a])
                .max()
                .unwrap_or(1)
        })
        .collect();
    let panels: Vec<usize> = kmax.iter().map(|&k| k.max(4)).collect();
    let grid = TensorGrid::new(plant.lengths(), &panels, DEFAULT_ORDER);
    let mut acc = vec![0.0; modes];
    let mut err = None;
    grid.for_each(|x, w| {
        let fx = f(x) * w;
        if fx == 0.0 || err.is_some() {
            return;
        }
        for (m, a) in acc.iter_mut().enumerate() {
            match basis.psi(m, x) {
                Ok(v) => *a += fx * v,
                Err(e) => {
                    err = Some(e);
                    return;
                }
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(acc),
    }
}

/// Isotropic Gaussian bump `amplitude · exp(−|x − centre|²/(2σ²))`.
pub fn gaussian_bump(centre: Vec<f64>, sigma: f64, amplitude: f64) -> impl Fn(&[f64]) -> f64 {
    move |x: &[f64]| {
        let r2: f64 = x.iter().zip(&centre).map(|(a, b)| (a - b).powi(2)).sum();
        amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
    }
}

/// Least-squares slope of `ln(value)` against `t` over samples with `t ≥ t_skip`.
pub fn estimate_decay_rate(series: &[(f64, f64)], t_skip: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= t_skip)
        .map(|&(t, v)| (t, v.abs().max(LOG_FLOOR).ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_FIT_SAMPLES,
            have: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, y) in &pts {
        sxy += (t - tm) * (y - ym);
        sxx += (t - tm) * (t - tm);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientSamples {
            needed: MIN_FIT_SAMPLES,
            have: 1,
        });
    }
    Ok(sxy / sxx)
}
