//! Controller and observer construction.
//!
//! The boundary control is `u = Σ_k ⟨Λ_{γ_k} A U, ℒ(x)⟩` with
//! `A = (Σ_k Λ_{γ_k} B Λ_{γ_k})⁻¹`, and `U = Ẑ^{N₀}` comes from a Luenberger
//! observer driven by two point measurements. Every mode then obeys
//! `ż_n = −λ_n z_n − ⟨u, trace_n⟩`, which is what makes the finite part
//! `Ẋ = FX + 𝓛ζ` exact.

use crate::error::{Error, Result};
use crate::lifting::{eta_shift, gram_matrix, lambda_gamma, SHIFTED_MODE};
use crate::linalg::{condition_number, observability_rank, spectral_abscissa};
use crate::spectral::{count_unstable, BasisProvider};
use log::debug;
use nalgebra::{DMatrix, DVector};

/// Tunables of the synthesis step.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    /// Upper bound `c` in `γ_{N₀} ≤ c γ₁`.
    pub c_ratio: f64,
    /// First rung tried for `γ₁`.
    pub gamma_base: f64,
    /// Give up once `γ₁` exceeds this.
    pub gamma_base_cap: f64,
    /// Observer pole spacing; `None` means `δ/2`.
    pub spread: Option<f64>,
    /// Largest accepted condition number of `Σ B_k`.
    pub cond_limit: f64,
    /// Threshold below which a sensor value or determinant counts as zero.
    pub sensor_tol: f64,
    /// Accept multiplicity patterns other than all-simple / `[1, 2, 1, …]`.
    pub allow_generalized: bool,
    /// Modes checked for `γ_k ± (λ_i + ηδ_{2,i}) ≠ 0`.
    pub admissibility_modes: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            c_ratio: 2.0,
            gamma_base: 10.0,
            gamma_base_cap: 10.0 * (1u64 << 20) as f64,
            spread: None,
            cond_limit: 1e12,
            sensor_tol: 1e-10,
            allow_generalized: false,
            admissibility_modes: 400,
        }
    }
}

/// Measurement points `ξ₁, ξ₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensors {
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
}

impl Sensors {
    pub fn new(xi1: Vec<f64>, xi2: Vec<f64>) -> Self {
        Self { xi1, xi2 }
    }

    pub fn points(&self) -> [&[f64]; 2] {
        [&self.xi1, &self.xi2]
    }
}

/// Result of the `γ` search.
#[derive(Debug, Clone)]
pub struct GammaLadder {
    pub gamma_base: f64,
    pub gammas: Vec<f64>,
    pub lambda_gammas: Vec<DMatrix<f64>>,
    pub bk: Vec<DMatrix<f64>>,
    pub a: DMatrix<f64>,
    /// `−Σ γ_k B_k A + Ξ`
    pub gain_matrix: DMatrix<f64>,
    pub abscissa: f64,
    pub cond: f64,
}

/// Everything the controller, observer and certificate need.
#[derive(Debug, Clone)]
pub struct SynthesisArtifacts {
    pub delta: f64,
    pub n0: usize,
    pub pattern: Vec<usize>,
    /// `λ₁ … λ_N`
    pub lambdas: Vec<f64>,
    pub eta: f64,
    pub ladder: GammaLadder,
    pub b: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub a0: DMatrix<f64>,
    pub sensors: Sensors,
    pub c0: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub observer_abscissa: f64,
    /// `Σ_k Λ_{γ_k} A`: boundary coefficients are `K U`.
    pub k: DMatrix<f64>,
    pub closed_loop: ClosedLoop,
}

/// The `N`-dependent blocks.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub n: usize,
    pub a1: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub c1_tilde: DMatrix<f64>,
    /// `H^{N−N₀}`
    pub h: DMatrix<f64>,
    pub f: DMatrix<f64>,
    /// `𝓛 = (L; −L; 0)`
    pub stacked_gain: DMatrix<f64>,
    pub f_abscissa: f64,
}

impl SynthesisArtifacts {
    pub fn n(&self) -> usize {
        self.closed_loop.n
    }

    pub fn gammas(&self) -> &[f64] {
        &self.ladder.gammas
    }

    /// Same design, with the residual blocks rebuilt for another `N`.
    pub fn with_n(&self, basis: &dyn BasisProvider, n: usize) -> Result<Self> {
        let mut out = self.clone();
        out.closed_loop = assemble_f(basis, self, n)?;
        out.lambdas = basis.lambdas(0..n);
        Ok(out)
    }
}

/// `η` = half the smallest gap between `λ₂` and the other unstable
/// eigenvalues (excluding its double partner), clamped to `[0.1, 1]`.
pub fn select_eta(unstable: &[f64]) -> Result<f64> {
    let n0 = unstable.len();
    if n0 <= SHIFTED_MODE {
        return Ok(1.0);
    }
    let l2 = unstable[SHIFTED_MODE];
    let tie = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0);
    let gaps: Vec<f64> = unstable
        .iter()
        .enumerate()
        .filter(|&(j, &l)| j != SHIFTED_MODE && !tie(l, l2))
        .map(|(_, &l)| (l - l2).abs())
        .collect();
    if gaps.is_empty() {
        return Ok(1.0);
    }
    let gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let resonant = |eta: f64| {
        unstable
            .iter()
            .enumerate()
            .any(|(j, &l)| j != SHIFTED_MODE && tie(l2 + eta, l))
    };
    let eta = (0.5 * gap).clamp(0.1, 1.0);
    let eta = if resonant(eta) { 0.5 * gap } else { eta };
    if resonant(eta) || eta <= 0.0 {
        return Err(Error::Synthesis(format!(
            "no non-resonant eta for unstable spectrum {unstable:?}"
        )));
    }
    Ok(eta)
}

/// `Ξ = diag(0, η, 0, …)`.
pub fn xi_matrix(n0: usize, eta: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n0, n0, |i, j| if i == j { eta_shift(i, n0, eta) } else { 0.0 })
}

/// `γ_k = γ_base (1 + (k−1)ρ)` with `ρ = (c − 1)/(N₀ − 1)`.
pub fn ladder_rungs(gamma_base: f64, n0: usize, c_ratio: f64) -> Vec<f64> {
    if n0 <= 1 {
        return vec![gamma_base; n0];
    }
    let rho = (c_ratio - 1.0) / (n0 - 1) as f64;
    (0..n0).map(|k| gamma_base * (1.0 + k as f64 * rho)).collect()
}

/// Doubles `γ_base` until admissibility, conditioning and the Hurwitz margin
/// `abscissa(−Σγ_k B_k A + Ξ) < −δ` all hold.
pub fn select_gamma_ladder(
    lambdas: &[f64],
    n0: usize,
    b: &DMatrix<f64>,
    eta: f64,
    delta: f64,
    options: &SynthesisOptions,
) -> Result<GammaLadder> {
    if options.c_ratio <= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "c_ratio must exceed 1 (got {})",
            options.c_ratio
        )));
    }
    if !(options.gamma_base > 0.0) {
        return Err(Error::InvalidArgument("gamma_base must be positive".into()));
    }
    let unstable = &lambdas[..n0];
    let xi = xi_matrix(n0, eta);
    let mut base = options.gamma_base;
    let mut last = String::from("no rung tried");
    while base <= options.gamma_base_cap {
        let gammas = ladder_rungs(base, n0, options.c_ratio);
        if let Some(msg) = inadmissible(&gammas, lambdas, n0, eta, options.admissibility_modes) {
            last = msg;
            base *= 2.0;
            continue;
        }
        let lambda_gammas = gammas
            .iter()
            .map(|&g| lambda_gamma(g, eta, unstable))
            .collect::<Result<Vec<_>>>()?;
        let bk: Vec<DMatrix<f64>> = lambda_gammas.iter().map(|lg| lg * b * lg).collect();
        let sum = bk.iter().fold(DMatrix::zeros(n0, n0), |acc, m| acc + m);
        let cond = condition_number(&sum);
        if !(cond < options.cond_limit) {
            last = format!("cond(sum B_k) = {cond:.3e} at gamma_base = {base}");
            base *= 2.0;
            continue;
        }
        let a = match sum.clone().try_inverse() {
            Some(inv) => (&inv + inv.transpose()) * 0.5,
            None => {
                last = format!("sum B_k singular at gamma_base = {base}");
                base *= 2.0;
                continue;
            }
        };
        let mut gain_matrix = xi.clone();
        for (g, m) in gammas.iter().zip(&bk) {
            gain_matrix -= m * &a * *g;
        }
        let abscissa = spectral_abscissa(&gain_matrix)?;
        debug!("gamma_base {base}: cond {cond:.3e}, abscissa {abscissa:.4}");
        if abscissa < -delta {
            return Ok(GammaLadder {
                gamma_base: base,
                gammas,
                lambda_gammas,
                bk,
                a,
                gain_matrix,
                abscissa,
                cond,
            });
        }
        last = format!("abscissa {abscissa:.4} >= -delta at gamma_base = {base}");
        base *= 2.0;
    }
    Err(Error::Synthesis(format!(
        "no admissible gamma ladder below gamma_base = {:.3e}; last attempt: {last}",
        options.gamma_base_cap
    )))
}

fn inadmissible(
    gammas: &[f64],
    lambdas: &[f64],
    n0: usize,
    eta: f64,
    modes: usize,
) -> Option<String> {
    for (k, &g) in gammas.iter().enumerate() {
        for (i, &l) in lambdas.iter().take(modes.max(n0)).enumerate() {
            let shifted = l + eta_shift(i, n0, eta);
            let tol = 1e-12 * g.abs().max(1.0);
            if (g - shifted).abs() <= tol || (g + shifted).abs() <= tol {
                return Some(format!(
                    "gamma_{} = {g} hits lambda_{} + eta delta = {shifted}",
                    k + 1,
                    i + 1
                ));
            }
        }
    }
    None
}

/// Checks the measurement condition and returns `C₀` (2 × N₀).
pub fn validate_sensors(
    sensors: &Sensors,
    basis: &dyn BasisProvider,
    n0: usize,
    pattern: &[usize],
    tol: f64,
) -> Result<DMatrix<f64>> {
    let plant = basis.plant();
    for (name, p) in [("xi1", &sensors.xi1), ("xi2", &sensors.xi2)] {
        if !plant.contains_interior(p) {
            return Err(Error::SensorPlacement {
                mode: None,
                reason: format!("{name} = {p:?} is not an interior point"),
            });
        }
    }
    if sensors.xi1 == sensors.xi2 {
        return Err(Error::SensorPlacement {
            mode: None,
            reason: "xi1 and xi2 coincide".into(),
        });
    }
    let mut c0 = DMatrix::zeros(2, n0);
    for n in 0..n0 {
        c0[(0, n)] = basis.phi(n, &sensors.xi1)?;
        c0[(1, n)] = basis.phi(n, &sensors.xi2)?;
    }
    let double = double_pair(pattern);
    for n in 0..n0 {
        if double.is_some_and(|(p, q)| n == p || n == q) {
            continue;
        }
        if c0[(0, n)].abs() + c0[(1, n)].abs() <= tol {
            return Err(Error::SensorPlacement {
                mode: Some(n + 1),
                reason: format!("phi_{} vanishes at both sensors", n + 1),
            });
        }
    }
    if let Some((p, q)) = double {
        let det = c0[(0, p)] * c0[(1, q)] - c0[(0, q)] * c0[(1, p)];
        if det.abs() <= tol {
            return Err(Error::SensorPlacement {
                mode: Some(p + 1),
                reason: format!(
                    "det[[phi_{a}(xi1), phi_{b}(xi1)], [phi_{a}(xi2), phi_{b}(xi2)]] = {det:.3e}",
                    a = p + 1,
                    b = q + 1
                ),
            });
        }
    }
    let a0 = DMatrix::from_diagonal(&DVector::from_iterator(n0, (0..n0).map(|n| -basis.lambda(n))));
    let rank = observability_rank(&a0, &c0, 1e-10);
    if rank < n0 {
        return Err(Error::SensorPlacement {
            mode: None,
            reason: format!("Kalman rank of (A0, C0) is {rank} < N0 = {n0}"),
        });
    }
    Ok(c0)
}

/// Zero-based indices of the double eigenvalue, if the pattern has one.
fn double_pair(pattern: &[usize]) -> Option<(usize, usize)> {
    let mut start = 0;
    for &m in pattern {
        if m == 2 {
            return Some((start, start + 1));
        }
        start += m;
    }
    None
}

/// Gain `L` (N₀ × 2) with `abscissa(A₀ − LC₀) < −δ`, targeting the poles
/// `−δ − spread·k`.
///
/// Two stages: a rank-one row correction through one output separates the
/// double eigenvalue (for a diagonal `A₀` this only moves that diagonal
/// entry), then Ackermann's formula places all poles through a fixed
/// combination `αᵀC₀` of the outputs. Several `(mode, output, shift, α)`
/// choices are tried; the smallest `‖L‖` meeting the margin wins.
pub fn place_observer_gain(
    a0: &[f64],
    c0: &DMatrix<f64>,
    delta: f64,
    spread: f64,
) -> Result<DMatrix<f64>> {
    let n = a0.len();
    if c0.nrows() != 2 || c0.ncols() != n {
        return Err(Error::Dimension(format!(
            "C0 is {}x{}, expected 2x{n}",
            c0.nrows(),
            c0.ncols()
        )));
    }
    if !(spread > 0.0) {
        return Err(Error::InvalidArgument(format!("spread must be positive (got {spread})")));
    }
    let a0m = DMatrix::from_diagonal(&DVector::from_column_slice(a0));
    if observability_rank(&a0m, c0, 1e-10) < n {
        return Err(Error::Placement("(A0, C0) is not observable".into()));
    }
    let targets: Vec<f64> = (1..=n).map(|k| -delta - spread * k as f64).collect();

    let mut stage_one: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, 2)];
    let scale = delta + spread;
    for k in 0..n {
        let repeated = (0..n).any(|j| j != k && a0[j] == a0[k]);
        if !repeated {
            continue;
        }
        for o in 0..2 {
            let c = c0[(o, k)];
            if c.abs() <= 1e-14 {
                continue;
            }
            for r in [-1.0, -2.0, -4.0, 1.0, 2.0] {
                let mut l1 = DMatrix::zeros(n, 2);
                l1[(k, o)] = -r * scale / c;
                stage_one.push(l1);
            }
        }
    }
    let alphas = [
        (1.0, 0.0),
        (0.0, 1.0),
        (1.0, 1.0),
        (1.0, -1.0),
        (1.0, 2.0),
        (2.0, 1.0),
        (1.0, -2.0),
        (2.0, -1.0),
    ];

    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for l1 in &stage_one {
        let a1 = &a0m - l1 * c0;
        for &(p, q) in &alphas {
            let w = c0.row(0) * p + c0.row(1) * q;
            let Some(ell) = ackermann_observer(&a1, &w.transpose(), &targets) else {
                continue;
            };
            let mut l = l1.clone();
            l.column_mut(0).axpy(p, &ell, 1.0);
            l.column_mut(1).axpy(q, &ell, 1.0);
            let Ok(abscissa) = spectral_abscissa(&(&a0m - &l * c0)) else {
                continue;
            };
            if abscissa < -delta {
                let norm = l.norm();
                if best.as_ref().is_none_or(|(b, _)| norm < *b) {
                    best = Some((norm, l));
                }
            }
        }
    }
    best.map(|(_, l)| l).ok_or_else(|| {
        Error::Placement(format!(
            "no two-stage gain achieved abscissa < -{delta} for targets {targets:?}"
        ))
    })
}

/// `ℓ = p(A)·𝒪⁻¹e_n` so that `A − ℓw` has characteristic polynomial
/// `p(s) = Π (s − tₖ)`. `None` if `(A, w)` is numerically unobservable.
fn ackermann_observer(a: &DMatrix<f64>, w: &DVector<f64>, targets: &[f64]) -> Option<DVector<f64>> {
    let n = a.nrows();
    let mut obs = DMatrix::zeros(n, n);
    let mut row = w.transpose();
    for i in 0..n {
        obs.row_mut(i).copy_from(&row);
        row = &row * a;
    }
    if condition_number(&obs) > 1e12 {
        return None;
    }
    let mut e = DVector::<f64>::zeros(n);
    e[n - 1] = 1.0;
    let x = obs.lu().solve(&e)?;
    let mut poly = DMatrix::<f64>::identity(n, n);
    for &t in targets {
        poly = &poly * (a - DMatrix::identity(n, n) * t);
    }
    let ell = poly * x;
    ell.iter().all(|v| v.is_finite()).then_some(ell)
}

/// Builds `F`, `𝓛`, `C₁`, `C̃₁`, `A₁` and `H^{N−N₀}` for `N` retained modes.
pub fn assemble_f(
    basis: &dyn BasisProvider,
    design: &SynthesisArtifacts,
    n: usize,
) -> Result<ClosedLoop> {
    build_closed_loop(basis, &design.sensors, design, n)
}

fn build_closed_loop(
    basis: &dyn BasisProvider,
    sensors: &Sensors,
    design: &SynthesisArtifacts,
    n: usize,
) -> Result<ClosedLoop> {
    let n0 = design.n0;
    if n <= n0 {
        return Err(Error::Dimension(format!("N = {n} must exceed N0 = {n0}")));
    }
    if n > basis.len() {
        return Err(Error::InsufficientEigenvalues(format!(
            "N = {n} exceeds the {} enumerated modes",
            basis.len()
        )));
    }
    let r = n - n0;
    let lam: Vec<f64> = basis.lambdas(n0..n);
    if let Some(bad) = lam.iter().position(|&l| l <= 0.0) {
        return Err(Error::Dimension(format!(
            "lambda_{} = {} is not positive; C1 tilde needs Lambda invertible",
            n0 + bad + 1,
            lam[bad]
        )));
    }
    let a1 = DMatrix::from_diagonal(&DVector::from_iterator(r, lam.iter().map(|l| -l)));
    let mut c1 = DMatrix::zeros(2, r);
    for (j, m) in (n0..n).enumerate() {
        c1[(0, j)] = basis.phi(m, &sensors.xi1)?;
        c1[(1, j)] = basis.phi(m, &sensors.xi2)?;
    }
    let c1_tilde = DMatrix::from_fn(2, r, |i, j| c1[(i, j)] / lam[j]);
    let g = basis.trace_gram(0..n0, n0..n)?;
    let h = -(g.transpose() * &design.k);

    let dim = 2 * n0 + r;
    let mut f = DMatrix::zeros(dim, dim);
    let lc0 = &design.l * &design.c0;
    let lc1 = &design.l * &c1_tilde;
    f.view_mut((0, 0), (n0, n0)).copy_from(&design.ladder.gain_matrix);
    f.view_mut((0, n0), (n0, n0)).copy_from(&lc0);
    f.view_mut((0, 2 * n0), (n0, r)).copy_from(&lc1);
    f.view_mut((n0, n0), (n0, n0)).copy_from(&(&design.a0 - &lc0));
    f.view_mut((n0, 2 * n0), (n0, r)).copy_from(&(-&lc1));
    f.view_mut((2 * n0, 2 * n0), (r, r)).copy_from(&a1);

    let mut stacked_gain = DMatrix::zeros(dim, 2);
    stacked_gain.view_mut((0, 0), (n0, 2)).copy_from(&design.l);
    stacked_gain.view_mut((n0, 0), (n0, 2)).copy_from(&(-&design.l));

    let f_abscissa = spectral_abscissa(&f)?;
    Ok(ClosedLoop {
        n,
        a1,
        c1,
        c1_tilde,
        h,
        f,
        stacked_gain,
        f_abscissa,
    })
}

/// Runs the whole construction for `N` retained modes.
pub fn synthesize(
    basis: &dyn BasisProvider,
    sensors: &Sensors,
    n: usize,
    options: &SynthesisOptions,
) -> Result<SynthesisArtifacts> {
    let plant = basis.plant();
    let delta = plant.delta();
    let (n0, pattern) = count_unstable(basis.eigenpairs(), delta, options.allow_generalized)?;
    if n0 == 0 {
        return Err(Error::Synthesis(format!(
            "no mode has lambda <= delta = {delta}; nothing to stabilize"
        )));
    }
    if pattern.iter().any(|&m| m > 2) {
        return Err(Error::UnsupportedMultiplicity { pattern });
    }
    let lambdas_all: Vec<f64> = basis.lambdas(0..basis.len());
    let unstable = &lambdas_all[..n0];
    let eta = select_eta(unstable)?;
    let b = gram_matrix(basis, n0)?;
    let ladder = select_gamma_ladder(&lambdas_all, n0, &b, eta, delta, options)?;
    let c0 = validate_sensors(sensors, basis, n0, &pattern, options.sensor_tol)?;
    let a0_diag: Vec<f64> = unstable.iter().map(|l| -l).collect();
    let spread = options.spread.unwrap_or(0.5 * delta);
    let l = place_observer_gain(&a0_diag, &c0, delta, spread)?;
    let a0 = DMatrix::from_diagonal(&DVector::from_column_slice(&a0_diag));
    let observer_abscissa = spectral_abscissa(&(&a0 - &l * &c0))?;
    let k = ladder
        .lambda_gammas
        .iter()
        .fold(DMatrix::zeros(n0, n0), |acc, lg| acc + lg)
        * &ladder.a;
    let xi = xi_matrix(n0, eta);
    let mut artifacts = SynthesisArtifacts {
        delta,
        n0,
        pattern,
        lambdas: Vec::new(),
        eta,
        ladder,
        b,
        xi,
        a0,
        sensors: sensors.clone(),
        c0,
        l,
        observer_abscissa,
        k,
        closed_loop: ClosedLoop {
            n: 0,
            a1: DMatrix::zeros(0, 0),
            c1: DMatrix::zeros(2, 0),
            c1_tilde: DMatrix::zeros(2, 0),
            h: DMatrix::zeros(0, n0),
            f: DMatrix::zeros(0, 0),
            stacked_gain: DMatrix::zeros(0, 2),
            f_abscissa: f64::NEG_INFINITY,
        },
    };
    artifacts.closed_loop = build_closed_loop(basis, sensors, &artifacts, n)?;
    artifacts.lambdas = basis.lambdas(0..n);
    if !(artifacts.closed_loop.f_abscissa < -delta) {
        return Err(Error::Synthesis(format!(
            "abscissa(F) = {} is not below -delta",
            artifacts.closed_loop.f_abscissa
        )));
    }
    Ok(artifacts)
}

/// Boundary coefficients `c = Σ_k Λ_{γ_k} A U`, so that `u = Σ_l c_l trace_l`.
pub fn control_coefficients(artifacts: &SynthesisArtifacts, u: &DVector<f64>) -> DVector<f64> {
    &artifacts.k * u
}

/// `u(s) = Σ_k ⟨Λ_{γ_k} A U, ℒ(s)⟩` at a point of Γ₁.
pub fn control_trace(
    artifacts: &SynthesisArtifacts,
    basis: &dyn BasisProvider,
    u: &DVector<f64>,
    s: &[f64],
) -> Result<f64> {
    if u.len() != artifacts.n0 {
        return Err(Error::Dimension(format!(
            "U has {} entries, N0 = {}",
            u.len(),
            artifacts.n0
        )));
    }
    let c = control_coefficients(artifacts, u);
    let mut acc = 0.0;
    for (l, cl) in c.iter().enumerate() {
        acc += cl * basis.conormal_trace(l, s)?;
    }
    Ok(acc)
}

/// Stacked `⟨D_{γ_k}u_k, ψ_n⟩`, `n < N₀`, via the modal formula, for each
/// `k`; each column should equal `−B_k A U`.
pub fn lifted_unstable_projections(
    artifacts: &SynthesisArtifacts,
    u: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    use crate::lifting::{lifted_projection, LiftedProjectionTable};
    let n0 = artifacts.n0;
    let unstable = &artifacts.lambdas[..n0];
    artifacts
        .ladder
        .gammas
        .iter()
        .zip(&artifacts.ladder.lambda_gammas)
        .map(|(&g, lg)| {
            let table = LiftedProjectionTable::new(g, artifacts.eta, n0, unstable);
            // ⟨u_k, trace_n⟩ = (B Λ_k A U)_n
            let inner = &artifacts.b * (lg * (&artifacts.ladder.a * u));
            let mut out = DVector::zeros(n0);
            for n in 0..n0 {
                out[n] = lifted_projection(&table, inner[n], n)?;
            }
            Ok(out)
        })
        .collect()
}

/// `max_k ‖stacked projections − (−B_k A U)‖_∞`.
pub fn projection_identity_residual(artifacts: &SynthesisArtifacts, u: &DVector<f64>) -> Result<f64> {
    let lifted = lifted_unstable_projections(artifacts, u)?;
    let au = &artifacts.ladder.a * u;
    Ok(lifted
        .iter()
        .zip(&artifacts.ladder.bk)
        .map(|(p, bk)| (p + bk * &au).amax())
        .fold(0.0, f64::max))
}
