//! Dense linear-algebra helpers: eigenvalues (via faer), symmetric extremal
//! eigenvalues, a Bartels–Stewart Lyapunov solver and an observability rank
//! test.

use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix, Schur};

/// Eigenvalues of a general real matrix (faer's Hessenberg–QR eigensolver).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("matrix has non-finite entries".into()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let n = m.nrows();
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let ev = fm
        .eigenvalues()
        .map_err(|e| Error::Dimension(format!("eigenvalue iteration failed: {e:?}")))?;
    Ok(ev.iter().map(|z| Complex::new(z.re, z.im)).collect())
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn sym_max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_part(m).symmetric_eigen().eigenvalues.max()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_part(m).symmetric_eigen().eigenvalues.min()
}

/// Spectral norm.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Condition number in the spectral norm (`∞` if singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().svd(false, false).singular_values;
    let (lo, hi) = (s.min(), s.max());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solves `FᵀP + PF + 2δP = −I` for symmetric `P`.
///
/// Bartels–Stewart on the complex Schur form of `F + δI`, followed by one
/// sweep of iterative refinement on the residual.
pub fn solve_shifted_lyapunov(f: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if !f.is_square() {
        return Err(Error::Dimension(format!(
            "Lyapunov equation needs a square matrix, got {}x{}",
            n,
            f.ncols()
        )));
    }
    let mut m = f.clone();
    for i in 0..n {
        m[(i, i)] += delta;
    }
    let abscissa = spectral_abscissa(&m)?;
    if abscissa >= 0.0 {
        return Err(Error::NoCertificate(format!(
            "F + delta I is not Hurwitz (abscissa {abscissa:.3e})"
        )));
    }
    let mc: DMatrix<Complex<f64>> = m.map(|v| Complex::new(v, 0.0));
    let schur = Schur::try_new(mc, f64::EPSILON, 1000 * n.max(10))
        .ok_or_else(|| Error::NoCertificate("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let qh = q.adjoint();

    let solve = |rhs: &DMatrix<f64>| -> DMatrix<f64> {
        // Mᵀ P + P M = C  ⇔  Tᴴ Y + Y T = Qᴴ C Q with P = Q Y Qᴴ.
        let c = &qh * rhs.map(|v| Complex::new(v, 0.0)) * &q;
        let y = triangular_lyapunov(&t, &c);
        let p = (&q * y * &qh).map(|z| z.re);
        symmetric_part(&p)
    };

    let minus_identity = -DMatrix::<f64>::identity(n, n);
    let mut p = solve(&minus_identity);
    let residual = lyapunov_residual_matrix(&m, &p);
    p += solve(&(-residual));
    let p = symmetric_part(&p);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoCertificate("Lyapunov solution is not finite".into()));
    }
    Ok(p)
}

/// `MᵀP + PM + I` for the already-shifted `M = F + δI`.
fn lyapunov_residual_matrix(m: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    m.transpose() * p + p * m + DMatrix::identity(n, n)
}

/// `‖FᵀP + PF + 2δP + I‖_max`.
pub fn lyapunov_residual(f: &DMatrix<f64>, delta: f64, p: &DMatrix<f64>) -> f64 {
    let n = f.nrows();
    let r = f.transpose() * p + p * f + p * (2.0 * delta) + DMatrix::identity(n, n);
    r.amax()
}

/// Solves `Tᴴ Y + Y T = C` for upper-triangular `T`.
fn triangular_lyapunov(t: &DMatrix<Complex<f64>>, c: &DMatrix<Complex<f64>>) -> DMatrix<Complex<f64>> {
    let n = t.nrows();
    let mut y = DMatrix::<Complex<f64>>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let mut acc = c[(i, j)];
            for k in 0..i {
                acc -= t[(k, i)].conj() * y[(k, j)];
            }
            for k in 0..j {
                acc -= y[(i, k)] * t[(k, j)];
            }
            y[(i, j)] = acc / (t[(i, i)].conj() + t[(j, j)]);
        }
    }
    y
}

/// Rank of the observability matrix `[C; CA; …; CA^{n−1}]`, with columns
/// scaled to unit norm before the SVD.
pub fn observability_rank(a: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> usize {
    let n = a.nrows();
    let p = c.nrows();
    let mut o = DMatrix::zeros(n * p, n);
    let mut block = c.clone();
    for k in 0..n {
        o.rows_mut(k * p, p).copy_from(&block);
        block = &block * a;
    }
    for mut col in o.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let s = o.svd(false, false).singular_values;
    let smax = s.max();
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > tol * smax).count()
}
