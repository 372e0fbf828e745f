use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::transform::shift_matrix;

/// `A - K C` for the Brunovsky pair.
pub fn error_matrix(gain: &DVector<f64>) -> DMatrix<f64> {
    let n = gain.len();
    let mut f = shift_matrix(n);
    for i in 0..n {
        f[(i, 0)] -= gain[i];
    }
    f
}

/// Eigenvalues of `A - K C`, sorted by real part then imaginary part.
pub fn error_eigenvalues(gain: &DVector<f64>) -> Vec<Complex<f64>> {
    let mut eig: Vec<Complex<f64>> = error_matrix(gain)
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    eig
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSolution {
    pub p: DMatrix<f64>,
    /// Max-abs entry of `Fᵀ P + P F + Q`.
    pub residual: f64,
    pub eigenvalues: Vec<Complex<f64>>,
}

/// Symmetric eigenvalues in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

fn check_spd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::arg(format!("{name} is not symmetric")));
    }
    let lo = sym_eigenvalues(m)[0];
    if !(lo > 0.0) {
        return Err(Error::arg(format!(
            "{name} is not positive definite (smallest eigenvalue {lo})"
        )));
    }
    Ok(())
}

/// Solve `(A - KC)ᵀ P + P (A - KC) = -Q` for symmetric positive-definite `P`.
///
/// Uses the Kronecker form `(I ⊗ Fᵀ + Fᵀ ⊗ I) vec(P) = -vec(Q)`; fine for the
/// small orders this crate targets.
pub fn lyapunov_solve(gain: &DVector<f64>, q: &DMatrix<f64>) -> Result<LyapunovSolution> {
    let n = gain.len();
    if n == 0 {
        return Err(Error::arg("gain vector is empty"));
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::arg(format!(
            "Q is {}x{}, expected {n}x{n}",
            q.nrows(),
            q.ncols()
        )));
    }
    check_spd("Q", q)?;

    let eigenvalues = error_eigenvalues(gain);
    let max_real = eigenvalues
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max_real < 0.0) {
        return Err(Error::Unstable { max_real });
    }

    let f = error_matrix(gain);
    let ft = f.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let kron = eye.kronecker(&ft) + ft.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let vec_p = kron
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Lyapunov linear system is singular".into()))?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let p = (&p + p.transpose()) * 0.5;

    let residual = (&ft * &p + &p * &f + q).amax();
    check_spd("P", &p)
        .map_err(|_| Error::Numerical("Lyapunov solution is not positive definite".into()))?;
    Ok(LyapunovSolution {
        p,
        residual,
        eigenvalues,
    })
}
