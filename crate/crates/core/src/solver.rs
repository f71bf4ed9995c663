//! Restarted GMRES for complex systems given only a matrix-vector product.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Iteration controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    /// Relative residual target `||b - A x|| / ||b||`.
    pub tol: f64,
    /// Krylov dimension before restart.
    pub restart: usize,
    /// Cap on the total number of operator applications.
    pub max_iter: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self { tol: 1e-4, restart: 100, max_iter: 1000 }
    }
}

impl GmresConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidConfig(format!("tolerance must lie in (0, 1), got {}", self.tol)));
        }
        if self.restart == 0 || self.max_iter == 0 {
            return Err(Error::InvalidConfig("restart and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<Complex64>,
    /// Relative residual estimate after every inner iteration, starting with the initial residual.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.history.last().copied().unwrap_or(0.0)
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn checked(v: Vec<Complex64>, n: usize, what: &str) -> Result<Vec<Complex64>> {
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical(format!("{what} produced a non-finite value")));
    }
    Ok(v)
}

/// Complex Givens rotation zeroing `b` against `a`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64) {
    if b.norm() == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0));
    }
    if a.norm() == 0.0 {
        return (0.0, b.conj() / b.norm());
    }
    let t = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let c = a.norm() / t;
    let s = (a / a.norm()) * b.conj() / t;
    (c, s)
}

type Apply<'a> = dyn FnMut(&[Complex64]) -> Result<Vec<Complex64>> + 'a;

/// GMRES without preconditioning, starting from zero.
pub fn gmres<F>(apply: F, b: &[Complex64], cfg: &GmresConfig) -> Result<SolveReport>
where
    F: FnMut(&[Complex64]) -> Result<Vec<Complex64>>,
{
    gmres_with(apply, b, None, None, cfg)
}

/// GMRES with optional initial guess and left preconditioner `M^{-1}`.
/// Convergence is measured on the preconditioned residual.
pub fn gmres_with<F>(
    mut apply: F,
    b: &[Complex64],
    x0: Option<&[Complex64]>,
    mut precond: Option<&mut Apply<'_>>,
    cfg: &GmresConfig,
) -> Result<SolveReport>
where
    F: FnMut(&[Complex64]) -> Result<Vec<Complex64>>,
{
    cfg.validate()?;
    let n = b.len();
    let mut op = |v: &[Complex64], pc: &mut Option<&mut Apply<'_>>| -> Result<Vec<Complex64>> {
        let w = checked(apply(v)?, n, "operator")?;
        match pc {
            Some(m) => checked(m(&w)?, n, "preconditioner"),
            None => Ok(w),
        }
    };
    let rhs = match precond.as_mut() {
        Some(m) => checked(m(b)?, n, "preconditioner")?,
        None => checked(b.to_vec(), n, "right-hand side")?,
    };
    let bnorm = norm(&rhs);
    let mut x = match x0 {
        Some(x0) => checked(x0.to_vec(), n, "initial guess")?,
        None => vec![Complex64::new(0.0, 0.0); n],
    };
    if bnorm == 0.0 {
        return Ok(SolveReport { solution: vec![Complex64::new(0.0, 0.0); n], history: vec![0.0], iterations: 0, converged: true });
    }
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut r = rhs.clone();
        if x.iter().any(|z| z.norm() != 0.0) {
            let ax = op(&x, &mut precond)?;
            for (ri, ai) in r.iter_mut().zip(ax) {
                *ri -= ai;
            }
        }
        let beta = norm(&r);
        let rel = beta / bnorm;
        history.push(rel);
        if rel <= cfg.tol {
            return Ok(SolveReport { solution: x, history, iterations, converged: true });
        }
        if iterations >= cfg.max_iter {
            return Ok(SolveReport { solution: x, history, iterations, converged: false });
        }
        let m = cfg.restart.min(cfg.max_iter - iterations);
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h: Vec<Vec<Complex64>> = Vec::with_capacity(m);
        let mut rot: Vec<(f64, Complex64)> = Vec::with_capacity(m);
        let mut g = vec![Complex64::new(0.0, 0.0); m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut steps = 0;
        let mut inner_converged = false;
        for j in 0..m {
            let mut w = op(&basis[j], &mut precond)?;
            iterations += 1;
            let before = norm(&w);
            let mut col = vec![Complex64::new(0.0, 0.0); j + 2];
            for (i, v) in basis.iter().enumerate() {
                let c = dot(v, &w);
                col[i] += c;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= c * vk;
                }
            }
            if norm(&w) < 0.7 * before {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    col[i] += c;
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= c * vk;
                    }
                }
            }
            let hn = norm(&w);
            col[j + 1] = Complex64::new(hn, 0.0);
            for (i, &(c, s)) in rot.iter().enumerate() {
                let a = col[i];
                let bb = col[i + 1];
                col[i] = a * c + s * bb;
                col[i + 1] = -s.conj() * a + bb * c;
            }
            let (c, s) = givens(col[j], col[j + 1]);
            col[j] = col[j] * c + s * col[j + 1];
            col[j + 1] = Complex64::new(0.0, 0.0);
            g[j + 1] = -s.conj() * g[j];
            g[j] *= c;
            rot.push((c, s));
            h.push(col);
            steps = j + 1;
            let est = g[j + 1].norm() / bnorm;
            history.push(est);
            let breakdown = hn <= 1e-14 * before.max(f64::MIN_POSITIVE);
            if est <= cfg.tol || breakdown {
                inner_converged = true;
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution on the triangular factor
        let mut y = vec![Complex64::new(0.0, 0.0); steps];
        for i in (0..steps).rev() {
            let mut s = g[i];
            for k in i + 1..steps {
                s -= h[k][i] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[k]) {
                *xi += yk * vi;
            }
        }
        if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("GMRES update is not finite".into()));
        }
        if inner_converged {
            // confirm with the true residual; the estimate is dropped from the history
            history.pop();
        } else if iterations >= cfg.max_iter {
            let mut r = rhs.clone();
            let ax = op(&x, &mut precond)?;
            for (ri, ai) in r.iter_mut().zip(ax) {
                *ri -= ai;
            }
            let rel = norm(&r) / bnorm;
            history.pop();
            history.push(rel);
            return Ok(SolveReport { solution: x, history, iterations, converged: rel <= cfg.tol });
        } else {
            history.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn dense_apply(a: &DMatrix<Complex64>) -> impl FnMut(&[Complex64]) -> Result<Vec<Complex64>> + '_ {
        move |v| Ok((a * DVector::from_column_slice(v)).as_slice().to_vec())
    }

    #[test]
    fn identity_in_one_iteration() {
        let b = vec![c(1.0), Complex64::new(0.0, 2.0), c(-3.0)];
        let rep = gmres(|v| Ok(v.to_vec()), &b, &GmresConfig::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        for (x, y) in rep.solution.iter().zip(&b) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn diagonal_example() {
        let b = vec![c(2.0), c(4.0)];
        let rep = gmres(|v| Ok(vec![v[0] * 2.0, v[1] * 4.0]), &b, &GmresConfig { tol: 1e-12, ..Default::default() }).unwrap();
        assert!(rep.converged);
        assert!((rep.solution[0] - c(1.0)).norm() < 1e-12 && (rep.solution[1] - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_rhs() {
        let rep = gmres(|v| Ok(v.to_vec()), &[c(0.0); 4], &GmresConfig::default()).unwrap();
        assert!(rep.converged && rep.iterations == 0);
    }

    #[test]
    fn nan_is_a_hard_error() {
        let err = gmres(|v| Ok(v.iter().map(|_| Complex64::new(f64::NAN, 0.0)).collect()), &[c(1.0)], &GmresConfig::default());
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn non_convergence_is_reported() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let n = 40;
        let a = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let b: Vec<Complex64> = (0..n).map(|i| c(i as f64)).collect();
        let rep = gmres(dense_apply(&a), &b, &GmresConfig { tol: 1e-12, restart: 5, max_iter: 10 }).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 10);
    }

    #[test]
    fn restarted_matches_direct_solve() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let n = 60;
        let a = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { c(4.0) } else { c(0.0) };
            d + Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 0.2
        });
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new((i as f64).sin(), 1.0)).collect();
        let rep = gmres(dense_apply(&a), &b, &GmresConfig { tol: 1e-12, restart: 7, max_iter: 500 }).unwrap();
        assert!(rep.converged);
        let direct = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err = (DVector::from_column_slice(&rep.solution) - &direct).norm() / direct.norm();
        assert!(err < 1e-10, "{err}");
        let res = (&a * DVector::from_column_slice(&rep.solution) - DVector::from_column_slice(&b)).norm() / norm(&b);
        assert!(res <= 1e-12);
    }

    #[test]
    fn left_preconditioner_and_guess() {
        let diag: Vec<f64> = (1..=30).map(|i| i as f64 * 10.0).collect();
        let b: Vec<Complex64> = diag.iter().map(|d| c(*d)).collect();
        let mut pc = |v: &[Complex64]| -> Result<Vec<Complex64>> { Ok(v.iter().zip(&diag).map(|(x, d)| x / d).collect()) };
        let guess = vec![c(0.5); 30];
        let rep = gmres_with(
            |v| Ok(v.iter().zip(&diag).map(|(x, d)| x * d).collect()),
            &b,
            Some(&guess),
            Some(&mut pc),
            &GmresConfig { tol: 1e-12, ..Default::default() },
        )
        .unwrap();
        assert!(rep.converged && rep.iterations == 1);
        assert!(rep.solution.iter().all(|x| (x - c(1.0)).norm() < 1e-12));
    }

    proptest! {
        #[test]
        fn history_monotone_within_cycle(seed in 0u64..200, n in 3usize..25) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let a = DMatrix::from_fn(n, n, |i, j| {
                let d = if i == j { c(2.0) } else { c(0.0) };
                d + Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 0.3
            });
            let b: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let cfg = GmresConfig { tol: 1e-10, restart: n + 1, max_iter: 4 * n };
            let rep = gmres(dense_apply(&a), &b, &cfg).unwrap();
            prop_assert!(rep.converged);
            for w in rep.history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-14);
            }
        }
    }
}
