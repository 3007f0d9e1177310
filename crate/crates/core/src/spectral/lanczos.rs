//! Restarted Lanczos for the largest eigenpairs of a symmetric operator.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen_desc;
use crate::scalar::Real;

/// Symmetric linear operator `y = A x`.
pub trait SymOp<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<T>, y: &mut DVector<T>);
}

impl<T: Real> SymOp<T> for DMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DVector<T>, y: &mut DVector<T>) {
        y.gemv(T::one(), self, x, T::zero());
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosConfig {
    /// Absolute residual `‖A u − λ u‖₂` required for convergence.
    pub tol: f64,
    pub max_restarts: usize,
    /// Basis size before a restart; 0 picks `max(2·wanted + 20, 40)`.
    pub krylov_dim: usize,
    /// Seed of the injected random directions.
    pub verify_seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_restarts: 300,
            krylov_dim: 0,
            verify_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LanczosResult<T: Real> {
    /// Descending.
    pub values: Vec<T>,
    /// Unit eigenvectors as columns.
    pub vectors: DMatrix<T>,
    pub matvecs: usize,
    pub restarts: usize,
}

/// Orthonormal basis `V`, its image `W = A V`, and `H = Vᵀ A V`.
struct Basis<T: Real> {
    v: Vec<DVector<T>>,
    w: Vec<DVector<T>>,
    h: DMatrix<T>,
}

impl<T: Real> Basis<T> {
    fn len(&self) -> usize {
        self.v.len()
    }

    /// Orthonormalises `x` against the basis (two Gram–Schmidt passes) and
    /// appends it; false when `x` lies in the span.
    fn push<A: SymOp<T> + ?Sized>(&mut self, op: &A, mut x: DVector<T>, matvecs: &mut usize) -> bool {
        let before = x.norm();
        if !(before > T::zero()) {
            return false;
        }
        for _ in 0..2 {
            for v in &self.v {
                let c = v.dot(&x);
                x.axpy(-c, v, T::one());
            }
        }
        let nrm = x.norm();
        if nrm <= T::lit(1e-10) * before {
            return false;
        }
        x /= nrm;
        let mut ax = DVector::zeros(x.len());
        op.apply(&x, &mut ax);
        *matvecs += 1;
        let k = self.len();
        let mut h = DMatrix::zeros(k + 1, k + 1);
        h.view_mut((0, 0), (k, k)).copy_from(&self.h);
        for i in 0..k {
            let c = (self.v[i].dot(&ax) + x.dot(&self.w[i])) * T::lit(0.5);
            h[(i, k)] = c;
            h[(k, i)] = c;
        }
        h[(k, k)] = x.dot(&ax);
        self.h = h;
        self.v.push(x);
        self.w.push(ax);
        true
    }

    fn combine(vs: &[DVector<T>], s: &DMatrix<T>, col: usize) -> DVector<T> {
        let mut y = DVector::zeros(vs[0].len());
        for (j, v) in vs.iter().enumerate() {
            y.axpy(s[(j, col)], v, T::one());
        }
        y
    }
}

fn random_unit<T: Real>(n: usize, seed: u64) -> DVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = DVector::from_fn(n, |_, _| T::lit(StandardNormal.sample(&mut rng)));
    let l = v.norm();
    v / l
}

/// Largest `d` eigenpairs (algebraic order) of `op`.
///
/// Thick-restart Lanczos in Rayleigh–Ritz form: the basis and its image are
/// stored, so Ritz residuals are exact without extra products, and each
/// restart keeps the leading Ritz vectors. A single Krylov sequence cannot
/// resolve a repeated eigenvalue, so after convergence a seeded random
/// direction is injected and the iteration resumed until the leading values
/// stop changing.
pub fn lanczos_top<T: Real, A: SymOp<T> + ?Sized>(
    op: &A,
    d: usize,
    cfg: &LanczosConfig,
) -> Result<LanczosResult<T>> {
    let n = op.dim();
    if d == 0 || d > n {
        return Err(Error::invalid(format!("requested {d} eigenpairs of a {n}x{n} operator")));
    }
    let tol = T::lit(cfg.tol);
    let m_max = if cfg.krylov_dim > 0 {
        cfg.krylov_dim.max(d + 2)
    } else {
        (2 * d + 20).max(40)
    }
    .min(n);
    let keep = (d + (m_max - d) / 3).max(d).min(m_max.saturating_sub(1).max(d));
    let mut basis = Basis {
        v: Vec::new(),
        w: Vec::new(),
        h: DMatrix::zeros(0, 0),
    };
    let mut matvecs = 0;
    let mut restarts = 0;
    let mut injections = 0u64;
    let mut next: DVector<T> = DVector::from_element(n, T::one() / T::from_count(n).sqrt());
    let mut accepted: Option<Vec<T>> = None;
    loop {
        // expand to m_max (or the whole space)
        while basis.len() < m_max {
            if !basis.push(op, next.clone(), &mut matvecs) {
                if basis.len() == n {
                    break;
                }
                injections += 1;
                next = random_unit(n, cfg.verify_seed.wrapping_add(injections));
                continue;
            }
            next = basis.w.last().expect("nonempty").clone();
        }
        let (theta, s) = symmetric_eigen_desc(basis.h.clone());
        let m = basis.len();
        let want = d.min(m);
        let mut converged = true;
        let mut residual_dir = None;
        for i in 0..want {
            let y = Basis::combine(&basis.v, &s, i);
            let ay = Basis::combine(&basis.w, &s, i);
            let r = &ay - &y * theta[i];
            if r.norm() > tol {
                converged = false;
                if residual_dir.is_none() {
                    residual_dir = Some(r);
                }
            }
        }
        let complete = m == n;
        if converged || complete {
            let values: Vec<T> = theta[..d].to_vec();
            let stable = match &accepted {
                Some(prev) => prev[d - 1] + tol >= values[d - 1],
                None => false,
            };
            if stable || complete {
                let vectors = DMatrix::from_fn(n, d, |_, _| T::zero());
                let mut vectors = vectors;
                for i in 0..d {
                    let mut y = Basis::combine(&basis.v, &s, i);
                    let l = y.norm();
                    y /= l;
                    vectors.set_column(i, &y);
                }
                return Ok(LanczosResult {
                    values,
                    vectors,
                    matvecs,
                    restarts,
                });
            }
            if accepted.is_some() {
                log::debug!("lanczos: injected direction raised the leading values; continuing");
            }
            accepted = Some(values);
            injections += 1;
            next = random_unit(n, cfg.verify_seed.wrapping_add(injections));
        } else {
            next = residual_dir.expect("some pair unconverged");
        }
        // thick restart onto the leading Ritz vectors
        let k = keep.min(m);
        let v: Vec<DVector<T>> = (0..k).map(|i| Basis::combine(&basis.v, &s, i)).collect();
        let w: Vec<DVector<T>> = (0..k).map(|i| Basis::combine(&basis.w, &s, i)).collect();
        let sk = s.columns(0, k).into_owned();
        let h = sk.transpose() * &basis.h * &sk;
        basis = Basis {
            v,
            w,
            h: (&h + h.transpose()) * T::lit(0.5),
        };
        restarts += 1;
        if restarts > cfg.max_restarts {
            return Err(Error::Numerical(format!(
                "Lanczos did not converge after {} restarts",
                cfg.max_restarts
            )));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        (&g + g.transpose()) * 0.5
    }

    #[test]
    fn matches_dense_on_random_matrix() {
        let a = random_symmetric(500, 1);
        let res = lanczos_top(&a, 4, &LanczosConfig::default()).unwrap();
        let (dense, _) = symmetric_eigen_desc(a.clone());
        for i in 0..4 {
            assert!((res.values[i] - dense[i]).abs() < 1e-7, "{i}");
            let u = res.vectors.column(i);
            assert!((&a * u - u * res.values[i]).amax() < 1e-7);
        }
    }

    #[test]
    fn finds_repeated_eigenvalues() {
        // block diagonal with two identical all-ones blocks plus identity
        let n = 60;
        let a = DMatrix::from_fn(n, n, |i, j| {
            let same = (i < 30) == (j < 30);
            (if same { 1.0 } else { 0.0 }) + if i == j { 0.5 } else { 0.0 }
        });
        let res: LanczosResult<f64> = lanczos_top(&a, 3, &LanczosConfig::default()).unwrap();
        assert!((res.values[0] - 30.5).abs() < 1e-8);
        assert!((res.values[1] - 30.5).abs() < 1e-8);
        assert!((res.values[2] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn identity_operator() {
        let a = DMatrix::<f64>::identity(50, 50);
        let res = lanczos_top(&a, 2, &LanczosConfig::default()).unwrap();
        assert_eq!(res.values.len(), 2);
        for i in 0..2 {
            assert!((res.values[i] - 1.0).abs() < 1e-12);
        }
        let g = res.vectors.transpose() * &res.vectors;
        assert!((g - DMatrix::identity(2, 2)).amax() < 1e-10);
    }
}
