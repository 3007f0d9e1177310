//! Linear autoencoder laboratory: closed-form implicit-AE optimum, the
//! rotation-aligned subspace deviation, and numerical checks of two claims:
//! noise orthogonal to the data subspace is ignored by the implicit model,
//! and the standard model's eigenvector derivative formula.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormality_defect, procrustes_rotation, pseudo_inverse, symmetric_eigen_desc};
use crate::scalar::Real;

pub const PINV_CUTOFF: f64 = 1e-10;
/// Smallest relative eigengap treated as distinct.
pub const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearAeProblem<T: Real> {
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    /// n×m orthonormal basis of the data subspace 𝓛.
    pub basis: DMatrix<T>,
    /// n×N clean data, columns in 𝓛.
    pub x: DMatrix<T>,
    /// n×N noise.
    pub eps: DMatrix<T>,
    pub seed: u64,
}

fn gaussian<T: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<T> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        T::lit(z)
    })
}

fn build<T: Real>(n: usize, m: usize, samples: usize, noise: T, seed: u64, project: bool) -> Result<LinearAeProblem<T>> {
    if !(samples > n && n > m && m >= 1) {
        return Err(Error::invalid(format!("need N > n > m ≥ 1, got N={samples}, n={n}, m={m}")));
    }
    if !(noise >= T::zero()) || !noise.is_finite_value() {
        return Err(Error::invalid("noise scale must be finite and nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = gaussian::<T>(n, m, &mut rng).qr().q();
    let coeffs = gaussian::<T>(m, samples, &mut rng);
    let x = &basis * coeffs;
    let raw = gaussian::<T>(n, samples, &mut rng) * noise;
    let eps = if project {
        &raw - &basis * (basis.transpose() * &raw)
    } else {
        raw
    };
    Ok(LinearAeProblem {
        n,
        m,
        samples,
        basis,
        x,
        eps,
        seed,
    })
}

/// Random subspace (QR of a Gaussian matrix), Gaussian coefficients, and
/// Gaussian noise projected onto 𝓛⊥.
pub fn make_problem<T: Real>(n: usize, m: usize, samples: usize, noise: T, seed: u64) -> Result<LinearAeProblem<T>> {
    build(n, m, samples, noise, seed, true)
}

/// Same draw as `make_problem` but the noise keeps its component in 𝓛.
pub fn make_control_problem<T: Real>(
    n: usize,
    m: usize,
    samples: usize,
    noise: T,
    seed: u64,
) -> Result<LinearAeProblem<T>> {
    build(n, m, samples, noise, seed, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub basis_defect: f64,
    pub noise_in_subspace: f64,
    pub smallest_singular: f64,
}

impl InvariantReport {
    pub fn holds(&self) -> bool {
        self.basis_defect < 1e-10 && self.noise_in_subspace < 1e-10 && self.smallest_singular > 1e-8
    }
}

impl<T: Real> LinearAeProblem<T> {
    pub fn x_prime(&self) -> DMatrix<T> {
        &self.x + &self.eps
    }

    pub fn invariants(&self) -> InvariantReport {
        let sv = self.x.clone().svd(false, false).singular_values;
        let mut sv: Vec<f64> = sv.iter().map(|s| s.as_f64()).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        InvariantReport {
            basis_defect: orthonormality_defect(&self.basis).as_f64(),
            noise_in_subspace: (self.basis.transpose() * &self.eps).amax().as_f64(),
            smallest_singular: sv[self.m - 1],
        }
    }

    /// The problem with data and noise multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            x: &self.x * s,
            eps: &self.eps * s,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitAeSolution<T: Real> {
    /// n×m, orthonormal columns.
    pub r: DMatrix<T>,
    /// n×m.
    pub b: DMatrix<T>,
    pub objective: T,
}

/// Σ_k ‖R Bᵀ x′_k − x_k‖².
pub fn implicit_ae_objective<T: Real>(r: &DMatrix<T>, b: &DMatrix<T>, x: &DMatrix<T>, x_prime: &DMatrix<T>) -> T {
    (r * (b.transpose() * x_prime) - x).norm_squared()
}

/// R* = top-m eigenvectors of (X′Xᵀ)ᵀ(X′X′ᵀ)⁺(X′Xᵀ), B* = (X′X′ᵀ)⁺(X′Xᵀ)R*.
pub fn solve_implicit_ae<T: Real>(x: &DMatrix<T>, x_prime: &DMatrix<T>, m: usize) -> Result<ImplicitAeSolution<T>> {
    if x.shape() != x_prime.shape() {
        return Err(Error::invalid("clean and noisy data differ in shape"));
    }
    if m == 0 || m > x.nrows() {
        return Err(Error::invalid(format!("code size {m} out of range")));
    }
    let a = x_prime * x.transpose();
    let s_pinv = pseudo_inverse(&(x_prime * x_prime.transpose()), T::lit(PINV_CUTOFF));
    let mut target = a.transpose() * &s_pinv * &a;
    target = (&target + target.transpose()) * T::lit(0.5);
    if target.iter().any(|v| !v.is_finite_value()) {
        return Err(Error::Numerical("non-finite normal matrix".into()));
    }
    let (_, vecs) = symmetric_eigen_desc(target);
    let r = vecs.columns(0, m).into_owned();
    let b = s_pinv * a * &r;
    let objective = implicit_ae_objective(&r, &b, x, x_prime);
    Ok(ImplicitAeSolution { r, b, objective })
}

pub fn solve_implicit_ae_closed_form<T: Real>(problem: &LinearAeProblem<T>) -> Result<ImplicitAeSolution<T>> {
    solve_implicit_ae(&problem.x, &problem.x_prime(), problem.m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDeviation<T: Real> {
    /// D = Q1 − Q2 R*.
    pub value: DMatrix<T>,
    pub rotation: DMatrix<T>,
}

impl<T: Real> SubspaceDeviation<T> {
    pub fn norm(&self) -> T {
        self.value.norm()
    }
}

/// 𝓓(Q1, Q2) with R* = UVᵀ from SVD(Q2ᵀQ1).
pub fn deviation<T: Real>(q1: &DMatrix<T>, q2: &DMatrix<T>) -> Result<SubspaceDeviation<T>> {
    if q1.shape() != q2.shape() {
        return Err(Error::invalid("deviation needs bases of equal shape"));
    }
    let tol = T::lit(1e-8);
    if orthonormality_defect(q1) > tol || orthonormality_defect(q2) > tol {
        return Err(Error::invalid("deviation needs orthonormal columns"));
    }
    let rotation = procrustes_rotation(q2, q1);
    let value = q1 - q2 * &rotation;
    Ok(SubspaceDeviation { value, rotation })
}

/// Top-m eigenpairs of a symmetric matrix; fails when λ_m and λ_{m+1} are
/// not separated (relative to λ_1) or, with `distinct`, when two of the
/// leading m coincide.
fn leading<T: Real>(c: DMatrix<T>, m: usize, distinct: bool) -> Result<(Vec<T>, DMatrix<T>)> {
    let (vals, vecs) = symmetric_eigen_desc(c);
    let scale = vals[0].abs().max(T::lit(f64::MIN_POSITIVE));
    let tol = T::lit(GAP_TOL) * scale;
    if m < vals.len() && vals[m - 1] - vals[m] <= tol {
        return Err(Error::Degenerate(format!("no spectral gap after eigenvalue {m}")));
    }
    if distinct && vals[..m].windows(2).any(|w| w[0] - w[1] <= tol) {
        return Err(Error::Degenerate("repeated leading eigenvalue".into()));
    }
    Ok((vals[..m].to_vec(), vecs.columns(0, m).into_owned()))
}

/// Orthonormal basis of the dominant m-dimensional column space, from the
/// leading eigenvectors of C·Cᵀ.
fn range_basis<T: Real>(c: &DMatrix<T>, m: usize) -> Result<DMatrix<T>> {
    let g = c * c.transpose();
    let g = (&g + g.transpose()) * T::lit(0.5);
    Ok(leading(g, m, false)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTrial {
    pub seed: u64,
    /// ‖𝓓(Q*, Q)‖_F with Q the top-m eigenvectors of Σ x xᵀ.
    pub deviation: f64,
    /// Same against the dominant eigenspace of the mixed Σ x x′ᵀ.
    pub mixed_deviation: f64,
    /// Standard AE (top-m of Σ x′ x′ᵀ) against Q, for contrast.
    pub standard_deviation: f64,
}

/// One recovery trial; Q* comes from the closed form.
pub fn verify_recovery<T: Real>(problem: &LinearAeProblem<T>) -> Result<RecoveryTrial> {
    let m = problem.m;
    let xp = problem.x_prime();
    let c = &problem.x * problem.x.transpose();
    let (_, q) = leading(c, m, false)?;
    let sol = solve_implicit_ae(&problem.x, &xp, m)?;
    let mixed = range_basis(&(&problem.x * xp.transpose()), m)?;
    let (_, q_std) = leading(&xp * xp.transpose(), m, false)?;
    Ok(RecoveryTrial {
        seed: problem.seed,
        deviation: deviation(&sol.r, &q)?.norm().as_f64(),
        mixed_deviation: deviation(&mixed, &q)?.norm().as_f64(),
        standard_deviation: deviation(&q_std, &q)?.norm().as_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub noise: f64,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    /// A control trial "separates" when its deviation exceeds this.
    pub control_threshold: f64,
    pub control_min_share: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            n: 20,
            m: 4,
            samples: 200,
            noise: 0.5,
            trials: 100,
            seed: 0,
            tol: 1e-8,
            control_threshold: 1e-3,
            control_min_share: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub trial_seeds: Vec<u64>,
    pub deviations: Vec<f64>,
    pub mixed_deviations: Vec<f64>,
    pub standard_deviations: Vec<f64>,
    /// Deviations with noise that is not orthogonal to 𝓛.
    pub control_deviations: Vec<f64>,
    /// Seeds redrawn because of a spectral-gap failure.
    pub resampled: Vec<u64>,
    pub max_deviation: f64,
    pub mixed_readings_agree: bool,
    pub control_separated: usize,
    pub pass: bool,
    pub control_pass: bool,
}

/// Trial t uses seed `seed + t`; a trial without a spectral gap is redrawn
/// with seed + t + k·2³² (k = 1, 2, …, at most 8 times).
pub fn run_recovery(cfg: &RecoveryConfig) -> Result<RecoveryReport> {
    let results: Vec<(u64, Vec<u64>, RecoveryTrial, f64)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut skipped = Vec::new();
            for k in 0..=8u64 {
                let seed = cfg.seed.wrapping_add(t as u64).wrapping_add(k << 32);
                let p = make_problem::<f64>(cfg.n, cfg.m, cfg.samples, cfg.noise, seed)?;
                match verify_recovery(&p) {
                    Ok(trial) => {
                        let ctl = make_control_problem::<f64>(cfg.n, cfg.m, cfg.samples, cfg.noise, seed)?;
                        let c = &ctl.x * ctl.x.transpose();
                        let (_, q) = leading(c, cfg.m, false)?;
                        let sol = solve_implicit_ae(&ctl.x, &ctl.x_prime(), cfg.m)?;
                        let control = deviation(&sol.r, &q)?.norm();
                        return Ok((seed, skipped, trial, control));
                    }
                    Err(e) if e.kind() == crate::error::ErrorKind::Degenerate => skipped.push(seed),
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Degenerate(format!("trial {t}: no spectral gap in 9 draws")))
        })
        .collect::<Result<_>>()?;
    let mut report = RecoveryReport {
        trial_seeds: Vec::new(),
        deviations: Vec::new(),
        mixed_deviations: Vec::new(),
        standard_deviations: Vec::new(),
        control_deviations: Vec::new(),
        resampled: Vec::new(),
        max_deviation: 0.0,
        mixed_readings_agree: true,
        control_separated: 0,
        pass: false,
        control_pass: false,
    };
    for (seed, skipped, trial, control) in results {
        report.trial_seeds.push(seed);
        report.resampled.extend(skipped);
        report.max_deviation = report.max_deviation.max(trial.deviation);
        report.mixed_readings_agree &= trial.mixed_deviation < cfg.tol;
        report.deviations.push(trial.deviation);
        report.mixed_deviations.push(trial.mixed_deviation);
        report.standard_deviations.push(trial.standard_deviation);
        report.control_deviations.push(control);
        if control > cfg.control_threshold {
            report.control_separated += 1;
        }
    }
    if !report.mixed_readings_agree {
        log::warn!("the clean and mixed covariance readings gave different eigenspaces");
    }
    report.pass = report.max_deviation < cfg.tol;
    report.control_pass = report.control_separated as f64 >= cfg.control_min_share * cfg.trials as f64;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeConfig {
    pub probes: usize,
    pub h: f64,
    /// The pair of step sizes of the convergence-order estimate.
    pub order_steps: (f64, f64),
    /// The order is measured on the data rescaled by this factor, where the
    /// central-difference truncation error dominates eigensolver rounding.
    pub order_scale: f64,
    pub tol: f64,
    pub implicit_tol: f64,
    pub seed: u64,
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        Self {
            probes: 50,
            h: 1e-5,
            order_steps: (1e-4, 1e-5),
            order_scale: 2e-3,
            tol: 1e-4,
            implicit_tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub k: usize,
    pub i: usize,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub trial_seeds: Vec<u64>,
    pub probes: Vec<Probe>,
    pub max_fd_error: f64,
    pub order: f64,
    /// |Λ(2X) − 4Λ(X)| / |4Λ(X)|.
    pub lambda_scaling_error: f64,
    /// ‖∂(2X) − ½∂(X)‖ / ‖½∂(X)‖, the formula's prediction, over the probes.
    pub derivative_scaling_error: f64,
    /// Largest ‖𝓓(Q*(ε + h·p), Q*(ε))‖ of the implicit model over the probes.
    pub implicit_max_change: f64,
    pub pass: bool,
}

/// Derivative of the standard model at ε = 0, where Q̂* = Q:
/// (I − QQᵀ)(e_i x_kᵀ) Q Λ⁺.
pub fn analytic_derivative<T: Real>(q: &DMatrix<T>, lambda: &[T], x: &DMatrix<T>, k: usize, i: usize) -> DMatrix<T> {
    let n = q.nrows();
    let m = q.ncols();
    let mut outer = DMatrix::zeros(n, m);
    let xq = x.column(k).transpose() * q; // 1×m
    for c in 0..m {
        outer[(i, c)] = xq[c];
    }
    let proj = DMatrix::identity(n, n) - q * q.transpose();
    let mut out = proj * outer;
    for (c, &l) in lambda.iter().enumerate() {
        let inv = if l.abs() > T::zero() { T::one() / l } else { T::zero() };
        let mut col = out.column_mut(c);
        col *= inv;
    }
    out
}

/// Top-m eigenvectors of (X + E)(X + E)ᵀ, column signs matched to `q`.
fn standard_basis<T: Real>(x: &DMatrix<T>, e: &DMatrix<T>, q: &DMatrix<T>) -> Result<DMatrix<T>> {
    let xp = x + e;
    let (_, mut v) = leading(&xp * xp.transpose(), q.ncols(), true)?;
    for c in 0..v.ncols() {
        if v.column(c).dot(&q.column(c)) < T::zero() {
            let flipped = -v.column(c);
            v.set_column(c, &flipped);
        }
    }
    Ok(v)
}

/// Central difference of 𝓓(Q̂*(h·p e_kᵀ), Q) at ε = 0.
fn fd_derivative<T: Real>(x: &DMatrix<T>, q: &DMatrix<T>, p: &DVector<T>, k: usize, h: T) -> Result<DMatrix<T>> {
    let (n, big_n) = x.shape();
    let mut e = DMatrix::zeros(n, big_n);
    e.set_column(k, &(p * h));
    let plus = deviation(&standard_basis(x, &e, q)?, q)?.value;
    let minus = deviation(&standard_basis(x, &(-e), q)?, q)?.value;
    Ok((plus - minus) / (h + h))
}

/// Projection of e_i onto 𝓛⊥.
fn probe_direction<T: Real>(q: &DMatrix<T>, i: usize) -> DVector<T> {
    let mut e = DVector::zeros(q.nrows());
    e[i] = T::one();
    &e - q * (q.transpose() * &e)
}

/// Compares the derivative formula with central differences at `probes`
/// seeded (k, i) pairs. The expansion point is the noise-free data, where
/// the formula's Q and Λ are exact; the implicit-model contrast perturbs the
/// problem's own noise.
pub fn verify_derivative(problem: &LinearAeProblem<f64>, cfg: &DerivativeConfig) -> Result<DerivativeReport> {
    let m = problem.m;
    let x = &problem.x;
    let (lambda, q) = leading(x * x.transpose(), m, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pairs: Vec<(usize, usize)> = (0..cfg.probes)
        .map(|_| {
            use rand::Rng;
            (rng.random_range(0..problem.samples), rng.random_range(0..problem.n))
        })
        .collect();
    let scale = cfg.order_scale;
    let xs = x * scale;
    let ls: Vec<f64> = lambda.iter().map(|l| l * scale * scale).collect();
    let (x2l, _) = leading((x * 2.0) * (x * 2.0).transpose(), m, true)?;
    let lambda_scaling_error = x2l
        .iter()
        .zip(&lambda)
        .map(|(a, b)| (a - 4.0 * b).abs() / (4.0 * b))
        .fold(0.0, f64::max);
    let x2 = x * 2.0;
    let base = solve_implicit_ae_closed_form(problem)?;
    let xp = problem.x_prime();
    let per_probe: Vec<(Probe, f64, f64, f64, f64)> = pairs
        .par_iter()
        .map(|&(k, i)| {
            let p = probe_direction(&q, i);
            let analytic = analytic_derivative(&q, &lambda, x, k, i);
            let norm = analytic.norm();
            let fd = fd_derivative(x, &q, &p, k, cfg.h)?;
            let rel_error = (&fd - &analytic).norm() / norm;
            // convergence order on the rescaled data
            let a_s = analytic_derivative(&q, &ls, &xs, k, i);
            let e1 = (fd_derivative(&xs, &q, &p, k, cfg.order_steps.0)? - &a_s).norm();
            let e2 = (fd_derivative(&xs, &q, &p, k, cfg.order_steps.1)? - &a_s).norm();
            // homogeneity: doubling the data halves the derivative
            let a2 = analytic_derivative(&q, &x2l, &x2, k, i);
            let half = &analytic * 0.5;
            let fd2 = fd_derivative(&x2, &q, &p, k, cfg.h)?;
            let scaling = ((&a2 - &half).norm() / half.norm()).max((&fd2 - &half).norm() / half.norm());
            // the implicit model ignores the same perturbation of its noise
            let mut e = xp.clone();
            let col = e.column(k) + &p * cfg.h;
            e.set_column(k, &col);
            let moved = solve_implicit_ae(x, &e, m)?;
            let change = deviation(&moved.r, &base.r)?.norm();
            Ok((Probe { k, i, rel_error }, e1, e2, scaling, change))
        })
        .collect::<Result<_>>()?;
    let probes: Vec<Probe> = per_probe.iter().map(|r| r.0).collect();
    let max_fd_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    let e1: f64 = per_probe.iter().map(|r| r.1 * r.1).sum::<f64>().sqrt();
    let e2: f64 = per_probe.iter().map(|r| r.2 * r.2).sum::<f64>().sqrt();
    let order = (e1 / e2).ln() / (cfg.order_steps.0 / cfg.order_steps.1).ln();
    let derivative_scaling_error = per_probe.iter().map(|r| r.3).fold(0.0, f64::max);
    let implicit_max_change = per_probe.iter().map(|r| r.4).fold(0.0, f64::max);
    let pass = max_fd_error < cfg.tol
        && (1.8..=2.2).contains(&order)
        && lambda_scaling_error < 1e-10
        && derivative_scaling_error < cfg.tol
        && implicit_max_change < cfg.implicit_tol;
    Ok(DerivativeReport {
        trial_seeds: vec![problem.seed],
        probes,
        max_fd_error,
        order,
        lambda_scaling_error,
        derivative_scaling_error,
        implicit_max_change,
        pass,
    })
}
