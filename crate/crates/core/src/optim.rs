//! Dense numeric kernels: Cholesky solves and the ℓ1-penalized quadratic
//! minimizer shared by every estimator in the crate.
//!
//! The penalized problem is
//!
//! ```text
//! minimize over v:  ½ v'Qv − c'v + λ‖v‖₁
//! ```
//!
//! with `Q` symmetric positive semidefinite. It is solved by cyclic
//! coordinate descent with exact soft-threshold updates, optionally
//! accelerated by an active-set polish step that solves the smooth problem
//! on the current sign pattern exactly.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_len, Error, Result};

/// Relative pivot threshold: a pivot below `PIVOT_TOL * max_diag` is singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `A = LL'`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Factors `a`, reading only its lower triangle.
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let d = a.nrows();
        check_len("square matrix columns", d, a.ncols())?;
        let max_diag = (0..d).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
        let floor = PIVOT_TOL * max_diag;
        let mut l = Array2::<f64>::zeros((d, d));
        for j in 0..d {
            let mut pivot = a[[j, j]];
            for k in 0..j {
                pivot -= l[[j, k]] * l[[j, k]];
            }
            if !(pivot > floor) || !pivot.is_finite() {
                return Err(Error::Singular {
                    pivot: j,
                    value: pivot,
                });
            }
            let ljj = pivot.sqrt();
            l[[j, j]] = ljj;
            for i in (j + 1)..d {
                let mut acc = a[[i, j]];
                for k in 0..j {
                    acc -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = acc / ljj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor_l(&self) -> &Array2<f64> {
        &self.l
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Result<Array1<f64>> {
        let d = self.dim();
        check_len("right-hand side", d, b.len())?;
        let l = &self.l;
        let mut y = b.to_owned();
        for i in 0..d {
            let mut acc = y[i];
            for k in 0..i {
                acc -= l[[i, k]] * y[k];
            }
            y[i] = acc / l[[i, i]];
        }
        for i in (0..d).rev() {
            let mut acc = y[i];
            for k in (i + 1)..d {
                acc -= l[[k, i]] * y[k];
            }
            y[i] = acc / l[[i, i]];
        }
        Ok(y)
    }

    pub fn solve_matrix(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("right-hand side rows", self.dim(), b.nrows())?;
        let mut out = Array2::zeros(b.raw_dim());
        for (j, col) in b.axis_iter(Axis(1)).enumerate() {
            out.column_mut(j).assign(&self.solve(col)?);
        }
        Ok(out)
    }

    /// `b' A⁻¹ b` computed as `‖L⁻¹b‖²`.
    pub fn inv_quad_form(&self, b: ArrayView1<f64>) -> Result<f64> {
        let d = self.dim();
        check_len("quadratic form vector", d, b.len())?;
        let l = &self.l;
        let mut y = b.to_owned();
        let mut total = 0.0;
        for i in 0..d {
            let mut acc = y[i];
            for k in 0..i {
                acc -= l[[i, k]] * y[k];
            }
            y[i] = acc / l[[i, i]];
            total += y[i] * y[i];
        }
        Ok(total)
    }
}

/// Largest absolute asymmetry relative to the largest entry.
pub fn relative_asymmetry(a: ArrayView2<f64>) -> f64 {
    let d = a.nrows();
    let scale = a
        .iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for i in 0..d {
        for j in 0..i {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst / scale
}

/// Solves `a·x = b` for symmetric positive-definite `a` without forming an inverse.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_len("square matrix columns", a.nrows(), a.ncols())?;
    let asym = relative_asymmetry(a);
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    Cholesky::factor(a)?.solve(b)
}

pub fn solve_spd_matrix(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_len("square matrix columns", a.nrows(), a.ncols())?;
    let asym = relative_asymmetry(a);
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    Cholesky::factor(a)?.solve_matrix(b)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: ArrayView2<f64>) -> f64 {
    let d = a.nrows();
    if d == 0 {
        return f64::NAN;
    }
    let m = nalgebra::DMatrix::from_fn(d, d, |i, j| a[[i, j]]);
    nalgebra::SymmetricEigen::new(m).eigenvalues.min()
}

/// Principal submatrix / block `a[rows, cols]`.
pub fn block(a: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    a.select(Axis(0), rows).select(Axis(1), cols)
}

pub fn gather(v: ArrayView1<f64>, idx: &[usize]) -> Array1<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

pub fn scatter(values: ArrayView1<f64>, idx: &[usize], dim: usize) -> Array1<f64> {
    let mut out = Array1::zeros(dim);
    for (&i, &x) in idx.iter().zip(values.iter()) {
        out[i] = x;
    }
    out
}

pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn max_abs(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Soft-threshold `S(z, γ)`; the kink `|z| = γ` maps to zero.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// `½ v'Qv − c'v + λ‖v‖₁` with `Q` symmetric PSD and `λ ≥ 0`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    q: Array2<f64>,
    c: Array1<f64>,
    lambda: f64,
}

impl QuadraticProgram {
    pub fn new(q: Array2<f64>, c: Array1<f64>, lambda: f64) -> Result<Self> {
        check_len("quadratic matrix columns", q.nrows(), q.ncols())?;
        check_len("linear term", q.nrows(), c.len())?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "penalty must be a finite non-negative number, got {lambda}"
            )));
        }
        let asym = relative_asymmetry(q.view());
        if asym > 1e-12 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(QuadraticProgram { q, c, lambda })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn c(&self) -> &Array1<f64> {
        &self.c
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        QuadraticProgram::new(self.q.clone(), self.c.clone(), lambda)
    }

    /// `Qv − c`.
    pub fn gradient(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.q.dot(&v) - &self.c
    }

    pub fn objective(&self, v: ArrayView1<f64>) -> f64 {
        let qv = self.q.dot(&v);
        0.5 * v.dot(&qv) - self.c.dot(&v) + self.lambda * v.iter().map(|x| x.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tol: f64,
    /// Maximum number of full coordinate sweeps.
    pub max_iter: usize,
    /// Solve the smooth problem exactly once a sign pattern repeats.
    pub polish: bool,
    /// Record the objective after every sweep.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 100_000,
            polish: true,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Array1<f64>,
    pub iterations: usize,
    pub max_kkt_violation: f64,
    pub converged: bool,
    /// Coordinates with zero curvature whose gradient exceeds the penalty;
    /// they are held at zero and make the problem unbounded below.
    pub degenerate: Vec<usize>,
    pub objective_trace: Vec<f64>,
}

/// Subgradient optimality residual of `v` for the program.
///
/// `r_j = |g_j + λ sgn(v_j)|` on nonzero coordinates and
/// `max(0, |g_j| − λ)` on zero coordinates, where `g = Qv − c`.
pub fn kkt_residual(qp: &QuadraticProgram, v: ArrayView1<f64>) -> Result<f64> {
    check_len("candidate vector", qp.dim(), v.len())?;
    Ok(residual_from_gradient(v, qp.gradient(v).view(), qp.lambda))
}

fn residual_from_gradient(v: ArrayView1<f64>, grad: ArrayView1<f64>, lambda: f64) -> f64 {
    v.iter()
        .zip(grad.iter())
        .map(|(&vj, &gj)| {
            if vj != 0.0 {
                (gj + lambda * sign(vj)).abs()
            } else {
                (gj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn lasso_quadratic(
    qp: &QuadraticProgram,
    start: Option<ArrayView1<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let opts = SolverOptions {
        tol,
        max_iter,
        ..SolverOptions::default()
    };
    lasso_quadratic_with(qp, start, &opts)
}

pub fn lasso_quadratic_with(
    qp: &QuadraticProgram,
    start: Option<ArrayView1<f64>>,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    let d = qp.dim();
    let q = &qp.q;
    let lambda = qp.lambda;
    let mut v = match start {
        Some(s) => {
            check_len("warm start", d, s.len())?;
            s.to_owned()
        }
        None => Array1::zeros(d),
    };
    let diag: Vec<f64> = (0..d).map(|j| q[[j, j]]).collect();
    let max_diag = diag.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let held: Vec<bool> = diag.iter().map(|&x| !(x > PIVOT_TOL * max_diag)).collect();
    for j in 0..d {
        if held[j] {
            v[j] = 0.0;
        }
    }

    let mut grad = qp.gradient(v.view());
    let mut trace = Vec::new();
    if opts.trace {
        trace.push(qp.objective(v.view()));
    }
    let mut residual = residual_from_gradient(v.view(), grad.view(), lambda);
    let mut iterations = 0;
    let mut prev_pattern: Vec<i8> = Vec::new();
    let mut last_polished: Vec<i8> = Vec::new();

    loop {
        while residual > opts.tol && iterations < opts.max_iter {
            iterations += 1;
            for j in 0..d {
                if held[j] {
                    continue;
                }
                let qjj = diag[j];
                let updated = soft_threshold(qjj * v[j] - grad[j], lambda) / qjj;
                let delta = updated - v[j];
                if delta != 0.0 {
                    v[j] = updated;
                    grad.scaled_add(delta, &q.column(j));
                }
            }

            if opts.polish {
                let pattern: Vec<i8> = v.iter().map(|&x| sign(x) as i8).collect();
                if pattern == prev_pattern
                    && pattern != last_polished
                    && pattern.iter().any(|&s| s != 0)
                {
                    if let Some(polished) = polish(qp, &v, &pattern) {
                        v = polished;
                        grad = qp.gradient(v.view());
                    }
                    last_polished = pattern.clone();
                }
                prev_pattern = pattern;
            }

            if iterations % 64 == 0 {
                grad = qp.gradient(v.view());
            }
            residual = residual_from_gradient(v.view(), grad.view(), lambda);
            if opts.trace {
                trace.push(qp.objective(v.view()));
            }
        }
        // the maintained gradient drifts; certify against a fresh one
        grad = qp.gradient(v.view());
        residual = residual_from_gradient(v.view(), grad.view(), lambda);
        if residual <= opts.tol || iterations >= opts.max_iter {
            break;
        }
    }

    let degenerate = (0..d)
        .filter(|&j| held[j] && grad[j].abs() > lambda)
        .collect();
    Ok(SolveReport {
        solution: v,
        iterations,
        max_kkt_violation: residual,
        converged: residual <= opts.tol,
        degenerate,
        objective_trace: trace,
    })
}

/// Exact minimizer of the smooth objective on the face fixed by `pattern`,
/// accepted only if it keeps every sign and does not increase the objective.
fn polish(qp: &QuadraticProgram, v: &Array1<f64>, pattern: &[i8]) -> Option<Array1<f64>> {
    let active: Vec<usize> = (0..pattern.len()).filter(|&j| pattern[j] != 0).collect();
    let q_aa = block(qp.q.view(), &active, &active);
    let rhs: Array1<f64> = active
        .iter()
        .map(|&j| qp.c[j] - qp.lambda * pattern[j] as f64)
        .collect();
    let x = Cholesky::factor(q_aa.view()).ok()?.solve(rhs.view()).ok()?;
    if active
        .iter()
        .zip(x.iter())
        .any(|(&j, &xj)| sign(xj) as i8 != pattern[j])
    {
        return None;
    }
    let candidate = scatter(x.view(), &active, qp.dim());
    if qp.objective(candidate.view()) <= qp.objective(v.view()) {
        Some(candidate)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let a = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
        a.t().dot(&a) + Array2::<f64>::eye(d) * 0.1
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let b = array![1.0, -2.0, 3.5];
        let x = solve_spd(Array2::eye(3).view(), b.view()).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn two_by_two_by_hand() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let x = solve_spd(a.view(), array![2.0, 3.0].view()).unwrap();
        assert_abs_diff_eq!(x[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_spd(8, &mut rng);
            let b: Array1<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x = solve_spd(a.view(), b.view()).unwrap();
            let r = &a.dot(&x) - &b;
            assert!(max_abs(r.view()) / max_abs(b.view()) < 1e-10);
        }
    }

    #[test]
    fn singular_reports_pivot() {
        let a = array![[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        match solve_spd(a.view(), array![1.0, 1.0, 1.0].view()) {
            Err(Error::Singular { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_rejected() {
        let a = array![[1.0, 0.5], [0.0, 1.0]];
        assert!(matches!(
            solve_spd(a.view(), array![1.0, 1.0].view()),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn matrix_rhs() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let x = solve_spd_matrix(a.view(), Array2::eye(2).view()).unwrap();
        let back = a.dot(&x);
        assert_abs_diff_eq!(back, Array2::eye(2), epsilon = 1e-14);
    }

    #[test]
    fn separable_cases() {
        let qp = QuadraticProgram::new(Array2::eye(2), array![1.0, 2.0], 0.0).unwrap();
        let r = lasso_quadratic(&qp, None, 1e-12, 100).unwrap();
        assert_abs_diff_eq!(r.solution, array![1.0, 2.0], epsilon = 1e-15);

        let qp = qp.with_lambda(0.5).unwrap();
        let r = lasso_quadratic(&qp, None, 1e-12, 100).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.solution, array![0.5, 1.5], epsilon = 1e-15);
        assert!(kkt_residual(&qp, array![0.5, 1.5].view()).unwrap() <= 1e-15);
    }

    #[test]
    fn zero_is_optimal_for_zero_linear_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_spd(4, &mut rng);
        for lambda in [0.0, 0.1, 3.0] {
            let qp = QuadraticProgram::new(q.clone(), Array1::zeros(4), lambda).unwrap();
            assert_eq!(kkt_residual(&qp, Array1::zeros(4).view()).unwrap(), 0.0);
        }
    }

    #[test]
    fn kink_ties_go_to_zero() {
        // gradient magnitude exactly λ at zero
        let qp = QuadraticProgram::new(Array2::eye(1), array![0.5], 0.5).unwrap();
        let r = lasso_quadratic(&qp, None, 1e-12, 10).unwrap();
        assert_eq!(r.solution[0], 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn random_instance_beats_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_spd(6, &mut rng);
        let c: Array1<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let qp = QuadraticProgram::new(q, c, 0.3).unwrap();
        let r = lasso_quadratic(&qp, None, 1e-12, 100_000).unwrap();
        assert!(r.converged);
        assert!(r.max_kkt_violation < 1e-8);
        let best = qp.objective(r.solution.view());
        for _ in 0..10_000 {
            let delta: Array1<f64> = (0..6).map(|_| rng.random_range(-1e-3..1e-3)).collect();
            let other = &r.solution + &delta;
            assert!(best <= qp.objective(other.view()) + 1e-15);
        }
    }

    #[test]
    fn self_consistent_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = random_spd(10, &mut rng);
        let c: Array1<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let qp = QuadraticProgram::new(q, c, 0.2).unwrap();
        let r = lasso_quadratic(&qp, None, 1e-10, 100_000).unwrap();
        assert!(kkt_residual(&qp, r.solution.view()).unwrap() <= 1e-10);
    }

    #[test]
    fn zero_curvature_coordinate_is_flagged() {
        let q = array![[1.0, 0.0], [0.0, 0.0]];
        let qp = QuadraticProgram::new(q, array![1.0, 2.0], 0.5).unwrap();
        let r = lasso_quadratic(&qp, None, 1e-10, 1000).unwrap();
        assert_eq!(r.degenerate, vec![1]);
        assert_eq!(r.solution[1], 0.0);
        assert!(!r.converged);
    }

    #[test]
    fn max_iter_exceeded_is_not_converged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_spd(10, &mut rng);
        let c: Array1<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let qp = QuadraticProgram::new(q, c, 0.01).unwrap();
        let opts = SolverOptions {
            tol: 1e-14,
            max_iter: 1,
            polish: false,
            trace: false,
        };
        let r = lasso_quadratic_with(&qp, None, &opts).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(!r.converged);
    }

    #[test]
    fn negative_penalty_rejected() {
        assert!(QuadraticProgram::new(Array2::eye(2), array![1.0, 1.0], -0.1).is_err());
    }
}
