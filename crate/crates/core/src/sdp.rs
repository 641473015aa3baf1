//! Max-Cut SDP relaxation: PDHG solver and certified dual bounds.
//!
//! Primal `max <L, X>` s.t. `diag(X) = e`, `X` PSD; dual `min <e, y>` s.t.
//! `Diag(y) - L` PSD. Every value leaving this module is in cut units, i.e.
//! scaled by `1/4` so that it is directly comparable with `cut_value`.

use thiserror::Error;

use crate::linalg::{inner, jacobi_tol, sym_eigen, sym_eigen_warm, LinalgError, SymMatrix};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
}

/// Objective data of one relaxation.
#[derive(Debug, Clone)]
pub struct SdpModel<T> {
    laplacian: SymMatrix<T>,
    scale: T,
}

impl<T: Real> SdpModel<T> {
    pub fn new(laplacian: SymMatrix<T>) -> Result<Self, SdpError> {
        if !laplacian.is_finite() {
            return Err(SdpError::NonFinite("laplacian"));
        }
        let n = laplacian.n().max(1);
        let fro = laplacian.frobenius_norm();
        let scale = if fro > T::zero() {
            fro / T::of(4.0 * n as f64)
        } else {
            T::one()
        };
        Ok(Self { laplacian, scale })
    }

    pub fn laplacian(&self) -> &SymMatrix<T> {
        &self.laplacian
    }

    pub fn n(&self) -> usize {
        self.laplacian.n()
    }

    /// Internal normalization `||L||_F / (4n)` (1 for an empty graph).
    ///
    /// Keeps the scaled duals of order one, so the fixed step sizes behave
    /// the same for any weight magnitude.
    pub fn scale(&self) -> T {
        self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdhgParams<T> {
    pub alpha: T,
    pub beta: T,
    pub theta: T,
    pub epsilon: T,
    pub max_iters: usize,
    pub tol_primal: T,
    pub tol_gap: T,
    /// Iterations between convergence checks (each check costs one extra
    /// eigendecomposition).
    pub check_every: usize,
}

impl<T: Real> Default for PdhgParams<T> {
    fn default() -> Self {
        Self {
            alpha: T::of(0.9),
            beta: T::of(0.9),
            theta: T::one(),
            epsilon: T::of(1e-4),
            max_iters: 20_000,
            tol_primal: T::of(1e-6),
            tol_gap: T::of(1e-4),
            check_every: 10,
        }
    }
}

impl<T: Real> PdhgParams<T> {
    pub fn validate(&self) -> Result<(), SdpError> {
        let bad = |m: &str| Err(SdpError::InvalidParams(m.into()));
        if !(self.alpha > T::zero() && self.beta > T::zero()) {
            return bad("step sizes must be positive");
        }
        if self.alpha * self.beta >= T::one() {
            return bad("alpha * beta must be below 1");
        }
        if !(self.theta >= T::zero() && self.theta <= T::one()) {
            return bad("theta must lie in [0, 1]");
        }
        if self.epsilon.is_nan() || self.epsilon < T::zero() {
            return bad("epsilon must be non-negative");
        }
        if self.check_every == 0 {
            return bad("check_every must be positive");
        }
        Ok(())
    }
}

/// Upper bound on the max cut together with the dual vector witnessing it.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedBound<T> {
    /// Dual vector with `Diag(y_feas) - L` PSD.
    pub y_feas: Vec<T>,
    /// `sum(y_feas) / 4`.
    pub ub_cut: T,
    /// Uniform shift added to the input estimate.
    pub shift: T,
}

#[derive(Debug, Clone)]
pub struct SdpSolution<T> {
    pub x: SymMatrix<T>,
    /// Dual estimate in the unscaled `Diag(y) - L` convention, before projection.
    pub y: Vec<T>,
    pub iters: usize,
    /// `max_i |X_ii - 1|`.
    pub primal_residual: T,
    pub converged: bool,
    pub certified: CertifiedBound<T>,
}

/// Error allowance added to the computed smallest eigenvalue so the shift is
/// valid for the exact matrix, not only for the rounded decomposition.
fn eigen_margin<T: Real>(s: &SymMatrix<T>) -> T {
    let n = T::of(s.n() as f64);
    n * (jacobi_tol::<T>() + T::epsilon() * T::of(16.0)) * s.frobenius_norm()
}

/// Shifts `y_hat` uniformly until `Diag(y) - L` is PSD and reports the
/// resulting cut-unit bound. Valid for any finite input.
pub fn dual_radial_project<T: Real>(
    y_hat: &[T],
    laplacian: &SymMatrix<T>,
) -> Result<CertifiedBound<T>, SdpError> {
    let n = laplacian.n();
    if y_hat.len() != n {
        return Err(SdpError::Dimension {
            expected: n,
            got: y_hat.len(),
        });
    }
    if y_hat.iter().any(|v| !v.is_finite()) {
        return Err(SdpError::NonFinite("dual estimate"));
    }
    let slack = laplacian.scaled(-T::one()).add_diag(y_hat);
    let lmin = sym_eigen(&slack)?
        .values
        .first()
        .copied()
        .unwrap_or_else(T::zero);
    let shift = (eigen_margin(&slack) - lmin).max(T::zero());
    let y_feas: Vec<T> = y_hat.iter().map(|&v| v + shift).collect();
    let ub_cut = y_feas.iter().copied().sum::<T>() * T::of(0.25);
    Ok(CertifiedBound {
        y_feas,
        ub_cut,
        shift,
    })
}

/// `<L, X> / 4`.
pub fn primal_objective<T: Real>(
    laplacian: &SymMatrix<T>,
    x: &SymMatrix<T>,
) -> Result<T, SdpError> {
    Ok(inner(laplacian, x)? * T::of(0.25))
}

/// Certified bound minus primal objective, in cut units.
pub fn duality_gap<T: Real>(sol: &SdpSolution<T>, laplacian: &SymMatrix<T>) -> Result<T, SdpError> {
    Ok(sol.certified.ub_cut - primal_objective(laplacian, &sol.x)?)
}

fn relative_gap<T: Real>(ub: T, primal: T) -> T {
    (ub - primal).abs() / (T::one() + ub.abs())
}

/// Primal-dual hybrid gradient on the Frobenius-regularized relaxation.
///
/// Runs on `min <C, X>` with `C = -L / scale`; the scaled dual `y` maps back
/// to the `Diag(y') - L` convention as `y' = scale * y`. The returned bound is
/// always the radial projection of `y'` against the unscaled Laplacian, so it
/// is valid whether or not the iteration converged.
pub fn pdhg_solve<T: Real>(
    model: &SdpModel<T>,
    params: &PdhgParams<T>,
) -> Result<SdpSolution<T>, SdpError> {
    params.validate()?;
    let n = model.n();
    let l = model.laplacian();
    let scale = model.scale();
    let c = l.scaled(-T::one() / scale);
    let shrink = T::one() / (T::one() + params.alpha * params.epsilon);

    let mut x = SymMatrix::<T>::zeros(n);
    let mut y = vec![T::zero(); n];
    let mut iters = 0;
    let mut converged = false;
    // Consecutive iterates are close, so the previous eigenvectors nearly
    // diagonalize the next step matrix.
    let mut basis: Option<Vec<T>> = None;

    while iters < params.max_iters {
        // X+ = Proj[(X - alpha (Diag(y) + C)) / (1 + alpha eps)]
        let mut step = SymMatrix::from_upper(n, |i, j| {
            let v = x.get(i, j) - params.alpha * c.get(i, j);
            if i == j {
                (v - params.alpha * y[i]) * shrink
            } else {
                v * shrink
            }
        });
        if !step.is_finite() {
            return Err(SdpError::NonFinite("primal iterate"));
        }
        let eig = match &basis {
            Some(b) => sym_eigen_warm(&step, b)?,
            None => sym_eigen(&step)?,
        };
        step = eig.reconstruct_with(|lam| lam.max(T::zero()));
        basis = Some(eig.vectors);
        for (i, yi) in y.iter_mut().enumerate() {
            let xn = step.get(i, i);
            let extrap = xn + params.theta * (xn - x.get(i, i));
            *yi += params.beta * (extrap - T::one());
        }
        x = step;
        iters += 1;

        if iters % params.check_every == 0 || iters == params.max_iters {
            if y.iter().any(|v| !v.is_finite()) {
                return Err(SdpError::NonFinite("dual iterate"));
            }
            if residual(&x) <= params.tol_primal {
                let y_unscaled: Vec<T> = y.iter().map(|&v| v * scale).collect();
                let cert = dual_radial_project(&y_unscaled, l)?;
                let p = primal_objective(l, &x)?;
                if relative_gap(cert.ub_cut, p) <= params.tol_gap {
                    converged = true;
                    break;
                }
            }
        }
    }

    let y_unscaled: Vec<T> = y.iter().map(|&v| v * scale).collect();
    let certified = dual_radial_project(&y_unscaled, l)?;
    Ok(SdpSolution {
        primal_residual: residual(&x),
        x,
        y: y_unscaled,
        iters,
        converged,
        certified,
    })
}

fn residual<T: Real>(x: &SymMatrix<T>) -> T {
    (0..x.n())
        .map(|i| (x.get(i, i) - T::one()).abs())
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{brute_force_max_cut, generate_er, WeightFamily, WeightedGraph};

    fn k2() -> SymMatrix<f64> {
        WeightedGraph::from_edges(2, [(0, 1, 1.0)])
            .unwrap()
            .laplacian()
    }

    fn triangle() -> SymMatrix<f64> {
        WeightedGraph::from_edges(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)])
            .unwrap()
            .laplacian()
    }

    #[test]
    fn radial_projection_examples() {
        let b = dual_radial_project(&[0.0, 0.0], &k2()).unwrap();
        assert!((b.shift - 2.0).abs() < 1e-9);
        assert!((b.ub_cut - 1.0).abs() < 1e-9);
        assert!(b.ub_cut >= 1.0);

        let b = dual_radial_project(&[0.0; 3], &triangle()).unwrap();
        assert!((b.shift - 3.0).abs() < 1e-9);
        assert!((b.ub_cut - 2.25).abs() < 1e-9);

        let feasible = [5.0, 5.0];
        let b = dual_radial_project(&feasible, &k2()).unwrap();
        assert_eq!(b.shift, 0.0);
        assert_eq!(b.y_feas, feasible.to_vec());
    }

    #[test]
    fn radial_projection_rejects_bad_input() {
        assert!(matches!(
            dual_radial_project(&[0.0], &k2()),
            Err(SdpError::Dimension {
                expected: 2,
                got: 1
            })
        ));
        assert!(matches!(
            dual_radial_project(&[f64::NAN, 0.0], &k2()),
            Err(SdpError::NonFinite(_))
        ));
    }

    #[test]
    fn primal_objective_examples() {
        let x = SymMatrix::from_upper(2, |i, j| if i == j { 1.0 } else { -1.0 });
        assert_eq!(primal_objective(&k2(), &x).unwrap(), 1.0);
        let l = triangle();
        assert_eq!(primal_objective(&l, &SymMatrix::identity(3)).unwrap(), 1.5);
        assert_eq!(primal_objective(&SymMatrix::zeros(2), &x).unwrap(), 0.0);
    }

    #[test]
    fn pdhg_k2() {
        let model = SdpModel::new(k2()).unwrap();
        let sol = pdhg_solve(&model, &PdhgParams::default()).unwrap();
        assert!(
            (sol.certified.ub_cut - 1.0).abs() <= 1e-4,
            "{}",
            sol.certified.ub_cut
        );
        assert!(sol.certified.ub_cut >= 1.0);
        assert!((sol.x.get(0, 1) + 1.0).abs() < 1e-3);
        assert!(duality_gap(&sol, model.laplacian()).unwrap() <= 1e-4);
    }

    #[test]
    fn pdhg_triangle() {
        let model = SdpModel::new(triangle()).unwrap();
        let sol = pdhg_solve(&model, &PdhgParams::default()).unwrap();
        assert!(
            (sol.certified.ub_cut - 2.25).abs() <= 1e-3,
            "{}",
            sol.certified.ub_cut
        );
        assert!((sol.x.get(0, 1) + 0.5).abs() < 1e-2);
    }

    #[test]
    fn pdhg_empty_graph() {
        let model = SdpModel::new(SymMatrix::<f64>::zeros(3)).unwrap();
        let sol = pdhg_solve(&model, &PdhgParams::default()).unwrap();
        assert!(sol.certified.ub_cut.abs() < 1e-6);
        assert!(sol.certified.ub_cut >= 0.0);
    }

    #[test]
    fn pdhg_bound_dominates_max_cut() {
        for seed in 0..10 {
            let g = generate_er(10, 0.5, WeightFamily::Uniform { lo: -5, hi: 5 }, seed).unwrap();
            let model = SdpModel::new(g.laplacian()).unwrap();
            let sol = pdhg_solve(&model, &PdhgParams::default()).unwrap();
            let (best, _) = brute_force_max_cut(&g);
            assert!(sol.certified.ub_cut >= best);
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let model = SdpModel::new(k2()).unwrap();
        let p = PdhgParams {
            alpha: 1.5,
            ..PdhgParams::default()
        };
        assert!(matches!(
            pdhg_solve(&model, &p),
            Err(SdpError::InvalidParams(_))
        ));
    }
}
