//! MLCM-a: covariance-regularized averaging.
//!
//! Starting from the vote average `Ybar`, alternate between estimating the
//! label covariance `Omega = Y'Y / n` and re-solving the consolidated scores
//!
//! ```text
//! Y = m Ybar (Omega^-1 + m I)^-1 = m Ybar Omega (I + m Omega)^-1
//! ```
//!
//! which is the minimiser of `m ||Ybar - Y||^2 + Tr(Y Omega^-1 Y')` for fixed
//! `Omega`. Only the SPD system `I + m Omega` is ever factorised.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{MlcmError, Result};
use crate::types::{average_predictions, ConsensusConfig, PredictionSet, ScoreMatrix};

/// Symmetric positive semi-definite `l x l` label covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    /// Wraps `omega` after checking it is square and symmetric to 1e-12.
    pub fn new(omega: DMatrix<f64>) -> Result<Self> {
        if !omega.is_square() {
            return Err(MlcmError::InvalidConfig(format!(
                "covariance must be square, got {}x{}",
                omega.nrows(),
                omega.ncols()
            )));
        }
        let asym = (&omega - omega.transpose()).amax();
        if asym > 1e-12 {
            return Err(MlcmError::InvalidConfig(format!(
                "covariance is not symmetric (max deviation {asym:e})"
            )));
        }
        Ok(Self(omega))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Solves `Omega X = rhs`. Fails when `Omega` is not numerically SPD
    /// (e.g. rank-deficient scores with zero ridge).
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let chol = spd_factor(self.0.clone(), "covariance")?;
        Ok(chol.solve(rhs))
    }
}

fn gram(y: &DMatrix<f64>, ridge: f64) -> Result<CovarianceMatrix> {
    if y.nrows() == 0 {
        return Err(MlcmError::EmptyMatrix("rows"));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(MlcmError::InvalidConfig(format!(
            "ridge must be non-negative, got {ridge}"
        )));
    }
    let mut omega = y.tr_mul(y) / y.nrows() as f64;
    // exact symmetry; the product is symmetric only up to rounding
    let l = omega.nrows();
    for i in 0..l {
        for j in 0..i {
            let v = 0.5 * (omega[(i, j)] + omega[(j, i)]);
            omega[(i, j)] = v;
            omega[(j, i)] = v;
        }
        omega[(i, i)] += ridge;
    }
    CovarianceMatrix::new(omega)
}

/// `Omega = Y'Y / n + ridge I`, the zero-mean Gaussian MLE plus diagonal loading.
pub fn estimate_covariance(scores: &DMatrix<f64>, ridge: f64) -> Result<CovarianceMatrix> {
    gram(scores, ridge)
}

/// Same as [`estimate_covariance`] after subtracting each column's mean.
pub fn estimate_centered_covariance(scores: &DMatrix<f64>, ridge: f64) -> Result<CovarianceMatrix> {
    let mut centered = scores.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    gram(&centered, ridge)
}

/// Cholesky factor that also rejects pivots at rounding level, which
/// nalgebra accepts.
fn spd_factor(matrix: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let fail = || MlcmError::SolverFailure(format!("{what} is not positive definite"));
    let floor = matrix.diagonal().amax() * matrix.nrows() as f64 * f64::EPSILON;
    let chol = Cholesky::new(matrix).ok_or_else(fail)?;
    if chol.l_dirty().diagonal().iter().all(|&d| d.is_finite() && d * d > floor) {
        Ok(chol)
    } else {
        Err(fail())
    }
}

fn shifted_factor(omega: &CovarianceMatrix, m: usize) -> Result<Cholesky<f64, Dyn>> {
    let l = omega.dim();
    spd_factor(DMatrix::identity(l, l) + omega.as_matrix() * m as f64, "I + m*Omega")
}

/// One score update for fixed `Omega`: `Y = m Ybar Omega (I + m Omega)^-1`.
pub fn mlcm_a_step(y_bar: &DMatrix<f64>, omega: &CovarianceMatrix, m: usize) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(MlcmError::InvalidConfig("model count must be at least 1".into()));
    }
    if omega.dim() != y_bar.ncols() {
        return Err(MlcmError::InvalidConfig(format!(
            "covariance is {0}x{0} but scores have {1} labels",
            omega.dim(),
            y_bar.ncols()
        )));
    }
    let chol = shifted_factor(omega, m)?;
    // (Ybar Omega M^-1)' = M^-1 Omega Ybar' since Omega and M commute
    let rhs = omega.as_matrix() * y_bar.transpose() * m as f64;
    Ok(chol.solve(&rhs).transpose())
}

/// `m ||Ybar - Y||^2 + Tr(Y Omega^-1 Y')`; equals the summed squared error
/// to every base model plus the covariance penalty, up to a constant.
pub fn objective(y: &DMatrix<f64>, y_bar: &DMatrix<f64>, omega: &CovarianceMatrix, m: usize) -> Result<f64> {
    let fit = (y_bar - y).norm_squared() * m as f64;
    let y_omega_inv = omega.solve(&y.transpose())?.transpose();
    Ok(fit + y.component_mul(&y_omega_inv).sum())
}

/// Gradient of [`objective`] with respect to `Y`: `2m (Y - Ybar) + 2 Y Omega^-1`.
pub fn objective_gradient(
    y: &DMatrix<f64>,
    y_bar: &DMatrix<f64>,
    omega: &CovarianceMatrix,
    m: usize,
) -> Result<DMatrix<f64>> {
    let y_omega_inv = omega.solve(&y.transpose())?.transpose();
    Ok((y - y_bar) * (2.0 * m as f64) + y_omega_inv * 2.0)
}

/// Full trace of an MLCM-a run.
#[derive(Clone, Debug)]
pub struct MlcmaRun {
    /// Final iterate rescaled onto `[0, 1]`.
    pub scores: ScoreMatrix,
    /// Final iterate before rescaling.
    pub raw: DMatrix<f64>,
    /// Max-abs change of `Y` at each outer iteration.
    pub changes: Vec<f64>,
    /// Covariance used for the last update.
    pub omega: CovarianceMatrix,
}

impl MlcmaRun {
    pub fn iterations(&self) -> usize {
        self.changes.len()
    }
}

pub fn mlcm_a_run(set: &PredictionSet, config: &ConsensusConfig) -> Result<MlcmaRun> {
    config.validate()?;
    let m = set.m();
    let y_bar = average_predictions(set).into_inner();
    let mut y = y_bar.clone();
    let mut changes = Vec::with_capacity(config.iters);
    let mut omega = None;
    for _ in 0..config.iters {
        let cov = if config.center {
            estimate_centered_covariance(&y, config.ridge)?
        } else {
            estimate_covariance(&y, config.ridge)?
        };
        let next = mlcm_a_step(&y_bar, &cov, m)?;
        let change = (&next - &y).amax();
        changes.push(change);
        y = next;
        omega = Some(cov);
        if change < config.tol {
            break;
        }
    }
    let omega = omega.expect("iters >= 1 is validated");
    Ok(MlcmaRun {
        scores: ScoreMatrix::rescaled(&y)?,
        raw: y,
        changes,
        omega,
    })
}

/// MLCM-a consolidated scores, min-max rescaled onto `[0, 1]`.
pub fn mlcm_a(set: &PredictionSet, config: &ConsensusConfig) -> Result<ScoreMatrix> {
    mlcm_a_run(set, config).map(|run| run.scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LabelMatrix;

    #[test]
    fn covariance_of_identity() {
        let om = estimate_covariance(&DMatrix::identity(2, 2), 0.0).unwrap();
        assert_eq!(om.as_matrix(), &(DMatrix::identity(2, 2) * 0.5));
    }

    #[test]
    fn covariance_ridge_floor() {
        let om = estimate_covariance(&DMatrix::zeros(4, 3), 1e-6).unwrap();
        assert_eq!(om.as_matrix(), &(DMatrix::identity(3, 3) * 1e-6));
    }

    #[test]
    fn centered_covariance_ignores_offsets() {
        let y = DMatrix::from_row_slice(3, 2, &[0.1, 0.9, 0.2, 0.8, 0.3, 0.7]);
        let shifted = y.add_scalar(5.0);
        let a = estimate_centered_covariance(&y, 0.0).unwrap();
        let b = estimate_centered_covariance(&shifted, 0.0).unwrap();
        assert!((a.as_matrix() - b.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn step_with_identity_halves() {
        let y_bar = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.25, 0.75, 1.0]);
        let om = CovarianceMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let y = mlcm_a_step(&y_bar, &om, 1).unwrap();
        assert!((y - &y_bar * 0.5).amax() < 1e-15);
    }

    #[test]
    fn step_with_scalar_covariance_scales() {
        let y_bar = DMatrix::from_row_slice(2, 2, &[0.3, 0.6, 0.9, 0.1]);
        let (c, m) = (0.4, 3usize);
        let om = CovarianceMatrix::new(DMatrix::identity(2, 2) * c).unwrap();
        let y = mlcm_a_step(&y_bar, &om, m).unwrap();
        let k = m as f64 * c / (1.0 + m as f64 * c);
        assert!((y - &y_bar * k).amax() < 1e-15);
    }

    #[test]
    fn step_checks_shapes() {
        let om = CovarianceMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert!(mlcm_a_step(&DMatrix::zeros(2, 2), &om, 1).is_err());
        assert!(mlcm_a_step(&DMatrix::zeros(2, 3), &om, 0).is_err());
    }

    #[test]
    fn rejects_asymmetric_covariance() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(CovarianceMatrix::new(bad).is_err());
    }

    #[test]
    fn one_iteration_does_one_step() {
        let z = LabelMatrix::from_row_slice(3, 2, &[1, 0, 0, 1, 1, 1]).unwrap();
        let set = PredictionSet::new(vec![z.clone(), z]).unwrap();
        let cfg = ConsensusConfig { iters: 1, ..Default::default() };
        let run = mlcm_a_run(&set, &cfg).unwrap();
        assert_eq!(run.iterations(), 1);
        let y_bar = average_predictions(&set).into_inner();
        let om = estimate_covariance(&y_bar, cfg.ridge).unwrap();
        assert_eq!(run.raw, mlcm_a_step(&y_bar, &om, 2).unwrap());
    }

    #[test]
    fn zero_iterations_rejected() {
        let z = LabelMatrix::from_row_slice(1, 2, &[1, 0]).unwrap();
        let set = PredictionSet::new(vec![z]).unwrap();
        let cfg = ConsensusConfig { iters: 0, ..Default::default() };
        assert!(mlcm_a(&set, &cfg).is_err());
    }

    #[test]
    fn singular_covariance_without_ridge_fails_in_objective() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let om = estimate_covariance(&y, 0.0).unwrap();
        assert!(objective(&y, &y, &om, 1).is_err());
        // the step itself stays well posed
        assert!(mlcm_a_step(&y, &om, 1).is_ok());
    }
}
