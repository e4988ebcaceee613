//! Two-stage corrected least squares for high-dimensional linear models whose
//! covariates are observed with additive noise or with entries missing at
//! random.
//!
//! The first stage selects a candidate support, either by correlation
//! screening on the corrected cross-moment or by an ℓ1-penalized corrected
//! least-squares fit. The second stage refits corrected least squares on the
//! selected columns with no penalty. The same machinery estimates sparse
//! precision matrices by nodewise regression.
//!
//! ```
//! use nalgebra::{DMatrix, DVector};
//! use postcls::{corrected_moments, cs_screen, post_cls_fit, SolverOptions, SurrogateDataset};
//!
//! let z = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 1.0]);
//! let y = DVector::from_vec(vec![2.0, 0.0, 2.0, -2.0]);
//! let data = SurrogateDataset::additive(z, Some(y), DMatrix::zeros(2, 2)).unwrap();
//! let m = corrected_moments(&data).unwrap();
//! let sel = cs_screen(m.gamma_vec(), 1).unwrap();
//! let fit = post_cls_fit(&m, &sel.support, &SolverOptions::default()).unwrap();
//! assert_eq!(fit.support_used, vec![0]);
//! ```

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod fit;
pub mod harness;
pub mod io;
mod linalg;
pub mod moments;
pub mod precision;
pub mod selection;
pub mod simulation;

pub use error::{Error, Result};
pub use estimation::{
    cross_validate, holdout_loss, lasso_fit, penalty_grid, post_cls_fit, post_cls_fit_constrained,
    screen_size_grid, train_test_split, CvOutcome, FitRule,
};
pub use fit::{Estimator, FitResult, SolvePath};
pub use harness::{
    column_norm_error, emit_results, false_positives, rate_bound_en, ree, run_grid, EmitOptions,
    ExperimentRecord, GridSpec, Method,
};
pub use moments::{
    build_mask_matrix, corrected_covariance, corrected_loss, corrected_moments,
    estimate_missing_rates, rse_bounds, uncorrected_moments, CorrectedMoments, NoiseKind,
    NoiseModel, RseBounds, SurrogateDataset,
};
pub use precision::{estimate_precision, PrecisionEstimate};
pub use selection::{
    cs_screen, l1_cls_fit, project_l1_ball, soft_threshold, SelectionMethod, SelectionResult,
    SolverOptions, StepRule,
};
pub use simulation::{
    ar1_covariance, gen_beta0, gen_graph_data, gen_regression, generate_band_precision,
    generate_cluster_precision, SimConfig, SimulatedRegression,
};
