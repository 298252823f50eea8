//! Statistical FEM: discrepancy kernel, marginal likelihood, hyperparameter
//! estimation and Gaussian conditioning of the displacement prior.

pub mod field;
pub mod hyper;
pub mod kernel;
pub mod likelihood;
pub mod observations;
pub mod optimize;
pub mod posterior;

pub use field::{FieldKind, GaussianField, SensorGaussian};
pub use hyper::{EstimationResult, Hyperparameters};
pub use kernel::{kernel_matrix, log_kernel_derivatives};
pub use likelihood::{gradient_check, marginal_covariance, neg_log_marginal, neg_log_marginal_grad, MarginalLikelihood};
pub use observations::ObservationSet;
pub use optimize::{estimate_hyperparameters, OptimizerOptions};
pub use posterior::{
    generate_observations, generate_readings, posterior_update, posterior_update_dense, rmse, true_response,
    GaussianSampler,
};
