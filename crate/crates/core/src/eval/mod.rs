//! Losses, rate fits and the Monte-Carlo checks built on them.

pub mod checks;
pub mod concentration;
pub mod inequalities;
pub mod loss;
pub mod rates;
pub mod robustness;
pub mod suites;
pub mod theory;

pub use checks::{adjoint_identity_check, ho_kalman_exactness_check, solver_agreement_check, CheckSummary};
pub use concentration::{covariance_concentration, noise_term_concentration, InputProcess, NoiseTerm};
pub use inequalities::{inequality_checks, CheckOutcome, InequalityReport};
pub use loss::{hankel_loss, hankel_losses, loss_report, realization_loss, HankelLosses, LossReport, RealizationLoss};
pub use rates::{fit_rate, rate_experiment, EnvelopeFit, RateFit};
pub use robustness::{robustness_trials, RobustnessReport};
pub use suites::{calibrate_c, pipeline_trial, recovery_rate, run_trials, Bench, TrialRecord};
pub use theory::{check_bounds, BoundCheck};
