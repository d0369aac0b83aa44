//! The evidence lower bound, its exact-enumeration reference, the optimiser and
//! the training loop.

mod elbo;
mod exact;
pub mod metrics;
mod optim;
mod schedule;
mod trainer;

pub use elbo::{elbo, reconstruction_log_prob, ElboBreakdown, ElboTerms};
pub use exact::{assignments, exact_elbo, ExactElbo, MAX_COMBINATIONS};
pub use optim::{Adam, AdamConfig};
pub use schedule::TemperatureSchedule;
pub use trainer::{checkpoint_path, load_model, load_params, train, TrainConfig, TrainSinks, Trainer};
