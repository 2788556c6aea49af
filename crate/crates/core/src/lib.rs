//! Generative pedestrian trajectory forecasting: an LSTM encoder-decoder generator with
//! bearing-angle social attention pooling and a learned latent variable predictor,
//! trained adversarially, plus data loading, synthetic scenes and evaluation.

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod kinematics;
pub mod losses;
pub mod model;
pub mod nn;
pub mod optim;
pub mod training;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{FlatConfig, TrainConfig};
pub use data::{ObservationWindow, TrajectoryScene};
pub use error::{Error, Result};
pub use eval::{ade, best_of_k_eval, constant_velocity_baseline, density_map, fde, sampling_sweep, DensityGrid, MetricReport};
pub use model::{ModelConfig, ModelParams, PredictionSample};
pub use training::{train, TrainingLog};
