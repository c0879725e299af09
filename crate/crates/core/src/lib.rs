//! Password authentication backed by per-password neural network training.
//!
//! A password is encoded as 7 bits per character and a small
//! input→hidden→output sigmoid network is trained until it maps those bits
//! to 0.5. The trained weights together with the activations they produce
//! form a [`Template`](template::Template); a candidate authenticates only if
//! it reproduces every stored activation.
//!
//! The numeric core ([`network`], [`trainer`], [`template`]) is generic over
//! [`Scalar`] (`f32` or `f64`). Persistence in [`vault`] is binary64 only.

pub mod codec;
pub mod error;
pub mod experiments;
pub mod guard;
pub mod network;
pub mod scalar;
pub mod template;
pub mod trainer;
pub mod vault;

pub use codec::{encode_password, hidden_count, BitVector};
pub use error::{Error, Result};
pub use guard::{evaluate_attempt, layer_of_failure, Credential, GuardConfig, GuardDecision, GuardState, Layer};
pub use network::{forward, init_weights, sigmoid, sigmoid_prime};
pub use scalar::Scalar;
pub use template::{enroll, PasswordCheck, RejectionStage, MATCH_TOLERANCE};
pub use trainer::{compute_gradient, train};
pub use vault::{load_profile, save_profile, Profile, Role};

pub type Architecture = network::Architecture<f64>;
pub type WeightSet = network::WeightSet<f64>;
pub type ActivationRecord = network::ActivationRecord<f64>;
pub type TrainingConfig = trainer::TrainingConfig<f64>;
pub type LearningCurve = trainer::LearningCurve<f64>;
pub type WeightGradient = trainer::WeightGradient<f64>;
pub type Template = template::Template<f64>;
pub type VerifyOutcome = template::VerifyOutcome<f64>;

pub type ArchitectureF32 = network::Architecture<f32>;
pub type WeightSetF32 = network::WeightSet<f32>;
pub type TrainingConfigF32 = trainer::TrainingConfig<f32>;
pub type TemplateF32 = template::Template<f32>;
pub type VerifyOutcomeF32 = template::VerifyOutcome<f32>;
