//! Adversarial training: discriminators, losses, optimiser, toy data, the
//! training step and the mirror-symmetry probe.

mod adam;
mod dataset;
mod discriminator;
mod loss;
mod probe;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use dataset::{ToyConfig, ToyDataset, ToyScene};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use loss::{discriminator_loss, generator_loss, nonsaturating_losses, r1_penalty};
pub use probe::{flip_horizontal, mirror_score, symmetry_probe};
pub use trainer::{progressive_schedule, step_rng, Stage, StepLosses, TrainConfig, TrainState};
