//! A desk-scale 3D-aware image generator: a shallow FiLM-SIREN radiance field
//! renders per-pixel features, and a deep per-pixel network of modulated
//! fully connected layers turns them into RGB. Includes adversarial training
//! with partial gradient backpropagation, an auxiliary discriminator on the
//! radiance-field branch, positional-encoding distance analysis and
//! checkpoint-level model surgery.

pub mod autodiff;
pub mod bench;
pub mod camera;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod gan;
pub mod generator;
pub mod image;
pub mod inr;
pub mod nerf;
pub mod nn;
pub mod posenc;
pub mod render;
pub mod run;
pub mod surgery;
pub mod tensor;

pub use error::{Error, Result};
