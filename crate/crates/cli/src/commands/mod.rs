pub mod estimate;
pub mod generate;
pub mod train;
pub mod verify;

use flopscale::ModelConfig;

/// Model used by `train` and `generate` when no dimensions are given.
pub fn demo_model() -> ModelConfig {
    ModelConfig::new(32, 32, 32, 4, 2).expect("valid demo config")
}

/// Model used by `verify` when no dimensions are given.
pub fn verify_model() -> ModelConfig {
    ModelConfig::new(8, 11, 8, 2, 2).expect("valid verify config")
}
