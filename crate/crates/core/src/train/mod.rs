//! Backpropagation, SGD and the character-level demo.

mod backward;
mod corpus;
mod demo;
mod gradcheck;

pub use backward::{
    backward, backward_into, loss_all_positions, loss_and_gradients, loss_and_logit_grad, sgd_step,
    GradientSet,
};
pub use corpus::{CharVocab, DEMO_CORPUS};
pub use demo::{train_demo, train_on_text, TrainOutcome, TrainingConfig};
pub use gradcheck::{
    central_difference, grad_check, grad_check_params, probe_tokens, relative_error,
    GradCheckEntry, GradCheckReport, DEFAULT_SAMPLES,
};
