//! Learned edit-distance surrogate, alternating post-tuning of a task
//! model through it, and ramp filtering of poorly approximated samples.

mod net;
mod task;
mod train;

pub use net::{check_simplex, surrogate_value, surrogate_values_node, SurrogateNet, SurrogateShape};
pub use task::{
    decode_greedy, one_hot, proxy_loss_node, split_rows, stack_one_hot, total_edit_distance_on, StringSample,
    TaskModel,
};
pub use train::{
    alternate_train, feds_weight, fit_surrogate_step, pretrain_proxy, surrogate_mse, synthetic_triplets,
    AlternateOptions, History, RampFilter, Schedule, Triplet,
};
