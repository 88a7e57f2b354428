//! The two-layer generator, its Jacobian and activation constants.

mod activation;
pub mod checkpoint;
mod net;

pub use activation::{
    activation_constants, activation_constants_with_order, ActivationConstants, ActivationKind,
};
pub use checkpoint::{load_network, save_network};
pub use net::{Layers, ParamLayout, ParamVector, TwoLayerNet, UNIT_NORM_TOL};
pub(crate) use net::jacobian_gram_from_hidden;
