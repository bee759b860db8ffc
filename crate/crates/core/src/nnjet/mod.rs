//! Sine MLPs, derivative jets, flat parameter vectors and model files.

pub mod io;
pub mod jet;
pub mod mlp;
pub mod params;

pub use jet::{rhs_eval_with_grads, state_forward, state_jet, InputScaling, Jet, JetOrder, Tape};
pub use mlp::{layer_sizes, Activation, Mlp, SirenInit};
pub use params::{ParamKind, ParamLayout, ParamSlot, ParamVector};
