//! Trainable layers, parameter storage and forward sessions.

mod layers;
mod params;
mod session;

pub use layers::{BatchNorm2d, Conv2d, Conv2dSpec, Dense, LayerSpec};
pub use params::{Init, ParamId, ParamRole, ParamStore};
pub use session::{Mode, Session};
