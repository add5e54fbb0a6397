pub mod diagnostics;
pub mod error;
pub mod integrate;
pub mod lyapunov;
pub mod model;
pub mod numeric;
pub mod qsd;
pub mod rng;
