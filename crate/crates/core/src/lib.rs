pub mod assoc;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kalman;
pub mod metrics;
pub mod simgen;
pub mod stroke;
pub mod tracker;
