pub mod app;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod grid;
pub mod io;
pub mod lp;
pub mod par;
pub mod solver;
pub mod spectral;
pub mod sync;

pub use error::{Error, Result};
pub use grid::TorusGrid;
pub use spectral::{PhysicalField, Spectral, SpectralField, SpectralVelocity};
