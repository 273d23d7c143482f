//! Dataset sources with pass accounting, one-pass weighted sampling, file
//! formats and synthetic instances.

pub mod io;
pub mod reservoir;
pub mod source;
pub mod synth;

pub use io::{read_points, write_points, FileFormat};
pub use reservoir::{weighted_reservoir_sample, ReservoirBank, ReservoirDraw};
pub use source::{AccessMode, DatasetSource, PassCountError, PassEntry, PassLog};
pub use synth::{generate_synthetic, GroundTruth, SynthParams};
