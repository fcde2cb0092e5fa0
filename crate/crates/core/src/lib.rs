pub mod ambiguity;
pub mod channel;
pub mod codec;
pub mod combinatorics;
pub mod error;
pub mod harness;
pub mod keyschedule;
pub mod params;
pub mod receiver;
pub mod waveform;

pub use error::{Error, Result};
