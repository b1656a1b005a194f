pub mod conjtest;
pub mod cycledata;
pub mod error;
pub mod ffdyn;
pub mod groupcalc;
pub mod markov;
pub mod markovmap;
mod par;
pub mod treeperm;

pub use error::{Error, Result};
