#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN-rejecting range checks

//! Egocentric field-of-view localization against reference imagery.

pub mod corpus;
pub mod error;
pub mod features;
pub mod gist;
pub mod imaging;
pub mod joint;
pub mod matching;
pub mod pipeline;
pub mod sensor;
pub mod synth;

pub use error::{Error, Result};
