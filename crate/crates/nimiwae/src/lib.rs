//! Importance-weighted autoencoder imputation for tabular data with
//! non-ignorably (MNAR) missing features.
//!
//! The crate trains an IWAE whose importance weights include a learned
//! model of the missingness mask (a "mask decoder"), which lets the
//! imputations account for selection effects in which entries went
//! missing. The ignorable variants (ELBO, IWAE, IMIWAE) are provided for
//! comparison, along with the data/mask simulators and the evaluation
//! metrics used to benchmark them.

pub mod adam;
pub mod bounds;
pub mod config;
pub mod dataio;
pub mod dist;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod impute;
pub mod math;
pub mod networks;
pub mod simulate;
pub mod tape;
pub mod train;

pub use error::Error;
pub type Result<T> = std::result::Result<T, Error>;
