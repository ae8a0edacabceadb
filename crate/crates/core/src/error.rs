use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A hyper-parameter or configuration value is invalid.
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown id `{0}`")]
    Lookup(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

macro_rules! domain {
    ($($arg:tt)*) => { $crate::Error::Domain(alloc::format!($($arg)*)) };
}

macro_rules! config {
    ($($arg:tt)*) => { $crate::Error::Config(alloc::format!($($arg)*)) };
}

pub(crate) use {config, domain};
