use alloc::string::String;
use core::fmt;

/// Failure classes shared by every operation.
///
/// `Format` covers malformed input data (bad counts, missing captions),
/// `Contract` covers violated preconditions between otherwise well-formed
/// values (mismatched sizes, empty regions where one is required).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    Format(String),
    Contract(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Contract(msg) => write!(f, "contract error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! contract {
    ($($arg:tt)*) => {
        $crate::Error::Contract(alloc::format!($($arg)*))
    };
}

macro_rules! format_err {
    ($($arg:tt)*) => {
        $crate::Error::Format(alloc::format!($($arg)*))
    };
}

pub(crate) use contract;
pub(crate) use format_err;
