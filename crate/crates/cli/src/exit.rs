//! Process exit codes.

use agropath::Error;

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;
pub const MODEL_FILE: u8 = 4;
pub const TRAINING: u8 = 5;

pub fn code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::InvalidArgument(_) | Error::RegistryMismatch(_) => USAGE,
        Error::Data(_) | Error::Decode { .. } | Error::Degenerate(_) | Error::Csv(_) | Error::Io(_) => DATA,
        Error::Index(_) => DATA,
        Error::ModelFile(_) => MODEL_FILE,
        Error::NonFinite { .. } | Error::Shape(_) | Error::Layer { .. } => TRAINING,
        Error::Fold { source, .. } => code(source),
    }
}
