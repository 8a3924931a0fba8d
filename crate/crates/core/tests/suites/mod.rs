//! Checks shared by the regular test targets and the acceptance report.
//! Each returns a one-line summary on success and the first violation on
//! failure.

#![allow(dead_code)]

pub type Check = Result<String, String>;

/// Fails the check with a formatted message unless `cond` holds.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

pub mod math;
pub mod pipeline;
pub mod repro;
