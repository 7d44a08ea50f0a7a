pub mod bench;
pub mod calibrate;
pub mod compare;
pub mod prune;
pub mod synth;

use std::str::FromStr;

/// Parses library enums that implement `FromStr` with the library error.
pub fn parse<T: FromStr<Err = headrouter::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: headrouter::Error| e.to_string())
}
