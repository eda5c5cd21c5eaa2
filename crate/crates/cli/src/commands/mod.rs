pub mod ccf;
pub mod derive;
pub mod deseason;
pub mod fit;
pub mod predict;
pub mod select;
pub mod tipping;

use serde::de::DeserializeOwned;

/// Parses a flag value with the same spelling the config file uses, so
/// `--boundary ends-before` and `boundary = "ends-before"` agree.
pub fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

pub fn print_written(paths: &[std::path::PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}
