use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gridmor_core::Result;
use serde::Serialize;

#[derive(Serialize)]
struct Sidecar<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a T,
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

/// Writes `text` to `out` plus a `<out>.config.json` echo of the resolved
/// config, or to stdout when `out` is `None`.
pub fn emit<T: Serialize>(out: Option<&Path>, text: &str, command: &'static str, config: &T) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            let sidecar = Sidecar {
                tool: "gridmor",
                version: env!("CARGO_PKG_VERSION"),
                command,
                config,
            };
            let mut json = serde_json::to_string_pretty(&sidecar)?;
            json.push('\n');
            fs::write(sidecar_path(path), json)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}
