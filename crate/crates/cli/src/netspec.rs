//! Network sources: a JSON file path or a `synth:` fixture URI.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use gridmor_core::{Error, PowerNetwork, Result, Topology};
use serde::{Serialize, Serializer};

/// `synth:<topology>:<n>[:seed<k>]` or a path to a network JSON file.
///
/// Topologies are `ring`, `complete` and `random(p)`.
#[derive(Debug, Clone, PartialEq)]
pub enum NetSource {
    File(PathBuf),
    Synth { topology: Topology, n: usize, seed: u64 },
}

impl NetSource {
    pub fn load(&self) -> Result<PowerNetwork> {
        match self {
            NetSource::File(path) => PowerNetwork::from_path(path),
            NetSource::Synth { topology, n, seed } => PowerNetwork::synthetic(*n, *topology, *seed),
        }
    }
}

fn parse_topology(s: &str) -> Result<Topology> {
    match s {
        "ring" => Ok(Topology::Ring),
        "complete" => Ok(Topology::Complete),
        _ => {
            let p = s
                .strip_prefix("random(")
                .and_then(|rest| rest.strip_suffix(')'))
                .or_else(|| s.strip_prefix("random="))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown topology '{s}'")))?;
            let p: f64 = p
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad edge probability '{p}'")))?;
            Ok(Topology::Random(p))
        }
    }
}

impl FromStr for NetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("synth:") else {
            return Ok(NetSource::File(PathBuf::from(s)));
        };
        let parts: Vec<&str> = rest.split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(Error::InvalidArgument(format!(
                "expected synth:<topology>:<n>[:seed<k>], got '{s}'"
            )));
        }
        let topology = parse_topology(parts[0])?;
        let n = parts[1]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad node count '{}'", parts[1])))?;
        let seed = match parts.get(2) {
            None => 0,
            Some(tok) => {
                let digits = tok.strip_prefix("seed").unwrap_or(tok);
                digits
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad seed '{tok}'")))?
            }
        };
        Ok(NetSource::Synth { topology, n, seed })
    }
}

impl fmt::Display for NetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetSource::File(path) => write!(f, "{}", path.display()),
            NetSource::Synth { topology, n, seed } => {
                let topo = match topology {
                    Topology::Ring => "ring".to_string(),
                    Topology::Complete => "complete".to_string(),
                    Topology::Random(p) => format!("random({p})"),
                };
                write!(f, "synth:{topo}:{n}:seed{seed}")
            }
        }
    }
}

impl Serialize for NetSource {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_synth_uris() {
        let src: NetSource = "synth:ring:10:seed7".parse().unwrap();
        assert_eq!(src, NetSource::Synth { topology: Topology::Ring, n: 10, seed: 7 });
        let src: NetSource = "synth:random(0.05):39:1".parse().unwrap();
        assert_eq!(src, NetSource::Synth { topology: Topology::Random(0.05), n: 39, seed: 1 });
        assert_eq!(src.to_string(), "synth:random(0.05):39:seed1");
        let src: NetSource = "synth:complete:4".parse().unwrap();
        assert_eq!(src, NetSource::Synth { topology: Topology::Complete, n: 4, seed: 0 });
    }

    #[test]
    fn rejects_malformed_uris() {
        for bad in ["synth:ring", "synth:star:4", "synth:ring:x", "synth:ring:4:seedz", "synth:random(a):4"] {
            assert!(bad.parse::<NetSource>().is_err(), "{bad}");
        }
    }

    #[test]
    fn plain_strings_are_paths() {
        let src: NetSource = "case39.json".parse().unwrap();
        assert_eq!(src, NetSource::File(PathBuf::from("case39.json")));
    }

    #[test]
    fn synth_loads_deterministically() {
        let src: NetSource = "synth:ring:6:seed3".parse().unwrap();
        assert_eq!(src.load().unwrap(), src.load().unwrap());
    }
}
