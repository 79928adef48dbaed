//! Case file input and output: MATPOWER `.m`, the native JSON format, and the
//! switchable-branch sidecar.

mod matpower;

use std::path::Path;

use thiserror::Error;

pub use matpower::{col, parse_matpower, to_network, write_matpower, Matrix, RawCase, DEFAULT_ANGLE_LIMIT};

use crate::netmodel::Network;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("matrix {0} not found")]
    MissingMatrix(String),
    #[error("matrix {matrix}, row {row}: {message}")]
    Syntax {
        matrix: String,
        row: usize,
        message: String,
    },
    #[error("matrix {matrix}, row {row}: expected {expected} columns, found {found}")]
    Ragged {
        matrix: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("matrix {matrix} has {found} columns, at least {required} required")]
    Columns {
        matrix: String,
        found: usize,
        required: usize,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid case data: {0}")]
    Invalid(String),
    #[error("json error at {path}: {message}")]
    Json { path: String, message: String },
    #[error("switchable list line {line}: {message}")]
    Switchable { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parses the native JSON case format (see `data/case.schema.json`).
pub fn parse_json(text: &str) -> Result<Network, CaseError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|err| CaseError::Json {
        path: err.path().to_string(),
        message: err.inner().to_string(),
    })
}

pub fn serialize_json(network: &Network) -> String {
    serde_json::to_string_pretty(network).expect("network serializes")
}

/// Returns a copy whose switchable flags are set exactly on the listed
/// branches. The list holds one 0-based branch index per line; `#` starts a
/// comment.
pub fn load_switchable(network: &Network, text: &str) -> Result<Network, CaseError> {
    let mut flags = vec![false; network.branches.len()];
    for (k, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let idx: usize = content.parse().map_err(|_| CaseError::Switchable {
            line: k + 1,
            message: format!("'{content}' is not a branch index"),
        })?;
        if idx >= flags.len() {
            return Err(CaseError::Switchable {
                line: k + 1,
                message: format!(
                    "branch {idx} out of range (case has {} branches)",
                    flags.len()
                ),
            });
        }
        flags[idx] = true;
    }
    let mut net = network.clone();
    for (br, flag) in net.branches.iter_mut().zip(flags) {
        br.switchable = flag;
    }
    Ok(net)
}

/// Loads a case from disk, choosing the format by extension (`.json` is the
/// native format, anything else is read as MATPOWER).
pub fn load_case(path: &Path) -> Result<Network, CaseError> {
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if path.extension().is_some_and(|ext| ext == "json") {
        parse_json(&text)
    } else {
        to_network(&parse_matpower(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::fixtures::*;
    use crate::netmodel::BusKind;

    fn sample() -> Network {
        Network {
            base_mva: 100.0,
            buses: vec![bus(1, BusKind::Slack, 0.0), bus(2, BusKind::Pq, 0.5)],
            branches: (0..9).map(|_| line(1, 2, 0.01, 0.1, 0.0)).collect(),
            generators: vec![gen(1, 1.0, 10.0)],
        }
    }

    #[test]
    fn json_round_trip_keeps_switchable() {
        let mut net = sample();
        net.branches[3].switchable = false;
        let back = parse_json(&serialize_json(&net)).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn unknown_field_names_path() {
        let text = serialize_json(&sample()).replacen("\"gs\"", "\"gz\"", 1);
        let err = parse_json(&text).unwrap_err();
        match err {
            CaseError::Json { path, message } => {
                assert_eq!(path, "buses[0].gz");
                assert!(message.contains("gz"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn switchable_sidecar() {
        let net = sample();
        let none = load_switchable(&net, "").unwrap();
        assert!(none.branches.iter().all(|b| !b.switchable));
        let some = load_switchable(&net, "# header\n0\n3\n").unwrap();
        let on: Vec<usize> = (0..9).filter(|&k| some.branches[k].switchable).collect();
        assert_eq!(on, vec![0, 3]);
        assert!(matches!(
            load_switchable(&net, "99"),
            Err(CaseError::Switchable { line: 1, .. })
        ));
    }
}
