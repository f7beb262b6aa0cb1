//! File formats: network TOML documents, network lists, quantities with
//! convenience units, and CSV output.
//!
//! Network file schema (SI units only):
//!
//! ```toml
//! format_version = 1
//! label = "diamond"      # optional
//! nodes = [1, 2, 3, 4]   # optional; fixes node order
//!
//! [[pipes]]
//! id = 1
//! from = 1
//! to = 2
//! length_m = 0.05
//! radius_m = 0.001
//! ```

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, NetworkError, NetworkSpec, NodeId, Pipe, PipeId};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{origin}:{line}: {msg}")]
    Syntax {
        origin: String,
        line: usize,
        msg: String,
    },
    #[error("{origin}: unsupported format_version {found} (expected {NETWORK_FORMAT_VERSION})")]
    Version { origin: String, found: u32 },
    #[error("{origin}{}: {source}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Invalid {
        origin: String,
        line: Option<usize>,
        source: NetworkError,
    },
    #[error("cannot parse quantity {text:?}: {msg}")]
    Quantity { text: String, msg: String },
    #[error(transparent)]
    Write(#[from] std::io::Error),
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn syntax(origin: &str, text: &str, err: toml::de::Error) -> IoError {
    IoError::Syntax {
        origin: origin.into(),
        line: err.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        msg: err.message().trim().to_string(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipeRecord {
    id: u32,
    from: u32,
    to: u32,
    length_m: f64,
    radius_m: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDocument {
    format_version: u32,
    label: Option<String>,
    #[serde(default)]
    nodes: Vec<u32>,
    pipes: Vec<toml::Spanned<PipeRecord>>,
}

#[derive(Serialize)]
struct NetworkOut<'a> {
    format_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    nodes: Vec<u32>,
    pipes: Vec<PipeRecord>,
}

fn pipe_of(err: &NetworkError) -> Option<PipeId> {
    match err {
        NetworkError::DuplicatePipe(p)
        | NetworkError::SelfLoop(p)
        | NetworkError::NonPositiveGeometry { pipe: p, .. } => Some(*p),
        _ => None,
    }
}

/// Parses and validates a network document. `origin` names the source in
/// error messages.
pub fn parse_network(text: &str, origin: &str) -> Result<Network, IoError> {
    let doc: NetworkDocument = toml::from_str(text).map_err(|e| syntax(origin, text, e))?;
    if doc.format_version != NETWORK_FORMAT_VERSION {
        return Err(IoError::Version {
            origin: origin.into(),
            found: doc.format_version,
        });
    }
    let lines: Vec<(PipeId, usize)> = doc
        .pipes
        .iter()
        .map(|p| (PipeId(p.get_ref().id), line_of(text, p.span().start)))
        .collect();
    let spec = NetworkSpec {
        label: doc.label,
        nodes: doc.nodes.into_iter().map(NodeId).collect(),
        pipes: doc
            .pipes
            .into_iter()
            .map(|p| {
                let r = p.into_inner();
                Pipe {
                    id: PipeId(r.id),
                    from: NodeId(r.from),
                    to: NodeId(r.to),
                    length: r.length_m,
                    radius: r.radius_m,
                }
            })
            .collect(),
    };
    Network::build(spec).map_err(|source| {
        let line = pipe_of(&source).and_then(|id| {
            // report the last occurrence so duplicates point at the repeat
            lines.iter().rev().find(|(p, _)| *p == id).map(|(_, l)| *l)
        });
        IoError::Invalid {
            origin: origin.into(),
            line,
            source,
        }
    })
}

pub fn read_network(path: &FsPath) -> Result<Network, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.into(),
        source,
    })?;
    parse_network(&text, &path.display().to_string())
}

/// Serializes a network; parsing the result yields an identical network.
pub fn network_to_toml(net: &Network) -> String {
    let doc = NetworkOut {
        format_version: NETWORK_FORMAT_VERSION,
        label: net.label(),
        nodes: net.nodes().iter().map(|n| n.id.0).collect(),
        pipes: net
            .pipes()
            .iter()
            .map(|p| PipeRecord {
                id: p.id.0,
                from: p.from.0,
                to: p.to.0,
                length_m: p.length,
                radius_m: p.radius,
            })
            .collect(),
    };
    toml::to_string(&doc).expect("network documents always serialize")
}

/// Network list for batch runs:
///
/// ```toml
/// format_version = 1
/// [[networks]]
/// label = "c1-0"
/// file = "c1-0.toml"   # relative to the list file
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkList {
    pub format_version: u32,
    pub networks: Vec<NetworkEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkEntry {
    pub label: String,
    pub file: PathBuf,
}

pub fn read_network_list(path: &FsPath) -> Result<NetworkList, IoError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.into(),
        source,
    })?;
    let mut list: NetworkList = toml::from_str(&text).map_err(|e| syntax(&origin, &text, e))?;
    if list.format_version != NETWORK_FORMAT_VERSION {
        return Err(IoError::Version {
            origin,
            found: list.format_version,
        });
    }
    let base = path.parent().unwrap_or(FsPath::new(""));
    for entry in &mut list.networks {
        if entry.file.is_relative() {
            entry.file = base.join(&entry.file);
        }
    }
    Ok(list)
}

/// Parses a number with an optional unit suffix into SI units. Accepted
/// suffixes: `m`, `cm`, `mm`, `um`, `nm` (lengths); `s`, `ms` (times);
/// `m3/s`, `mL/min`, `ml/min`, `uL/min` (flow rates); `K`.
pub fn parse_quantity(text: &str) -> Result<f64, IoError> {
    let err = |msg: &str| IoError::Quantity {
        text: text.into(),
        msg: msg.into(),
    };
    let t = text.trim();
    let split = t
        .char_indices()
        .find(|&(i, c)| {
            c.is_ascii_alphabetic()
                && !((c == 'e' || c == 'E')
                    && t[i + 1..]
                        .chars()
                        .next()
                        .is_some_and(|n| n.is_ascii_digit() || n == '-' || n == '+'))
        })
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num.trim().parse().map_err(|_| err("not a number"))?;
    let factor = match unit.trim() {
        "" | "m" | "s" | "m3/s" | "K" => 1.0,
        "cm" => 1e-2,
        "mm" => 1e-3,
        "um" => 1e-6,
        "nm" => 1e-9,
        "ms" => 1e-3,
        "mL/min" | "ml/min" => 1e-6 / 60.0,
        "uL/min" | "ul/min" => 1e-9 / 60.0,
        other => return Err(err(&format!("unknown unit {other:?}"))),
    };
    Ok(value * factor)
}

/// Comma-separated writer with a fixed header and full-precision
/// scientific notation for numbers.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| num(v)).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, w: impl Write) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush()
    }
}

impl std::fmt::Display for CsvTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|_| std::fmt::Error)?;
        f.write_str(std::str::from_utf8(&buf).map_err(|_| std::fmt::Error)?)
    }
}

/// Shortest round-trip scientific notation.
pub fn num(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v:e}").expect("formatting to a string");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::*;

    const DIAMOND: &str = r#"
format_version = 1
label = "diamond"

[[pipes]]
id = 1
from = 1
to = 2
length_m = 0.05
radius_m = 0.001

[[pipes]]
id = 2
from = 2
to = 3
length_m = 0.05
radius_m = 0.001

[[pipes]]
id = 3
from = 2
to = 3
length_m = 0.05
radius_m = 0.0008

[[pipes]]
id = 4
from = 3
to = 4
length_m = 0.05
radius_m = 0.001
"#;

    #[test]
    fn parses_diamond() {
        let net = parse_network(DIAMOND, "mem").unwrap();
        assert_eq!(net.label(), Some("diamond"));
        assert_eq!(net.pipe_count(), 4);
        assert_eq!(net.junction_count(), 1);
    }

    #[test]
    fn round_trip() {
        for net in [
            parse_network(DIAMOND, "mem").unwrap(),
            single(),
            diamond(1e-3, 1.234_567_890_123e-4),
        ] {
            let text = network_to_toml(&net);
            let again = parse_network(&text, "mem").unwrap();
            assert_eq!(again, net);
            assert_eq!(network_to_toml(&again), text);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = DIAMOND.replace(
            "length_m = 0.05\nradius_m = 0.0008",
            "length_m = -0.05\nradius_m = 0.0008",
        );
        match parse_network(&bad, "mem").unwrap_err() {
            IoError::Invalid { line, source, .. } => {
                assert_eq!(line, Some(line_of(&bad, bad.find("id = 3").unwrap()) - 1));
                assert!(matches!(source, NetworkError::NonPositiveGeometry { .. }));
            }
            e => panic!("{e}"),
        }
        let bad = DIAMOND.replace("radius_m = 0.0008", "radius_m = \"thin\"");
        match parse_network(&bad, "mem").unwrap_err() {
            IoError::Syntax { line, .. } => {
                assert_eq!(line, line_of(&bad, bad.find("\"thin\"").unwrap()))
            }
            e => panic!("{e}"),
        }
        let bad = DIAMOND.replace("format_version = 1", "format_version = 2");
        assert!(matches!(
            parse_network(&bad, "mem"),
            Err(IoError::Version { found: 2, .. })
        ));
        let cyclic = DIAMOND.replace("from = 3\nto = 4", "from = 3\nto = 1");
        assert!(matches!(
            parse_network(&cyclic, "mem"),
            Err(IoError::Invalid { .. })
        ));
    }

    #[test]
    fn quantities() {
        assert_eq!(parse_quantity("5cm").unwrap(), 0.05);
        assert_eq!(parse_quantity("0.05").unwrap(), 0.05);
        assert_eq!(parse_quantity("2.5e-3 m").unwrap(), 2.5e-3);
        assert!((parse_quantity("10mL/min").unwrap() - 1.6666666666666667e-7).abs() < 1e-22);
        assert!((parse_quantity("24.5nm").unwrap() - 24.5e-9).abs() < 1e-24);
        assert!(parse_quantity("3 furlongs").is_err());
        assert!(parse_quantity("cm").is_err());
    }

    #[test]
    fn csv_layout() {
        let mut t = CsvTable::new(["a", "b"]);
        t.push_numbers(&[1.0, 0.1 + 0.2]);
        let s = t.to_string();
        assert_eq!(s, "a,b\n1e0,3.0000000000000004e-1\n");
        let back: f64 = s
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(back, 0.1 + 0.2);
    }
}
