//! File formats: the sparse sample text format, JSON model/bank documents,
//! and score/report files. All numeric output is locale-independent.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pseudo_samples::LabeledSample;

/// One line of the sparse sample format: a binary label or a class token.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleLabel {
    Binary(i8),
    Class(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSampleFile {
    pub dim: usize,
    pub samples: Vec<(SampleLabel, Vec<f64>)>,
}

impl SparseSampleFile {
    /// All samples as binary labeled samples; errors on class tokens.
    pub fn into_binary(self) -> Result<Vec<LabeledSample>> {
        self.samples
            .into_iter()
            .map(|(label, features)| match label {
                SampleLabel::Binary(l) => LabeledSample::new(features, l),
                SampleLabel::Class(token) => Err(Error::InvalidArgument(format!(
                    "expected binary labels (+1/-1), found class token {token:?}"
                ))),
            })
            .collect()
    }

    /// Group features by class token, preserving first-seen class order.
    /// Binary labels are treated as the tokens "+1" and "-1".
    pub fn into_classes(self) -> (Vec<String>, Vec<Vec<Vec<f64>>>) {
        let mut tokens: Vec<String> = Vec::new();
        let mut groups: Vec<Vec<Vec<f64>>> = Vec::new();
        for (label, features) in self.samples {
            let token = match label {
                SampleLabel::Binary(l) => {
                    if l > 0 {
                        "+1".to_string()
                    } else {
                        "-1".to_string()
                    }
                }
                SampleLabel::Class(t) => t,
            };
            match tokens.iter().position(|t| *t == token) {
                Some(idx) => groups[idx].push(features),
                None => {
                    tokens.push(token);
                    groups.push(vec![features]);
                }
            }
        }
        (tokens, groups)
    }
}

/// Read the sparse format: a "#dim <d>" header, then one sample per line,
/// "<label> <index>:<value> ..." with 1-based ascending indices.
pub fn read_sparse_samples(path: impl AsRef<Path>) -> Result<SparseSampleFile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim: Option<usize> = None;
    let mut samples = Vec::new();

    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#dim") {
            let d: usize = rest.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad dimension header {line:?}"),
            })?;
            if d == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "dimension must be positive".into(),
                });
            }
            dim = Some(d);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let d = dim.ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "missing \"#dim <d>\" header before samples".into(),
        })?;
        let mut fields = line.split_whitespace();
        let label_field = fields.next().unwrap();
        let label = match label_field {
            "+1" | "1" => SampleLabel::Binary(1),
            "-1" => SampleLabel::Binary(-1),
            token if !token.contains(':') => SampleLabel::Class(token.to_string()),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "line must start with a label".into(),
                })
            }
        };
        let mut features = vec![0.0; d];
        let mut last_index = 0usize;
        for field in fields {
            let (index, value) = field.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected <index>:<value>, got {field:?}"),
            })?;
            let index: usize = index.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad index {index:?}"),
            })?;
            let value: f64 = value.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad value {value:?}"),
            })?;
            if index == 0 || index > d {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("index {index} outside 1..={d}"),
                });
            }
            if index <= last_index {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("indices must be strictly ascending, got {index} after {last_index}"),
                });
            }
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("value at line {lineno}")));
            }
            last_index = index;
            features[index - 1] = value;
        }
        samples.push((label, features));
    }
    let dim = dim.ok_or_else(|| Error::Parse {
        line: 1,
        msg: "missing \"#dim <d>\" header".into(),
    })?;
    Ok(SparseSampleFile { dim, samples })
}

fn format_number(v: f64) -> String {
    // shortest representation that round-trips bit-exactly
    format!("{v}")
}

pub fn write_sparse_samples(
    path: impl AsRef<Path>,
    dim: usize,
    samples: &[(SampleLabel, Vec<f64>)],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("#dim {dim}\n"));
    for (label, features) in samples {
        match label {
            SampleLabel::Binary(1) => out.push_str("+1"),
            SampleLabel::Binary(_) => out.push_str("-1"),
            SampleLabel::Class(token) => out.push_str(token),
        }
        for (i, v) in features.iter().enumerate() {
            if *v != 0.0 {
                out.push_str(&format!(" {}:{}", i + 1, format_number(*v)));
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_binary_samples(path: impl AsRef<Path>, dim: usize, samples: &[LabeledSample]) -> Result<()> {
    let rows: Vec<(SampleLabel, Vec<f64>)> = samples
        .iter()
        .map(|s| (SampleLabel::Binary(s.label), s.features.clone()))
        .collect();
    write_sparse_samples(path, dim, &rows)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// One score per line.
pub fn write_scores(path: impl AsRef<Path>, scores: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    for s in scores {
        writeln!(file, "{}", format_number(*s)).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut scores = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        scores.push(line.parse::<f64>().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("bad score {line:?}"),
        })?);
    }
    Ok(scores)
}
