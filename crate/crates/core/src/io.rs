//! Text formats.
//!
//! * Dataset CSV: header `c1,...,cd,value`, one sample per row.
//! * Query CSV: the same coordinate columns; a trailing `value` column is
//!   ignored if present.
//! * Prediction CSV: `c1,...,cd,prediction,conditional_std`; an undefined
//!   standard deviation is written as `NaN`.
//! * Key-value files (model card, config, dataset sidecar): one `key = value`
//!   per line, `#` starts a comment.
//!
//! Floats are written with 17 significant digits, which reads back exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, SliError};
use crate::geometry::PointSet;
use crate::kernels::KernelSpec;
use crate::precision::SliParams;
use crate::predictor::PredictionResult;
use crate::scalar::Scalar;

/// 17 significant digits in scientific notation.
pub fn fmt_float<T: Scalar>(v: T) -> String {
    format!("{v:.16e}")
}

fn parse_float<T: Scalar>(s: &str, line: usize) -> Result<T> {
    let t = s.trim();
    let v: f64 = t.parse().map_err(|_| SliError::Parse {
        line,
        msg: format!("not a number: {t:?}"),
    })?;
    Ok(T::of(v))
}

fn coordinate_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("c{i}")).collect()
}

/// Reads a dataset CSV. The last column must be named `value`; every column
/// before it is a coordinate.
pub fn read_dataset<T: Scalar, R: Read>(reader: R) -> Result<(PointSet<T>, Vec<T>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols = header.len();
    if cols < 2 || header.get(cols - 1) != Some("value") {
        return Err(SliError::Parse {
            line: 1,
            msg: "header must be c1,...,cd,value".into(),
        });
    }
    let d = cols - 1;
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        if rec.len() != cols {
            return Err(SliError::Parse {
                line,
                msg: format!("expected {cols} fields, found {}", rec.len()),
            });
        }
        for f in rec.iter().take(d) {
            coords.push(parse_float(f, line)?);
        }
        values.push(parse_float(&rec[d], line)?);
    }
    Ok((PointSet::new(d, coords)?, values))
}

/// Reads query coordinates. A trailing `value` column is dropped.
pub fn read_points<T: Scalar, R: Read>(reader: R) -> Result<PointSet<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut d = header.len();
    if d > 0 && header.get(d - 1) == Some("value") {
        d -= 1;
    }
    if d == 0 {
        return Err(SliError::Parse {
            line: 1,
            msg: "no coordinate columns".into(),
        });
    }
    let mut coords = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(SliError::Parse {
                line: r + 2,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for f in rec.iter().take(d) {
            coords.push(parse_float(f, r + 2)?);
        }
    }
    PointSet::new(d, coords)
}

pub fn write_dataset<T: Scalar, W: Write>(writer: W, points: &PointSet<T>, values: &[T]) -> Result<()> {
    if values.len() != points.len() {
        return Err(SliError::DimensionMismatch {
            expected: points.len(),
            found: values.len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = coordinate_header(points.dim());
    header.push("value".into());
    w.write_record(&header)?;
    for (p, &v) in points.iter().zip(values) {
        let mut row: Vec<String> = p.iter().map(|&c| fmt_float(c)).collect();
        row.push(fmt_float(v));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions<T: Scalar, W: Write>(
    writer: W,
    points: &PointSet<T>,
    result: &PredictionResult<T>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = coordinate_header(points.dim());
    header.push("prediction".into());
    header.push("conditional_std".into());
    w.write_record(&header)?;
    for (i, p) in points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|&c| fmt_float(c)).collect();
        row.push(fmt_float(result.predictions[i]));
        row.push(result.conditional_std[i].map_or_else(|| "NaN".to_string(), fmt_float));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Two columns, `predicted,observed`.
pub fn write_pairs<T: Scalar, W: Write>(writer: W, predicted: &[T], observed: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["predicted", "observed"])?;
    for (&p, &o) in predicted.iter().zip(observed) {
        w.write_record([fmt_float(p), fmt_float(o)])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// repeated keys are an error.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| SliError::Parse {
            line: n + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(SliError::Parse {
                line: n + 1,
                msg: "empty key".into(),
            });
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(SliError::Parse {
                line: n + 1,
                msg: format!("duplicate key {k:?}"),
            });
        }
    }
    Ok(out)
}

pub fn write_key_values<W: Write>(mut w: W, pairs: &[(String, String)]) -> Result<()> {
    for (k, v) in pairs {
        writeln!(w, "{k} = {v}")?;
    }
    Ok(())
}

pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_key_values(&std::fs::read_to_string(path)?)
}

/// Fitted model parameters plus the provenance needed to reload them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCard<T> {
    pub kernel: KernelSpec,
    pub k: usize,
    pub mu: T,
    pub alpha1: T,
    pub alpha2: T,
    pub lambda: T,
    pub m_x: T,
    pub n: usize,
    pub d: usize,
    pub cost: T,
    pub converged: bool,
    pub seed: u64,
    pub generator: String,
}

impl<T: Scalar> ModelCard<T> {
    pub fn params(&self) -> SliParams<T> {
        SliParams {
            m_x: self.m_x,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            lambda: self.lambda,
            mu: self.mu,
            k: self.k,
            kernel: self.kernel,
        }
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("kernel", self.kernel.to_string()),
            ("k", self.k.to_string()),
            ("mu", fmt_float(self.mu)),
            ("alpha1", fmt_float(self.alpha1)),
            ("alpha2", fmt_float(self.alpha2)),
            ("lambda", fmt_float(self.lambda)),
            ("m_x", fmt_float(self.m_x)),
            ("N", self.n.to_string()),
            ("d", self.d.to_string()),
            ("cost", fmt_float(self.cost)),
            ("converged", self.converged.to_string()),
            ("seed", self.seed.to_string()),
            ("generator", self.generator.clone()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        write_key_values(w, &self.to_pairs())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |key: &str| -> Result<&String> {
            kv.get(key).ok_or_else(|| SliError::Parse {
                line: 0,
                msg: format!("model card lacks {key:?}"),
            })
        };
        let float = |key: &str| -> Result<T> {
            parse_float(get(key)?, 0).map_err(|_| SliError::Parse {
                line: 0,
                msg: format!("model card field {key:?} is not a number"),
            })
        };
        let int = |key: &str| -> Result<u64> {
            get(key)?.parse().map_err(|_| SliError::Parse {
                line: 0,
                msg: format!("model card field {key:?} is not an integer"),
            })
        };
        let kernel: KernelSpec = get("kernel")?.parse()?;
        let converged = match get("converged")?.as_str() {
            "true" => true,
            "false" => false,
            other => {
                return Err(SliError::Parse {
                    line: 0,
                    msg: format!("converged must be true or false, got {other:?}"),
                })
            }
        };
        let card = ModelCard {
            kernel,
            k: int("k")? as usize,
            mu: float("mu")?,
            alpha1: float("alpha1")?,
            alpha2: float("alpha2")?,
            lambda: float("lambda")?,
            m_x: float("m_x")?,
            n: int("N")? as usize,
            d: int("d")? as usize,
            cost: float("cost")?,
            converged,
            seed: int("seed")?,
            generator: kv.get("generator").cloned().unwrap_or_default(),
        };
        card.params().validate()?;
        Ok(card)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
