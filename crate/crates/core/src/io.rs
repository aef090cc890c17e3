//! JSON documents for paths and exact float formatting.
//!
//! Every real is written as `{:.16e}`, seventeen significant digits, so a
//! written document reads back bit for bit.

use std::io::{self, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::model::{DiscretePath, SystemParams};

/// Pretty JSON formatter printing floats with 17 significant digits.
pub struct ExactFormatter<'a>(PrettyFormatter<'a>);

impl Default for ExactFormatter<'_> {
    fn default() -> Self {
        Self(PrettyFormatter::new())
    }
}

impl Formatter for ExactFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serialize `value` as pretty JSON with exact floats.
pub fn to_writer_exact<W: Write, T: Serialize + ?Sized>(out: W, value: &T) -> Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(out, ExactFormatter::default());
    value.serialize(&mut ser)?;
    Ok(())
}

pub fn to_string_exact<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    to_writer_exact(&mut buf, value)?;
    Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
}

/// Deserialize JSON, reporting the path to the offending field together with
/// the line and column.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema {
            path,
            message: e.into_inner().to_string(),
        }
    })
}

fn default_alpha() -> f64 {
    1.0
}

/// On-disk form of a path: `{masses, alpha, coupling?, times, positions}`
/// with one position row per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathDocument {
    pub masses: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
}

impl PathDocument {
    pub fn new(params: &SystemParams, path: &DiscretePath) -> Self {
        Self {
            masses: params.masses().to_vec(),
            alpha: params.alpha(),
            coupling: (params.coupling() != 1.0).then_some(params.coupling()),
            times: path.times().to_vec(),
            positions: path.nodes().map(<[f64]>::to_vec).collect(),
        }
    }

    /// Validated parameters (default tolerances) and path.
    pub fn into_parts(self) -> Result<(SystemParams, DiscretePath)> {
        let mut params = SystemParams::new(self.masses)?.with_alpha(self.alpha)?;
        if let Some(c) = self.coupling {
            params = params.with_coupling(c)?;
        }
        let path = DiscretePath::from_nodes(&params, self.times, &self.positions)?;
        Ok((params, path))
    }
}

/// Parse and validate a path document.
pub fn path_from_json(text: &str) -> Result<(SystemParams, DiscretePath)> {
    from_json_str::<PathDocument>(text)?.into_parts()
}

pub fn path_to_json(params: &SystemParams, path: &DiscretePath) -> Result<String> {
    to_string_exact(&PathDocument::new(params, path))
}

pub fn read_path(file: &std::path::Path) -> Result<(SystemParams, DiscretePath)> {
    path_from_json(&std::fs::read_to_string(file)?)
}

pub fn write_path(
    file: &std::path::Path,
    params: &SystemParams,
    path: &DiscretePath,
) -> Result<()> {
    std::fs::write(file, path_to_json(params, path)?)?;
    Ok(())
}
