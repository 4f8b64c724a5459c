//! Linear position encodings and their hierarchical combinations.
//!
//! A hierarchical position (an [`Ssv`] or a [`Tsv`]) is encoded by encoding
//! each of its components with a linear method and combining the resulting
//! vectors by sum, mean or concatenation.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId};
use crate::corpus::{Ssv, Tsv};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeMethod {
    /// Fixed sinusoids, no parameters.
    Sin,
    /// Learned lookup table.
    La,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    Sum,
    Mean,
    Concat,
}

/// A method/mode pair such as `la-sum`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EncodingSetting {
    pub method: PeMethod,
    pub mode: CombineMode,
}

impl EncodingSetting {
    pub const ALL: [EncodingSetting; 6] = [
        EncodingSetting::new(PeMethod::Sin, CombineMode::Sum),
        EncodingSetting::new(PeMethod::Sin, CombineMode::Mean),
        EncodingSetting::new(PeMethod::Sin, CombineMode::Concat),
        EncodingSetting::new(PeMethod::La, CombineMode::Sum),
        EncodingSetting::new(PeMethod::La, CombineMode::Mean),
        EncodingSetting::new(PeMethod::La, CombineMode::Concat),
    ];

    pub const fn new(method: PeMethod, mode: CombineMode) -> Self {
        EncodingSetting { method, mode }
    }
}

impl fmt::Display for EncodingSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let method = match self.method {
            PeMethod::Sin => "sin",
            PeMethod::La => "la",
        };
        let mode = match self.mode {
            CombineMode::Sum => "sum",
            CombineMode::Mean => "mean",
            CombineMode::Concat => "concat",
        };
        write!(f, "{method}-{mode}")
    }
}

impl FromStr for EncodingSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (method, mode) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("encoding setting {s:?} is not <method>-<mode>")))?;
        let method = match method {
            "sin" => PeMethod::Sin,
            "la" => PeMethod::La,
            other => return Err(Error::Config(format!("unknown encoding method {other:?}"))),
        };
        let mode = match mode {
            "sum" => CombineMode::Sum,
            "mean" => CombineMode::Mean,
            "concat" => CombineMode::Concat,
            other => return Err(Error::Config(format!("unknown combination mode {other:?}"))),
        };
        Ok(EncodingSetting { method, mode })
    }
}

impl TryFrom<String> for EncodingSetting {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EncodingSetting> for String {
    fn from(s: EncodingSetting) -> String {
        s.to_string()
    }
}

/// Which structure signals are added to the sentence (and token)
/// representations, and how hierarchical positions are encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingConfig {
    pub setting: EncodingSetting,
    pub d_model: usize,
    /// Rows of every learned position table (hierarchy levels and sPE).
    pub max_positions: usize,
    #[serde(default = "default_true")]
    pub inject_she: bool,
    #[serde(default)]
    pub inject_ste: bool,
    #[serde(default)]
    pub classified_ste: bool,
    #[serde(default)]
    pub inject_spe: bool,
    #[serde(default)]
    pub inject_the: bool,
    /// Standard deviation of the normal initializer for learned tables.
    #[serde(default = "default_init_std")]
    pub la_init_std: f64,
}

fn default_true() -> bool {
    true
}

fn default_init_std() -> f64 {
    0.02
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            setting: EncodingSetting::new(PeMethod::La, CombineMode::Sum),
            d_model: 64,
            max_positions: 128,
            inject_she: true,
            inject_ste: false,
            classified_ste: false,
            inject_spe: false,
            inject_the: false,
            la_init_std: 0.02,
        }
    }
}

impl EncodingConfig {
    /// Configuration with every injection disabled.
    pub fn baseline(d_model: usize, max_positions: usize) -> Self {
        EncodingConfig {
            d_model,
            max_positions,
            inject_she: false,
            ..Default::default()
        }
    }

    pub fn method(&self) -> PeMethod {
        self.setting.method
    }

    pub fn mode(&self) -> CombineMode {
        self.setting.mode
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model < 2 {
            return Err(Error::Dimension(format!("d_model must be at least 2, got {}", self.d_model)));
        }
        if self.max_positions == 0 {
            return Err(Error::Config("max_positions must be positive".into()));
        }
        if self.inject_she {
            component_dim(self.d_model, self.mode(), 2)?;
        }
        if self.inject_the {
            component_dim(self.d_model, self.mode(), 3)?;
        }
        if self.classified_ste && !self.inject_ste {
            return Err(Error::Config("classified_ste requires inject_ste".into()));
        }
        Ok(())
    }
}

/// Width of each component encoding for a hierarchical position of the given
/// arity.
pub fn component_dim(d: usize, mode: CombineMode, arity: usize) -> Result<usize> {
    match mode {
        CombineMode::Sum | CombineMode::Mean => Ok(d),
        CombineMode::Concat => {
            if !d.is_multiple_of(arity) {
                Err(Error::Dimension(format!(
                    "concat needs d_model divisible by {arity}, got {d}"
                )))
            } else if d / arity < 2 {
                Err(Error::Dimension(format!("concat component width {} is below 2", d / arity)))
            } else {
                Ok(d / arity)
            }
        }
    }
}

/// Sinusoidal encoding: component `2i` is `sin(pos / 10000^(2i/d))`,
/// component `2i+1` the matching cosine.
pub fn sinusoid(pos: usize, d: usize) -> Array1<f64> {
    let p = pos as f64;
    Array1::from_shape_fn(d, |j| {
        let i2 = (j - j % 2) as f64;
        let angle = p / 10000f64.powf(i2 / d as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Source of linear position vectors.
#[derive(Debug, Clone, Copy)]
pub enum PeSource<'a> {
    Sin,
    /// A learned table, one row per position.
    Table(ArrayView2<'a, f64>),
}

/// Linear position encoding of `pos` with width `d`.
pub fn pe(pos: usize, d: usize, source: PeSource<'_>) -> Result<Array1<f64>> {
    if d < 2 {
        return Err(Error::Dimension(format!("encoding width must be at least 2, got {d}")));
    }
    match source {
        PeSource::Sin => Ok(sinusoid(pos, d)),
        PeSource::Table(t) => {
            if t.ncols() != d {
                return Err(Error::Dimension(format!("table width {} != {d}", t.ncols())));
            }
            if pos >= t.nrows() {
                return Err(Error::OutOfRange {
                    what: "position",
                    index: pos,
                    len: t.nrows(),
                });
            }
            Ok(t.row(pos).to_owned())
        }
    }
}

/// Combines per-component encodings of a hierarchical position.
///
/// `tables` must hold one table per component when the method is `la` and is
/// ignored for `sin`.
pub fn hierarchical_embedding(
    positions: &[usize],
    setting: EncodingSetting,
    d: usize,
    tables: &[ArrayView2<'_, f64>],
) -> Result<Array1<f64>> {
    let arity = positions.len();
    let width = component_dim(d, setting.mode, arity)?;
    if setting.method == PeMethod::La && tables.len() != arity {
        return Err(Error::LengthMismatch {
            what: "learned position tables",
            expected: arity,
            found: tables.len(),
        });
    }
    let parts = positions
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let src = match setting.method {
                PeMethod::Sin => PeSource::Sin,
                PeMethod::La => PeSource::Table(tables[k]),
            };
            pe(p, width, src)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(match setting.mode {
        CombineMode::Sum => parts.iter().fold(Array1::zeros(d), |acc, v| acc + v),
        CombineMode::Mean => parts.iter().fold(Array1::zeros(d), |acc, v| acc + v) / arity as f64,
        CombineMode::Concat => {
            let mut out = Array1::zeros(d);
            for (k, v) in parts.iter().enumerate() {
                out.slice_mut(ndarray::s![k * width..(k + 1) * width]).assign(v);
            }
            out
        }
    })
}

/// Sentence hierarchical position embedding.
pub fn she(ssv: Ssv, cfg: &EncodingConfig, tables: &[ArrayView2<'_, f64>]) -> Result<Array1<f64>> {
    hierarchical_embedding(&[ssv.section, ssv.sentence], cfg.setting, cfg.d_model, tables)
}

/// Token hierarchical position embedding.
pub fn the(tsv: Tsv, cfg: &EncodingConfig, tables: &[ArrayView2<'_, f64>]) -> Result<Array1<f64>> {
    hierarchical_embedding(&[tsv.section, tsv.sentence, tsv.token], cfg.setting, cfg.d_model, tables)
}

/// Extends a position table to `target_len` rows by repeating it; row `p` of
/// the result is row `p mod L` of the base.
pub fn extend_positions_by_copy(base: ArrayView2<'_, f64>, target_len: usize) -> Result<Array2<f64>> {
    let len = base.nrows();
    if len == 0 {
        return Err(Error::EmptyInput("base position table"));
    }
    if target_len < len {
        return Err(Error::Dimension(format!(
            "cannot extend a {len}-row table to {target_len} rows"
        )));
    }
    Ok(Array2::from_shape_fn((target_len, base.ncols()), |(p, j)| base[[p % len, j]]))
}

/// Table with i.i.d. zero-mean normal entries.
pub fn init_normal_table<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

/// Hierarchical embeddings of many positions as one graph node, one row per
/// position. `positions[k][r]` is component `k` of row `r`. Learned tables
/// are gathered so gradients reach only the rows used; out-of-range
/// positions are an error, never clamped.
pub(crate) fn hierarchical_node(
    g: &mut Graph<'_>,
    positions: &[Vec<usize>],
    setting: EncodingSetting,
    d: usize,
    tables: &[ParamId],
) -> Result<NodeId> {
    let arity = positions.len();
    let rows = positions.first().map_or(0, Vec::len);
    let width = component_dim(d, setting.mode, arity)?;
    match setting.method {
        PeMethod::Sin => {
            let mut out = Array2::zeros((rows, d));
            for r in 0..rows {
                let pos: Vec<usize> = positions.iter().map(|p| p[r]).collect();
                out.row_mut(r).assign(&hierarchical_embedding(&pos, setting, d, &[])?);
            }
            Ok(g.constant(out))
        }
        PeMethod::La => {
            if tables.len() != arity {
                return Err(Error::LengthMismatch {
                    what: "learned position tables",
                    expected: arity,
                    found: tables.len(),
                });
            }
            let mut parts = Vec::with_capacity(arity);
            for (k, comp) in positions.iter().enumerate() {
                let table = g.store().get(tables[k]);
                if table.ncols() != width {
                    return Err(Error::Dimension(format!("table width {} != {width}", table.ncols())));
                }
                if let Some(&bad) = comp.iter().find(|&&p| p >= table.nrows()) {
                    return Err(Error::OutOfRange {
                        what: "hierarchical position",
                        index: bad,
                        len: table.nrows(),
                    });
                }
                parts.push(g.gather(tables[k], comp));
            }
            Ok(match setting.mode {
                CombineMode::Concat => g.concat_cols(&parts),
                CombineMode::Sum | CombineMode::Mean => {
                    let mut acc = parts[0];
                    for &p in &parts[1..] {
                        acc = g.add(acc, p);
                    }
                    if setting.mode == CombineMode::Mean {
                        acc = g.scale(acc, 1.0 / arity as f64);
                    }
                    acc
                }
            })
        }
    }
}
