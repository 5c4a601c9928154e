//! `AIFNET v1` network checkpoints.
//!
//! A text manifest followed by raw little-endian `f64` payload:
//!
//! ```text
//! AIFNET v1
//! kind model_set
//! state_dim 8
//! step 7800
//! network posterior tanh
//! layer 10 64
//! layer 64 64
//! head mean 64 8
//! head var 64 8
//! network transition tanh
//! ...
//! end
//! <weights>
//! ```
//!
//! The payload holds, per network in manifest order, each layer's weight
//! (row-major, `in x out`) then bias, then the mean head and the variance head.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::{Activation, Dense, GaussianNet, Matrix};
use crate::error::{AifError, Result};

pub const NET_MAGIC: &str = "AIFNET v1";

/// Manifest metadata plus named networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    /// Ordered `key value` metadata lines (seed, step count, dims, ...).
    pub fields: Vec<(String, String)>,
    pub networks: Vec<(String, GaussianNet)>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            fields: Vec::new(),
            networks: Vec::new(),
        }
    }

    pub fn field(mut self, key: &str, value: impl ToString) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn network(mut self, name: &str, net: &GaussianNet) -> Self {
        self.networks.push((name.to_string(), net.clone()));
        self
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| AifError::format("AIFNET", format!("missing manifest field {key:?}")))
    }

    pub fn parse_field<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| AifError::format("AIFNET", format!("bad value {raw:?} for {key}")))
    }

    pub fn take_network(&mut self, name: &str) -> Result<GaussianNet> {
        let idx = self
            .networks
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| AifError::format("AIFNET", format!("missing network {name:?}")))?;
        Ok(self.networks.remove(idx).1)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(AifError::format(
                "AIFNET",
                format!("expected a {kind} checkpoint, found {}", self.kind),
            ))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut manifest = String::new();
        let _ = writeln!(manifest, "{NET_MAGIC}");
        let _ = writeln!(manifest, "kind {}", self.kind);
        for (k, v) in &self.fields {
            let _ = writeln!(manifest, "{k} {v}");
        }
        for (name, net) in &self.networks {
            let _ = writeln!(manifest, "network {name} {}", net.activation);
            for l in &net.hidden {
                let _ = writeln!(manifest, "layer {} {}", l.input_dim(), l.output_dim());
            }
            let _ = writeln!(
                manifest,
                "head mean {} {}",
                net.mean_head.input_dim(),
                net.mean_head.output_dim()
            );
            let _ = writeln!(
                manifest,
                "head var {} {}",
                net.var_head.input_dim(),
                net.var_head.output_dim()
            );
        }
        manifest.push_str("end\n");
        let mut bytes = manifest.into_bytes();
        for (_, net) in &self.networks {
            for t in net.tensors() {
                for x in t.data() {
                    bytes.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| AifError::format("AIFNET", m);
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let nl = rest
                .iter()
                .position(|b| *b == b'\n')
                .ok_or_else(|| bad("manifest ended without an `end` line".into()))?;
            pos += nl + 1;
            std::str::from_utf8(&rest[..nl]).map_err(|_| bad("manifest is not UTF-8".into()))
        };

        let magic = next_line()?;
        if magic != NET_MAGIC {
            return Err(bad(format!("expected header {NET_MAGIC:?}, found {magic:?}")));
        }
        let kind = next_line()?
            .strip_prefix("kind ")
            .ok_or_else(|| bad("second line must be `kind <name>`".into()))?
            .to_string();

        // (name, activation, hidden shapes, mean head shape, var head shape)
        type Layout = (String, Activation, Vec<(usize, usize)>, Option<(usize, usize)>, Option<(usize, usize)>);
        let mut fields = Vec::new();
        let mut layouts: Vec<Layout> = Vec::new();
        loop {
            let line = next_line()?;
            if line == "end" {
                break;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let dims = |a: &str, b: &str| -> Result<(usize, usize)> {
                Ok((
                    a.parse().map_err(|_| bad(format!("bad dimension in {line:?}")))?,
                    b.parse().map_err(|_| bad(format!("bad dimension in {line:?}")))?,
                ))
            };
            match parts.as_slice() {
                ["network", name, act] => {
                    layouts.push((name.to_string(), act.parse()?, Vec::new(), None, None));
                }
                ["layer", i, o] => {
                    let l = layouts.last_mut().ok_or_else(|| bad("layer before network".into()))?;
                    l.2.push(dims(i, o)?);
                }
                ["head", which, i, o] => {
                    let l = layouts.last_mut().ok_or_else(|| bad("head before network".into()))?;
                    let shape = Some(dims(i, o)?);
                    match *which {
                        "mean" => l.3 = shape,
                        "var" => l.4 = shape,
                        other => return Err(bad(format!("unknown head {other:?}"))),
                    }
                }
                [key, value] if layouts.is_empty() => {
                    fields.push((key.to_string(), value.to_string()));
                }
                _ => return Err(bad(format!("unrecognized manifest line {line:?}"))),
            }
        }

        let payload = &bytes[pos..];
        let mut floats = payload.chunks_exact(8).map(|c| {
            f64::from_le_bytes(c.try_into().expect("chunks_exact yields 8 bytes"))
        });
        if !payload.len().is_multiple_of(8) {
            return Err(bad("payload is not a whole number of f64 values".into()));
        }
        let mut take = |rows: usize, cols: usize| -> Result<Matrix> {
            let data: Vec<f64> = floats.by_ref().take(rows * cols).collect();
            if data.len() != rows * cols {
                return Err(bad("payload shorter than the manifest describes".into()));
            }
            Ok(Matrix::from_vec(rows, cols, data))
        };
        let mut networks = Vec::new();
        for (name, activation, hidden, mean, var) in layouts {
            let (mean, var) = match (mean, var) {
                (Some(m), Some(v)) => (m, v),
                _ => return Err(bad(format!("network {name} lacks a head"))),
            };
            let mut layers = Vec::new();
            for (i, o) in hidden {
                layers.push(Dense {
                    weight: take(i, o)?,
                    bias: take(1, o)?,
                });
            }
            let mean_head = Dense {
                weight: take(mean.0, mean.1)?,
                bias: take(1, mean.1)?,
            };
            let var_head = Dense {
                weight: take(var.0, var.1)?,
                bias: take(1, var.1)?,
            };
            let net = GaussianNet {
                hidden: layers,
                activation,
                mean_head,
                var_head,
            };
            net.validate()?;
            networks.push((name, net));
        }
        if floats.next().is_some() {
            return Err(bad("payload longer than the manifest describes".into()));
        }
        Ok(Self {
            kind,
            fields,
            networks,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| AifError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(AifError::MissingArtifact(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| AifError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
