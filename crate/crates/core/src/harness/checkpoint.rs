//! Model checkpoints.
//!
//! The checkpoint itself is line-delimited JSON: a header with the layer
//! sizes of each network, then one line per linear layer carrying its
//! row-major weight matrix and bias. A sidecar `<path>.meta.json` records
//! the observation layout, workspace, action width and training losses.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::idm::{IdmError, IdmModel, LossConfig};
use crate::nnet::{Linear, Mlp, NnetError};
use crate::world::{Bounds, ObservationLayout};

pub const CHECKPOINT_FORMAT: &str = "gated-idm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

const NETS: [&str; 3] = ["encoder", "action_head", "gate_head"];

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is inconsistent: {0}")]
    Shape(String),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Idm(#[from] IdmError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    sizes: Vec<(String, Vec<usize>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LayerLine {
    net: String,
    layer: usize,
    rows: usize,
    cols: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub version: u32,
    pub layout: ObservationLayout,
    pub layout_width: usize,
    pub act_dim: usize,
    pub workspace: Bounds,
    pub loss: LossConfig,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn nets(model: &IdmModel) -> [&Mlp; 3] {
    [&model.encoder, &model.action_head, &model.gate_head]
}

/// Writes the checkpoint body to any writer.
pub fn write_checkpoint<W: Write>(model: &IdmModel, mut out: W) -> io::Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        sizes: NETS.iter().zip(nets(model)).map(|(n, m)| (n.to_string(), m.sizes())).collect(),
    };
    serde_json::to_writer(&mut out, &header).map_err(io::Error::other)?;
    out.write_all(b"\n")?;
    for (name, net) in NETS.iter().zip(nets(model)) {
        for (i, l) in net.layers().iter().enumerate() {
            let line = LayerLine {
                net: name.to_string(),
                layer: i,
                rows: l.weight.nrows(),
                cols: l.weight.ncols(),
                weight: l.weight.iter().copied().collect(),
                bias: l.bias.to_vec(),
            };
            serde_json::to_writer(&mut out, &line).map_err(io::Error::other)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

fn parse<T: for<'de> Deserialize<'de>>(line: usize, text: &str) -> Result<T, CheckpointError> {
    serde_json::from_str(text).map_err(|e| CheckpointError::Parse {
        line,
        message: e.to_string(),
    })
}

/// Reads the three networks from a checkpoint body.
pub fn read_checkpoint<R: BufRead>(input: R) -> Result<[Mlp; 3], CheckpointError> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let next = |it: &mut dyn Iterator<Item = (usize, io::Result<String>)>| -> Result<Option<(usize, String)>, CheckpointError> {
        match it.next() {
            None => Ok(None),
            Some((i, Ok(s))) => Ok(Some((i + 1, s))),
            Some((i, Err(e))) => Err(CheckpointError::Parse {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    };
    let (n, text) = next(&mut lines)?.ok_or(CheckpointError::Parse {
        line: 1,
        message: "empty checkpoint".into(),
    })?;
    let header: CheckpointHeader = parse(n, &text)?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let names: Vec<&str> = header.sizes.iter().map(|(n, _)| n.as_str()).collect();
    if names != NETS {
        return Err(CheckpointError::Shape(format!("expected networks {NETS:?}, found {names:?}")));
    }
    let mut out = Vec::with_capacity(3);
    for (name, sizes) in &header.sizes {
        let mut layers = Vec::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            let (n, text) = next(&mut lines)?.ok_or_else(|| CheckpointError::Shape(format!("missing {name} layer {i}")))?;
            let l: LayerLine = parse(n, &text)?;
            if l.net != *name || l.layer != i || l.cols != pair[0] || l.rows != pair[1] {
                return Err(CheckpointError::Parse {
                    line: n,
                    message: format!("expected {name} layer {i} of {}x{}", pair[1], pair[0]),
                });
            }
            let weight = Array2::from_shape_vec((l.rows, l.cols), l.weight).map_err(|e| CheckpointError::Parse {
                line: n,
                message: e.to_string(),
            })?;
            if l.bias.len() != l.rows {
                return Err(CheckpointError::Parse {
                    line: n,
                    message: format!("bias has {} entries, expected {}", l.bias.len(), l.rows),
                });
            }
            layers.push(Linear {
                weight,
                bias: Array1::from(l.bias),
            });
        }
        out.push(Mlp::from_layers(layers)?);
    }
    if let Some((n, _)) = next(&mut lines)? {
        return Err(CheckpointError::Parse {
            line: n,
            message: "trailing data after last layer".into(),
        });
    }
    let [e, a, g]: [Mlp; 3] = out.try_into().expect("three networks");
    Ok([e, a, g])
}

pub fn save_checkpoint(path: &Path, model: &IdmModel, loss: &LossConfig) -> Result<(), CheckpointError> {
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| CheckpointError::Io { path: p.clone(), source }
    };
    let f = File::create(path).map_err(io_err(path))?;
    write_checkpoint(model, BufWriter::new(f)).map_err(io_err(path))?;
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        layout: model.layout,
        layout_width: model.layout.width(),
        act_dim: model.act_dim(),
        workspace: model.workspace,
        loss: loss.clone(),
    };
    let mp = meta_path(path);
    let mut text = serde_json::to_string_pretty(&meta).map_err(|e| CheckpointError::Shape(e.to_string()))?;
    text.push('\n');
    std::fs::write(&mp, text).map_err(io_err(&mp))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(IdmModel, CheckpointMeta), CheckpointError> {
    let mp = meta_path(path);
    let text = std::fs::read_to_string(&mp).map_err(|source| CheckpointError::Io { path: mp.clone(), source })?;
    let meta: CheckpointMeta = parse(1, &text)?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: meta.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if meta.layout.width() != meta.layout_width {
        return Err(CheckpointError::Shape("layout width disagrees with layout".into()));
    }
    let f = File::open(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let [encoder, action_head, gate_head] = read_checkpoint(BufReader::new(f))?;
    let model = IdmModel::from_parts(meta.layout, meta.workspace, encoder, action_head, gate_head)?;
    if model.act_dim() != meta.act_dim {
        return Err(CheckpointError::Shape("act_dim disagrees with the action head".into()));
    }
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idm::IdmArch;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> IdmModel {
        let arch = IdmArch {
            encoder_hidden: vec![16, 8],
            head_hidden: 6,
        };
        IdmModel::new(ObservationLayout::new(2, 1), Bounds::default(), &arch, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let m = model();
        save_checkpoint(&p, &m, &LossConfig::default()).unwrap();
        let (back, meta) = load_checkpoint(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta.layout_width, m.layout.width());
        assert_eq!(meta.act_dim, 4);
    }

    #[test]
    fn saving_twice_gives_identical_bytes() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_checkpoint(&model(), &mut a).unwrap();
        write_checkpoint(&model(), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_or_versioned_files_fail() {
        let mut buf = Vec::new();
        write_checkpoint(&model(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_checkpoint(cut.as_bytes()), Err(CheckpointError::Shape(_))));
        let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(read_checkpoint(bumped.as_bytes()), Err(CheckpointError::Version { found: 2, .. })));
    }
}
