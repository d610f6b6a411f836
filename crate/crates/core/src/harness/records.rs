//! Line-delimited JSON record files.
//!
//! Every file starts with a header line
//! `{"type":"header","format":"gated-idm-records","version":1,"layout_width":33}`
//! followed by one self-describing object per line, tagged by `"type"`:
//! `scene`, `frame_pair`, `episode_meta`, `episode_step` or `chunk`.
//! Floats are written in shortest round-trip decimal form, so reading a file
//! back reproduces every value exactly.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{EpisodeLog, Method, StepRecord, Termination};
use crate::idm::{FramePairSample, PlannedChunk};
use crate::planner::PlanMeta;
use crate::world::{SceneState, TaskSpec};

pub const RECORD_FORMAT: &str = "gated-idm-records";
pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing header line")]
    MissingHeader,
    #[error("unsupported record version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("line {line}: expected a {expected} record, found {found}")]
    Unexpected {
        line: usize,
        expected: &'static str,
        found: &'static str,
    },
    #[error("line {line}: observation width {got} does not match header width {expected}")]
    Width { line: usize, expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub layout_width: usize,
}

impl Header {
    pub fn new(layout_width: usize) -> Self {
        Self {
            format: RECORD_FORMAT.into(),
            version: RECORD_VERSION,
            layout_width,
        }
    }
}

/// Everything in an [`EpisodeLog`] except the per-step records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub method: Method,
    pub task: TaskSpec,
    pub scene_seed: u64,
    pub target_radius: f64,
    pub chunk: Option<PlannedChunk>,
    pub plan_meta: Option<PlanMeta>,
    pub switches: Vec<u64>,
    pub returns: Vec<u64>,
    pub termination: Termination,
    pub error: Option<String>,
    pub num_steps: usize,
}

/// A raw action chunk: one row per step, with optional per-row gates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub rows: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gates: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Header(Header),
    Scene(SceneState),
    FramePair(FramePairSample),
    EpisodeMeta(EpisodeMeta),
    EpisodeStep(StepRecord),
    Chunk(ChunkRecord),
}

impl Record {
    pub fn kind(&self) -> &'static str {
        match self {
            Record::Header(_) => "header",
            Record::Scene(_) => "scene",
            Record::FramePair(_) => "frame_pair",
            Record::EpisodeMeta(_) => "episode_meta",
            Record::EpisodeStep(_) => "episode_step",
            Record::Chunk(_) => "chunk",
        }
    }
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(flatten)]
    body: &'a T,
}

/// Streams records of one file.
pub struct RecordWriter<W: Write> {
    out: W,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut out: W, layout_width: usize) -> io::Result<Self> {
        write_line(&mut out, "header", &Header::new(layout_width))?;
        Ok(Self { out })
    }

    pub fn scene(&mut self, s: &SceneState) -> io::Result<()> {
        write_line(&mut self.out, "scene", s)
    }

    pub fn frame_pair(&mut self, s: &FramePairSample) -> io::Result<()> {
        write_line(&mut self.out, "frame_pair", s)
    }

    pub fn chunk(&mut self, c: &ChunkRecord) -> io::Result<()> {
        write_line(&mut self.out, "chunk", c)
    }

    pub fn episode(&mut self, log: &EpisodeLog) -> io::Result<()> {
        let meta = EpisodeMeta {
            method: log.method,
            task: log.task,
            scene_seed: log.scene_seed,
            target_radius: log.target_radius,
            chunk: log.chunk.clone(),
            plan_meta: log.plan_meta.clone(),
            switches: log.switches.clone(),
            returns: log.returns.clone(),
            termination: log.termination,
            error: log.error.clone(),
            num_steps: log.steps.len(),
        };
        write_line(&mut self.out, "episode_meta", &meta)?;
        for s in &log.steps {
            write_line(&mut self.out, "episode_step", s)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn write_line<W: Write, T: Serialize>(out: &mut W, kind: &'static str, body: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, &Tagged { kind, body }).map_err(io::Error::other)?;
    out.write_all(b"\n")
}

/// Reads a whole record file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_records<R: BufRead>(input: R) -> Result<(Header, Vec<(usize, Record)>), RecordError> {
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| RecordError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| RecordError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        match (&header, rec) {
            (None, Record::Header(h)) => {
                if h.version != RECORD_VERSION || h.format != RECORD_FORMAT {
                    return Err(RecordError::Version {
                        found: h.version,
                        expected: RECORD_VERSION,
                    });
                }
                header = Some(h);
            }
            (None, _) => return Err(RecordError::MissingHeader),
            (Some(_), Record::Header(_)) => {
                return Err(RecordError::Unexpected {
                    line: line_no,
                    expected: "body",
                    found: "header",
                })
            }
            (Some(_), rec) => records.push((line_no, rec)),
        }
    }
    Ok((header.ok_or(RecordError::MissingHeader)?, records))
}

fn open(path: &Path) -> Result<BufReader<File>, RecordError> {
    File::open(path).map(BufReader::new).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, RecordError> {
    File::create(path).map(BufWriter::new).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_at(path: &Path) -> impl Fn(io::Error) -> RecordError + '_ {
    move |source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_dataset(path: &Path, layout_width: usize, samples: &[FramePairSample]) -> Result<(), RecordError> {
    let mut w = RecordWriter::new(create(path)?, layout_width).map_err(io_at(path))?;
    for s in samples {
        w.frame_pair(s).map_err(io_at(path))?;
    }
    w.finish().map_err(io_at(path))?;
    Ok(())
}

/// Loads a dataset, checking every observation against the header width.
pub fn load_dataset(path: &Path) -> Result<(Header, Vec<FramePairSample>), RecordError> {
    let (header, records) = read_records(open(path)?)?;
    let mut out = Vec::with_capacity(records.len());
    for (line, rec) in records {
        match rec {
            Record::FramePair(s) => {
                for o in [&s.prev_obs, &s.obs] {
                    if o.len() != header.layout_width {
                        return Err(RecordError::Width {
                            line,
                            expected: header.layout_width,
                            got: o.len(),
                        });
                    }
                }
                out.push(s);
            }
            other => {
                return Err(RecordError::Unexpected {
                    line,
                    expected: "frame_pair",
                    found: other.kind(),
                })
            }
        }
    }
    Ok((header, out))
}

pub fn save_logs(path: &Path, layout_width: usize, logs: &[EpisodeLog]) -> Result<(), RecordError> {
    let mut w = RecordWriter::new(create(path)?, layout_width).map_err(io_at(path))?;
    for log in logs {
        w.episode(log).map_err(io_at(path))?;
    }
    w.finish().map_err(io_at(path))?;
    Ok(())
}

/// Loads episode logs. Each `episode_meta` line is followed by exactly
/// `num_steps` `episode_step` lines.
pub fn load_logs(path: &Path) -> Result<Vec<EpisodeLog>, RecordError> {
    let (_, records) = read_records(open(path)?)?;
    let mut logs: Vec<(EpisodeLog, usize)> = Vec::new();
    let mut last_line = 0;
    for (line, rec) in records {
        last_line = line;
        let pending = logs.last().is_some_and(|(l, n)| l.steps.len() < *n);
        match rec {
            Record::EpisodeMeta(m) if !pending => {
                let n = m.num_steps;
                logs.push((
                    EpisodeLog {
                        method: m.method,
                        task: m.task,
                        scene_seed: m.scene_seed,
                        target_radius: m.target_radius,
                        chunk: m.chunk,
                        plan_meta: m.plan_meta,
                        switches: m.switches,
                        returns: m.returns,
                        termination: m.termination,
                        error: m.error,
                        steps: Vec::with_capacity(n),
                    },
                    n,
                ));
            }
            Record::EpisodeStep(s) if pending => logs.last_mut().expect("pending implies a log").0.steps.push(s),
            other => {
                return Err(RecordError::Unexpected {
                    line,
                    expected: if pending { "episode_step" } else { "episode_meta" },
                    found: other.kind(),
                })
            }
        }
    }
    if logs.last().is_some_and(|(l, n)| l.steps.len() < *n) {
        return Err(RecordError::Parse {
            line: last_line,
            message: "file ends before the episode's last step".into(),
        });
    }
    Ok(logs.into_iter().map(|(l, _)| l).collect())
}

pub fn save_chunk(path: &Path, layout_width: usize, chunk: &ChunkRecord) -> Result<(), RecordError> {
    let mut w = RecordWriter::new(create(path)?, layout_width).map_err(io_at(path))?;
    w.chunk(chunk).map_err(io_at(path))?;
    w.finish().map_err(io_at(path))?;
    Ok(())
}

/// Loads the single chunk stored in a chunk file.
pub fn load_chunk(path: &Path) -> Result<ChunkRecord, RecordError> {
    let (_, records) = read_records(open(path)?)?;
    let mut it = records.into_iter();
    match (it.next(), it.next()) {
        (Some((_, Record::Chunk(c))), None) => Ok(c),
        (Some((_, Record::Chunk(_))), Some((line, other))) => Err(RecordError::Unexpected {
            line,
            expected: "end of file",
            found: other.kind(),
        }),
        (Some((line, other)), _) => Err(RecordError::Unexpected {
            line,
            expected: "chunk",
            found: other.kind(),
        }),
        (None, _) => Err(RecordError::Parse {
            line: 1,
            message: "no chunk record".into(),
        }),
    }
}
