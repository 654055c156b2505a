//! Buffered detection over an unbounded row stream.
//!
//! Rows accumulate in a bounded buffer; when it fills, the full pipeline is
//! refit on the buffered rows and a verdict is emitted for the window. A
//! tumbling window then starts empty, while a sliding window keeps all but
//! the oldest `stride` rows, so later windows rescore the overlap with
//! fresher context. Each window clusters with its own seed — the configured
//! base seed plus the window number — so a stream is reproducible end to end
//! while windows stay independent.
//!
//! A window refit is byte-for-byte the batch pipeline on the same rows with
//! the same seed; there is no incremental state to drift.

use serde::Serialize;

use crate::config::{PipelineConfig, ScoreMethod, WeightScheme};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::run_pipeline;
use crate::threshold::DetectionResult;

pub const MAX_CAPACITY: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    #[default]
    Tumbling,
    Sliding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    /// Rows per window.
    pub capacity: usize,
    pub mode: WindowMode,
    /// Rows dropped after each sliding emission (ignored when tumbling).
    pub stride: usize,
    pub pipeline: PipelineConfig,
}

/// One emitted window: which rows it covered (as zero-based positions in the
/// whole stream), the detection output, and how the per-window fit went.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowVerdict {
    pub window: u64,
    pub seed: u64,
    pub row_ids: Vec<u64>,
    pub result: DetectionResult,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

/// What `flush` did with the tail of the stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlushOutcome {
    pub verdict: Option<WindowVerdict>,
    /// Rows dropped unscored because the tail was too small to refit on.
    pub discarded: usize,
}

#[derive(Debug)]
pub struct StreamDetector {
    cfg: StreamConfig,
    min_rows: usize,
    dims: Option<usize>,
    buffer: Vec<Vec<f64>>,
    row_ids: Vec<u64>,
    rows_seen: u64,
    windows_emitted: u64,
}

/// Smallest row count the configured pipeline can be refit on: enough rows
/// for `k` clusters with a spare, for the density neighborhood to be
/// satisfiable, for ABOD's angle pairs, and for the kNN weighting scheme's
/// neighbor count.
pub fn min_window_rows(cfg: &PipelineConfig) -> usize {
    let mut needed = cfg.cluster.k + 1;
    match cfg.score.method {
        ScoreMethod::Density => needed = needed.max(cfg.score.min_pts + 1),
        ScoreMethod::Abod => needed = needed.max(3),
        ScoreMethod::WeightedMahalanobis => {}
    }
    if cfg.weighting.scheme == WeightScheme::KnnDistance {
        needed = needed.max(cfg.weighting.k + 1);
    }
    needed
}

impl StreamDetector {
    /// `force` is forwarded to [`PipelineConfig::validate`].
    pub fn new(cfg: StreamConfig, force: bool) -> Result<Self> {
        cfg.pipeline.validate(force)?;
        if cfg.pipeline.weighting.scheme == WeightScheme::External {
            return Err(Error::config(
                "streaming",
                "weighting.scheme = external is not available on a stream; rows carry no weight column",
            ));
        }
        if cfg.capacity < 2 || cfg.capacity > MAX_CAPACITY {
            return Err(Error::config(
                "streaming",
                format!("window capacity must lie in 2..={MAX_CAPACITY}, got {}", cfg.capacity),
            ));
        }
        let min_rows = min_window_rows(&cfg.pipeline);
        if cfg.capacity < min_rows {
            return Err(Error::config(
                "streaming",
                format!("window capacity {} is below the {min_rows} rows this pipeline needs", cfg.capacity),
            ));
        }
        if cfg.mode == WindowMode::Sliding && !(1..=cfg.capacity).contains(&cfg.stride) {
            return Err(Error::config(
                "streaming",
                format!("stride must lie in 1..={}, got {}", cfg.capacity, cfg.stride),
            ));
        }
        Ok(StreamDetector {
            cfg,
            min_rows,
            dims: None,
            buffer: Vec::new(),
            row_ids: Vec::new(),
            rows_seen: 0,
            windows_emitted: 0,
        })
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn rows_seen(&self) -> u64 {
        self.rows_seen
    }

    pub fn windows_emitted(&self) -> u64 {
        self.windows_emitted
    }

    pub fn min_rows(&self) -> usize {
        self.min_rows
    }

    /// Buffer one row; returns a verdict when it completes a window.
    pub fn push(&mut self, row: &[f64]) -> Result<Option<WindowVerdict>> {
        match self.dims {
            None => {
                if row.is_empty() {
                    return Err(Error::data("streaming", format!("stream row {} has no values", self.rows_seen)));
                }
                self.dims = Some(row.len());
            }
            Some(d) if d != row.len() => {
                return Err(Error::data(
                    "streaming",
                    format!("stream row {} has {} values, expected {d}", self.rows_seen, row.len()),
                ));
            }
            Some(_) => {}
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(
                "streaming",
                format!("stream row {} column {j} is not finite", self.rows_seen),
            ));
        }
        self.buffer.push(row.to_vec());
        self.row_ids.push(self.rows_seen);
        self.rows_seen += 1;

        if self.buffer.len() < self.cfg.capacity {
            return Ok(None);
        }
        let verdict = self.score_window()?;
        match self.cfg.mode {
            WindowMode::Tumbling => {
                self.buffer.clear();
                self.row_ids.clear();
            }
            WindowMode::Sliding => {
                self.buffer.drain(..self.cfg.stride);
                self.row_ids.drain(..self.cfg.stride);
            }
        }
        Ok(Some(verdict))
    }

    /// Score whatever is buffered, if the tail is large enough to refit on,
    /// and reset the buffer either way. Call once at end of stream.
    pub fn flush(&mut self) -> Result<FlushOutcome> {
        let outcome = if self.buffer.len() >= self.min_rows {
            FlushOutcome { verdict: Some(self.score_window()?), discarded: 0 }
        } else {
            FlushOutcome { verdict: None, discarded: self.buffer.len() }
        };
        self.buffer.clear();
        self.row_ids.clear();
        Ok(outcome)
    }

    fn score_window(&mut self) -> Result<WindowVerdict> {
        let dims = self.dims.expect("non-empty buffer implies dims");
        let names = (0..dims).map(|j| format!("f{j}")).collect();
        let ids = self.row_ids.iter().map(|id| id.to_string()).collect();
        let data = Dataset::from_rows(self.buffer.clone(), names, ids, None)?;
        let seed = self.cfg.pipeline.cluster_base_seed().wrapping_add(self.windows_emitted);
        let run = run_pipeline(&data, &self.cfg.pipeline, seed, None)?;
        let verdict = WindowVerdict {
            window: self.windows_emitted,
            seed,
            row_ids: self.row_ids.clone(),
            result: run.result,
            iterations: run.fitted.cluster.iterations,
            converged: run.fitted.cluster.converged,
            objective: run.fitted.cluster.objective(),
        };
        self.windows_emitted += 1;
        Ok(verdict)
    }
}
