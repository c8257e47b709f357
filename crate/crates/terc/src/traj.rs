//! Recorded agent-environment trajectories: JSONL persistence with a
//! metadata sidecar, conversion to sample tables, quartile splitting, and
//! expert-episode filtering.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TercError};
use crate::table::{Column, SampleTable};

pub const ACTION_NAME: &str = "action";

/// Action as recorded: integer index for discrete spaces, real for
/// continuous ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionValue {
    Discrete(i64),
    Continuous(f64),
}

impl ActionValue {
    pub fn as_f64(self) -> f64 {
        match self {
            ActionValue::Discrete(v) => v as f64,
            ActionValue::Continuous(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajRow {
    pub ep: usize,
    pub t: usize,
    pub s: Vec<f64>,
    pub a: ActionValue,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajMeta {
    pub names: Vec<String>,
    pub env_config: String,
    pub seed: u64,
    pub episode_returns: Vec<f64>,
    #[serde(default)]
    pub empty_after_filter: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub rows: Vec<TrajRow>,
    pub meta: TrajMeta,
}

impl TrajectoryBatch {
    pub fn new(rows: Vec<TrajRow>, names: Vec<String>, env_config: String, seed: u64) -> Result<Self> {
        if rows.is_empty() {
            return Err(TercError::InvalidArgument("empty trajectory".into()));
        }
        let dim = names.len();
        let mut returns: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for row in &rows {
            if row.s.len() != dim {
                return Err(TercError::DimensionMismatch(format!(
                    "state has {} entries, expected {dim}",
                    row.s.len()
                )));
            }
            match last {
                Some((ep, t)) if ep == row.ep => {
                    if row.t <= t {
                        return Err(TercError::InvalidArgument(format!(
                            "t not increasing within episode {ep}"
                        )));
                    }
                }
                _ => returns.push(0.0),
            }
            *returns.last_mut().unwrap() += row.r;
            last = Some((row.ep, row.t));
        }
        Ok(TrajectoryBatch {
            rows,
            meta: TrajMeta {
                names,
                env_config,
                seed,
                episode_returns: returns,
                empty_after_filter: false,
            },
        })
    }

    pub fn n_episodes(&self) -> usize {
        self.meta.episode_returns.len()
    }

    fn episode_ids(&self) -> Vec<usize> {
        let mut ids = Vec::new();
        for row in &self.rows {
            if ids.last() != Some(&row.ep) {
                ids.push(row.ep);
            }
        }
        ids
    }

    pub fn meta_path(path: &Path) -> PathBuf {
        path.with_extension("meta.json")
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for row in &self.rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let meta = File::create(Self::meta_path(path))?;
        serde_json::to_writer_pretty(BufWriter::new(meta), &self.meta)?;
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            rows.push(serde_json::from_str::<TrajRow>(&line)?);
        }
        let meta: TrajMeta = serde_json::from_reader(BufReader::new(File::open(
            Self::meta_path(path),
        )?))?;
        Ok(TrajectoryBatch { rows, meta })
    }

    /// (state variables, action) per recorded step; integral columns become
    /// discrete, others stay real.
    pub fn to_table(&self) -> Result<SampleTable> {
        let mut names = self.meta.names.clone();
        names.push(ACTION_NAME.into());
        let mut columns: Vec<Column> = Vec::with_capacity(names.len());
        for j in 0..self.meta.names.len() {
            columns.push(Column::from_reals(
                self.rows.iter().map(|r| r.s[j]).collect(),
            ));
        }
        columns.push(Column::from_reals(
            self.rows.iter().map(|r| r.a.as_f64()).collect(),
        ));
        SampleTable::new(names, columns, ACTION_NAME)
    }

    /// Partitions episodes into 4 contiguous blocks by episode order;
    /// remainder episodes go to the final block.
    pub fn split_quartiles(&self) -> Result<[SampleTable; 4]> {
        let ids = self.episode_ids();
        if ids.len() < 4 {
            return Err(TercError::InvalidArgument(format!(
                "need at least 4 episodes, have {}",
                ids.len()
            )));
        }
        let k = ids.len() / 4;
        let bounds = [0, k, 2 * k, 3 * k, ids.len()];
        let mut tables = Vec::with_capacity(4);
        for q in 0..4 {
            let block: Vec<usize> = ids[bounds[q]..bounds[q + 1]].to_vec();
            let rows: Vec<TrajRow> = self
                .rows
                .iter()
                .filter(|r| block.contains(&r.ep))
                .cloned()
                .collect();
            let batch = TrajectoryBatch::new(
                rows,
                self.meta.names.clone(),
                self.meta.env_config.clone(),
                self.meta.seed,
            )?;
            tables.push(batch.to_table()?);
        }
        Ok(tables.try_into().unwrap())
    }

    /// Retains episodes whose cumulative reward is at least `threshold`. An
    /// empty result is allowed and flagged in the metadata.
    pub fn expert_filter(&self, threshold: f64) -> TrajectoryBatch {
        let ids = self.episode_ids();
        let keep: Vec<usize> = ids
            .iter()
            .zip(&self.meta.episode_returns)
            .filter(|(_, &ret)| ret >= threshold)
            .map(|(&ep, _)| ep)
            .collect();
        let rows: Vec<TrajRow> = self
            .rows
            .iter()
            .filter(|r| keep.contains(&r.ep))
            .cloned()
            .collect();
        let returns: Vec<f64> = self
            .meta
            .episode_returns
            .iter()
            .copied()
            .filter(|&ret| ret >= threshold)
            .collect();
        TrajectoryBatch {
            meta: TrajMeta {
                names: self.meta.names.clone(),
                env_config: self.meta.env_config.clone(),
                seed: self.meta.seed,
                episode_returns: returns,
                empty_after_filter: rows.is_empty(),
            },
            rows,
        }
    }
}
