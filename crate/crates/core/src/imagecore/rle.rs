use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::LabelMap;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RleError {
    #[error("mask has {actual} pixels, expected {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("run ({start}, {len}) is out of bounds or overlaps the previous run")]
    RunOutOfBounds { start: u32, len: u32 },
}

/// Maximal runs of set pixels over row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLengthMask {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<(u32, u32)>,
}

impl RunLengthMask {
    pub fn area(&self) -> u64 {
        self.runs.iter().map(|&(_, l)| l as u64).sum()
    }

    /// Runs of pixels carrying `id` in a label map.
    pub fn from_label(lm: &LabelMap, id: u32) -> Self {
        let runs = runs_where(lm.labels(), |&l| l == id);
        Self { width: lm.width(), height: lm.height(), runs }
    }
}

/// Runs of every nonzero label in one pass, keyed by id.
pub fn runs_by_label(lm: &LabelMap) -> BTreeMap<u32, RunLengthMask> {
    let mut out: BTreeMap<u32, RunLengthMask> = BTreeMap::new();
    let data = lm.labels();
    let mut i = 0;
    while i < data.len() {
        let id = data[i];
        let start = i;
        while i < data.len() && data[i] == id {
            i += 1;
        }
        if id != 0 {
            out.entry(id)
                .or_insert_with(|| RunLengthMask { width: lm.width(), height: lm.height(), runs: Vec::new() })
                .runs
                .push((start as u32, (i - start) as u32));
        }
    }
    out
}

fn runs_where<T>(data: &[T], pred: impl Fn(&T) -> bool) -> Vec<(u32, u32)> {
    let mut runs = Vec::new();
    let mut open: Option<usize> = None;
    for (i, v) in data.iter().enumerate() {
        match (pred(v), open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                runs.push((s as u32, (i - s) as u32));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        runs.push((s as u32, (data.len() - s) as u32));
    }
    runs
}

pub fn encode_rle(mask: &[bool], width: usize, height: usize) -> Result<RunLengthMask, RleError> {
    if mask.len() != width * height {
        return Err(RleError::SizeMismatch { expected: width * height, actual: mask.len() });
    }
    Ok(RunLengthMask { width, height, runs: runs_where(mask, |&b| b) })
}

pub fn decode_rle(rle: &RunLengthMask) -> Result<Vec<bool>, RleError> {
    let n = rle.width * rle.height;
    let mut out = vec![false; n];
    let mut min_start = 0u64;
    for &(start, len) in &rle.runs {
        let end = start as u64 + len as u64;
        if (start as u64) < min_start || end > n as u64 || len == 0 {
            return Err(RleError::RunOutOfBounds { start, len });
        }
        out[start as usize..end as usize].fill(true);
        min_start = end;
    }
    Ok(out)
}
