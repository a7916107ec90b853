use std::io::Write;

use serde::{Deserialize, Serialize};

use super::episode::TerminalCause;
use crate::Result;

/// One NDJSON line per environment step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: u64,
    pub step: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Policy output before potential-field shaping.
    pub policy_v: f64,
    pub policy_omega: f64,
    /// Potential-field velocity contributions after gains.
    pub apf_v: f64,
    pub apf_omega: f64,
    pub apf_clamped: bool,
    /// Command actually flown.
    pub v: f64,
    pub omega: f64,
    pub reward: f64,
    pub cause: TerminalCause,
    pub checkpoint: Option<usize>,
    pub attacked: bool,
}

pub struct EpisodeLog<W: Write> {
    out: W,
}

impl<W: Write> EpisodeLog<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn append(&mut self, record: &StepRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
