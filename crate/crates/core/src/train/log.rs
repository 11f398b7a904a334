//! Per-step training records and their TSV form.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Duration;

use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "step\tloss\tqueue_fill\tdev_spearman";

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based optimizer step.
    pub step: usize,
    pub loss: f64,
    /// Queue entries after this step's enqueue.
    pub queue_fill: usize,
    pub dev_spearman: Option<f64>,
    /// Wall time since training started. Kept out of the TSV so that the
    /// file depends only on config and seed.
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    pub fn push(&mut self, record: StepRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.step <= last.step {
                return Err(Error::Input(format!("step {} logged after {}", record.step, last.step)));
            }
        }
        if !record.loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at step {}", record.step)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// `(step, spearman)` for every evaluated step.
    pub fn evaluations(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.dev_spearman.map(|s| (r.step, s)))
            .collect()
    }

    /// Highest dev correlation; the earliest step wins ties.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.evaluations()
            .into_iter()
            .fold(None, |best, (step, s)| match best {
                Some((_, b)) if b >= s => best,
                _ => Some((step, s)),
            })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for TrainLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{LOG_HEADER}")?;
        for r in &self.records {
            write!(f, "{}\t{}\t{}\t", r.step, r.loss, r.queue_fill)?;
            if let Some(s) = r.dev_spearman {
                write!(f, "{s}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: usize, dev: Option<f64>) -> StepRecord {
        StepRecord {
            step,
            loss: 1.5,
            queue_fill: step * 2,
            dev_spearman: dev,
            elapsed: Duration::from_millis(step as u64),
        }
    }

    #[test]
    fn tsv_and_best() {
        let mut log = TrainLog::default();
        log.push(rec(1, None)).unwrap();
        log.push(rec(2, Some(0.4))).unwrap();
        log.push(rec(3, Some(0.4))).unwrap();
        assert!(log.push(rec(3, None)).is_err());
        assert_eq!(log.best(), Some((2, 0.4)));
        assert_eq!(log.to_string(), format!("{LOG_HEADER}\n1\t1.5\t2\t\n2\t1.5\t4\t0.4\n3\t1.5\t6\t0.4\n"));
    }

    #[test]
    fn non_finite_loss_rejected() {
        let mut log = TrainLog::default();
        let mut r = rec(1, None);
        r.loss = f64::NAN;
        assert!(matches!(log.push(r), Err(Error::NonFinite(_))));
    }
}
