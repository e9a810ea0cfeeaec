use std::io::Write;

use crate::clustering::CmLossBreakdown;
use crate::data::Split;
use crate::error::Result;

pub const RUN_CSV_HEADER: &str = "iter,ce,cm_recon,cm_var,cm_cross,cm_dirichlet,ssl,total,lr";

/// Loss breakdown of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iter: usize,
    pub ce: f64,
    pub cm: CmLossBreakdown,
    pub ssl: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub iter: usize,
    pub split: Split,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    /// Test accuracy of the weight-averaged model at the end of training.
    pub final_test_acc: f64,
    pub best_val_acc: f64,
    pub best_val_iter: usize,
    /// Test accuracy of the checkpoint selected by validation accuracy.
    pub selected_test_acc: f64,
}

impl RunRecord {
    /// One row per step, header [`RUN_CSV_HEADER`].
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "{RUN_CSV_HEADER}")?;
        for s in &self.steps {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.iter,
                s.ce,
                s.cm.reconstruction,
                s.cm.variance_penalty,
                s.cm.cross_centroid,
                s.cm.dirichlet,
                s.ssl,
                s.total,
                s.lr
            )?;
        }
        Ok(())
    }

    /// `key = value` lines with the headline metrics followed by `extra`.
    pub fn write_summary(&self, extra: &[(String, String)], out: &mut impl Write) -> Result<()> {
        writeln!(out, "final_test_acc = {}", self.final_test_acc)?;
        writeln!(out, "best_val_acc = {}", self.best_val_acc)?;
        writeln!(out, "best_val_iter = {}", self.best_val_iter)?;
        writeln!(out, "selected_test_acc = {}", self.selected_test_acc)?;
        for (k, v) in extra {
            writeln!(out, "{k} = {v}")?;
        }
        Ok(())
    }
}
