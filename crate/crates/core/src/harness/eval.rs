use serde::Serialize;

use crate::error::{Error, Result};

/// Frame-level scoring of MAP decisions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Correct recognition rate in percent.
    pub accuracy: f64,
    pub correct: usize,
    pub frames: usize,
    /// `confusion[i][j]`: frames of true class `classes[i]` labeled `classes[j]`.
    pub confusion: Vec<Vec<usize>>,
    pub classes: Vec<u32>,
}

/// Scores `predictions` against `truth`; every frame counts.
pub fn evaluate(predictions: &[u32], truth: &[u32], classes: &[u32]) -> Result<EvalReport> {
    if predictions.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} ground-truth frames",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Validation("nothing to evaluate".into()));
    }
    let index = |c: u32| {
        classes
            .iter()
            .position(|&k| k == c)
            .ok_or_else(|| Error::Validation(format!("class {c} is not in the class set")))
    };
    let mut confusion = vec![vec![0; classes.len()]; classes.len()];
    let mut correct = 0;
    for (&p, &t) in predictions.iter().zip(truth) {
        confusion[index(t)?][index(p)?] += 1;
        correct += usize::from(p == t);
    }
    Ok(EvalReport {
        accuracy: 100.0 * correct as f64 / truth.len() as f64,
        correct,
        frames: truth.len(),
        confusion,
        classes: classes.to_vec(),
    })
}

impl EvalReport {
    /// Frames per true class, i.e. the confusion row sums.
    pub fn class_frames(&self) -> Vec<usize> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }
}
