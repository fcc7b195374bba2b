//! Bayesian filtering over places with history-dependent observation models.
//!
//! Each step predicts with the place transition matrix, weights every place
//! by its model's probability of the new word given the shared recent word
//! history, and renormalizes.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ngram::PlaceModel;
use crate::wordselect::WordSequence;

/// Ordered set of places with display names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSet {
    ids: Vec<u32>,
    names: Vec<String>,
}

impl ClassSet {
    pub fn new(ids: Vec<u32>, names: Vec<String>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Validation("class set is empty".into()));
        }
        if ids.len() != names.len() {
            return Err(Error::Dimension(format!(
                "{} class ids but {} names",
                ids.len(),
                names.len()
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("class ids must be unique".into()));
        }
        Ok(ClassSet { ids, names })
    }

    /// Classes named `c<id>`.
    pub fn from_ids(ids: Vec<u32>) -> Result<Self> {
        let names = ids.iter().map(|i| format!("c{i}")).collect();
        ClassSet::new(ids, names)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&c| c == id)
    }
}

/// Row-stochastic place transition matrix; entry `(i, j)` is `P(j | i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    size: usize,
    probs: Vec<f64>,
    p_e: f64,
}

/// Self-transition `p_e`, the remainder shared evenly by the other places.
pub fn make_transition(classes: &ClassSet, p_e: f64) -> Result<TransitionMatrix> {
    TransitionMatrix::uniform_switch(classes.len(), p_e)
}

impl TransitionMatrix {
    pub fn uniform_switch(size: usize, p_e: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::Validation("transition matrix needs at least one class".into()));
        }
        if !(p_e > 0.0 && p_e <= 1.0) {
            return Err(Error::Validation(format!("p_e = {p_e} is outside (0, 1]")));
        }
        if size == 1 && p_e != 1.0 {
            return Err(Error::Validation("a single class requires p_e = 1".into()));
        }
        let off = if size > 1 {
            (1.0 - p_e) / (size - 1) as f64
        } else {
            0.0
        };
        let mut probs = vec![off; size * size];
        for i in 0..size {
            probs[i * size + i] = p_e;
        }
        Ok(TransitionMatrix { size, probs, p_e })
    }

    /// Arbitrary row-stochastic matrix, rows given in order.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 || rows.iter().any(|r| r.len() != size) {
            return Err(Error::Dimension("transition matrix must be square and non-empty".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Validation(format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("row {i} sums to {s}")));
            }
        }
        let p_e = rows[0][0];
        Ok(TransitionMatrix {
            size,
            probs: rows.concat(),
            p_e,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Self-transition probability of the first class.
    pub fn p_e(&self) -> f64 {
        self.p_e
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.size + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.probs[from * self.size..(from + 1) * self.size]
    }
}

/// Normalized posterior over places at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub probs: Vec<f64>,
    pub t: usize,
}

impl Belief {
    pub fn uniform(n: usize) -> Self {
        Belief {
            probs: vec![1.0 / n as f64; n],
            t: 0,
        }
    }

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Validation("belief entries must be finite and non-negative".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("belief sums to {s}")));
        }
        Ok(Belief { probs, t: 0 })
    }

    /// Index of the most probable place, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Belief plus the shared recent-word history.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub belief: Belief,
    pub history: VecDeque<u32>,
}

/// Immutable filtering setup: one model per class and the transitions.
#[derive(Debug, Clone, Copy)]
pub struct Filter<'a> {
    models: &'a [PlaceModel],
    transition: &'a TransitionMatrix,
    vocab_size: usize,
    order: usize,
}

impl<'a> Filter<'a> {
    pub fn new(models: &'a [PlaceModel], transition: &'a TransitionMatrix) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::Validation("no place models".into()))?;
        if models.len() != transition.size() {
            return Err(Error::Dimension(format!(
                "{} models but a {}x{} transition matrix",
                models.len(),
                transition.size(),
                transition.size()
            )));
        }
        let (vocab_size, order) = (first.vocab_size(), first.order());
        if models
            .iter()
            .any(|m| m.vocab_size() != vocab_size || m.order() != order)
        {
            return Err(Error::Validation("place models must share vocabulary size and order".into()));
        }
        Ok(Filter {
            models,
            transition,
            vocab_size,
            order,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn start(&self, prior: Belief) -> Result<FilterState> {
        if prior.probs.len() != self.models.len() {
            return Err(Error::Dimension(format!(
                "prior has {} entries for {} classes",
                prior.probs.len(),
                self.models.len()
            )));
        }
        Ok(FilterState {
            belief: prior,
            history: VecDeque::with_capacity(self.order),
        })
    }

    /// One prediction-correction step with observed word `w`.
    pub fn step(&self, state: &FilterState, w: u32) -> Result<FilterState> {
        let mut next = state.clone();
        self.step_in_place(&mut next, w)?;
        Ok(next)
    }

    fn step_in_place(&self, state: &mut FilterState, w: u32) -> Result<()> {
        if w as usize >= self.vocab_size {
            return Err(Error::Validation(format!(
                "word {w} outside the vocabulary of {}",
                self.vocab_size
            )));
        }
        let history = state.history.make_contiguous();
        let n = self.models.len();
        let prior = &state.belief.probs;
        let mut post = vec![0.0; n];
        for (c, slot) in post.iter_mut().enumerate() {
            let predicted: f64 = (0..n).map(|from| self.transition.get(from, c) * prior[from]).sum();
            *slot = self.models[c].prob(history, w) * predicted;
        }
        let z: f64 = post.iter().sum();
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Validation(format!(
                "belief normalizer {z} at step {} is not positive",
                state.belief.t
            )));
        }
        post.iter_mut().for_each(|p| *p /= z);
        state.belief = Belief {
            probs: post,
            t: state.belief.t + 1,
        };
        if self.order > 1 {
            if state.history.len() == self.order - 1 {
                state.history.pop_front();
            }
            state.history.push_back(w);
        }
        Ok(())
    }

    /// Filters a whole sequence from `prior`, recording every belief.
    pub fn run(&self, seq: &WordSequence, prior: Belief) -> Result<FilterTrace> {
        if seq.is_empty() {
            return Err(Error::Validation("cannot filter an empty sequence".into()));
        }
        if let Some(i) = seq.words().iter().position(|&w| w as usize >= self.vocab_size) {
            return Err(Error::Validation(format!(
                "word {} at index {i} is outside the vocabulary of {}",
                seq.words()[i],
                self.vocab_size
            )));
        }
        let mut state = self.start(prior)?;
        let mut beliefs = Vec::with_capacity(seq.len());
        let mut map = Vec::with_capacity(seq.len());
        for &w in seq.words() {
            self.step_in_place(&mut state, w)?;
            map.push(state.belief.argmax());
            beliefs.push(state.belief.clone());
        }
        Ok(FilterTrace {
            words: seq.words().to_vec(),
            beliefs,
            map,
        })
    }
}

/// Per-step output of [`filter_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    pub words: Vec<u32>,
    pub beliefs: Vec<Belief>,
    /// MAP class index (into the model list) after each step.
    pub map: Vec<usize>,
}

impl FilterTrace {
    /// MAP decisions as class ids.
    pub fn map_labels(&self, models: &[PlaceModel]) -> Vec<u32> {
        self.map.iter().map(|&i| models[i].class_id()).collect()
    }

    /// CSV with header `t,word,belief_<name>...,map_label`; `t` counts from 1.
    pub fn to_csv(&self, classes: &ClassSet) -> String {
        let mut out = String::from("t,word");
        for name in classes.names() {
            let _ = write!(out, ",belief_{name}");
        }
        out.push_str(",map_label\n");
        for (i, b) in self.beliefs.iter().enumerate() {
            let _ = write!(out, "{},{}", b.t, self.words[i]);
            for p in &b.probs {
                let _ = write!(out, ",{p}");
            }
            let _ = writeln!(out, ",{}", classes.ids()[self.map[i]]);
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, classes: &ClassSet) -> Result<()> {
        std::fs::write(path, self.to_csv(classes))?;
        Ok(())
    }
}

/// Single filtering step; see [`Filter::step`].
pub fn filter_step(
    models: &[PlaceModel],
    transition: &TransitionMatrix,
    state: &FilterState,
    w: u32,
) -> Result<FilterState> {
    Filter::new(models, transition)?.step(state, w)
}

/// Filters `seq` from `prior`; see [`Filter::run`].
pub fn filter_sequence(
    models: &[PlaceModel],
    transition: &TransitionMatrix,
    seq: &WordSequence,
    prior: Belief,
) -> Result<FilterTrace> {
    Filter::new(models, transition)?.run(seq, prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::{count_ngrams, estimate, SmoothingSpec};

    fn model(class: u32, data: &[u32], order: usize, k: usize) -> PlaceModel {
        estimate(count_ngrams(&[data.to_vec()], order).unwrap(), k, SmoothingSpec::WittenBell, class).unwrap()
    }

    #[test]
    fn sticky_transition_values() {
        let classes = ClassSet::from_ids((0..5).collect()).unwrap();
        let t = make_transition(&classes, 0.99).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 0.99 } else { 0.0025 };
                assert!((t.get(i, j) - want).abs() < 1e-15);
            }
            assert!((t.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transition_validation() {
        let one = ClassSet::from_ids(vec![3]).unwrap();
        assert_eq!(make_transition(&one, 1.0).unwrap().row(0), &[1.0]);
        assert!(make_transition(&one, 0.9).is_err());
        let two = ClassSet::from_ids(vec![0, 1]).unwrap();
        assert!(make_transition(&two, 0.0).is_err());
        assert!(make_transition(&two, 1.2).is_err());
        assert!(ClassSet::from_ids(vec![1, 1]).is_err());
        assert!(ClassSet::from_ids(vec![]).is_err());
    }

    #[test]
    fn identical_models_keep_uniform_belief() {
        let models = vec![model(0, &[0, 1, 1, 2], 2, 3), model(1, &[0, 1, 1, 2], 2, 3)];
        let t = TransitionMatrix::uniform_switch(2, 0.9).unwrap();
        let trace = filter_sequence(&models, &t, &WordSequence::unlabeled(vec![2, 0, 1]), Belief::uniform(2)).unwrap();
        for b in &trace.beliefs {
            assert_eq!(b.probs, vec![0.5, 0.5]);
        }
        assert!(trace.map.iter().all(|&m| m == 0));
    }

    #[test]
    fn absorbing_prior() {
        let models = vec![model(0, &[0, 0, 0], 2, 3), model(1, &[1, 2, 1], 2, 3)];
        let t = TransitionMatrix::uniform_switch(2, 1.0).unwrap();
        let prior = Belief::new(vec![1.0, 0.0]).unwrap();
        let trace = filter_sequence(&models, &t, &WordSequence::unlabeled(vec![1, 2, 1, 2]), prior).unwrap();
        for b in &trace.beliefs {
            assert_eq!(b.probs, vec![1.0, 0.0]);
        }
    }

    #[test]
    fn single_class() {
        let models = vec![model(7, &[0, 1], 3, 2)];
        let t = TransitionMatrix::uniform_switch(1, 1.0).unwrap();
        let trace = filter_sequence(&models, &t, &WordSequence::unlabeled(vec![1, 1, 0]), Belief::uniform(1)).unwrap();
        assert!(trace.beliefs.iter().all(|b| b.probs == vec![1.0]));
        assert_eq!(trace.map_labels(&models), vec![7, 7, 7]);
    }

    #[test]
    fn history_ring_buffer() {
        let models = vec![model(0, &[0, 1, 2], 3, 3)];
        let t = TransitionMatrix::uniform_switch(1, 1.0).unwrap();
        let f = Filter::new(&models, &t).unwrap();
        let mut s = f.start(Belief::uniform(1)).unwrap();
        for w in [2, 0, 1, 1] {
            s = f.step(&s, w).unwrap();
        }
        assert_eq!(s.history, VecDeque::from(vec![1, 1]));
        assert_eq!(s.belief.t, 4);
    }

    #[test]
    fn rejects_bad_words_with_index() {
        let models = vec![model(0, &[0], 1, 2)];
        let t = TransitionMatrix::uniform_switch(1, 1.0).unwrap();
        let err = filter_sequence(&models, &t, &WordSequence::unlabeled(vec![0, 1, 5]), Belief::uniform(1)).unwrap_err();
        assert!(err.to_string().contains("index 2"));
        assert!(filter_sequence(&models, &t, &WordSequence::unlabeled(vec![]), Belief::uniform(1)).is_err());
    }

    #[test]
    fn csv_layout() {
        let models = vec![model(0, &[0, 0], 1, 2), model(3, &[1, 1], 1, 2)];
        let classes = ClassSet::new(vec![0, 3], vec!["office".into(), "kitchen".into()]).unwrap();
        let t = make_transition(&classes, 0.99).unwrap();
        let trace = filter_sequence(&models, &t, &WordSequence::unlabeled(vec![1]), Belief::uniform(2)).unwrap();
        let csv = trace.to_csv(&classes);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,word,belief_office,belief_kitchen,map_label");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "1");
        assert_eq!(row[1], "1");
        assert_eq!(row[4], "3");
    }
}
