//! Visual place recognition from sequences of visual words.
//!
//! The pipeline turns images into global Gabor-energy descriptors
//! ([`gist`]), projects them with [`pca`], quantizes them into visual words
//! with a self-organizing map ([`som`]), optionally thins the word stream
//! ([`wordselect`]), learns one smoothed n-gram model per place ([`ngram`])
//! and tracks the place posterior with a Bayesian filter ([`filter`]).
//! [`harness`] generates synthetic worlds and runs parameter grids.

mod container;
pub mod descriptors;
pub mod error;
pub mod filter;
pub mod gist;
pub mod harness;
pub mod ngram;
pub mod pca;
pub mod som;
pub mod wordselect;

pub use error::{Error, Result};
pub use filter::{filter_sequence, filter_step, make_transition, Belief, ClassSet, Filter, FilterState, FilterTrace, TransitionMatrix};
pub use gist::{compute_gist, GaborBank, GrayImage, RawDescriptor};
pub use ngram::{count_ngrams, estimate, CountTable, PlaceModel, SmoothingSpec};
pub use pca::{fit_pca, PcaModel};
pub use som::{train_som, Codebook, SomTrainConfig};
pub use wordselect::{compress, mean_run_length, subsample, unique, SelectionStrategy, WordSequence};
