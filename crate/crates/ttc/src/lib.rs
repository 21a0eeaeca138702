//! Threshold calibration for metric-learning embeddings on the unit sphere.
//!
//! Verification systems built on embedding distance need a decision
//! threshold, and the right threshold moves whenever the data distribution
//! does. This crate estimates pairwise TPR/TNR-vs-threshold curves directly
//! on the *unlabeled* deployment data — transductively — using a small graph
//! attention network trained to predict whether two embeddings share a
//! class, and then solves for the threshold that meets a target operating
//! point. Classical inductive calibration maps (Platt, beta, isotonic,
//! histogram binning) and a DBSCAN pseudo-labeling approach are included as
//! baselines, along with a synthetic scenario generator, neighborhood
//! density diagnostics, and an experiment harness with a deterministic CLI.
//!
//! The pieces compose in one line each:
//!
//! - [`synth`] draws labeled unit-sphere scenarios with disjoint
//!   train/calibration/test classes.
//! - [`curves`] turns labeled or predicted pair connectivity into
//!   performance curves and solves thresholds on them.
//! - [`net`] + [`optim`] define and train the connectivity network.
//! - [`pipeline`] wires the two training stages, threshold selection, and
//!   the transductive estimator together.
//! - [`baselines`] fits the inductive reference methods.
//! - [`experiment`] runs method sweeps from a plain-text config, and [`io`]
//!   / [`plot`] handle the file formats and SVG charts.

pub mod baselines;
pub mod curves;
pub mod density;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod net;
pub mod optim;
pub mod pipeline;
pub mod plot;
pub mod synth;

pub use curves::{CalibrationTarget, Metric, PerfCurve, ThresholdGrid};
pub use embedding::{EmbeddingSet, Partition};
pub use error::{Result, TtcError};
pub use pipeline::{calibrate, finetune, pretrain, select_tau, CalibratorModel, TtcReport};
