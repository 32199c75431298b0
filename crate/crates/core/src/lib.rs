//! Functional classwise principal component analysis.
//!
//! Sampled time series are smoothed onto a B-spline basis ([`basis`],
//! [`fdata`]). For each class, a functional PCA ([`fpca`]) of that class's
//! curves is augmented with grand-mean-minus-class-mean functions and
//! orthonormalised ([`orthonorm`]), giving one feature subspace per class.
//! A pooled-covariance linear discriminant in every subspace produces class
//! posteriors, and the most confident subspace labels the curve
//! ([`model`]).
//!
//! [`simgen`] reproduces the simulation designs, [`dataio`] reads UCR-style
//! files and builds folds, and [`experiment`] runs the evaluation protocols.
//! Data-parallel loops honour an [`Execution`] policy and use rayon when the
//! `parallel` feature is enabled.

pub mod basis;
pub mod dataio;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod fdata;
pub mod fpca;
pub mod model;
pub mod orthonorm;
pub mod rng;
pub mod simgen;

pub use basis::{BasisSpec, BasisSystem, FunctionalDatum, Interval};
pub use error::{Error, Result};
pub use exec::Execution;
pub use fdata::{smooth, FunctionalDataSet, Smoother};
pub use fpca::{fpca, mean_function, project_scores, FpcaResult};
pub use model::{fit, posterior, predict, predict_batch, FcpcaModel, ModelConfig, Prediction, PriorMode, Subspace};
pub use orthonorm::gram_schmidt;
