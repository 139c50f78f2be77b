//! Human pose estimation with latent clothing attributes.
//!
//! A pose is one candidate box per body part; clothing attributes (sleeve,
//! neckline, pattern) are discrete latent variables that are never
//! annotated. Both are scored jointly by a linear model `<beta, J(x, y)>`:
//!
//! - [`features`] builds `J` from HOG, LBP and color-histogram descriptors
//!   plus pairwise deformation offsets along the kinematic tree.
//! - [`inference`] maximizes the score: exact tree dynamic programming over
//!   poses, per-attribute argmax, and block-coordinate ascent over both.
//! - [`learning`] trains `beta` as a latent structured SVM: K-Means
//!   initialization of the latent attributes, relabeling, hard-negative
//!   mining and Pegasos subgradient updates.
//! - [`eval`] scores predictions with PCP and pairwise clustering F1.
//! - [`synth`] renders synthetic people with planted attributes.
//! - [`io`], [`render`] and [`cli`] hold the file formats and commands.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod inference;
pub mod io;
pub mod learning;
pub mod model;
pub mod render;
pub mod synth;

pub use error::{Error, Result};
