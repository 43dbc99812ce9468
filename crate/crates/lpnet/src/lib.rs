//! Layered proximal networks trained by alternating local estimation.
//!
//! The crate builds multi-level sparse representation networks in which each
//! node keeps a forward weight, an optional backward weight, a threshold, and
//! possibly a goal. Training alternates closed-form local updates — a
//! shrinkage representation step, a forward weight estimation with an
//! orthogonality-promoting regularizer, and a ridge-style backward weight
//! estimation — while goal information diffuses between neighboring levels.
//!
//! # Quick start
//!
//! ```
//! use std::collections::BTreeMap;
//! use lpnet::model::{build_network, GoalSpec, HyperParams, LevelLambdas};
//! use lpnet::data::synthetic_gaussians;
//! use lpnet::training::train;
//!
//! let lambdas = LevelLambdas {
//!     l1: 0.3,
//!     l2: 0.5,
//!     l5: 0.5,
//!     lb: 0.0,
//!     lf: 1.0,
//!     ..LevelLambdas::zeros()
//! };
//! let mut hyper = HyperParams::uniform(2, lambdas);
//! hyper.iterations = 3;
//! hyper.batch_fraction = 1.0;
//! hyper.rho = 0.0;
//!
//! let mut goals = BTreeMap::new();
//! goals.insert(2, GoalSpec::DynamicGoal { lambda0: 0.2, lambda1: 0.3, sweeps: 2 });
//!
//! let data = synthetic_gaussians(8, 3, 5, 4.0, 0.5, 42).unwrap();
//! let net = build_network(&[8, 8, 8], &hyper, &goals).unwrap();
//! let state = train(net, &data, &hyper).unwrap();
//! assert_eq!(state.metrics.len(), 3);
//! ```
//!
//! # Transforms
//!
//! The forward map at every level is a soft-thresholding transform:
//!
//! ```
//! use ndarray::array;
//! use lpnet::transforms::snt_apply;
//!
//! let out = snt_apply(array![2.0, -0.75, 0.1].view(), 0.5).unwrap();
//! assert_eq!(out.values, array![1.5, -0.25, 0.0]);
//! assert_eq!(out.support, vec![0, 1]);
//! ```

pub mod archive;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod goal;
pub mod knn;
pub mod model;
pub mod quartic;
pub mod solvers;
pub mod training;
pub mod transforms;

pub use error::{LpError, Result};

// The guide's code samples compile and run as doc-tests so the book can
// never drift from the public API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/transforms.md")]
    mod transforms {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/goals.md")]
    mod goals {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
