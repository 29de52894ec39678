//! Component-wise gradient boosting with deselection of base-learners that
//! contribute little to the total risk reduction.
//!
//! The numerical core is generic over the floating point type through
//! [`Scalar`]; the `*64` aliases below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselearners;
pub mod data;
pub mod deselection;
pub mod engine;
pub mod error;
pub mod families;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod simulation;
pub mod special;
pub mod tuning;

pub use baselearners::{BaseLearnerSet, LearnerKind, LearnerSpec, PSplineOptions};
pub use data::Dataset;
pub use deselection::{DeselectionMethod, DeselectionReport};
pub use engine::{boost, boost_lss, fit, BoostConfig, BoostFit, Booster, Prediction, SelectionRecord};
pub use error::{Error, Result};
pub use families::{Family, Link, PredictorState};
pub use scalar::Scalar;
pub use tuning::CvCurve;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type BoostFit64 = BoostFit<f64>;
pub type BoostFit32 = BoostFit<f32>;
pub type CvCurve64 = CvCurve<f64>;
pub type DeselectionReport64 = DeselectionReport<f64>;
pub type Prediction64 = Prediction<f64>;
