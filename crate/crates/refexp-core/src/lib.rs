//! Iterative RSA referring-expression engine over graded scene graphs.
//!
//! Pipeline: parse a graded scene ([`scene`]), align the annotated target
//! box and synthesize ordinal labels ([`prep`]), threshold the graded
//! scores into a categorical descriptor space and salience prior
//! ([`semantics`]), then run the iterative speaker loop ([`rsa`]) with an
//! optional n-gram plausibility bonus ([`ngram`]). Generated expressions
//! are scored by a simulated-comprehension harness ([`eval`], [`metrics`]).
//! [`synth`] produces seeded scenes with known discriminability for tests.
//!
//! All probability-bearing types are generic over the scalar type; the
//! aliases at the crate root fix it to `f64`.
//!
//! ```
//! use refexp_core::{ngram::LanguageModel, prep, rsa, scene, semantics};
//! use refexp_core::{Config, Scalar, Thresholds};
//!
//! let json = r#"{
//!     "image_id": "trains", "width": 100, "height": 50,
//!     "objects": [
//!         {"id": "t1", "bbox": [10, 10, 20, 20], "types": {"train": 0.9}},
//!         {"id": "t2", "bbox": [60, 10, 20, 20], "types": {"train": 0.9}}
//!     ],
//!     "target": {"bbox": [60, 10, 20, 20], "types": {"train": 0.9}}
//! }"#;
//! let scene = scene::parse_scene::<Scalar>(json.as_bytes()).unwrap();
//! let prepared = prep::prepare(scene).unwrap();
//! let space = semantics::categorize(&prepared, &Thresholds::default()).unwrap();
//! let prior = semantics::salience_prior(&prepared.scene).unwrap();
//! let (expression, _trace) = rsa::generate(
//!     &space,
//!     &prepared.alignment.target_id,
//!     &prior,
//!     &LanguageModel::Off,
//!     &Config::default(),
//! )
//! .unwrap();
//! assert_eq!(expression.text(), "the right");
//! ```

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub mod eval;
pub mod metrics;
pub mod ngram;
pub mod prep;
pub mod rsa;
pub mod scene;
pub mod semantics;
pub mod synth;

/// Scalar type the engine's probability math runs in: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + Sum
        + Debug
        + Display
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

/// Shorthand for lifting an `f64` constant into the working scalar.
pub(crate) fn real<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("finite f64 constant converts to any Real")
}

/// Default scalar for the concrete aliases below.
pub type Scalar = f64;

pub type Scene = scene::GradedScene<Scalar>;
pub type Prepared = prep::PreparedScene<Scalar>;
pub type Thresholds = semantics::ThresholdTable<Scalar>;
pub type Space = semantics::DescriptorSpace;
pub type Prior = semantics::Distribution<Scalar>;
pub type Lm = ngram::LanguageModel<Scalar>;
pub type Config = rsa::RsaConfig<Scalar>;
pub type Report = eval::MetricsReport<Scalar>;
