//! Feature detection and hypothesis testing for extremely noisy grayscale
//! image series via 0-/1-dimensional cubical persistent homology.
//!
//! The pipeline: ingest frame stacks ([`imagio`]), compute sublevel-set
//! persistence diagrams ([`cubical`]), extract marked feature points
//! ([`detect`]), reduce diagrams to real-valued summaries ([`summaries`]),
//! and run Monte Carlo goodness-of-fit and multiple-testing procedures
//! against a Poisson shot-noise null ([`stats`]). [`synth`] generates
//! synthetic ground truth with shot noise plus the recovery metrics used to
//! score a detector, and [`oracle`] is a deliberately slow reference
//! implementation of persistence used by the test suites.

pub mod cubical;
pub mod detect;
pub mod error;
pub mod imagio;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod summaries;
pub mod synth;

pub use cubical::{InfiniteMode, PersistenceDiagram, PersistencePair, Pixel};
pub use detect::MarkedPointSet;
pub use error::{Error, Result};
pub use imagio::{ImageFrame, ImageStack, Rect, RegionSpec};
pub use stats::{MultiTestReport, NullModel, TestReport};
pub use summaries::{LifetimeVector, SummaryStatistic};
