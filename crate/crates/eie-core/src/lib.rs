//! Elastic interaction energy (EIE) loss for multi-class image segmentation.
//!
//! The energy treats the boundaries of a predicted probability map and of the
//! one-hot ground truth as oppositely oriented curve sets. Evaluated spectrally
//! on the combined field `D = alpha * sigma(P) - G`, it is attractive between
//! prediction and ground truth and self-smoothing within the prediction, which
//! pulls thin, broken predictions back onto the annotated structure.
//!
//! The crate is organised around that loss:
//!
//! * [`field`] — dense `f64` field and label/logit/probability stacks,
//! * [`io`] — the `FLD` tensor file format and PGM masks,
//! * [`spectral`] — forward/inverse DFT (forward carries the `1/(h*w)`
//!   factor) and the `sqrt(m^2 + n^2)` frequency-radius kernel,
//! * [`loss`] — the energy, its exact gradient, softmax/cross-entropy and the
//!   combined training loss,
//! * [`evolve`] — gradient-flow simulator for the attraction dynamics,
//! * [`toytrain`] — synthetic scenes plus a hand-written linear classifier
//!   for desk-scale training comparisons,
//! * [`metrics`] — IoU, pixel F1, lane-point accuracy and row-center lane
//!   coordinate extraction,
//! * [`rng`] — the splitmix64 generator every seeded computation flows
//!   through.
//!
//! All types are immutable after construction and all operations are pure
//! functions; evaluating them from multiple threads is safe.

pub mod components;
pub mod error;
pub mod evolve;
pub mod field;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod rng;
pub mod spectral;
pub mod toytrain;

pub use error::{Error, Result};
pub use field::{Field2D, LabelStack, LogitStack, ProbStack};
pub use loss::{EieConfig, LossBreakdown};
