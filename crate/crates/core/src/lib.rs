// Negated comparisons are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over parallel fixed-size arrays read better than zipped iterators.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod geom;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nview;
pub mod pipeline;
pub mod admm;
pub mod projection;
pub mod recovery;
pub mod synth;
pub mod virtual_cam;

pub use error::{Error, Result};
