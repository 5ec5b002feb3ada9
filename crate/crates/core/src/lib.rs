//! Graph convolutional networks for semi-supervised node classification,
//! built on a small sparse linear algebra core and a tape-based autodiff.
//!
//! ```no_run
//! use gcn::{data, model::GcnConfig, train};
//!
//! let ds = data::load_bundle("data/cora".as_ref()).unwrap();
//! let ds = data::Dataset { features: ds.features.row_normalized(), ..ds };
//! let (_, report) = train::train(&ds, &GcnConfig::default()).unwrap();
//! println!("test accuracy {:.3}", report.test_accuracy);
//! ```

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod dense;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod operator;
pub mod optim;
pub mod propagation;
pub mod rng;
pub mod sparse;
pub mod train;
pub mod wl;

pub use data::{Dataset, Features};
pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use graph::SparseGraph;
pub use model::{GcnConfig, Model};
pub use propagation::{PropagationKind, PropagationOps};
pub use sparse::CsrMatrix;
