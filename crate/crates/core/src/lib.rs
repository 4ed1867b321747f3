//! Training-free time series clustering.
//!
//! Each of B branches pushes the dataset through a CNN-LSTM block whose
//! weights are drawn from {-1, 0, +1} and clusters the resulting features
//! with k-means. Branch clusterings whose cluster sizes stray too far from the
//! average are filtered out, and the survivors are fused into one partition by
//! spectral partitioning of the instance–cluster bipartite graph.
//!
//! ```no_run
//! use tscluster::{generate_cbf, pipeline, Hyperparams};
//!
//! let data = generate_cbf(100, 128, 7).unwrap();
//! let report = pipeline::run(&data, &Hyperparams::new(3)).unwrap();
//! println!("rand index {:?}", report.rand_index_vs_truth);
//! ```

pub mod data;
pub mod error;
pub mod feature_extractor;
pub mod hbgf;
pub mod io_ucr;
pub mod kmeans;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod selection;

pub use data::{
    average_cluster_size, ClusterAssignment, ClusteringEnsemble, Hyperparams, TimeSeries,
    TimeSeriesDataset,
};
pub use error::{Error, Result};
pub use io_ucr::{generate_cbf, inject_noise, load_ucr, pad_with_noise};
pub use matrix::FeatureMatrix;
pub use metrics::{ensemble_size_lower_bound, rand_index};
pub use pipeline::{run, RunReport};
