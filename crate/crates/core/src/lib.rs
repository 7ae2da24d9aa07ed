//! Variational Monte Carlo with a radial-basis-function network as the trial
//! amplitude over a truncated discrete basis, optimized by stochastic
//! reconfiguration.
//!
//! ```no_run
//! use rbf_vmc::{optimize, Activation, Model, RbfNetwork, SamplerConfig, SrConfig};
//!
//! let model = Model::Ho1d { field: 0.5, n_max: 20 };
//! let mut net = RbfNetwork::random(10, 1, 19.0, 1.0, Activation::Gaussian, 1).unwrap();
//! let record = optimize(
//!     &mut net,
//!     &model,
//!     &SamplerConfig::for_model(&model, 1),
//!     &SrConfig::with_rate(0.1, 300),
//! )
//! .unwrap();
//! println!("{} +- {}", record.final_energy, record.final_error);
//! ```

pub mod error;
pub mod hamiltonian;
pub mod harness;
pub mod optimizer;
pub mod oracle;
pub mod sampler;
pub mod wavefunction;

pub use error::{Result, VmcError};
pub use hamiltonian::{HermitianMatrix, Model, SparseRow};
pub use harness::{ExperimentConfig, Preset, Report};
pub use optimizer::{optimize, RunRecord, RunStatus, SrConfig};
pub use oracle::OracleResult;
pub use sampler::{run_sampling, SampleEstimates, SamplerConfig};
pub use wavefunction::{Activation, Configuration, RbfNetwork};
