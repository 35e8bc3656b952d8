//! Change-point detection for multichannel time series via spectral
//! principal components.
//!
//! The pipeline has two stages. Stage I summarises a `T × p` series by a few
//! univariate spectral principal components ([`spca`]), built from the
//! per-frequency eigenvectors of a smoothed spectral density matrix
//! ([`signal`]). Stage II splits one component into fixed-length blocks,
//! estimates a spectrum per block and runs a frequency-wise CUSUM statistic
//! under recursive binary segmentation ([`changepoint`]).
//!
//! [`sim`] holds the latent-source generators, mixing regimes and the
//! replication driver used to benchmark the detector. [`cli`] is the command
//! line surface shared by the `specpc` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod changepoint;
pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod signal;
pub mod sim;
pub mod spca;

pub use changepoint::{
    binary_segmentation, block_spectra, cusum_aggregate, cusum_frequency, detect, threshold, BlockSpectrumSeries,
    ChangePointReport, CusumTrace, DetectConfig,
};
pub use error::{Error, Result};
pub use signal::{
    eigen_field, fourier_coefficients, periodogram_field, smooth_field, FourierCoefficients, FrequencyEigenStructure,
    MultichannelSeries, SpectralDensityField,
};
pub use spca::{
    build_filters, contemporaneous_pcs, extract_spectral_pcs, ComponentSource, ExtractionFilter, SpectralPcaConfig,
    SummaryComponents,
};
