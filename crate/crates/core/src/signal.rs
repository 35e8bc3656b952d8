//! Discrete Fourier analysis of multichannel series.
//!
//! Frequencies are on the cycles-per-sample grid `ω_j = j / T`,
//! `j = 0..T`. Transforms use the time origin `t = 0`, which changes only a
//! global phase relative to a `t = 1` origin.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, hermitian_part, normalize_phase, symmetric_eigen};

/// Default Daniell window width.
pub const DEFAULT_SPAN: usize = 5;

/// Relative tolerance for clipping small negative eigenvalues to zero.
const PSD_TOLERANCE: f64 = 1e-8;

/// Real-valued `T × p` sample matrix (rows are time, columns are channels).
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSeries {
    values: DMatrix<f64>,
    sampling_rate: f64,
    channel_names: Option<Vec<String>>,
}

impl MultichannelSeries {
    pub const MIN_LEN: usize = 4;

    pub fn new(values: DMatrix<f64>, sampling_rate: f64) -> Result<Self> {
        if values.nrows() < Self::MIN_LEN {
            return Err(Error::InvalidSeries(format!(
                "need at least {} samples, got {}",
                Self::MIN_LEN,
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidSeries("series has no channels".into()));
        }
        if !(sampling_rate.is_finite() && sampling_rate > 0.0) {
            return Err(Error::InvalidSeries(format!("sampling rate must be positive, got {sampling_rate}")));
        }
        for channel in 0..values.ncols() {
            if let Some(row) = values.column(channel).iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { channel, row });
            }
        }
        Ok(Self { values, sampling_rate, channel_names: None })
    }

    /// Builds a series from time-major rows.
    pub fn from_rows(rows: &[Vec<f64>], sampling_rate: f64) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::InvalidSeries(format!("row {bad} has {} values, expected {p}", rows[bad].len())));
        }
        let values = DMatrix::from_fn(rows.len(), p, |t, c| rows[t][c]);
        Self::new(values, sampling_rate)
    }

    pub fn with_channel_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.channels() {
            return Err(Error::InvalidSeries(format!(
                "{} channel names for {} channels",
                names.len(),
                self.channels()
            )));
        }
        self.channel_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampling_rate
    }

    pub fn channel_names(&self) -> Option<&[String]> {
        self.channel_names.as_deref()
    }

    /// Per-channel mean-centred copy of the samples.
    pub fn centered(&self) -> DMatrix<f64> {
        let mut out = self.values.clone();
        for mut col in out.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        out
    }

    /// Every channel multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut s = Self::new(&self.values * c, self.sampling_rate)?;
        s.channel_names = self.channel_names.clone();
        Ok(s)
    }

    /// Contiguous time slice `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        let rows = self.values.rows(start, end - start).into_owned();
        Self::new(rows, self.sampling_rate)
    }
}

/// `d(ω_j) = T^{-1/2} Σ_t (X(t) − X̄) e^{−2πi ω_j t}` stored as a `T × p`
/// complex matrix; row `j` is frequency `j / T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoefficients {
    coeffs: DMatrix<Complex64>,
}

impl FourierCoefficients {
    pub fn from_matrix(coeffs: DMatrix<Complex64>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &DMatrix<Complex64> {
        &self.coeffs
    }

    pub fn num_freqs(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn channels(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Cycles per sample.
    pub fn freq(&self, j: usize) -> f64 {
        j as f64 / self.num_freqs() as f64
    }

    pub fn at(&self, j: usize) -> Vec<Complex64> {
        self.coeffs.row(j).iter().copied().collect()
    }
}

pub fn fourier_coefficients(series: &MultichannelSeries) -> FourierCoefficients {
    let centered = series.centered();
    let n = centered.nrows();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let scale = 1.0 / (n as f64).sqrt();

    let mut coeffs = DMatrix::<Complex64>::zeros(n, centered.ncols());
    for (c, col) in centered.column_iter().enumerate() {
        let mut buf: Vec<Complex64> = col.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft.process(&mut buf);
        for (j, z) in buf.into_iter().enumerate() {
            coeffs[(j, c)] = z * scale;
        }
    }
    FourierCoefficients { coeffs }
}

/// One Hermitian `p × p` matrix per Fourier frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensityField {
    matrices: Vec<DMatrix<Complex64>>,
    smoothing_span: usize,
}

impl SpectralDensityField {
    pub fn new(matrices: Vec<DMatrix<Complex64>>, smoothing_span: usize) -> Result<Self> {
        let p = matrices
            .first()
            .map(|m| m.nrows())
            .ok_or_else(|| Error::InvalidParameter("spectral density field needs at least one frequency".into()))?;
        if matrices.iter().any(|m| m.nrows() != p || m.ncols() != p) {
            return Err(Error::InvalidParameter("field matrices must all be p × p".into()));
        }
        Ok(Self { matrices, smoothing_span })
    }

    pub fn matrices(&self) -> &[DMatrix<Complex64>] {
        &self.matrices
    }

    pub fn at(&self, j: usize) -> &DMatrix<Complex64> {
        &self.matrices[j]
    }

    pub fn num_freqs(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn smoothing_span(&self) -> usize {
        self.smoothing_span
    }

    pub fn freq(&self, j: usize) -> f64 {
        j as f64 / self.num_freqs() as f64
    }

    /// Every matrix multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { matrices: self.matrices.iter().map(|m| m.map(|z| z * c)).collect(), smoothing_span: self.smoothing_span }
    }
}

/// `I(ω_j) = d(ω_j) d*(ω_j)`.
pub fn periodogram_field(coeffs: &FourierCoefficients) -> SpectralDensityField {
    let matrices = (0..coeffs.num_freqs())
        .map(|j| {
            let d = coeffs.coeffs.row(j).transpose();
            &d * d.adjoint()
        })
        .collect();
    SpectralDensityField { matrices, smoothing_span: 1 }
}

fn check_span(span: usize, num_freqs: usize) -> Result<()> {
    if span == 0 || span.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("smoothing span must be a positive odd integer, got {span}")));
    }
    if span > num_freqs {
        return Err(Error::InvalidParameter(format!(
            "smoothing span {span} exceeds the {num_freqs} available frequencies"
        )));
    }
    Ok(())
}

/// Flat Daniell smoother over `span` neighbouring frequencies, wrapping
/// around the frequency circle. The result is re-symmetrised to be exactly
/// Hermitian.
pub fn smooth_field(field: &SpectralDensityField, span: usize) -> Result<SpectralDensityField> {
    let n = field.num_freqs();
    check_span(span, n)?;
    let half = (span / 2) as isize;
    let weight = Complex64::new(1.0 / span as f64, 0.0);

    let matrices = (0..n)
        .into_par_iter()
        .map(|j| {
            let p = field.dim();
            let mut acc = DMatrix::<Complex64>::zeros(p, p);
            for r in -half..=half {
                let k = (j as isize + r).rem_euclid(n as isize) as usize;
                acc += &field.matrices[k];
            }
            hermitian_part(&acc.map(|z| z * weight))
        })
        .collect();
    Ok(SpectralDensityField { matrices, smoothing_span: span })
}

/// Leading eigenpairs of the spectral matrix at every frequency.
///
/// Eigenvalues are descending; eigenvectors are unit norm, phase-normalised,
/// and satisfy `V(ω_{T−j}) = conj(V(ω_j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyEigenStructure {
    eigenvalues: Vec<Vec<f64>>,
    eigenvectors: Vec<DMatrix<Complex64>>,
    traces: Vec<f64>,
}

impl FrequencyEigenStructure {
    /// Assembles a structure from per-frequency parts. `traces[j]` is the
    /// sum of all `p` eigenvalues at frequency `j`.
    pub fn from_parts(
        eigenvalues: Vec<Vec<f64>>,
        eigenvectors: Vec<DMatrix<Complex64>>,
        traces: Vec<f64>,
    ) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 || eigenvectors.len() != n || traces.len() != n {
            return Err(Error::InvalidParameter("eigen structure parts disagree in length".into()));
        }
        let q = eigenvalues[0].len();
        if eigenvalues.iter().any(|v| v.len() != q) || eigenvectors.iter().any(|v| v.ncols() != q) {
            return Err(Error::InvalidParameter("inconsistent component count".into()));
        }
        Ok(Self { eigenvalues, eigenvectors, traces })
    }

    pub fn num_freqs(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn components(&self) -> usize {
        self.eigenvalues[0].len()
    }

    pub fn dim(&self) -> usize {
        self.eigenvectors[0].nrows()
    }

    pub fn eigenvalues(&self, j: usize) -> &[f64] {
        &self.eigenvalues[j]
    }

    /// `p × q` matrix of eigenvectors at frequency `j`.
    pub fn eigenvectors(&self, j: usize) -> &DMatrix<Complex64> {
        &self.eigenvectors[j]
    }

    pub fn trace(&self, j: usize) -> f64 {
        self.traces[j]
    }

    /// Cumulative share of total spectral power carried by the first
    /// `1..=q` components, summed over all frequencies.
    pub fn explained_variance(&self) -> Result<Vec<f64>> {
        let total: f64 = self.traces.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroVariance);
        }
        let q = self.components();
        let mut out = Vec::with_capacity(q);
        let mut acc = 0.0;
        for l in 0..q {
            acc += self.eigenvalues.iter().map(|v| v[l]).sum::<f64>();
            out.push((acc / total).clamp(0.0, 1.0));
        }
        Ok(out)
    }
}

fn clip_small_negatives(values: &mut [f64]) {
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    for v in values.iter_mut() {
        if *v < 0.0 && *v >= -PSD_TOLERANCE * top {
            *v = 0.0;
        }
    }
}

fn check_components(q: usize, p: usize) -> Result<()> {
    if q == 0 || q > p {
        return Err(Error::InvalidParameter(format!("component count must be in 1..={p}, got {q}")));
    }
    Ok(())
}

type EigenSlot = (Vec<f64>, DMatrix<Complex64>, f64);

/// Frequencies equal to their own conjugate mirror, where the field of a
/// real series is real.
fn self_conjugate(j: usize, n: usize) -> bool {
    j == 0 || 2 * j == n
}

fn nearly_real(m: &DMatrix<Complex64>) -> bool {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    m.iter().all(|z| z.im.abs() <= 1e-10 * scale)
}

fn dense_slot(m: &DMatrix<Complex64>, q: usize, j: usize, real: bool) -> Result<EigenSlot> {
    let (mut values, vectors) = if real {
        // rounding leaves tiny imaginary parts that a small eigengap would amplify
        let (values, vectors) = symmetric_eigen(&m.map(|z| z.re)).ok_or(Error::EigenNoConvergence(j))?;
        (values, vectors.map(|x| Complex64::new(x, 0.0)))
    } else {
        hermitian_eigen(m).ok_or(Error::EigenNoConvergence(j))?
    };
    clip_small_negatives(&mut values);
    let trace = m.diagonal().iter().map(|z| z.re).sum();
    values.truncate(q);
    Ok((values, vectors.columns(0, q).into_owned(), trace))
}

/// Fills slots `j > n/2` by conjugate reflection of `n − j`.
fn reflect(half: Vec<EigenSlot>, n: usize) -> FrequencyEigenStructure {
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Vec::with_capacity(n);
    let mut traces = Vec::with_capacity(n);
    for j in 0..n {
        let (vals, vecs, tr) = if j < half.len() {
            half[j].clone()
        } else {
            let (vals, vecs, tr) = &half[n - j];
            (vals.clone(), vecs.map(|z| z.conj()), *tr)
        };
        eigenvalues.push(vals);
        eigenvectors.push(vecs);
        traces.push(tr);
    }
    FrequencyEigenStructure { eigenvalues, eigenvectors, traces }
}

/// Top-`q` eigenpairs of every matrix in the field.
pub fn eigen_field(field: &SpectralDensityField, q: usize) -> Result<FrequencyEigenStructure> {
    check_components(q, field.dim())?;
    let n = field.num_freqs();
    let half: Vec<EigenSlot> = (0..=n / 2)
        .into_par_iter()
        .map(|j| {
            let m = &field.matrices[j];
            dense_slot(m, q, j, self_conjugate(j, n) && nearly_real(m))
        })
        .collect::<Result<_>>()?;
    Ok(reflect(half, n))
}

/// Same result as `eigen_field(smooth_field(periodogram_field(coeffs), span), q)`
/// without materialising the dense field.
///
/// The smoothed matrix at `j` is `D D*` where `D` holds the `span`
/// neighbouring Fourier vectors scaled by `span^{-1/2}`, so its nonzero
/// eigenpairs follow from the `span × span` Gram matrix `D* D`. Falls back to
/// the dense solve when `span ≥ p` or `q` exceeds the numerical rank.
pub fn eigen_from_coefficients(coeffs: &FourierCoefficients, span: usize, q: usize) -> Result<FrequencyEigenStructure> {
    let n = coeffs.num_freqs();
    let p = coeffs.channels();
    check_span(span, n)?;
    check_components(q, p)?;
    let half_span = (span / 2) as isize;
    let scale = 1.0 / (span as f64).sqrt();

    let half: Vec<EigenSlot> = (0..=n / 2)
        .into_par_iter()
        .map(|j| {
            let d = DMatrix::from_fn(p, span, |c, r| {
                let k = (j as isize + r as isize - half_span).rem_euclid(n as isize) as usize;
                coeffs.coeffs[(k, c)] * scale
            });
            if span >= p || self_conjugate(j, n) {
                let m = &d * d.adjoint();
                let real = self_conjugate(j, n) && nearly_real(&m);
                return dense_slot(&m, q, j, real);
            }
            let gram = d.adjoint() * &d;
            let (mut mu, w) = hermitian_eigen(&gram).ok_or(Error::EigenNoConvergence(j))?;
            clip_small_negatives(&mut mu);
            let trace: f64 = gram.diagonal().iter().map(|z| z.re).sum();
            let rank = mu.iter().take_while(|&&m| m > 1e-12 * mu[0].max(f64::MIN_POSITIVE)).count();
            if q > rank {
                return dense_slot(&(&d * d.adjoint()), q, j, false);
            }
            let mut vectors = DMatrix::<Complex64>::zeros(p, q);
            for l in 0..q {
                let mut v: Vec<Complex64> = (&d * w.column(l)).iter().copied().collect();
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                for z in v.iter_mut() {
                    *z /= norm;
                }
                normalize_phase(&mut v);
                vectors.column_mut(l).copy_from_slice(&v);
            }
            mu.truncate(q);
            Ok((mu, vectors, trace))
        })
        .collect::<Result<_>>()?;
    Ok(reflect(half, n))
}
