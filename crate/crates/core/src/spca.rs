//! Stage I: low-dimensional summaries of a multichannel series.
//!
//! Spectral principal components are linear filters of the observed series,
//! `u_ℓ(t) = Σ_{h=−R}^{R} b_ℓ(h)·X(t−h)`, whose coefficients are the inverse
//! Fourier transform of the conjugated leading eigenvectors of the smoothed
//! spectral density matrix. The contemporaneous baseline is ordinary PCA on
//! the lag-0 covariance.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::signal::{
    eigen_from_coefficients, fourier_coefficients, FrequencyEigenStructure, MultichannelSeries, DEFAULT_SPAN,
};

/// Largest imaginary residual tolerated in filter coefficients.
pub const FILTER_IMAG_TOLERANCE: f64 = 1e-8;

pub const DEFAULT_RADIUS: usize = 50;
pub const DEFAULT_COMPONENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentSource {
    Spectral,
    Contemporaneous,
}

impl std::fmt::Display for ComponentSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ComponentSource::Spectral => "spectral",
            ComponentSource::Contemporaneous => "contemporaneous",
        })
    }
}

impl std::str::FromStr for ComponentSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spectral" | "spec" => Ok(ComponentSource::Spectral),
            "contemporaneous" | "pca" => Ok(ComponentSource::Contemporaneous),
            other => Err(Error::InvalidParameter(format!("unknown component source {other:?}"))),
        }
    }
}

/// Real filter coefficients `b_ℓ(h)` for lags `h = −R..=R`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionFilter {
    /// One `(2R+1) × p` matrix per component; row `h + R` holds lag `h`.
    coefficients: Vec<DMatrix<f64>>,
    radius: usize,
}

impl ExtractionFilter {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn components(&self) -> usize {
        self.coefficients.len()
    }

    pub fn channels(&self) -> usize {
        self.coefficients[0].ncols()
    }

    /// Coefficient row for component `l` (0-based) at lag `h`.
    pub fn at(&self, l: usize, h: isize) -> Vec<f64> {
        let row = (h + self.radius as isize) as usize;
        self.coefficients[l].row(row).iter().copied().collect()
    }

    pub fn component(&self, l: usize) -> &DMatrix<f64> {
        &self.coefficients[l]
    }

    /// Filters an already-centred `T × p` series. Samples outside `[0, T)`
    /// are treated as zero, so the output has exactly `T` rows.
    pub fn apply(&self, centered: &DMatrix<f64>) -> DMatrix<f64> {
        let n = centered.nrows();
        let r = self.radius as isize;
        let mut out = DMatrix::zeros(n, self.components());
        for (l, coef) in self.coefficients.iter().enumerate() {
            let mut u = vec![0.0; n];
            for (c, x) in centered.column_iter().enumerate() {
                for h in -r..=r {
                    let b = coef[((h + r) as usize, c)];
                    if b == 0.0 {
                        continue;
                    }
                    // t − h ∈ [0, n)
                    let lo = h.max(0) as usize;
                    let hi = (n as isize + h).min(n as isize).max(0) as usize;
                    for t in lo..hi {
                        u[t] += b * x[(t as isize - h) as usize];
                    }
                }
            }
            out.column_mut(l).copy_from_slice(&u);
        }
        out
    }
}

/// `b_ℓ(h) = (1/T) Σ_j V_ℓ*(ω_j) e^{2πi ω_j h}` for `|h| ≤ radius`.
pub fn build_filters(eigs: &FrequencyEigenStructure, radius: usize) -> Result<ExtractionFilter> {
    let n = eigs.num_freqs();
    if radius > n / 2 {
        return Err(Error::InvalidParameter(format!(
            "filter radius {radius} exceeds half the series length ({})",
            n / 2
        )));
    }
    let p = eigs.dim();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let width = 2 * radius + 1;

    let mut coefficients = Vec::with_capacity(eigs.components());
    for l in 0..eigs.components() {
        let mut coef = DMatrix::zeros(width, p);
        let mut residual = 0.0f64;
        for c in 0..p {
            let mut buf: Vec<Complex64> = (0..n).map(|j| eigs.eigenvectors(j)[(c, l)].conj()).collect();
            ifft.process(&mut buf);
            for (row, h) in (-(radius as isize)..=radius as isize).enumerate() {
                let z = buf[h.rem_euclid(n as isize) as usize] / n as f64;
                residual = residual.max(z.im.abs());
                coef[(row, c)] = z.re;
            }
        }
        if residual >= FILTER_IMAG_TOLERANCE {
            return Err(Error::ComplexFilter { component: l + 1, residual });
        }
        coefficients.push(coef);
    }
    Ok(ExtractionFilter { coefficients, radius })
}

/// `T × q` component matrix plus cumulative explained-variance shares.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryComponents {
    values: DMatrix<f64>,
    source: ComponentSource,
    explained_variance: Vec<f64>,
}

impl SummaryComponents {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn source(&self) -> ComponentSource {
        self.source
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn components(&self) -> usize {
        self.values.ncols()
    }

    /// Component `l`, 0-based.
    pub fn component(&self, l: usize) -> Vec<f64> {
        self.values.column(l).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPcaConfig {
    pub components: usize,
    pub radius: usize,
    pub span: usize,
    /// Estimate filters separately on consecutive blocks of this length
    /// instead of once over the whole series.
    pub per_block: Option<usize>,
}

impl Default for SpectralPcaConfig {
    fn default() -> Self {
        Self { components: DEFAULT_COMPONENTS, radius: DEFAULT_RADIUS, span: DEFAULT_SPAN, per_block: None }
    }
}

fn check_q(q: usize, p: usize) -> Result<()> {
    if q == 0 || q > p {
        return Err(Error::InvalidParameter(format!("component count must be in 1..={p}, got {q}")));
    }
    Ok(())
}

struct Extracted {
    values: DMatrix<f64>,
    captured: Vec<f64>,
    total: f64,
}

fn extract_window(series: &MultichannelSeries, q: usize, radius: usize, span: usize) -> Result<Extracted> {
    let coeffs = fourier_coefficients(series);
    let eigs = eigen_from_coefficients(&coeffs, span, q)?;
    let filters = build_filters(&eigs, radius)?;
    let values = filters.apply(&series.centered());
    let captured = (0..q).map(|l| (0..eigs.num_freqs()).map(|j| eigs.eigenvalues(j)[l]).sum()).collect();
    let total = (0..eigs.num_freqs()).map(|j| eigs.trace(j)).sum();
    Ok(Extracted { values, captured, total })
}

fn cumulative_share(captured: &[f64], total: f64) -> Result<Vec<f64>> {
    if !(total > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mut acc = 0.0;
    Ok(captured
        .iter()
        .map(|c| {
            acc += c;
            (acc / total).clamp(0.0, 1.0)
        })
        .collect())
}

pub fn extract_spectral_pcs(series: &MultichannelSeries, config: &SpectralPcaConfig) -> Result<SummaryComponents> {
    let q = config.components;
    check_q(q, series.channels())?;
    let n = series.len();

    let Some(block) = config.per_block else {
        if config.radius > n / 2 {
            return Err(Error::InvalidParameter(format!(
                "filter radius {} exceeds half the series length ({})",
                config.radius,
                n / 2
            )));
        }
        let ex = extract_window(series, q, config.radius, config.span)?;
        return Ok(SummaryComponents {
            explained_variance: cumulative_share(&ex.captured, ex.total)?,
            values: ex.values,
            source: ComponentSource::Spectral,
        });
    };

    if block < MultichannelSeries::MIN_LEN || block > n {
        return Err(Error::InvalidParameter(format!("per-block length {block} not in 4..={n}")));
    }
    let mut values = DMatrix::zeros(n, q);
    let mut captured = vec![0.0; q];
    let mut total = 0.0;
    let blocks = n / block;
    for b in 0..blocks {
        let start = b * block;
        // the trailing remainder joins the last block
        let end = if b + 1 == blocks { n } else { start + block };
        let window = series.slice(start, end)?;
        let ex = extract_window(&window, q, config.radius.min((end - start) / 2), config.span)?;
        values.rows_mut(start, end - start).copy_from(&ex.values);
        for (acc, c) in captured.iter_mut().zip(&ex.captured) {
            *acc += c;
        }
        total += ex.total;
    }
    Ok(SummaryComponents {
        values,
        source: ComponentSource::Spectral,
        explained_variance: cumulative_share(&captured, total)?,
    })
}

/// Cumulative eigenvalue shares `Σ_{ℓ≤k} λ_ℓ / Σ_ℓ λ_ℓ`.
pub fn cumulative_proportions(eigenvalues: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = eigenvalues.iter().sum();
    cumulative_share(eigenvalues, total)
}

/// Classical PCA on `Σ̂ = (1/T) Σ_t X(t) X(t)ᵀ` of the centred series.
pub fn contemporaneous_pcs(series: &MultichannelSeries, q: usize) -> Result<SummaryComponents> {
    check_q(q, series.channels())?;
    let x = series.centered();
    let cov = (x.transpose() * &x) / series.len() as f64;
    let (values, vectors) = symmetric_eigen(&cov).ok_or(Error::EigenNoConvergence(0))?;
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let mut explained = cumulative_proportions(&clipped)?;
    explained.truncate(q);
    Ok(SummaryComponents {
        values: x * vectors.columns(0, q),
        source: ComponentSource::Contemporaneous,
        explained_variance: explained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{eigen_field, periodogram_field, smooth_field};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_series(t: usize, p: usize, seed: u64) -> MultichannelSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MultichannelSeries::new(DMatrix::from_fn(t, p, |_, _| rng.random_range(-1.0..1.0)), 100.0).unwrap()
    }

    /// Three channels that are lagged noisy copies of one AR(1) driver.
    fn lead_lag_series(t: usize, seed: u64) -> MultichannelSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = vec![0.0; t + 10];
        for i in 1..s.len() {
            s[i] = 0.7 * s[i - 1] + rng.random_range(-1.0..1.0);
        }
        let values = DMatrix::from_fn(t, 3, |i, ch| s[i + 10 - 3 * ch] + 0.2 * rng.random_range(-1.0..1.0));
        MultichannelSeries::new(values, 100.0).unwrap()
    }

    fn constant_structure(v: &[f64], n: usize) -> FrequencyEigenStructure {
        let col = DMatrix::from_fn(v.len(), 1, |i, _| c(v[i], 0.0));
        FrequencyEigenStructure::from_parts(vec![vec![1.0]; n], vec![col; n], vec![1.0; n]).unwrap()
    }

    #[test]
    fn constant_eigenvector_gives_delta_filter() {
        let v = [0.6, 0.8];
        let f = build_filters(&constant_structure(&v, 16), 5).unwrap();
        assert_eq!(f.radius(), 5);
        for h in -5..=5isize {
            let row = f.at(0, h);
            for ch in 0..2 {
                let expect = if h == 0 { v[ch] } else { 0.0 };
                assert!((row[ch] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn radius_bound_enforced() {
        assert!(build_filters(&constant_structure(&[1.0], 10), 6).is_err());
        assert!(build_filters(&constant_structure(&[1.0], 10), 5).is_ok());
    }

    #[test]
    fn broken_conjugate_symmetry_is_rejected() {
        let n = 8;
        let vecs: Vec<DMatrix<Complex64>> =
            (0..n).map(|j| DMatrix::from_element(1, 1, c((j as f64).cos(), (j as f64 + 0.3).sin()))).collect();
        let eigs = FrequencyEigenStructure::from_parts(vec![vec![1.0]; n], vecs, vec![1.0; n]).unwrap();
        assert!(matches!(build_filters(&eigs, 2), Err(Error::ComplexFilter { component: 1, .. })));
    }

    #[test]
    fn filter_roundtrip_recovers_conjugate_eigenvectors() {
        let s = random_series(128, 3, 4);
        let field = smooth_field(&periodogram_field(&fourier_coefficients(&s)), 5).unwrap();
        let eigs = eigen_field(&field, 2).unwrap();
        let full = build_filters(&eigs, 64).unwrap();
        for l in 0..2 {
            for j in 0..128 {
                for ch in 0..3 {
                    // forward DFT of b over h = −64..=64; lag ±64 alias, so halve them
                    let mut acc = c(0.0, 0.0);
                    for h in -64..=64isize {
                        let w = if h.abs() == 64 { 0.5 } else { 1.0 };
                        let ang = -2.0 * PI * j as f64 * h as f64 / 128.0;
                        acc += c(ang.cos(), ang.sin()) * full.at(l, h)[ch] * w;
                    }
                    let target = eigs.eigenvectors(j)[(ch, l)].conj();
                    assert!((acc - target).norm() < 1e-6, "l={l} j={j} ch={ch}");
                }
            }
        }

        // truncated filters still approximate V* in the mean-square sense
        let short = build_filters(&eigs, 20).unwrap();
        let mut err = 0.0;
        for j in 0..128 {
            for ch in 0..3 {
                let mut acc = c(0.0, 0.0);
                for h in -20..=20isize {
                    let ang = -2.0 * PI * j as f64 * h as f64 / 128.0;
                    acc += c(ang.cos(), ang.sin()) * short.at(0, h)[ch];
                }
                err += (acc - eigs.eigenvectors(j)[(ch, 0)].conj()).norm_sqr();
            }
        }
        assert!(err / 128.0 < 1.0, "mean-square truncation error {err}");
    }

    #[test]
    fn filter_coefficients_are_real_for_real_input() {
        let s = lead_lag_series(256, 3);
        let pcs = extract_spectral_pcs(&s, &SpectralPcaConfig::default()).unwrap();
        assert_eq!(pcs.len(), 256);
        assert_eq!(pcs.components(), 3);
        assert!(pcs.values().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn univariate_input_passes_through() {
        let s = random_series(200, 1, 6);
        let cfg = SpectralPcaConfig { components: 1, ..Default::default() };
        let pcs = extract_spectral_pcs(&s, &cfg).unwrap();
        let x = s.centered();
        for t in 0..200 {
            assert!((pcs.values()[(t, 0)] - x[(t, 0)]).abs() < 1e-8);
        }
        assert!((pcs.explained_variance()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_channels_collapse_to_rank_one() {
        let base = random_series(128, 1, 7);
        let x = base.values();
        let s = MultichannelSeries::new(DMatrix::from_fn(128, 2, |t, _| x[(t, 0)]), 100.0).unwrap();
        let coeffs = fourier_coefficients(&s);
        let eigs = eigen_from_coefficients(&coeffs, 5, 2).unwrap();
        for j in 0..128 {
            let v = eigs.eigenvalues(j);
            assert!(v[1] <= 1e-6 * v[0], "j={j}: {v:?}");
        }
        let cfg = SpectralPcaConfig { components: 1, radius: 20, ..Default::default() };
        let pcs = extract_spectral_pcs(&s, &cfg).unwrap();
        let xc = s.centered();
        for t in 0..128 {
            let avg = 0.5 * (xc[(t, 0)] + xc[(t, 1)]);
            assert!((pcs.values()[(t, 0)] - 2f64.sqrt() * avg).abs() < 1e-8);
        }
    }

    #[test]
    fn spectral_pcs_scale_equivariant() {
        let s = lead_lag_series(300, 11);
        let cfg = SpectralPcaConfig::default();
        let a = extract_spectral_pcs(&s, &cfg).unwrap();
        let b = extract_spectral_pcs(&s.scaled(3.5).unwrap(), &cfg).unwrap();
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            assert!((y - 3.5 * x).abs() < 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn spectral_pcs_permutation_equivariant_in_modulus() {
        let s = lead_lag_series(300, 12);
        let x = s.values();
        // channel 0 anchors the eigenvector phase, so permute the others
        let perm = MultichannelSeries::new(DMatrix::from_fn(300, 3, |t, ch| x[(t, [0, 2, 1][ch])]), 100.0).unwrap();
        let cfg = SpectralPcaConfig::default();
        let a = extract_spectral_pcs(&s, &cfg).unwrap();
        let b = extract_spectral_pcs(&perm, &cfg).unwrap();
        for (x, y) in a.values().column(0).iter().zip(b.values().column(0).iter()) {
            assert!((x.abs() - y.abs()).abs() < 1e-8);
        }
    }

    #[test]
    fn per_block_mode_keeps_length() {
        let s = lead_lag_series(450, 2);
        let cfg = SpectralPcaConfig { per_block: Some(100), radius: 20, ..Default::default() };
        let pcs = extract_spectral_pcs(&s, &cfg).unwrap();
        assert_eq!(pcs.len(), 450);
        let ev = pcs.explained_variance();
        assert!(ev.windows(2).all(|w| w[0] <= w[1]) && ev[2] <= 1.0);
    }

    #[test]
    fn spectral_first_component_dominates() {
        let s = lead_lag_series(512, 9);
        let pcs = extract_spectral_pcs(&s, &SpectralPcaConfig::default()).unwrap();
        let ev = pcs.explained_variance();
        assert!(ev[0] > 0.8, "{ev:?}");
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn contemporaneous_perfectly_correlated() {
        let rows = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![2.0, 2.0], vec![-2.0, -2.0]];
        let s = MultichannelSeries::from_rows(&rows, 100.0).unwrap();
        let pcs = contemporaneous_pcs(&s, 1).unwrap();
        let r2 = 2f64.sqrt();
        for (t, e) in [1.0, -1.0, 2.0, -2.0].iter().enumerate() {
            assert!((pcs.values()[(t, 0)] - r2 * e).abs() < 1e-12);
        }
        assert!((pcs.explained_variance()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contemporaneous_uncorrelated_variances() {
        // channel 0 variance 4, channel 1 variance 1, zero sample covariance
        let rows = vec![vec![2.0, 1.0], vec![-2.0, 1.0], vec![2.0, -1.0], vec![-2.0, -1.0]];
        let s = MultichannelSeries::from_rows(&rows, 100.0).unwrap();
        let pcs = contemporaneous_pcs(&s, 2).unwrap();
        let u = pcs.values();
        assert!((u.column(0).iter().map(|x| x * x).sum::<f64>() / 4.0 - 4.0).abs() < 1e-12);
        for t in 0..4 {
            assert!((u[(t, 0)] - rows[t][0]).abs() < 1e-12);
        }
        assert!((pcs.explained_variance()[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn contemporaneous_covariance_identity() {
        let s = random_series(200, 5, 31);
        let pcs = contemporaneous_pcs(&s, 5).unwrap();
        let u = pcs.values();
        let cov = (u.transpose() * u) / 200.0;
        let x = s.centered();
        let (lambda, _) = symmetric_eigen(&((x.transpose() * &x) / 200.0)).unwrap();
        for a in 0..5 {
            assert!((cov[(a, a)] - lambda[a]).abs() < 1e-8);
            for b in 0..5 {
                if a != b {
                    assert!(cov[(a, b)].abs() < 1e-8 * cov[(a, a)].max(1.0));
                }
            }
        }
        assert!(cov.diagonal().as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn cumulative_proportions_basics() {
        assert_eq!(cumulative_proportions(&[2.0, 1.0, 1.0]).unwrap(), vec![0.5, 0.75, 1.0]);
        assert!(matches!(cumulative_proportions(&[0.0, 0.0]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn rejects_bad_component_count() {
        let s = random_series(64, 2, 1);
        assert!(contemporaneous_pcs(&s, 3).is_err());
        let cfg = SpectralPcaConfig { components: 3, ..Default::default() };
        assert!(extract_spectral_pcs(&s, &cfg).is_err());
        let cfg = SpectralPcaConfig { components: 1, radius: 40, ..Default::default() };
        assert!(extract_spectral_pcs(&s, &cfg).is_err());
    }
}
