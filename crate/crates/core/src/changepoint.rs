//! Stage II: frequency-wise CUSUM on blockwise spectra of one summary
//! component, with recursive binary segmentation.
//!
//! Segments are half-open block ranges `[start, end)`. A split at absolute
//! block `t₀` separates `[start, t₀)` from `[t₀, end)` and is reported at
//! sample `t₀·B`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{MultichannelSeries, DEFAULT_SPAN};
use crate::spca::{
    contemporaneous_pcs, extract_spectral_pcs, ComponentSource, SpectralPcaConfig, DEFAULT_COMPONENTS, DEFAULT_RADIUS,
};

pub const DEFAULT_BLOCK_LENGTH: usize = 100;

/// Smallest segment (in blocks) on which a CUSUM is evaluated.
pub const MIN_SEGMENT_BLOCKS: usize = 3;

/// Smoothed periodogram of each block, one-sided grid `j = 0..=B/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpectrumSeries {
    /// `T̃ × J_b`.
    values: DMatrix<f64>,
    block_length: usize,
    sampling_rate: f64,
}

impl BlockSpectrumSeries {
    /// Wraps precomputed block spectra. Column `j` is taken to be frequency
    /// `j·fs/B` Hz.
    pub fn new(values: DMatrix<f64>, block_length: usize, sampling_rate: f64) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 blocks, got {}", values.nrows())));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidParameter("block spectra need at least one frequency".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("block spectra must be finite and nonnegative".into()));
        }
        if block_length == 0 || !(sampling_rate > 0.0) {
            return Err(Error::InvalidParameter("block length and sampling rate must be positive".into()));
        }
        Ok(Self { values, block_length, sampling_rate })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn num_blocks(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_freqs(&self) -> usize {
        self.values.ncols()
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampling_rate
    }

    pub fn freq_hz(&self, j: usize) -> f64 {
        j as f64 * self.sampling_rate / self.block_length as f64
    }

    pub fn freqs_hz(&self) -> Vec<f64> {
        (0..self.num_freqs()).map(|j| self.freq_hz(j)).collect()
    }

    /// Every entry multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { values: &self.values * c, ..self.clone() }
    }

    fn band_bins(&self, band: Option<(f64, f64)>) -> Result<Vec<usize>> {
        let bins: Vec<usize> = match band {
            None => (0..self.num_freqs()).collect(),
            Some((low, high)) => (0..self.num_freqs())
                .filter(|&j| {
                    let f = self.freq_hz(j);
                    f >= low && f <= high
                })
                .collect(),
        };
        if bins.is_empty() {
            let (low, high) = band.unwrap_or((f64::NAN, f64::NAN));
            return Err(Error::EmptyBand { low, high });
        }
        Ok(bins)
    }
}

pub fn block_spectra(pc: &[f64], block_length: usize, span: usize, sampling_rate: f64) -> Result<BlockSpectrumSeries> {
    if block_length < 2 {
        return Err(Error::InvalidParameter(format!("block length must be at least 2, got {block_length}")));
    }
    if span == 0 || span.is_multiple_of(2) || span > block_length {
        return Err(Error::InvalidParameter(format!(
            "smoothing span must be odd and in 1..={block_length}, got {span}"
        )));
    }
    let blocks = pc.len() / block_length;
    if blocks < 2 {
        return Err(Error::InvalidParameter(format!(
            "series of length {} holds fewer than 2 blocks of {block_length}",
            pc.len()
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(block_length);
    let kept = block_length / 2 + 1;
    let half = (span / 2) as isize;
    let norm = 1.0 / block_length as f64;

    let mut values = DMatrix::zeros(blocks, kept);
    for b in 0..blocks {
        let chunk = &pc[b * block_length..(b + 1) * block_length];
        let mean = chunk.iter().sum::<f64>() * norm;
        let mut buf: Vec<Complex64> = chunk.iter().map(|&x| Complex64::new(x - mean, 0.0)).collect();
        fft.process(&mut buf);
        let pgram: Vec<f64> = buf.iter().map(|z| z.norm_sqr() * norm).collect();
        for j in 0..kept {
            let mut acc = 0.0;
            for r in -half..=half {
                acc += pgram[(j as isize + r).rem_euclid(block_length as isize) as usize];
            }
            values[(b, j)] = acc / span as f64;
        }
    }
    BlockSpectrumSeries::new(values, block_length, sampling_rate)
}

/// `τ_T = 0.8·log_{1.1}(T)`.
pub fn threshold(t: f64) -> f64 {
    0.8 * t.ln() / 1.1f64.ln()
}

/// Largest value `C_t̃(ω)` can take on a segment of `m` blocks whatever the
/// spectra: `√(m(m−1))`. Mean-normalisation bounds the statistic.
pub fn cusum_ceiling(m: usize) -> f64 {
    let m = m as f64;
    (m * (m - 1.0)).sqrt()
}

fn check_segment(spectra: &BlockSpectrumSeries, start: usize, end: usize) -> Result<()> {
    if start >= end || end > spectra.num_blocks() {
        return Err(Error::InvalidParameter(format!(
            "segment [{start}, {end}) is not inside 0..{}",
            spectra.num_blocks()
        )));
    }
    Ok(())
}

fn cusum_column(spectra: &BlockSpectrumSeries, start: usize, end: usize, j: usize) -> Vec<f64> {
    let m = end - start;
    let mf = m as f64;
    let col: Vec<f64> = (start..end).map(|b| spectra.values[(b, j)]).collect();
    let total: f64 = col.iter().sum();
    let scale = total / mf;
    let mut left = 0.0;
    (1..m)
        .map(|k| {
            left += col[k - 1];
            if scale == 0.0 {
                return 0.0;
            }
            let kf = k as f64;
            let right = total - left;
            let stat = ((mf - kf) / (mf * kf)).sqrt() * left - (kf / (mf * (mf - kf))).sqrt() * right;
            stat.abs() / scale
        })
        .collect()
}

/// `C_t̃(ω_j)` for every interior split `t̃ = 1..m` of the segment
/// `[start, end)`; element `k − 1` belongs to the split after `k` blocks.
pub fn cusum_frequency(spectra: &BlockSpectrumSeries, start: usize, end: usize, j: usize) -> Result<Vec<f64>> {
    check_segment(spectra, start, end)?;
    if end - start < MIN_SEGMENT_BLOCKS {
        return Err(Error::InvalidParameter(format!(
            "CUSUM needs at least {MIN_SEGMENT_BLOCKS} blocks, segment has {}",
            end - start
        )));
    }
    if j >= spectra.num_freqs() {
        return Err(Error::InvalidParameter(format!("frequency index {j} out of range")));
    }
    Ok(cusum_column(spectra, start, end, j))
}

/// Frequency-wise and thresholded aggregate CUSUM over one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CusumTrace {
    pub segment: (usize, usize),
    /// Absolute candidate split blocks `start+1..end`.
    pub splits: Vec<usize>,
    /// `[split][frequency bin]`, every bin of the one-sided grid.
    pub per_frequency: Vec<Vec<f64>>,
    /// Bins that enter the aggregate.
    pub included_bins: Vec<usize>,
    pub aggregate: Vec<f64>,
    pub threshold: f64,
    /// Whether segmentation split this segment at its argmax.
    pub accepted: bool,
}

impl CusumTrace {
    /// Index into `splits` of the largest aggregate, ties to the smallest.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, &v) in self.aggregate.iter().enumerate() {
            if v > best.1 {
                best = (k, v);
            }
        }
        best
    }
}

/// `C_t̃ = Σ_j C_t̃(ω_j)·1{C_t̃(ω_j) > τ}` over the bins inside `band_hz`
/// (all bins when `None`).
pub fn cusum_aggregate(
    spectra: &BlockSpectrumSeries,
    start: usize,
    end: usize,
    tau: f64,
    band_hz: Option<(f64, f64)>,
) -> Result<CusumTrace> {
    check_segment(spectra, start, end)?;
    if end - start < MIN_SEGMENT_BLOCKS {
        return Err(Error::InvalidParameter(format!(
            "CUSUM needs at least {MIN_SEGMENT_BLOCKS} blocks, segment has {}",
            end - start
        )));
    }
    let included_bins = spectra.band_bins(band_hz)?;
    let columns: Vec<Vec<f64>> = (0..spectra.num_freqs()).map(|j| cusum_column(spectra, start, end, j)).collect();
    let splits: Vec<usize> = (start + 1..end).collect();
    let per_frequency: Vec<Vec<f64>> = (0..splits.len()).map(|k| columns.iter().map(|c| c[k]).collect()).collect();
    let aggregate =
        per_frequency.iter().map(|row| included_bins.iter().map(|&j| row[j]).filter(|&c| c > tau).sum()).collect();
    Ok(CusumTrace {
        segment: (start, end),
        splits,
        per_frequency,
        included_bins,
        aggregate,
        threshold: tau,
        accepted: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    /// Ascending absolute split blocks.
    pub change_blocks: Vec<usize>,
    /// Trace of every tested segment in visiting order.
    pub traces: Vec<CusumTrace>,
}

/// Recursive binary segmentation of `[start, end)`.
pub fn binary_segmentation(
    spectra: &BlockSpectrumSeries,
    start: usize,
    end: usize,
    tau: f64,
    band_hz: Option<(f64, f64)>,
) -> Result<Segmentation> {
    check_segment(spectra, start, end)?;
    spectra.band_bins(band_hz)?;
    let mut traces = Vec::new();
    split_recursive(spectra, start, end, tau, band_hz, &mut traces)?;
    let mut change_blocks: Vec<usize> = traces.iter().filter(|t| t.accepted).map(|t| t.splits[t.argmax().0]).collect();
    change_blocks.sort_unstable();
    Ok(Segmentation { change_blocks, traces })
}

fn split_recursive(
    spectra: &BlockSpectrumSeries,
    start: usize,
    end: usize,
    tau: f64,
    band_hz: Option<(f64, f64)>,
    traces: &mut Vec<CusumTrace>,
) -> Result<()> {
    if end - start < MIN_SEGMENT_BLOCKS {
        return Ok(());
    }
    let mut trace = cusum_aggregate(spectra, start, end, tau, band_hz)?;
    let (k, best) = trace.argmax();
    trace.accepted = best > tau;
    let t0 = trace.splits[k];
    let accepted = trace.accepted;
    traces.push(trace);
    if accepted {
        split_recursive(spectra, start, t0, tau, band_hz, traces)?;
        split_recursive(spectra, t0, end, tau, band_hz, traces)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    /// 1-based index of the summary component to segment.
    pub component: usize,
    pub source: ComponentSource,
    pub block_length: usize,
    pub span: usize,
    pub radius: usize,
    pub components: usize,
    pub band_hz: Option<(f64, f64)>,
    /// Replaces `τ_T` when set; for sensitivity analysis.
    pub threshold_override: Option<f64>,
    /// Estimate spectral filters block by block instead of globally.
    pub per_block_filters: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            component: 1,
            source: ComponentSource::Spectral,
            block_length: DEFAULT_BLOCK_LENGTH,
            span: DEFAULT_SPAN,
            radius: DEFAULT_RADIUS,
            components: DEFAULT_COMPONENTS,
            band_hz: None,
            threshold_override: None,
            per_block_filters: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangePointReport {
    pub change_blocks: Vec<usize>,
    pub change_times: Vec<usize>,
    pub change_seconds: Vec<f64>,
    pub component: usize,
    pub source: ComponentSource,
    pub band_hz: Option<(f64, f64)>,
    pub threshold: f64,
    pub series_length: usize,
    pub channels: usize,
    pub sampling_rate: f64,
    pub num_blocks: usize,
    pub explained_variance: Vec<f64>,
    pub traces: Vec<CusumTrace>,
    pub config: DetectConfig,
    #[serde(skip)]
    pub block_spectra: BlockSpectrumSeries,
    #[serde(skip)]
    pub component_series: Vec<f64>,
}

impl ChangePointReport {
    /// Re-runs segmentation on the stored spectra with another threshold.
    pub fn resegment(&self, tau: f64) -> Result<Segmentation> {
        binary_segmentation(&self.block_spectra, 0, self.num_blocks, tau, self.band_hz)
    }
}

pub fn detect(series: &MultichannelSeries, config: &DetectConfig) -> Result<ChangePointReport> {
    if config.components == 0 {
        return Err(Error::InvalidParameter("component count must be positive".into()));
    }
    // narrow series cannot carry more components than channels
    let q = config.components.min(series.channels());
    if config.component == 0 || config.component > q {
        return Err(Error::InvalidParameter(format!("component {} not in 1..={q}", config.component)));
    }
    let n = series.len();
    if n < 2 * config.block_length {
        return Err(Error::InvalidParameter(format!(
            "series of length {n} holds fewer than 2 blocks of {}",
            config.block_length
        )));
    }
    if let Some(tau) = config.threshold_override {
        if !tau.is_finite() {
            return Err(Error::InvalidParameter("threshold override must be finite".into()));
        }
    }

    let summary = match config.source {
        ComponentSource::Spectral => extract_spectral_pcs(
            series,
            &SpectralPcaConfig {
                components: q,
                radius: config.radius,
                span: config.span,
                per_block: config.per_block_filters.then_some(config.block_length),
            },
        )?,
        ComponentSource::Contemporaneous => contemporaneous_pcs(series, q)?,
    };
    let pc = summary.component(config.component - 1);
    let spectra = block_spectra(&pc, config.block_length, config.span, series.sampling_rate())?;
    let tau = config.threshold_override.unwrap_or_else(|| threshold(n as f64));
    let seg = binary_segmentation(&spectra, 0, spectra.num_blocks(), tau, config.band_hz)?;

    let change_times: Vec<usize> = seg.change_blocks.iter().map(|b| b * config.block_length).collect();
    Ok(ChangePointReport {
        change_seconds: change_times.iter().map(|&t| t as f64 / series.sampling_rate()).collect(),
        change_times,
        change_blocks: seg.change_blocks,
        component: config.component,
        source: config.source,
        band_hz: config.band_hz,
        threshold: tau,
        series_length: n,
        channels: series.channels(),
        sampling_rate: series.sampling_rate(),
        num_blocks: spectra.num_blocks(),
        explained_variance: summary.explained_variance().to_vec(),
        traces: seg.traces,
        config: *config,
        block_spectra: spectra,
        component_series: pc,
    })
}
