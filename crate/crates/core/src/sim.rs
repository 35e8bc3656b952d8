//! Synthetic benchmarks: oscillatory latent sources, lagged mixing regimes
//! with known change points, detection metrics and a replicate driver.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::changepoint::{detect, DetectConfig};
use crate::error::{Error, Result};
use crate::io::parse_key_values;
use crate::signal::MultichannelSeries;
use crate::spca::ComponentSource;

pub const DEFAULT_BURN_IN: usize = 500;
pub const DEFAULT_SAMPLING_RATE: f64 = 100.0;

/// Tolerance on the characteristic-root modulus; unit roots are admitted.
const ROOT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl Band {
    pub const ALL: [Band; 5] = [Band::Delta, Band::Theta, Band::Alpha, Band::Beta, Band::Gamma];

    /// Nominal band edges in Hz.
    pub fn nominal_hz(self) -> (f64, f64) {
        match self {
            Band::Delta => (0.0, 4.0),
            Band::Theta => (4.0, 8.0),
            Band::Alpha => (8.0, 12.0),
            Band::Beta => (12.0, 30.0),
            Band::Gamma => (30.0, 45.0),
        }
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "delta" => Ok(Band::Delta),
            "theta" => Ok(Band::Theta),
            "alpha" => Ok(Band::Alpha),
            "beta" => Ok(Band::Beta),
            "gamma" => Ok(Band::Gamma),
            other => Err(Error::InvalidParameter(format!("unknown band {other:?}"))),
        }
    }
}

/// AR(2) oscillator concentrating power in one EEG band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ar2BandSpec {
    pub band: Band,
    pub phi1: f64,
    pub phi2: f64,
}

impl Ar2BandSpec {
    pub fn table(band: Band) -> Self {
        let (phi1, phi2) = match band {
            Band::Delta => (1.998, -0.998),
            Band::Theta => (1.9, -0.998),
            Band::Alpha => (1.616, -0.998),
            Band::Beta => (-0.617, -0.998),
            Band::Gamma => (-1.616, -0.998),
        };
        Self { band, phi1, phi2 }
    }

    pub fn all() -> Vec<Self> {
        Band::ALL.iter().map(|&b| Self::table(b)).collect()
    }

    pub fn model(&self) -> SourceModel {
        SourceModel::Ar2 { phi1: self.phi1, phi2: self.phi2 }
    }

    /// Frequency of the complex characteristic root, `arccos(φ₁ / 2√−φ₂) / 2π · fs`.
    /// Real roots map to 0 or `fs/2`.
    pub fn root_angle_hz(&self, sampling_rate: f64) -> f64 {
        if self.phi2 >= 0.0 {
            return if self.phi1 >= 0.0 { 0.0 } else { sampling_rate / 2.0 };
        }
        let x = (self.phi1 / (2.0 * (-self.phi2).sqrt())).clamp(-1.0, 1.0);
        x.acos() / (2.0 * std::f64::consts::PI) * sampling_rate
    }
}

/// Univariate linear source driven by unit-variance Gaussian innovations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SourceModel {
    Ar2 { phi1: f64, phi2: f64 },
    Arma11 { phi: f64, theta: f64 },
    Ma1 { theta: f64 },
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceModel::Ar2 { phi1, phi2 } => {
                // roots of x² − φ₁x − φ₂ are the reciprocals of the roots of 1 − φ₁z − φ₂z²
                let disc = phi1 * phi1 + 4.0 * phi2;
                let modulus = if disc >= 0.0 { ((phi1.abs() + disc.sqrt()) / 2.0).abs() } else { (-phi2).sqrt() };
                if !(modulus <= 1.0 + ROOT_TOLERANCE) {
                    return Err(Error::NonStationary { phi1, phi2 });
                }
            }
            SourceModel::Arma11 { phi, theta } => {
                if !(phi.abs() < 1.0) {
                    return Err(Error::NonStationary { phi1: phi, phi2: 0.0 });
                }
                if !(theta.abs() < 1.0) {
                    return Err(Error::NonInvertible(theta));
                }
            }
            SourceModel::Ma1 { theta } => {
                if !(theta.abs() < 1.0) {
                    return Err(Error::NonInvertible(theta));
                }
            }
        }
        Ok(())
    }

    /// Runs the recursion on a given innovation sequence, zero initial state.
    pub fn filter(&self, innovations: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; innovations.len()];
        for t in 0..innovations.len() {
            let e = innovations[t];
            let x1 = if t >= 1 { out[t - 1] } else { 0.0 };
            let x2 = if t >= 2 { out[t - 2] } else { 0.0 };
            let e1 = if t >= 1 { innovations[t - 1] } else { 0.0 };
            out[t] = match *self {
                SourceModel::Ar2 { phi1, phi2 } => phi1 * x1 + phi2 * x2 + e,
                SourceModel::Arma11 { phi, theta } => phi * x1 + e + theta * e1,
                SourceModel::Ma1 { theta } => e + theta * e1,
            };
        }
        out
    }
}

/// `k × len` matrix of independent sources, burn-in discarded.
pub fn gen_sources<R: Rng + ?Sized>(
    models: &[SourceModel],
    len: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    for m in models {
        m.validate()?;
    }
    let mut out = DMatrix::zeros(models.len(), len);
    for (i, m) in models.iter().enumerate() {
        let eta: Vec<f64> = (0..len + burn_in).map(|_| rng.sample(StandardNormal)).collect();
        let x = m.filter(&eta);
        for (t, v) in x[burn_in..].iter().enumerate() {
            out[(i, t)] = *v;
        }
    }
    Ok(out)
}

pub fn gen_ar2_sources<R: Rng + ?Sized>(
    bands: &[Ar2BandSpec],
    len: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let models: Vec<SourceModel> = bands.iter().map(Ar2BandSpec::model).collect();
    gen_sources(&models, len, burn_in, rng)
}

/// Families for the mixed-source design. Defaults are configuration values,
/// not estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixedSourceConfig {
    pub arma_phi: f64,
    pub arma_theta: f64,
    pub ma_theta: f64,
}

impl Default for MixedSourceConfig {
    fn default() -> Self {
        Self { arma_phi: 0.5, arma_theta: 0.4, ma_theta: 0.6 }
    }
}

impl MixedSourceConfig {
    /// ARMA(1,1), MA(1), then theta, alpha and gamma AR(2) oscillators.
    pub fn models(&self) -> Vec<SourceModel> {
        vec![
            SourceModel::Arma11 { phi: self.arma_phi, theta: self.arma_theta },
            SourceModel::Ma1 { theta: self.ma_theta },
            Ar2BandSpec::table(Band::Theta).model(),
            Ar2BandSpec::table(Band::Alpha).model(),
            Ar2BandSpec::table(Band::Gamma).model(),
        ]
    }
}

pub fn gen_mixed_sources<R: Rng + ?Sized>(
    len: usize,
    burn_in: usize,
    config: &MixedSourceConfig,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    gen_sources(&config.models(), len, burn_in, rng)
}

/// Lagged linear mixing `X(t) = Σ M_lag · S(t − lag)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub lag_weights: Vec<(usize, DMatrix<f64>)>,
}

/// Piecewise mixing: regime `r` covers samples `[breakpoints[r−1], breakpoints[r])`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    pub breakpoints: Vec<usize>,
    pub regimes: Vec<Regime>,
    pub noise_sd: f64,
}

impl RegimeSpec {
    pub fn max_lag(&self) -> usize {
        self.regimes.iter().flat_map(|r| r.lag_weights.iter().map(|(l, _)| *l)).max().unwrap_or(0)
    }

    fn validate(&self, len: usize, k: usize) -> Result<usize> {
        if self.regimes.len() != self.breakpoints.len() + 1 {
            return Err(Error::InvalidParameter("need one more regime than breakpoints".into()));
        }
        let mut prev = 0;
        for &b in &self.breakpoints {
            if b <= prev || b >= len {
                return Err(Error::InvalidParameter(format!(
                    "breakpoint {b} not strictly increasing inside (0, {len})"
                )));
            }
            prev = b;
        }
        let p = self.regimes[0]
            .lag_weights
            .first()
            .map(|(_, m)| m.nrows())
            .ok_or_else(|| Error::InvalidParameter("regime has no weights".into()))?;
        for r in &self.regimes {
            for (_, m) in &r.lag_weights {
                if m.nrows() != p || m.ncols() != k || m.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter(format!("weights must be finite {p} × {k} matrices")));
                }
            }
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidParameter("noise standard deviation must be nonnegative".into()));
        }
        Ok(p)
    }
}

/// Mixes `k × L` sources into a `len × p` series plus `N(0, noise_sd²)`
/// channel noise. Output time `t` reads source index `t + max_lag − lag`, so
/// the sources must carry `max_lag` samples of history.
pub fn mix_with_lags<R: Rng + ?Sized>(
    sources: &DMatrix<f64>,
    spec: &RegimeSpec,
    len: usize,
    sampling_rate: f64,
    rng: &mut R,
) -> Result<MultichannelSeries> {
    let max_lag = spec.max_lag();
    if sources.ncols() < len + max_lag {
        return Err(Error::InvalidParameter(format!(
            "sources hold {} samples, need {} for lag {max_lag}",
            sources.ncols(),
            len + max_lag
        )));
    }
    let p = spec.validate(len, sources.nrows())?;
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut values = DMatrix::zeros(len, p);
    let mut regime = 0;
    for t in 0..len {
        while regime < spec.breakpoints.len() && t >= spec.breakpoints[regime] {
            regime += 1;
        }
        for (lag, m) in &spec.regimes[regime].lag_weights {
            let s = sources.column(t + max_lag - lag);
            let mixed = m * s;
            for c in 0..p {
                values[(t, c)] += mixed[c];
            }
        }
    }
    if spec.noise_sd > 0.0 {
        // column-major fill keeps the draw order independent of regimes
        for v in values.iter_mut() {
            *v += noise.sample(rng);
        }
    }
    MultichannelSeries::new(values, sampling_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ScenarioName {
    /// 20 channels, alpha weight lowered between samples 400 and 700.
    Figure1,
    /// One change at 550, lagged mixing, 128 channels.
    I,
    /// Three changes at 980, 2150, 3020 over 4000 samples.
    II,
    /// Scenario I with mixed ARMA/MA/AR(2) sources.
    III,
    /// Piecewise VAR(1) with coefficient 0.9 switching to −0.9 at 500.
    AppendixVar,
    /// Channelwise AR(1) with uniform coefficients switching sign at 500.
    AppendixCho,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 6] = [
        ScenarioName::Figure1,
        ScenarioName::I,
        ScenarioName::II,
        ScenarioName::III,
        ScenarioName::AppendixVar,
        ScenarioName::AppendixCho,
    ];

    pub fn truth(self) -> Vec<usize> {
        match self {
            ScenarioName::Figure1 => vec![400, 700],
            ScenarioName::I | ScenarioName::III => vec![550],
            ScenarioName::II => vec![980, 2150, 3020],
            ScenarioName::AppendixVar | ScenarioName::AppendixCho => vec![500],
        }
    }

    pub fn length(self) -> usize {
        match self {
            ScenarioName::II => 4000,
            _ => 1000,
        }
    }

    pub fn channels(self) -> usize {
        match self {
            ScenarioName::Figure1 => 20,
            ScenarioName::I | ScenarioName::II | ScenarioName::III => 128,
            ScenarioName::AppendixVar => 10,
            ScenarioName::AppendixCho => 100,
        }
    }

    /// Whether `channels_changed` affects the generator.
    pub fn uses_channels_changed(self) -> bool {
        matches!(self, ScenarioName::I | ScenarioName::II | ScenarioName::III)
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioName::Figure1 => "figure1",
            ScenarioName::I => "I",
            ScenarioName::II => "II",
            ScenarioName::III => "III",
            ScenarioName::AppendixVar => "appendix_var",
            ScenarioName::AppendixCho => "appendix_cho",
        })
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "figure1" | "fig1" => Ok(ScenarioName::Figure1),
            "I" | "i" | "1" => Ok(ScenarioName::I),
            "II" | "ii" | "2" => Ok(ScenarioName::II),
            "III" | "iii" | "3" => Ok(ScenarioName::III),
            "appendix_var" | "var" => Ok(ScenarioName::AppendixVar),
            "appendix_cho" | "cho" => Ok(ScenarioName::AppendixCho),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: ScenarioName,
    pub series: MultichannelSeries,
    pub truth: Vec<usize>,
}

/// Generator state for replicate `replicate` of an experiment seeded with `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

pub fn scenario(name: ScenarioName, channels_changed: usize, seed: u64) -> Result<Scenario> {
    scenario_with_rng(name, channels_changed, &mut replicate_rng(seed, 0))
}

fn row(values: [f64; 5]) -> Vec<f64> {
    values.to_vec()
}

/// Two-regime weight pairs for the lag-10/lag-15 designs. The first
/// `changed` rows take the second-regime pattern.
fn lagged_regimes(p: usize, changed: usize) -> (Regime, Regime) {
    let m10_1 = row([0.1, 0.1, 0.1, 0.1, 0.1]);
    let m15_1 = row([0.2, 0.1, 0.1, 0.1, 0.1]);
    let m10_2 = row([0.1, 0.1, 0.1, 0.1, 0.9]);
    let m15_2 = row([0.3, 0.1, 0.1, 0.1, 0.9]);
    let fill = |r: &[f64]| DMatrix::from_fn(p, 5, |_, j| r[j]);
    let first = Regime { lag_weights: vec![(10, fill(&m10_1)), (15, fill(&m15_1))] };
    let pick = |a: &[f64], b: &[f64]| DMatrix::from_fn(p, 5, |i, j| if i < changed { b[j] } else { a[j] });
    let second = Regime { lag_weights: vec![(10, pick(&m10_1, &m10_2)), (15, pick(&m15_1, &m15_2))] };
    (first, second)
}

/// Deterministic mixing weights in `[0.5, 1)` for the 20-channel design.
fn figure1_weights(p: usize, k: usize) -> DMatrix<f64> {
    const GOLDEN: f64 = 0.618_033_988_749_894_9;
    DMatrix::from_fn(p, k, |c, s| 0.5 + 0.5 * (((c * k + s + 1) as f64 * GOLDEN).fract()))
}

fn ar1_channels<R: Rng + ?Sized>(
    before: &[f64],
    after: &[f64],
    change: usize,
    len: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<MultichannelSeries> {
    let p = before.len();
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut x = vec![0.0; p];
    for _ in 0..DEFAULT_BURN_IN {
        for c in 0..p {
            x[c] = before[c] * x[c] + noise.sample(rng);
        }
    }
    let mut values = DMatrix::zeros(len, p);
    for t in 0..len {
        let coef = if t < change { before } else { after };
        for c in 0..p {
            x[c] = coef[c] * x[c] + noise.sample(rng);
            values[(t, c)] = x[c];
        }
    }
    MultichannelSeries::new(values, DEFAULT_SAMPLING_RATE)
}

pub fn scenario_with_rng<R: Rng + ?Sized>(
    name: ScenarioName,
    channels_changed: usize,
    rng: &mut R,
) -> Result<Scenario> {
    let len = name.length();
    let p = name.channels();
    if name.uses_channels_changed() && channels_changed > p {
        return Err(Error::InvalidParameter(format!("channels_changed {channels_changed} exceeds {p} channels")));
    }
    let truth = name.truth();
    let series = match name {
        ScenarioName::Figure1 => {
            let bands = [Band::Delta, Band::Alpha, Band::Gamma].map(Ar2BandSpec::table);
            let sources = gen_ar2_sources(&bands, len, DEFAULT_BURN_IN, rng)?;
            let full = figure1_weights(p, 3);
            let mut reduced = full.clone();
            reduced.column_mut(1).scale_mut(0.2);
            let spec = RegimeSpec {
                breakpoints: truth.clone(),
                regimes: vec![
                    Regime { lag_weights: vec![(0, full.clone())] },
                    Regime { lag_weights: vec![(0, reduced)] },
                    Regime { lag_weights: vec![(0, full)] },
                ],
                noise_sd: 1.0,
            };
            mix_with_lags(&sources, &spec, len, DEFAULT_SAMPLING_RATE, rng)?
        }
        ScenarioName::I | ScenarioName::II | ScenarioName::III => {
            let (first, second) = lagged_regimes(p, channels_changed);
            let regimes = if name == ScenarioName::II {
                vec![first.clone(), second.clone(), first, second]
            } else {
                vec![first, second]
            };
            let spec = RegimeSpec { breakpoints: truth.clone(), regimes, noise_sd: 1.0 };
            let history = len + spec.max_lag();
            let sources = if name == ScenarioName::III {
                gen_mixed_sources(history, DEFAULT_BURN_IN, &MixedSourceConfig::default(), rng)?
            } else {
                gen_ar2_sources(&Ar2BandSpec::all(), history, DEFAULT_BURN_IN, rng)?
            };
            mix_with_lags(&sources, &spec, len, DEFAULT_SAMPLING_RATE, rng)?
        }
        ScenarioName::AppendixVar => ar1_channels(&vec![0.9; p], &vec![-0.9; p], truth[0], len, 0.1, rng)?,
        ScenarioName::AppendixCho => {
            let alpha = Uniform::new(0.5, 0.59).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let beta = Uniform::new(-0.79, -0.5).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let a: Vec<f64> = (0..p).map(|_| alpha.sample(rng)).collect();
            let b: Vec<f64> = (0..p).map(|_| beta.sample(rng)).collect();
            ar1_channels(&a, &b, truth[0], len, 2.0, rng)?
        }
    };
    Ok(Scenario { name, series, truth })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub replicates: usize,
    /// Fraction of replicates with at least one detection.
    pub detection_rate: f64,
    /// Matched true change points over all true change points.
    pub detection_proportion: f64,
    /// Mean absolute distance in samples over matched pairs.
    pub mad: Option<f64>,
    pub matched: usize,
    pub window_blocks: usize,
    /// Detected change time → number of replicates reporting it.
    pub histogram: BTreeMap<usize, usize>,
}

/// Half the smallest gap between consecutive points of `{0, truth…, len}`,
/// in whole blocks, at least 1.
pub fn default_window_blocks(truth: &[usize], len: usize, block_length: usize) -> usize {
    let mut points = vec![0];
    points.extend_from_slice(truth);
    points.push(len);
    let gap = points.windows(2).map(|w| w[1].saturating_sub(w[0])).min().unwrap_or(0);
    ((gap as f64 / block_length as f64 / 2.0).floor() as usize).max(1)
}

pub fn evaluate(
    estimates: &[Vec<usize>],
    truth: &[usize],
    window_blocks: usize,
    block_length: usize,
) -> Result<EvalMetrics> {
    if truth.is_empty() {
        return Err(Error::InvalidParameter("evaluation needs at least one true change point".into()));
    }
    if window_blocks == 0 {
        return Err(Error::InvalidParameter("match window must be at least one block".into()));
    }
    let window = window_blocks * block_length;
    let mut detected = 0;
    let mut matched = 0;
    let mut abs_err = 0.0;
    let mut histogram = BTreeMap::new();

    for est in estimates {
        if !est.is_empty() {
            detected += 1;
        }
        for &e in est {
            *histogram.entry(e).or_insert(0) += 1;
        }
        let mut used = vec![false; est.len()];
        for &cp in truth {
            let best = est
                .iter()
                .enumerate()
                .filter(|(i, e)| !used[*i] && e.abs_diff(cp) <= window)
                .min_by_key(|(_, e)| (e.abs_diff(cp), **e));
            if let Some((i, e)) = best {
                used[i] = true;
                matched += 1;
                abs_err += e.abs_diff(cp) as f64;
            }
        }
    }
    let n = estimates.len().max(1) as f64;
    Ok(EvalMetrics {
        replicates: estimates.len(),
        detection_rate: detected as f64 / n,
        detection_proportion: matched as f64 / (n * truth.len() as f64),
        mad: (matched > 0).then(|| abs_err / matched as f64),
        matched,
        window_blocks,
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioName,
    pub channels_changed: usize,
    pub replicates: usize,
    pub seed: u64,
    pub detect: DetectConfig,
    pub window_blocks: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioName::I,
            channels_changed: 64,
            replicates: 100,
            seed: 1,
            detect: DetectConfig::default(),
            window_blocks: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad value {v:?} for {key}")))
}

/// Parses `low,high` or `low-high` as a frequency band in Hz.
pub fn parse_band(v: &str) -> Result<(f64, f64)> {
    if let Ok(b) = v.parse::<Band>() {
        return Ok(b.nominal_hz());
    }
    let parts: Vec<&str> = v.split([',', ':']).collect();
    if parts.len() != 2 {
        return Err(Error::InvalidParameter(format!("band must be LOW,HIGH or a band name, got {v:?}")));
    }
    let low: f64 = parse_value("band", parts[0])?;
    let high: f64 = parse_value("band", parts[1])?;
    if !(low <= high) {
        return Err(Error::InvalidParameter(format!("band low {low} exceeds high {high}")));
    }
    Ok((low, high))
}

impl ExperimentConfig {
    /// Applies `key = value` settings (scenario, channels_changed,
    /// replicates, seed, B, span, R, q, component, band, source, window).
    pub fn apply_settings(&mut self, settings: &BTreeMap<String, String>) -> Result<()> {
        for (key, v) in settings {
            match key.as_str() {
                "scenario" => self.scenario = v.parse()?,
                "channels_changed" => self.channels_changed = parse_value(key, v)?,
                "replicates" => self.replicates = parse_value(key, v)?,
                "seed" => self.seed = parse_value(key, v)?,
                "B" | "block_length" => self.detect.block_length = parse_value(key, v)?,
                "span" => self.detect.span = parse_value(key, v)?,
                "R" | "radius" => self.detect.radius = parse_value(key, v)?,
                "q" | "components" => self.detect.components = parse_value(key, v)?,
                "component" => self.detect.component = parse_value(key, v)?,
                "band" => self.detect.band_hz = Some(parse_band(v)?),
                "source" | "method" => self.detect.source = v.parse::<ComponentSource>()?,
                "window" => self.window_blocks = Some(parse_value(key, v)?),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_settings(&parse_key_values(text)?)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub scenario: ScenarioName,
    pub channels_changed: usize,
    pub source: ComponentSource,
    pub component: usize,
    pub seed: u64,
    pub truth: Vec<usize>,
    pub metrics: EvalMetrics,
    pub estimates: Vec<Vec<usize>>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be at least 1".into()));
    }
    let runs: Vec<(Vec<usize>, Vec<usize>)> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(config.seed, r);
            let sc = scenario_with_rng(config.scenario, config.channels_changed, &mut rng)?;
            let report = detect(&sc.series, &config.detect)?;
            Ok((report.change_times, sc.truth))
        })
        .collect::<Result<_>>()?;
    let truth = config.scenario.truth();
    debug_assert!(runs.iter().all(|(_, t)| *t == truth));
    let block = config.detect.block_length;
    let window = config.window_blocks.unwrap_or_else(|| default_window_blocks(&truth, config.scenario.length(), block));
    let estimates: Vec<Vec<usize>> = runs.into_iter().map(|(e, _)| e).collect();
    let metrics = evaluate(&estimates, &truth, window, block)?;
    Ok(ExperimentResult {
        scenario: config.scenario,
        channels_changed: config.channels_changed,
        source: config.detect.source,
        component: config.detect.component,
        seed: config.seed,
        truth,
        metrics,
        estimates,
    })
}
