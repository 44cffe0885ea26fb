//! Dataset-level evaluation of TTA runs: relative error families over von
//! Mises paths, the distribution of per-rotation errors, shape consistency
//! of first differences, and TTA spread versus actual error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{von_mises_path, TensorPath};
use crate::tta::{compensated_sum, TtaResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("sample {sample}: target von Mises path is identically zero")]
    ZeroTargetMax { sample: usize },
    #[error("sample {sample}: sequences have lengths {left} and {right}")]
    LengthMismatch { sample: usize, left: usize, right: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("sequence has zero variance")]
    DegenerateSequence,
    #[error("every step has an aggregated von Mises stress below the division guard")]
    AllStepsExcluded,
    #[error("sample `{0}` has no target stress path")]
    MissingTarget(String),
    #[error("samples disagree on the number of rotations")]
    RaggedRotations,
    #[error("histogram would need {0} bins")]
    TooManyBins(usize),
    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
}

/// Normalization of the mean relative error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MereNormalization {
    /// `sqrt(Σ_t d²) / (max σ_v · T)`, with `T` outside the root.
    #[default]
    Verbatim,
    /// `sqrt(Σ_t d² / T) / max σ_v`, a plain normalized RMS.
    Rms,
}

/// Division guard for all relative quantities, MPa.
pub const EPS_DIV: f64 = 1e-9;
/// Threshold on `1 - r_TTA` below which the TTA shape counts as perfect.
pub const SHAPE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricFlags {
    pub mare_abs: bool,
    pub mere_normalization: MereNormalization,
    pub eps_div: f64,
}

impl Default for MetricFlags {
    fn default() -> Self {
        MetricFlags { mare_abs: false, mere_normalization: MereNormalization::Verbatim, eps_div: EPS_DIV }
    }
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

fn check_pair(sample: usize, target: &[f64], pred: &[f64]) -> Result<f64, MetricsError> {
    if target.len() != pred.len() || target.is_empty() {
        return Err(MetricsError::LengthMismatch { sample, left: target.len(), right: pred.len() });
    }
    let peak = max_of(target);
    if !(peak > 0.0) {
        return Err(MetricsError::ZeroTargetMax { sample });
    }
    Ok(peak)
}

/// Relative RMS-type error of one sample.
pub fn mere_term(sample: usize, target: &[f64], pred: &[f64], norm: MereNormalization) -> Result<f64, MetricsError> {
    let peak = check_pair(sample, target, pred)?;
    let t = target.len() as f64;
    let ss = compensated_sum(target.iter().zip(pred).map(|(a, b)| (a - b).powi(2)));
    Ok(match norm {
        MereNormalization::Verbatim => ss.sqrt() / (peak * t),
        MereNormalization::Rms => (ss / t).sqrt() / peak,
    })
}

/// Largest undershoot `max_t(target - pred)` relative to the target peak, or
/// the largest absolute deviation with `abs`.
pub fn mare_term(sample: usize, target: &[f64], pred: &[f64], abs: bool) -> Result<f64, MetricsError> {
    let peak = check_pair(sample, target, pred)?;
    let worst = target
        .iter()
        .zip(pred)
        .map(|(a, b)| if abs { (a - b).abs() } else { a - b })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(worst / peak)
}

/// Mean over samples of [`mere_term`]; each pair is (target, prediction).
pub fn mere_i(pairs: &[(&[f64], &[f64])], norm: MereNormalization) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let terms =
        pairs.iter().enumerate().map(|(m, (t, p))| mere_term(m, t, p, norm)).collect::<Result<Vec<_>, _>>()?;
    Ok(mean(&terms))
}

pub fn mare_i(pairs: &[(&[f64], &[f64])], abs: bool) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let terms = pairs.iter().enumerate().map(|(m, (t, p))| mare_term(m, t, p, abs)).collect::<Result<Vec<_>, _>>()?;
    Ok(mean(&terms))
}

/// MeRE of the aggregated von Mises paths; same formula as [`mere_i`].
pub fn mere_tta(pairs: &[(&[f64], &[f64])], norm: MereNormalization) -> Result<f64, MetricsError> {
    mere_i(pairs, norm)
}

pub fn mare_tta(pairs: &[(&[f64], &[f64])], abs: bool) -> Result<f64, MetricsError> {
    mare_i(pairs, abs)
}

/// Mean of `MeRE_i` over all `i = 0..N`.
pub fn mere_av(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::TooFewValues { needed: 1, got: 0 });
    }
    Ok(mean(values))
}

/// `sqrt(1/N Σ_{i=1..N} (MeRE_i - MeRE_av)²)`; index 0 is left out.
pub fn sd_mere(values: &[f64], mere_av: f64) -> Result<f64, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFewValues { needed: 2, got: values.len() });
    }
    let rest = &values[1..];
    Ok((compensated_sum(rest.iter().map(|v| (v - mere_av).powi(2))) / rest.len() as f64).sqrt())
}

/// Density-normalized histogram with a normal fit (sample mean, maximum
/// likelihood standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Left edge of bin 0.
    pub origin: f64,
    pub counts: Vec<usize>,
    pub density: Vec<f64>,
    pub fit_mean: f64,
    pub fit_sd: f64,
}

impl Histogram {
    pub fn area(&self) -> f64 {
        compensated_sum(self.density.iter().map(|d| d * self.bin_width))
    }

    pub fn normal_pdf(&self, x: f64) -> f64 {
        if self.fit_sd == 0.0 {
            return 0.0;
        }
        let z = (x - self.fit_mean) / self.fit_sd;
        (-0.5 * z * z).exp() / (self.fit_sd * (2.0 * std::f64::consts::PI).sqrt())
    }
}

pub const MAX_HISTOGRAM_BINS: usize = 10_000_000;

pub fn mere_histogram(values: &[f64], bin_width: f64) -> Result<Histogram, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFewValues { needed: 2, got: values.len() });
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(MetricsError::InvalidBinWidth(bin_width));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = max_of(values);
    let origin = (lo / bin_width).floor() * bin_width;
    let span = ((hi - origin) / bin_width).floor();
    if !(span < MAX_HISTOGRAM_BINS as f64) {
        return Err(MetricsError::TooManyBins(span as usize));
    }
    let bins = span as usize + 1;
    let mut counts = vec![0usize; bins];
    for v in values {
        let k = (((v - origin) / bin_width).floor().max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = values.len() as f64;
    let density = counts.iter().map(|&c| c as f64 / (n * bin_width)).collect();
    let fit_mean = mean(values);
    let fit_sd = (compensated_sum(values.iter().map(|v| (v - fit_mean).powi(2))) / n).sqrt();
    Ok(Histogram { bin_width, origin, counts, density, fit_mean, fit_sd })
}

/// Percentage of `population` strictly below `value`.
pub fn percentile_of(value: f64, population: &[f64]) -> Result<f64, MetricsError> {
    if population.is_empty() {
        return Err(MetricsError::TooFewValues { needed: 1, got: 0 });
    }
    let below = population.iter().filter(|&&p| p < value).count();
    Ok(100.0 * below as f64 / population.len() as f64)
}

pub fn first_differences(x: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if x.len() < 2 {
        return Err(MetricsError::TooFewValues { needed: 2, got: x.len() });
    }
    Ok(x.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Pearson correlation. Zero-variance input is an error, never 0.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch { sample: 0, left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(MetricsError::TooFewValues { needed: 2, got: x.len() });
    }
    let mx = mean(x);
    let my = mean(y);
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx).powi(2)));
    let syy = compensated_sum(y.iter().map(|b| (b - my).powi(2)));
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateSequence);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Outcome of a correlation-ratio comparison for one (sample, channel).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ShapeRatio {
    Ratio(f64),
    /// `1 - r_TTA` below [`SHAPE_EPS`]; the ratio is unbounded.
    PerfectTtaShape,
}

impl ShapeRatio {
    pub fn value(&self) -> f64 {
        match self {
            ShapeRatio::Ratio(v) => *v,
            ShapeRatio::PerfectTtaShape => f64::INFINITY,
        }
    }
}

/// `(1 - r_0) / (1 - r_TTA)` where each `r` correlates first differences of
/// a prediction with those of the target.
pub fn shape_ratio(target: &[f64], initial: &[f64], tta: &[f64]) -> Result<ShapeRatio, MetricsError> {
    if target.len() < 3 {
        return Err(MetricsError::TooFewValues { needed: 3, got: target.len() });
    }
    let dt = first_differences(target)?;
    let r0 = pearson_r(&first_differences(initial)?, &dt)?;
    let rt = pearson_r(&first_differences(tta)?, &dt)?;
    let denom = 1.0 - rt;
    if denom < SHAPE_EPS {
        return Ok(ShapeRatio::PerfectTtaShape);
    }
    Ok(ShapeRatio::Ratio((1.0 - r0) / denom))
}

/// Channels of the shape analysis: six stress components then von Mises.
pub const SHAPE_CHANNELS: [&str; 7] = ["11", "22", "33", "12", "13", "23", "vm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ChannelShape {
    Ratio(f64),
    PerfectTtaShape,
    /// A first-difference series had zero variance.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleShape {
    pub id: String,
    pub channels: Vec<ChannelShape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub samples: Vec<SampleShape>,
    /// Mean over finite ratios.
    pub mean_c_ratio: Option<f64>,
    pub finite_pairs: usize,
    pub perfect_pairs: usize,
    pub degenerate_pairs: usize,
    /// Fraction of evaluable (finite or perfect) pairs with ratio below 1.
    pub below_one_fraction: Option<f64>,
}

fn channel_shape(target: &[f64], initial: &[f64], tta: &[f64]) -> ChannelShape {
    match shape_ratio(target, initial, tta) {
        Ok(ShapeRatio::Ratio(v)) => ChannelShape::Ratio(v),
        Ok(ShapeRatio::PerfectTtaShape) => ChannelShape::PerfectTtaShape,
        Err(_) => ChannelShape::Degenerate,
    }
}

/// Shape analysis of every channel of every sample. Channels whose first
/// differences are constant are reported as degenerate instead of failing
/// the dataset.
pub fn shape_report(samples: &[EvaluatedSample<'_>]) -> Result<ShapeReport, MetricsError> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let initial = s.result.initial().ok_or(MetricsError::TooFewValues { needed: 1, got: 0 })?;
        let mut channels = Vec::with_capacity(7);
        for k in 0..6 {
            channels.push(channel_shape(&s.target.component(k), &initial.component(k), &s.result.aggregated.component(k)));
        }
        channels.push(channel_shape(&s.target_vm, &s.result.vm_individual[0], &s.result.vm_aggregated));
        out.push(SampleShape { id: s.id.to_owned(), channels });
    }
    let all = || out.iter().flat_map(|s| s.channels.iter());
    let finite: Vec<f64> = all()
        .filter_map(|c| match c {
            ChannelShape::Ratio(v) => Some(*v),
            _ => None,
        })
        .collect();
    let perfect = all().filter(|c| matches!(c, ChannelShape::PerfectTtaShape)).count();
    let degenerate = all().filter(|c| matches!(c, ChannelShape::Degenerate)).count();
    let evaluable = finite.len() + perfect;
    let below = finite.iter().filter(|&&v| v < 1.0).count();
    Ok(ShapeReport {
        samples: out,
        mean_c_ratio: (!finite.is_empty()).then(|| mean(&finite)),
        finite_pairs: finite.len(),
        perfect_pairs: perfect,
        degenerate_pairs: degenerate,
        below_one_fraction: (evaluable > 0).then(|| below as f64 / evaluable as f64),
    })
}

/// Dataset-averaged uncertainty and error curves over pseudo time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyCurves {
    /// `⟨SD_v,TTA⟩(t)`
    pub sd_mean: Vec<f64>,
    /// `⟨E_abs⟩(t)`
    pub eabs_mean: Vec<f64>,
    /// Steps kept in the relative curves.
    pub relative_steps: Vec<usize>,
    /// `⟨E_r⟩(t)` on `relative_steps`.
    pub er_mean: Vec<f64>,
    /// `⟨SD_r⟩(t)` on `relative_steps`.
    pub sdr_mean: Vec<f64>,
    pub excluded_steps: usize,
    /// Correlation of `⟨SD⟩` with `⟨E_abs⟩` over time; `None` when either
    /// curve is constant.
    pub r_abs: Option<f64>,
    pub r_rel: Option<f64>,
    /// Correlation of per-component spread with per-component absolute
    /// error, pooling every (sample, step, component) triple.
    pub r_components: Option<f64>,
}

pub fn uncertainty_curves(samples: &[EvaluatedSample<'_>], eps_div: f64) -> Result<UncertaintyCurves, MetricsError> {
    let first = samples.first().ok_or(MetricsError::Empty)?;
    let t_len = first.result.len();
    for (m, s) in samples.iter().enumerate() {
        if s.result.len() != t_len || s.target_vm.len() != t_len {
            return Err(MetricsError::LengthMismatch { sample: m, left: t_len, right: s.result.len() });
        }
    }
    let m = samples.len() as f64;
    let column_mean = |f: &dyn Fn(&EvaluatedSample<'_>, usize) -> f64, t: usize| {
        compensated_sum(samples.iter().map(|s| f(s, t))) / m
    };
    let eabs = |s: &EvaluatedSample<'_>, t: usize| (s.target_vm[t] - s.result.vm_aggregated[t]).abs();
    let sd_mean: Vec<f64> = (0..t_len).map(|t| column_mean(&|s, t| s.result.vm_sd[t], t)).collect();
    let eabs_mean: Vec<f64> = (0..t_len).map(|t| column_mean(&eabs, t)).collect();

    let relative_steps: Vec<usize> =
        (0..t_len).filter(|&t| samples.iter().all(|s| s.result.vm_aggregated[t] > eps_div)).collect();
    if relative_steps.is_empty() {
        return Err(MetricsError::AllStepsExcluded);
    }
    let er_mean: Vec<f64> =
        relative_steps.iter().map(|&t| column_mean(&|s, t| eabs(s, t) / s.result.vm_aggregated[t], t)).collect();
    let sdr_mean: Vec<f64> = relative_steps
        .iter()
        .map(|&t| column_mean(&|s, t| s.result.vm_sd[t] / s.result.vm_aggregated[t], t))
        .collect();

    let mut pooled_sd = Vec::new();
    let mut pooled_err = Vec::new();
    for s in samples {
        for t in 0..t_len {
            for k in 0..6 {
                pooled_sd.push(s.result.sd[t][k]);
                pooled_err.push((s.target[t].0[k] - s.result.aggregated[t].0[k]).abs());
            }
        }
    }

    Ok(UncertaintyCurves {
        r_abs: pearson_r(&sd_mean, &eabs_mean).ok(),
        r_rel: pearson_r(&sdr_mean, &er_mean).ok(),
        r_components: pearson_r(&pooled_sd, &pooled_err).ok(),
        excluded_steps: t_len - relative_steps.len(),
        sd_mean,
        eabs_mean,
        relative_steps,
        er_mean,
        sdr_mean,
    })
}

/// One sample's target next to its TTA result.
#[derive(Debug, Clone)]
pub struct EvaluatedSample<'a> {
    pub id: &'a str,
    pub target: &'a TensorPath,
    pub target_vm: Vec<f64>,
    pub result: &'a TtaResult,
}

impl<'a> EvaluatedSample<'a> {
    pub fn new(id: &'a str, target: &'a TensorPath, result: &'a TtaResult) -> Self {
        EvaluatedSample { id, target, target_vm: von_mises_path(target), result }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub predictions_per_sample: usize,
    pub steps: usize,
    pub mere_per_rotation: Vec<f64>,
    pub mare_per_rotation: Vec<f64>,
    pub mere_i0: Option<f64>,
    pub mare_i0: Option<f64>,
    pub mere_av: f64,
    pub sd_mere: Option<f64>,
    /// Percentage of rotated predictions with a smaller MeRE than the
    /// unrotated one.
    pub mere_i0_percentile: Option<f64>,
    pub mere_tta: f64,
    pub mare_tta: f64,
    pub shape: ShapeReport,
    pub uncertainty: UncertaintyCurves,
}

/// Per-rotation MeRE and MaRE over the dataset.
pub fn per_rotation_errors(samples: &[EvaluatedSample<'_>], flags: &MetricFlags) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    let first = samples.first().ok_or(MetricsError::Empty)?;
    let n = first.result.vm_individual.len();
    if samples.iter().any(|s| s.result.vm_individual.len() != n) {
        return Err(MetricsError::RaggedRotations);
    }
    let mut mere = Vec::with_capacity(n);
    let mut mare = Vec::with_capacity(n);
    for i in 0..n {
        let pairs: Vec<(&[f64], &[f64])> =
            samples.iter().map(|s| (s.target_vm.as_slice(), s.result.vm_individual[i].as_slice())).collect();
        mere.push(mere_i(&pairs, flags.mere_normalization)?);
        mare.push(mare_i(&pairs, flags.mare_abs)?);
    }
    Ok((mere, mare))
}

pub fn evaluate(samples: &[EvaluatedSample<'_>], flags: &MetricFlags) -> Result<MetricsReport, MetricsError> {
    let first = samples.first().ok_or(MetricsError::Empty)?;
    let (mere_per_rotation, mare_per_rotation) = per_rotation_errors(samples, flags)?;
    let identity_first = first.result.identity_first;

    let agg_pairs: Vec<(&[f64], &[f64])> =
        samples.iter().map(|s| (s.target_vm.as_slice(), s.result.vm_aggregated.as_slice())).collect();
    let av = mere_av(&mere_per_rotation)?;
    let sd = if identity_first {
        sd_mere(&mere_per_rotation, av).ok()
    } else if !mere_per_rotation.is_empty() {
        // no identity: every entry is a random rotation
        Some((compensated_sum(mere_per_rotation.iter().map(|v| (v - av).powi(2))) / mere_per_rotation.len() as f64).sqrt())
    } else {
        None
    };
    let mere_i0 = identity_first.then(|| mere_per_rotation[0]);
    let percentile = match mere_i0 {
        Some(v) if mere_per_rotation.len() > 1 => Some(percentile_of(v, &mere_per_rotation[1..])?),
        _ => None,
    };

    Ok(MetricsReport {
        samples: samples.len(),
        predictions_per_sample: mere_per_rotation.len(),
        steps: first.result.len(),
        mere_i0,
        mare_i0: identity_first.then(|| mare_per_rotation[0]),
        mere_av: av,
        sd_mere: sd,
        mere_i0_percentile: percentile,
        mere_tta: mere_tta(&agg_pairs, flags.mere_normalization)?,
        mare_tta: mare_tta(&agg_pairs, flags.mare_abs)?,
        shape: shape_report(samples)?,
        uncertainty: uncertainty_curves(samples, flags.eps_div)?,
        mere_per_rotation,
        mare_per_rotation,
    })
}
