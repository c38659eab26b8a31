//! Closed-loop calibration: single-channel ramps are measured against a
//! reference and per-channel 1D LUTs are refit until the chart matches.

use serde::{Deserialize, Serialize};

use crate::colorimetry::{delta_e2000, delta_e76, spectrum_to_lab, Lab, Spectrum, ViewingCondition, SAMPLES};
use crate::error::{Error, Result};
use crate::neugebauer::{InkSet, NPac};
use crate::press::{measure, Chart, InkPatch, Patch, PressModel};

pub const LUT_SIZE: usize = 256;
pub const DEFAULT_RAMP_STEPS: usize = 16;
pub const DEFAULT_REPEATS: usize = 3;
pub const DEFAULT_THRESHOLD: f64 = 1.0;
pub const DEFAULT_MAX_ITERS: usize = 3;

// Decorrelates the seeds of repeated or successive measurement rounds.
const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Ramp chart layout: the bare substrate, then `steps` patches per channel
/// at coverages `j / steps`, `j = 1..=steps`, one drop per covered pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RampChart {
    pub steps: usize,
    /// Measurements averaged per patch.
    pub repeats: usize,
}

impl Default for RampChart {
    fn default() -> Self {
        RampChart {
            steps: DEFAULT_RAMP_STEPS,
            repeats: DEFAULT_REPEATS,
        }
    }
}

impl RampChart {
    fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.repeats == 0 {
            return Err(Error::InvalidParameter("ramp steps and repeats must be positive".into()));
        }
        Ok(())
    }

    pub fn patch_count(&self, channels: usize) -> usize {
        channels * self.steps + 1
    }

    pub fn nominal(&self, step: usize) -> f64 {
        step as f64 / self.steps as f64
    }

    /// Patch index of `(channel, step)`, `step` in `1..=steps`.
    pub fn index(&self, channel: usize, step: usize) -> usize {
        1 + channel * self.steps + (step - 1)
    }

    /// The chart as printed through `luts`.
    pub fn chart(&self, inkset: &InkSet, luts: &[ChannelLut]) -> Result<Chart> {
        check_luts(luts, inkset)?;
        let n = inkset.n();
        let mut patches = vec![Patch::Ink(InkPatch { coverages: vec![0.0; n] })];
        for (ch, lut) in luts.iter().enumerate() {
            for step in 1..=self.steps {
                let mut coverages = vec![0.0; n];
                coverages[ch] = lut.eval(self.nominal(step));
                patches.push(Patch::Ink(InkPatch { coverages }));
            }
        }
        Chart::new(patches)
    }
}

fn measure_labs(
    press: &PressModel,
    chart: &Chart,
    vc: &ViewingCondition,
    seed: u64,
    repeats: usize,
) -> Result<Vec<Lab>> {
    let mut sums = vec![[0.0; SAMPLES]; chart.len()];
    for r in 0..repeats {
        let spectra = measure(press, chart, seed.wrapping_add((r as u64).wrapping_mul(SEED_STRIDE)))?;
        for (sum, s) in sums.iter_mut().zip(&spectra) {
            for (a, v) in sum.iter_mut().zip(s.values()) {
                *a += v;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|s| spectrum_to_lab(&Spectrum::clamped(s.map(|v| v / repeats as f64)), vc))
        .collect())
}

/// Reference chart measurements from a press in its nominal state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReference {
    pub chart: RampChart,
    pub inkset: InkSet,
    pub press_id: String,
    pub yn_exponent: f64,
    pub viewing_condition: String,
    /// Substrate first, then each channel's ramp.
    pub labs: Vec<Lab>,
}

impl CalibrationReference {
    /// Response of the reference at `(channel, step)`; step 0 is the substrate.
    fn response(&self, channel: usize, step: usize) -> f64 {
        if step == 0 {
            0.0
        } else {
            delta_e76(&self.labs[self.chart.index(channel, step)], &self.labs[0])
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chart.validate()?;
        if self.labs.len() != self.chart.patch_count(self.inkset.n()) {
            return Err(Error::Format(format!(
                "reference has {} patches, the chart has {}",
                self.labs.len(),
                self.chart.patch_count(self.inkset.n())
            )));
        }
        if self.labs.iter().any(|l| !l.is_finite()) {
            return Err(Error::Format("reference Lab values must be finite".into()));
        }
        Ok(())
    }
}

pub fn build_reference(
    press: &PressModel,
    chart: &RampChart,
    vc: &ViewingCondition,
    seed: u64,
) -> Result<CalibrationReference> {
    chart.validate()?;
    let identity = identity_luts(press.inkset());
    let labs = measure_labs(press, &chart.chart(press.inkset(), &identity)?, vc, seed, chart.repeats)?;
    Ok(CalibrationReference {
        chart: *chart,
        inkset: press.inkset().clone(),
        press_id: press.id().to_string(),
        yn_exponent: press.yn().exponent(),
        viewing_condition: vc.name.clone(),
        labs,
    })
}

/// 256-entry map from nominal to printed coverage, sampled at `e / 255`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelLut {
    pub name: String,
    pub entries: Vec<f64>,
}

impl ChannelLut {
    pub fn identity(name: impl Into<String>) -> Self {
        ChannelLut {
            name: name.into(),
            entries: (0..LUT_SIZE).map(|e| e as f64 / (LUT_SIZE - 1) as f64).collect(),
        }
    }

    pub fn new(name: impl Into<String>, entries: Vec<f64>) -> Result<Self> {
        let lut = ChannelLut {
            name: name.into(),
            entries,
        };
        lut.validate()?;
        Ok(lut)
    }

    /// Size, range, monotonicity and a pinned zero.
    pub fn validate(&self) -> Result<()> {
        let e = &self.entries;
        if e.len() != LUT_SIZE {
            return Err(Error::InvalidParameter(format!(
                "LUT {:?} has {} entries, expected {LUT_SIZE}",
                self.name,
                e.len()
            )));
        }
        if e.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(format!("LUT {:?} leaves [0, 1]", self.name)));
        }
        if e[0] != 0.0 {
            return Err(Error::InvalidParameter(format!("LUT {:?} does not map 0 to 0", self.name)));
        }
        if e.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter(format!("LUT {:?} is not monotone", self.name)));
        }
        Ok(())
    }

    /// Linear interpolation between entries.
    pub fn eval(&self, c: f64) -> f64 {
        let x = c.clamp(0.0, 1.0) * (LUT_SIZE - 1) as f64;
        let i = (x.floor() as usize).min(LUT_SIZE - 2);
        let f = x - i as f64;
        self.entries[i] + f * (self.entries[i + 1] - self.entries[i])
    }

    pub fn max_difference(&self, other: &ChannelLut) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn identity_luts(inkset: &InkSet) -> Vec<ChannelLut> {
    inkset.names().iter().map(ChannelLut::identity).collect()
}

fn check_luts(luts: &[ChannelLut], inkset: &InkSet) -> Result<()> {
    if luts.len() != inkset.n() {
        return Err(Error::InvalidParameter(format!(
            "{} LUTs for {} channels",
            luts.len(),
            inkset.n()
        )));
    }
    luts.iter().try_for_each(ChannelLut::validate)
}

/// LUT set file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LutSet {
    pub channels: Vec<ChannelLut>,
    pub built_at: String,
    pub press_id: String,
    pub residual_mean_de2000: f64,
}

impl LutSet {
    pub fn validate(&self, inkset: &InkSet) -> Result<()> {
        check_luts(&self.channels, inkset)?;
        for (lut, name) in self.channels.iter().zip(inkset.names()) {
            if &lut.name != name {
                return Err(Error::InvalidParameter(format!(
                    "LUT {:?} where channel {name:?} was expected",
                    lut.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationResidual {
    pub iteration: usize,
    pub mean_de2000: f64,
    pub max_de2000: f64,
}

/// Residuals per measurement round, and the LUTs in force at the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: Vec<IterationResidual>,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_threshold: Option<f64>,
    pub converged: bool,
    pub luts: Vec<ChannelLut>,
}

impl ConvergenceReport {
    pub fn final_mean(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |r| r.mean_de2000)
    }

    pub fn final_max(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |r| r.max_de2000)
    }

    pub fn to_lut_set(&self, press_id: impl Into<String>, built_at: impl Into<String>) -> LutSet {
        LutSet {
            channels: self.luts.clone(),
            built_at: built_at.into(),
            press_id: press_id.into(),
            residual_mean_de2000: self.final_mean(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecalibrationOptions {
    /// Measurement rounds allowed.
    pub max_iters: usize,
    /// Mean chart ΔE2000 below which the loop stops.
    pub threshold: f64,
    /// When set, the worst patch must also fall below this ΔE2000.
    pub max_threshold: Option<f64>,
    pub seed: u64,
    /// LUTs to start from; identity when absent.
    pub initial: Option<Vec<ChannelLut>>,
}

impl Default for RecalibrationOptions {
    fn default() -> Self {
        RecalibrationOptions {
            max_iters: DEFAULT_MAX_ITERS,
            threshold: DEFAULT_THRESHOLD,
            max_threshold: None,
            seed: 0,
            initial: None,
        }
    }
}

/// Measured ramp responses of one round: `(printed coverage, ΔE76 from
/// the substrate)` per channel.
type Observations = Vec<Vec<(f64, f64)>>;

fn observe(reference: &CalibrationReference, luts: &[ChannelLut], labs: &[Lab]) -> Observations {
    let chart = &reference.chart;
    luts.iter()
        .enumerate()
        .map(|(ch, lut)| {
            (1..=chart.steps)
                .map(|s| (lut.eval(chart.nominal(s)), delta_e76(&labs[chart.index(ch, s)], &labs[0])))
                .collect()
        })
        .collect()
}

/// Prints the ramps through `luts` on `press` and returns chart Labs.
fn print_ramps(
    press: &PressModel,
    reference: &CalibrationReference,
    luts: &[ChannelLut],
    vc: &ViewingCondition,
    seed: u64,
) -> Result<Vec<Lab>> {
    let chart = reference.chart.chart(press.inkset(), luts)?;
    measure_labs(press, &chart, vc, seed, reference.chart.repeats)
}

fn residuals(reference: &CalibrationReference, labs: &[Lab]) -> (f64, f64) {
    let d: Vec<f64> = reference.labs.iter().zip(labs).map(|(r, m)| delta_e2000(r, m)).collect();
    (d.iter().sum::<f64>() / d.len() as f64, d.iter().copied().fold(0.0, f64::max))
}

/// Refits every channel's LUT from all observations so far: an isotonic fit
/// of response against printed coverage, inverted at the reference
/// response of each nominal coverage.
fn refit(reference: &CalibrationReference, history: &[Observations]) -> Vec<ChannelLut> {
    let chart = &reference.chart;
    reference
        .inkset
        .names()
        .iter()
        .enumerate()
        .map(|(ch, name)| {
            let mut points: Vec<(f64, f64)> = vec![(0.0, 0.0)];
            points.extend(history.iter().flat_map(|obs| obs[ch].iter().copied()));
            let fit = isotonic_fit(points);
            let reference_at = |c: f64| {
                let x = c * chart.steps as f64;
                let i = (x.floor() as usize).min(chart.steps - 1);
                let f = x - i as f64;
                reference.response(ch, i) + f * (reference.response(ch, i + 1) - reference.response(ch, i))
            };
            let mut entries: Vec<f64> = (0..LUT_SIZE)
                .map(|e| invert_monotone(&fit, reference_at(e as f64 / (LUT_SIZE - 1) as f64)))
                .collect();
            entries[0] = 0.0;
            for i in 1..LUT_SIZE {
                entries[i] = entries[i].clamp(entries[i - 1], 1.0);
            }
            ChannelLut {
                name: name.clone(),
                entries,
            }
        })
        .collect()
}

/// Pool-adjacent-violators: the non-decreasing least-squares fit to
/// `points`, returned as `(x, fitted y)` knots with distinct x.
pub fn isotonic_fit(mut points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Blocks hold (Σx, Σy, count); the knot of a block sits at its mean x.
    let mut blocks: Vec<(f64, f64, f64)> = Vec::new();
    let mut last_x = f64::NAN;
    for (x, y) in points {
        if x == last_x {
            let b = blocks.last_mut().expect("a block exists for the previous x");
            *b = (b.0 + x, b.1 + y, b.2 + 1.0);
        } else {
            blocks.push((x, y, 1.0));
            last_x = x;
        }
        while blocks.len() > 1 {
            let k = blocks.len();
            let (a, b) = (blocks[k - 2], blocks[k - 1]);
            if a.1 / a.2 <= b.1 / b.2 {
                break;
            }
            blocks.pop();
            blocks[k - 2] = (a.0 + b.0, a.1 + b.1, a.2 + b.2);
        }
    }
    blocks.into_iter().map(|(xs, ys, n)| (xs / n, ys / n)).collect()
}

/// Smallest x where the piecewise-linear interpolant of `knots` reaches
/// `y`, clamped to `[0, 1]`. Beyond the last knot the last rising segment
/// is extended.
fn invert_monotone(knots: &[(f64, f64)], y: f64) -> f64 {
    let first = knots[0];
    if y <= first.1 {
        return first.0.clamp(0.0, 1.0);
    }
    let mut last_rise = None;
    for w in knots.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y1 > y0 {
            if y <= y1 {
                return (x0 + (y - y0) / (y1 - y0) * (x1 - x0)).clamp(0.0, 1.0);
            }
            last_rise = Some((y1 - y0) / (x1 - x0));
        }
    }
    let (xl, yl) = knots[knots.len() - 1];
    match last_rise {
        Some(slope) => (xl + (y - yl) / slope).clamp(0.0, 1.0),
        None => 1.0,
    }
}

/// Runs the print–measure–refit loop against `reference`. Each iteration is
/// one measurement round; the loop stops once the mean chart ΔE2000 falls
/// below the threshold.
pub fn recalibrate(
    press: &PressModel,
    reference: &CalibrationReference,
    vc: &ViewingCondition,
    options: &RecalibrationOptions,
) -> Result<ConvergenceReport> {
    reference.validate()?;
    if &reference.inkset != press.inkset() {
        return Err(Error::InvalidParameter("reference chart does not match the press ink set".into()));
    }
    if options.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    if !(options.threshold > 0.0) || options.max_threshold.is_some_and(|m| !(m > 0.0)) {
        return Err(Error::InvalidParameter("thresholds must be positive".into()));
    }
    let mut luts = match &options.initial {
        Some(l) => {
            check_luts(l, press.inkset())?;
            l.clone()
        }
        None => identity_luts(press.inkset()),
    };
    let mut history = Vec::new();
    let mut report = ConvergenceReport {
        iterations: Vec::new(),
        threshold: options.threshold,
        max_threshold: options.max_threshold,
        converged: false,
        luts: luts.clone(),
    };
    for iteration in 1..=options.max_iters {
        let seed = options.seed.wrapping_add(iteration as u64).wrapping_mul(SEED_STRIDE);
        let labs = print_ramps(press, reference, &luts, vc, seed)?;
        let (mean, max) = residuals(reference, &labs);
        report.iterations.push(IterationResidual {
            iteration,
            mean_de2000: mean,
            max_de2000: max,
        });
        report.luts = luts.clone();
        if mean < options.threshold && options.max_threshold.is_none_or(|m| max < m) {
            report.converged = true;
            return Ok(report);
        }
        history.push(observe(reference, &luts, &labs));
        luts = refit(reference, &history);
    }
    Err(Error::CalibrationNonConvergence(Box::new(report)))
}

/// One measurement round and refit starting from `luts`, regardless of the
/// residual. Useful to probe how far a converged set moves under noise.
pub fn refit_once(
    press: &PressModel,
    reference: &CalibrationReference,
    vc: &ViewingCondition,
    luts: &[ChannelLut],
    seed: u64,
) -> Result<Vec<ChannelLut>> {
    reference.validate()?;
    check_luts(luts, press.inkset())?;
    let labs = print_ramps(press, reference, luts, vc, seed)?;
    Ok(refit(reference, &[observe(reference, luts, &labs)]))
}

/// Chart ΔE2000 `(mean, max)` of `press` printing through `luts`.
pub fn chart_residual(
    press: &PressModel,
    reference: &CalibrationReference,
    vc: &ViewingCondition,
    luts: &[ChannelLut],
    seed: u64,
) -> Result<(f64, f64)> {
    let labs = print_ramps(press, reference, luts, vc, seed)?;
    Ok(residuals(reference, &labs))
}

/// Applies per-channel LUTs to a print request. Ink requests map each
/// coverage directly. For NPacs, the coverage of channel `i` is the total
/// weight of NPs with at least one drop of `i`; lowering it to `c'` moves
/// the fraction `1 − c'/c` of each such NP to the same NP without ink `i`,
/// and raising it moves `(c' − c)/(1 − c)` of each NP without ink `i` to the
/// same NP with one drop of `i`. These transfers leave other channels'
/// coverages unchanged.
pub fn apply_luts(request: &Patch, luts: &[ChannelLut], inkset: &InkSet) -> Result<Patch> {
    check_luts(luts, inkset)?;
    match request {
        Patch::Ink(p) => {
            if p.coverages.len() != inkset.n() {
                return Err(Error::InvalidParameter(format!(
                    "{} coverages for {} channels",
                    p.coverages.len(),
                    inkset.n()
                )));
            }
            Ok(Patch::Ink(InkPatch {
                coverages: p.coverages.iter().zip(luts).map(|(&c, l)| l.eval(c)).collect(),
            }))
        }
        Patch::Npac(n) => apply_luts_npac(n, luts, inkset).map(Patch::Npac),
    }
}

pub fn apply_luts_npac(npac: &NPac, luts: &[ChannelLut], inkset: &InkSet) -> Result<NPac> {
    check_luts(luts, inkset)?;
    npac.validate(inkset).map_err(Error::InvalidNpac)?;
    let mut weights: std::collections::BTreeMap<Vec<u32>, f64> =
        npac.entries().iter().map(|&(id, w)| (inkset.decode(id), w)).collect();
    for (ch, lut) in luts.iter().enumerate() {
        let c: f64 = weights.iter().filter(|(d, _)| d[ch] > 0).map(|(_, w)| w).sum();
        let target = lut.eval(c);
        if (target - c).abs() < 1e-15 {
            continue;
        }
        let mut next = std::collections::BTreeMap::new();
        let mut add = |d: Vec<u32>, w: f64| {
            if w > 0.0 {
                *next.entry(d).or_insert(0.0) += w;
            }
        };
        if target < c {
            let moved = 1.0 - target / c;
            for (d, w) in weights {
                if d[ch] > 0 {
                    let mut bare = d.clone();
                    bare[ch] = 0;
                    add(bare, w * moved);
                    add(d, w * (1.0 - moved));
                } else {
                    add(d, w);
                }
            }
        } else {
            let moved = (target - c) / (1.0 - c);
            for (d, w) in weights {
                if d[ch] == 0 {
                    let mut inked = d.clone();
                    inked[ch] = 1;
                    add(inked, w * moved);
                    add(d, w * (1.0 - moved));
                } else {
                    add(d, w);
                }
            }
        }
        weights = next;
    }
    let entries = weights
        .into_iter()
        .map(|(d, w)| inkset.encode(&d).map(|id| (id, w)))
        .collect::<Result<Vec<_>>>()?;
    NPac::from_unnormalized(entries, 0.0)
}
