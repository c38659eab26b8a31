//! Simulated printer and spectrophotometer.
//!
//! NP spectra come from stacked Beer-Lambert filters over the substrate,
//! `R(λ) = substrate(λ) · Πᵢ tᵢ(λ)^(dᵢ·gᵢ)`, where `dᵢ` is the drop count and
//! `gᵢ` the channel's drift gain. Measurement applies a power-law dot gain to
//! the requested coverages and adds seeded Gaussian noise.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::colorimetry::{Spectrum, SAMPLES};
use crate::error::{Error, Result};
use crate::neugebauer::{
    self, np_count, InkSet, NPac, NeugebauerPrimary, NpId, NpTable, YnParams, DEFAULT_MATERIALIZATION_CAP,
};

static DEMO_CMYK: &str = include_str!("../data/demo_cmyk.json");
static DEMO_8INK: &str = include_str!("../data/demo_8ink.json");

/// Largest accepted drift gain.
pub const MAX_DRIFT_GAIN: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ink {
    pub name: String,
    pub transmittance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PressFile", into = "PressFile")]
pub struct PressModel {
    id: String,
    inkset: InkSet,
    substrate: Spectrum,
    transmittance: Vec<[f64; SAMPLES]>,
    dot_gain: f64,
    noise_sigma: f64,
    drift: Vec<f64>,
    yn: YnParams,
}

#[derive(Serialize, Deserialize)]
struct PressFile {
    #[serde(default = "default_press_id")]
    id: String,
    inkset: InkSet,
    substrate: Spectrum,
    inks: Vec<Ink>,
    #[serde(default)]
    dot_gain: f64,
    #[serde(default)]
    noise_sigma: f64,
    #[serde(default)]
    drift: Option<Vec<f64>>,
    #[serde(default)]
    yn_exponent: Option<f64>,
}

fn default_press_id() -> String {
    "press".to_owned()
}

impl TryFrom<PressFile> for PressModel {
    type Error = Error;

    fn try_from(f: PressFile) -> Result<Self> {
        if f.inks.len() != f.inkset.n() {
            return Err(Error::Format(format!(
                "{} inks given for a {}-channel ink set",
                f.inks.len(),
                f.inkset.n()
            )));
        }
        let mut transmittance = Vec::with_capacity(f.inks.len());
        for (ink, name) in f.inks.iter().zip(f.inkset.names()) {
            if &ink.name != name {
                return Err(Error::Format(format!(
                    "ink {:?} listed where channel {name:?} was expected",
                    ink.name
                )));
            }
            let t: [f64; SAMPLES] = ink.transmittance.clone().try_into().map_err(|v: Vec<f64>| {
                Error::Format(format!("ink {name}: {} transmittance samples, expected {SAMPLES}", v.len()))
            })?;
            if let Some(bad) = t.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
                return Err(Error::Format(format!("ink {name}: transmittance {bad} outside (0, 1]")));
            }
            transmittance.push(t);
        }
        let yn = match f.yn_exponent {
            Some(e) => YnParams::new(e)?,
            None => YnParams::default(),
        };
        let n = f.inkset.n();
        let press = PressModel {
            id: f.id,
            inkset: f.inkset,
            substrate: f.substrate,
            transmittance,
            dot_gain: f.dot_gain,
            noise_sigma: f.noise_sigma,
            drift: vec![1.0; n],
            yn,
        };
        press.check_scalars()?;
        match f.drift {
            Some(g) => press.apply_drift(&g),
            None => Ok(press),
        }
    }
}

impl From<PressModel> for PressFile {
    fn from(p: PressModel) -> Self {
        PressFile {
            inks: p
                .inkset
                .names()
                .iter()
                .zip(&p.transmittance)
                .map(|(name, t)| Ink {
                    name: name.clone(),
                    transmittance: t.to_vec(),
                })
                .collect(),
            id: p.id,
            inkset: p.inkset,
            substrate: p.substrate,
            dot_gain: p.dot_gain,
            noise_sigma: p.noise_sigma,
            drift: Some(p.drift),
            yn_exponent: Some(p.yn.exponent()),
        }
    }
}

impl PressModel {
    pub fn new(
        id: impl Into<String>,
        inkset: InkSet,
        substrate: Spectrum,
        inks: Vec<Ink>,
        dot_gain: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        let n = inkset.n();
        PressFile {
            id: id.into(),
            inkset,
            substrate,
            inks,
            dot_gain,
            noise_sigma,
            drift: Some(vec![1.0; n]),
            yn_exponent: None,
        }
        .try_into()
    }

    /// CMYK, one drop level, shipped with the crate.
    pub fn demo_cmyk() -> Self {
        serde_json::from_str(DEMO_CMYK).expect("embedded demo press")
    }

    /// C, M, Y, K, R, G, B and O, one drop level.
    pub fn demo_8ink() -> Self {
        serde_json::from_str(DEMO_8INK).expect("embedded demo press")
    }

    fn check_scalars(&self) -> Result<()> {
        if !(self.dot_gain.is_finite() && self.dot_gain >= 0.0) {
            return Err(Error::InvalidParameter(format!("dot gain {} must be >= 0", self.dot_gain)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma {} must be >= 0",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn inkset(&self) -> &InkSet {
        &self.inkset
    }

    pub fn substrate(&self) -> &Spectrum {
        &self.substrate
    }

    pub fn transmittance(&self, channel: usize) -> &[f64; SAMPLES] {
        &self.transmittance[channel]
    }

    pub fn dot_gain(&self) -> f64 {
        self.dot_gain
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn yn(&self) -> YnParams {
        self.yn
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_noise_sigma(mut self, sigma: f64) -> Result<Self> {
        self.noise_sigma = sigma;
        self.check_scalars()?;
        Ok(self)
    }

    pub fn with_dot_gain(mut self, dot_gain: f64) -> Result<Self> {
        self.dot_gain = dot_gain;
        self.check_scalars()?;
        Ok(self)
    }

    pub fn with_yn(mut self, yn: YnParams) -> Self {
        self.yn = yn;
        self
    }

    /// Returns a copy of the press with its per-channel drift gains replaced.
    pub fn apply_drift(&self, gains: &[f64]) -> Result<Self> {
        if gains.len() != self.inkset.n() {
            return Err(Error::InvalidParameter(format!(
                "{} drift gains for {} channels",
                gains.len(),
                self.inkset.n()
            )));
        }
        if let Some(g) = gains.iter().find(|g| !(**g > 0.0 && **g <= MAX_DRIFT_GAIN)) {
            return Err(Error::InvalidParameter(format!("drift gain {g} outside (0, {MAX_DRIFT_GAIN}]")));
        }
        let mut out = self.clone();
        out.drift = gains.to_vec();
        Ok(out)
    }

    /// Spectrum of the NP with the given drop counts.
    pub fn np_spectrum(&self, drops: &[u32]) -> Spectrum {
        let mut r = *self.substrate.values();
        for (ch, &d) in drops.iter().enumerate() {
            if d == 0 {
                continue;
            }
            let e = d as f64 * self.drift[ch];
            for (v, t) in r.iter_mut().zip(&self.transmittance[ch]) {
                *v *= t.powf(e);
            }
        }
        Spectrum::clamped(r)
    }
}

/// Synthesizes the full NP table; refused above the materialization cap.
pub fn synth_np_table(press: &PressModel) -> Result<NpTable> {
    let count = np_count(&press.inkset)?;
    if count > DEFAULT_MATERIALIZATION_CAP {
        return Err(Error::CapExceeded {
            count,
            cap: DEFAULT_MATERIALIZATION_CAP,
        });
    }
    synth_np_subset(press, 0..count)
}

/// Synthesizes only the requested NP ids.
pub fn synth_np_subset(press: &PressModel, ids: impl IntoIterator<Item = NpId>) -> Result<NpTable> {
    let mut nps = Vec::new();
    for id in ids.into_iter().collect::<BTreeSet<_>>() {
        if !press.inkset.contains(id) {
            return Err(Error::UnknownNp(id));
        }
        let drops = press.inkset.decode(id);
        nps.push(NeugebauerPrimary {
            id,
            spectrum: press.np_spectrum(&drops),
            drops,
        });
    }
    NpTable::new(press.inkset.clone(), press.yn, nps)
}

/// Per-channel coverage request, printed with one drop per covered pixel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InkPatch {
    pub coverages: Vec<f64>,
}

impl InkPatch {
    /// NPac under statistically independent channel placement:
    /// `w(d) = Πᵢ cᵢ^dᵢ (1 − cᵢ)^(1−dᵢ)` over binary drop vectors.
    pub fn to_npac(&self, inkset: &InkSet) -> Result<NPac> {
        product_npac(&self.coverages, inkset)
    }
}

/// The overprint-statistics NPac for independent per-channel coverages.
pub fn product_npac(coverages: &[f64], inkset: &InkSet) -> Result<NPac> {
    if coverages.len() != inkset.n() {
        return Err(Error::InvalidParameter(format!(
            "{} coverages for {} channels",
            coverages.len(),
            inkset.n()
        )));
    }
    if let Some(c) = coverages.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::InvalidParameter(format!("coverage {c} outside [0, 1]")));
    }
    // Only channels with fractional or full coverage branch.
    let mut terms: Vec<(Vec<u32>, f64)> = vec![(vec![0; coverages.len()], 1.0)];
    for (ch, &c) in coverages.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let mut next = Vec::with_capacity(terms.len() * 2);
        for (drops, w) in terms {
            if c < 1.0 {
                next.push((drops.clone(), w * (1.0 - c)));
            }
            let mut with = drops;
            with[ch] = 1;
            next.push((with, w * c));
        }
        terms = next;
    }
    let entries = terms
        .into_iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(d, w)| inkset.encode(&d).map(|id| (id, w)))
        .collect::<Result<Vec<_>>>()?;
    NPac::new(entries)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Patch {
    Ink(InkPatch),
    Npac(NPac),
}

impl Patch {
    pub fn to_npac(&self, inkset: &InkSet) -> Result<NPac> {
        match self {
            Patch::Ink(p) => p.to_npac(inkset),
            Patch::Npac(n) => Ok(n.clone()),
        }
    }
}

/// Ordered, non-empty list of patches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Patch>", into = "Vec<Patch>")]
pub struct Chart {
    patches: Vec<Patch>,
}

impl TryFrom<Vec<Patch>> for Chart {
    type Error = Error;

    fn try_from(patches: Vec<Patch>) -> Result<Self> {
        Chart::new(patches)
    }
}

impl From<Chart> for Vec<Patch> {
    fn from(c: Chart) -> Self {
        c.patches
    }
}

impl Chart {
    pub fn new(patches: Vec<Patch>) -> Result<Self> {
        if patches.is_empty() {
            return Err(Error::InvalidParameter("chart has no patches".into()));
        }
        Ok(Chart { patches })
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn validate(&self, inkset: &InkSet) -> Result<Vec<NPac>> {
        self.patches
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let npac = p.to_npac(inkset)?;
                npac.validate(inkset).map_err(Error::InvalidNpac).map_err(|e| {
                    Error::InvalidParameter(format!("patch {i}: {e}"))
                })?;
                Ok(npac)
            })
            .collect()
    }
}

/// Effective coverages after dot gain, `w' ∝ w^(1/(1+γ))`.
pub fn apply_dot_gain(npac: &NPac, dot_gain: f64) -> NPac {
    if dot_gain == 0.0 || npac.len() == 1 {
        return npac.clone();
    }
    let e = 1.0 / (1.0 + dot_gain);
    NPac::from_unnormalized(npac.entries().iter().map(|&(id, w)| (id, w.powf(e))), 0.0)
        .expect("dot gain keeps a non-empty NPac non-empty")
}

/// Noise-free spectrum of one patch as printed on this press.
pub fn print_npac(press: &PressModel, npac: &NPac) -> Result<Spectrum> {
    let table = synth_np_subset(press, npac.ids())?;
    let effective = apply_dot_gain(npac, press.dot_gain);
    neugebauer::predict(&effective, &table, press.yn)
}

/// Prints and measures a chart. Patch `i` draws its noise from ChaCha stream
/// `i` of `seed`, so results do not depend on evaluation order.
pub fn measure(press: &PressModel, chart: &Chart, seed: u64) -> Result<Vec<Spectrum>> {
    let npacs = chart.validate(&press.inkset)?;
    let ids: BTreeSet<NpId> = npacs.iter().flat_map(|n| n.ids()).collect();
    let table = synth_np_subset(press, ids)?;
    let noise = if press.noise_sigma > 0.0 {
        Some(Normal::new(0.0, press.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?)
    } else {
        None
    };
    npacs
        .iter()
        .enumerate()
        .map(|(i, npac)| {
            let effective = apply_dot_gain(npac, press.dot_gain);
            let truth = neugebauer::predict(&effective, &table, press.yn)?;
            Ok(match &noise {
                None => truth,
                Some(dist) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    let mut v = *truth.values();
                    for x in v.iter_mut() {
                        *x += dist.sample(&mut rng);
                    }
                    Spectrum::clamped(v)
                }
            })
        })
        .collect()
}
