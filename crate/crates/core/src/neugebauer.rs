//! Neugebauer Primary enumeration and the Yule-Nielsen modified spectral
//! Neugebauer forward model.
//!
//! A print pattern is described by its NP area coverages (an [`NPac`]): the
//! relative area each printable pixel state occupies. Its reflectance is the
//! convex combination of the NP reflectances in the Yule-Nielsen domain
//! `R^(1/n)`.
//!
//! NP ids are the mixed-radix encoding of the per-channel drop counts in base
//! `k`, channel 0 least significant. Id 0 is always the blank substrate.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::colorimetry::{self, Lab, Spectrum, ViewingCondition, SAMPLES};
use crate::error::{Error, Result};

pub type NpId = u64;

/// Default cap on fully materialized NP enumerations.
pub const DEFAULT_MATERIALIZATION_CAP: u64 = 1_000_000;

/// Tolerance on the weight sum accepted without touching the weights.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Weight sums within this distance of 1 are renormalized on ingest.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "InkSetFile", into = "InkSetFile")]
pub struct InkSet {
    k: u32,
    names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct InkSetFile {
    #[serde(default)]
    n: Option<usize>,
    k: u32,
    names: Vec<String>,
}

impl TryFrom<InkSetFile> for InkSet {
    type Error = Error;

    fn try_from(f: InkSetFile) -> Result<Self> {
        if let Some(n) = f.n {
            if n != f.names.len() {
                return Err(Error::InvalidInkSet(format!(
                    "n = {n} but {} channel names given",
                    f.names.len()
                )));
            }
        }
        InkSet::new(f.k, f.names)
    }
}

impl From<InkSet> for InkSetFile {
    fn from(s: InkSet) -> Self {
        InkSetFile {
            n: Some(s.names.len()),
            k: s.k,
            names: s.names,
        }
    }
}

impl InkSet {
    pub fn new<S: Into<String>>(k: u32, names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidInkSet("at least one channel is required".into()));
        }
        if k < 2 {
            return Err(Error::InvalidInkSet(format!("k = {k}, need at least 2 levels")));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() || !seen.insert(name.as_str()) {
                return Err(Error::InvalidInkSet(format!("channel name {name:?} is empty or repeated")));
            }
        }
        Ok(InkSet { k, names })
    }

    /// An ink set with generated channel names `ink0`, `ink1`, ...
    pub fn anonymous(k: u32, n: usize) -> Result<Self> {
        InkSet::new(k, (0..n).map(|i| format!("ink{i}")))
    }

    /// Number of ink channels.
    pub fn n(&self) -> usize {
        self.names.len()
    }

    /// Colorant levels per channel per pixel, level 0 being no drop.
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn encode(&self, drops: &[u32]) -> Result<NpId> {
        if drops.len() != self.n() {
            return Err(Error::InvalidParameter(format!(
                "{} drop counts for {} channels",
                drops.len(),
                self.n()
            )));
        }
        let mut id: NpId = 0;
        for &d in drops.iter().rev() {
            if d >= self.k {
                return Err(Error::InvalidParameter(format!("drop count {d} >= k = {}", self.k)));
            }
            id = id
                .checked_mul(self.k as u64)
                .and_then(|v| v.checked_add(d as u64))
                .ok_or(Error::NpCountOverflow { k: self.k, n: self.n() as u32 })?;
        }
        Ok(id)
    }

    /// Drop counts of NP `id`, channel 0 first. Ids beyond the NP count wrap
    /// silently; callers check the range with [`InkSet::contains`].
    pub fn decode(&self, mut id: NpId) -> Vec<u32> {
        let k = self.k as u64;
        (0..self.n())
            .map(|_| {
                let d = (id % k) as u32;
                id /= k;
                d
            })
            .collect()
    }

    /// Whether `id` is a valid NP id. When `k^n` overflows 64 bits every id is.
    pub fn contains(&self, id: NpId) -> bool {
        np_count(self).map_or(true, |count| id < count)
    }

    /// Human-readable NP label: `S` for the substrate, otherwise the names of
    /// the inks present, each prefixed by its drop count when above one.
    pub fn label(&self, id: NpId) -> String {
        let drops = self.decode(id);
        if drops.iter().all(|&d| d == 0) {
            return "S".to_owned();
        }
        let mut out = String::new();
        for (d, name) in drops.iter().zip(&self.names) {
            match d {
                0 => {}
                1 => out.push_str(name),
                d => {
                    out.push_str(&d.to_string());
                    out.push_str(name);
                }
            }
        }
        out
    }

    pub fn total_drops(&self, id: NpId) -> u32 {
        self.decode(id).iter().sum()
    }
}

/// `k^n`, or an overflow error when it does not fit in 64 bits.
pub fn np_count(inkset: &InkSet) -> Result<u64> {
    let n = inkset.n() as u32;
    (inkset.k as u64)
        .checked_pow(n)
        .ok_or(Error::NpCountOverflow { k: inkset.k, n })
}

/// Lazy mixed-radix walk over all NPs of an ink set.
#[derive(Clone, Debug)]
pub struct NpIter {
    inkset: InkSet,
    next: u64,
    end: u64,
}

impl Iterator for NpIter {
    type Item = (NpId, Vec<u32>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.end {
            return None;
        }
        let id = self.next;
        self.next += 1;
        Some((id, self.inkset.decode(id)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.end - self.next;
        match usize::try_from(left) {
            Ok(l) => (l, Some(l)),
            Err(_) => (usize::MAX, None),
        }
    }
}

impl NpIter {
    pub fn remaining(&self) -> u64 {
        self.end - self.next
    }
}

#[derive(Clone, Debug)]
pub enum NpEnumeration {
    Materialized(Vec<(NpId, Vec<u32>)>),
    /// Returned instead of a list when the count exceeds the cap.
    Lazy(NpIter),
}

impl NpEnumeration {
    pub fn count(&self) -> u64 {
        match self {
            NpEnumeration::Materialized(v) => v.len() as u64,
            NpEnumeration::Lazy(it) => it.remaining(),
        }
    }

    pub fn is_lazy(&self) -> bool {
        matches!(self, NpEnumeration::Lazy(_))
    }
}

impl IntoIterator for NpEnumeration {
    type Item = (NpId, Vec<u32>);
    type IntoIter = Box<dyn Iterator<Item = (NpId, Vec<u32>)>>;

    fn into_iter(self) -> Self::IntoIter {
        match self {
            NpEnumeration::Materialized(v) => Box::new(v.into_iter()),
            NpEnumeration::Lazy(it) => Box::new(it),
        }
    }
}

pub fn enumerate_nps(inkset: &InkSet) -> Result<NpEnumeration> {
    enumerate_nps_capped(inkset, DEFAULT_MATERIALIZATION_CAP)
}

pub fn enumerate_nps_capped(inkset: &InkSet, cap: u64) -> Result<NpEnumeration> {
    let count = np_count(inkset)?;
    let iter = NpIter {
        inkset: inkset.clone(),
        next: 0,
        end: count,
    };
    if count > cap {
        Ok(NpEnumeration::Lazy(iter))
    } else {
        Ok(NpEnumeration::Materialized(iter.collect()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeugebauerPrimary {
    pub id: NpId,
    pub drops: Vec<u32>,
    pub spectrum: Spectrum,
}

/// Yule-Nielsen exponent, at least 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct YnParams {
    exponent: f64,
}

impl YnParams {
    pub const DEFAULT_EXPONENT: f64 = 2.0;

    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Yule-Nielsen exponent {exponent} must be finite and >= 1"
            )));
        }
        Ok(YnParams { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Reflectance to the linear domain, `R^(1/n)`.
    pub fn linearize(&self, r: f64) -> f64 {
        if self.exponent == 1.0 {
            r
        } else {
            r.max(0.0).powf(1.0 / self.exponent)
        }
    }

    /// Inverse of [`YnParams::linearize`], clamped to `[0, 1]`.
    pub fn delinearize(&self, q: f64) -> f64 {
        let q = q.max(0.0);
        let r = if self.exponent == 1.0 {
            q
        } else if self.exponent == 2.0 {
            q * q
        } else {
            q.powf(self.exponent)
        };
        r.min(1.0)
    }

    pub fn linearize_spectrum(&self, s: &Spectrum) -> [f64; SAMPLES] {
        s.values().map(|v| self.linearize(v))
    }
}

impl Default for YnParams {
    fn default() -> Self {
        YnParams { exponent: Self::DEFAULT_EXPONENT }
    }
}

impl TryFrom<f64> for YnParams {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        YnParams::new(v)
    }
}

impl From<YnParams> for f64 {
    fn from(p: YnParams) -> f64 {
        p.exponent
    }
}

/// Measured (or synthesized) NP spectra for an ink set. Only the NPs in use
/// need to be present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NpTableFile", into = "NpTableFile")]
pub struct NpTable {
    inkset: InkSet,
    yn: YnParams,
    nps: BTreeMap<NpId, NeugebauerPrimary>,
}

#[derive(Serialize, Deserialize)]
struct NpTableFile {
    inkset: InkSet,
    #[serde(default)]
    yn_exponent: Option<f64>,
    nps: Vec<NeugebauerPrimary>,
}

impl TryFrom<NpTableFile> for NpTable {
    type Error = Error;

    fn try_from(f: NpTableFile) -> Result<Self> {
        let yn = match f.yn_exponent {
            Some(e) => YnParams::new(e)?,
            None => YnParams::default(),
        };
        NpTable::new(f.inkset, yn, f.nps)
    }
}

impl From<NpTable> for NpTableFile {
    fn from(t: NpTable) -> Self {
        NpTableFile {
            inkset: t.inkset,
            yn_exponent: Some(t.yn.exponent),
            nps: t.nps.into_values().collect(),
        }
    }
}

impl NpTable {
    pub fn new(
        inkset: InkSet,
        yn: YnParams,
        nps: impl IntoIterator<Item = NeugebauerPrimary>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for np in nps {
            let expected = inkset.encode(&np.drops)?;
            if expected != np.id {
                return Err(Error::Format(format!(
                    "NP id {} does not match its drops {:?} (encodes to {expected})",
                    np.id, np.drops
                )));
            }
            if map.insert(np.id, np).is_some() {
                return Err(Error::Format(format!("NP id {expected} listed twice")));
            }
        }
        Ok(NpTable { inkset, yn, nps: map })
    }

    pub fn inkset(&self) -> &InkSet {
        &self.inkset
    }

    pub fn yn(&self) -> YnParams {
        self.yn
    }

    pub fn with_yn(mut self, yn: YnParams) -> Self {
        self.yn = yn;
        self
    }

    pub fn get(&self, id: NpId) -> Option<&NeugebauerPrimary> {
        self.nps.get(&id)
    }

    pub fn spectrum(&self, id: NpId) -> Result<&Spectrum> {
        self.nps.get(&id).map(|np| &np.spectrum).ok_or(Error::UnknownNp(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = NpId> + '_ {
        self.nps.keys().copied()
    }

    pub fn primaries(&self) -> impl Iterator<Item = &NeugebauerPrimary> {
        self.nps.values()
    }

    pub fn len(&self) -> usize {
        self.nps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nps.is_empty()
    }

    /// Keeps only the NPs whose drops satisfy `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&[u32]) -> bool) -> NpTable {
        NpTable {
            inkset: self.inkset.clone(),
            yn: self.yn,
            nps: self
                .nps
                .iter()
                .filter(|(_, np)| keep(&np.drops))
                .map(|(id, np)| (*id, np.clone()))
                .collect(),
        }
    }
}

/// One problem found in a candidate NPac.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Empty,
    NonFinite { id: NpId },
    Negative { id: NpId, weight: f64 },
    Zero { id: NpId },
    IdOutOfRange { id: NpId },
    Duplicate { id: NpId },
    Sum { sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "no entries"),
            Violation::NonFinite { id } => write!(f, "weight of NP {id} is not finite"),
            Violation::Negative { id, weight } => write!(f, "negative weight {weight} on NP {id}"),
            Violation::Zero { id } => write!(f, "zero weight on NP {id}"),
            Violation::IdOutOfRange { id } => write!(f, "NP id {id} is out of range"),
            Violation::Duplicate { id } => write!(f, "NP id {id} appears more than once"),
            Violation::Sum { sum } => write!(f, "weights sum to {sum}, not 1"),
        }
    }
}

/// Checks raw `(id, weight)` entries against the convexity constraint and the
/// ink set's id range. Never panics; returns every violation found.
pub fn validate_npac(entries: &[(NpId, f64)], inkset: &InkSet) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if entries.is_empty() {
        out.push(Violation::Empty);
    }
    let mut seen = HashSet::new();
    let mut sum = 0.0;
    let mut finite = true;
    for &(id, w) in entries {
        if !w.is_finite() {
            out.push(Violation::NonFinite { id });
            finite = false;
        } else if w < 0.0 {
            out.push(Violation::Negative { id, weight: w });
        } else if w == 0.0 {
            out.push(Violation::Zero { id });
        }
        if !inkset.contains(id) {
            out.push(Violation::IdOutOfRange { id });
        }
        if !seen.insert(id) {
            out.push(Violation::Duplicate { id });
        }
        sum += w;
    }
    if finite && !entries.is_empty() && (sum - 1.0).abs() > SUM_TOLERANCE {
        out.push(Violation::Sum { sum });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// NP area coverages: sparse convex weights over NP ids, sorted by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct NPac {
    entries: Vec<(NpId, f64)>,
}

impl NPac {
    /// Ingests raw entries: zero weights are dropped, duplicate ids merged, and
    /// a weight sum within [`RENORMALIZE_TOLERANCE`] of one is renormalized.
    pub fn new(entries: impl IntoIterator<Item = (NpId, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<NpId, f64> = BTreeMap::new();
        let mut violations = Vec::new();
        for (id, w) in entries {
            if !w.is_finite() {
                violations.push(Violation::NonFinite { id });
            } else if w < 0.0 {
                violations.push(Violation::Negative { id, weight: w });
            } else if w > 0.0 {
                *merged.entry(id).or_insert(0.0) += w;
            }
        }
        if !violations.is_empty() {
            return Err(Error::InvalidNpac(violations));
        }
        if merged.is_empty() {
            return Err(Error::InvalidNpac(vec![Violation::Empty]));
        }
        let sum: f64 = merged.values().sum();
        let entries: Vec<(NpId, f64)> = if (sum - 1.0).abs() <= SUM_TOLERANCE {
            merged.into_iter().collect()
        } else if (sum - 1.0).abs() <= RENORMALIZE_TOLERANCE {
            merged.into_iter().map(|(id, w)| (id, w / sum)).collect()
        } else {
            return Err(Error::InvalidNpac(vec![Violation::Sum { sum }]));
        };
        Ok(NPac { entries })
    }

    /// Weight 1 on a single NP.
    pub fn single(id: NpId) -> Self {
        NPac { entries: vec![(id, 1.0)] }
    }

    /// Normalizes arbitrary non-negative weights to sum to one, dropping
    /// entries below `min_weight`.
    pub fn from_unnormalized(entries: impl IntoIterator<Item = (NpId, f64)>, min_weight: f64) -> Result<Self> {
        let raw: Vec<(NpId, f64)> = entries
            .into_iter()
            .filter(|(_, w)| w.is_finite() && *w > min_weight)
            .collect();
        let sum: f64 = raw.iter().map(|(_, w)| w).sum();
        if raw.is_empty() || sum <= 0.0 {
            return Err(Error::InvalidNpac(vec![Violation::Empty]));
        }
        NPac::new(raw.into_iter().map(|(id, w)| (id, w / sum)))
    }

    pub fn entries(&self) -> &[(NpId, f64)] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = NpId> + '_ {
        self.entries.iter().map(|(id, _)| *id)
    }

    pub fn weight(&self, id: NpId) -> f64 {
        self.entries
            .binary_search_by_key(&id, |(i, _)| *i)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self, inkset: &InkSet) -> Result<(), Vec<Violation>> {
        validate_npac(&self.entries, inkset)
    }

    /// Per-channel coverage: the summed weight of NPs with at least one drop
    /// of that channel.
    pub fn channel_coverages(&self, inkset: &InkSet) -> Vec<f64> {
        let mut cov = vec![0.0; inkset.n()];
        for &(id, w) in &self.entries {
            for (c, d) in inkset.decode(id).into_iter().enumerate() {
                if d > 0 {
                    cov[c] += w;
                }
            }
        }
        cov
    }

    /// Weight-averaged drop count over all channels.
    pub fn mean_total_drops(&self, inkset: &InkSet) -> f64 {
        self.entries
            .iter()
            .map(|&(id, w)| w * inkset.total_drops(id) as f64)
            .sum()
    }
}

impl TryFrom<BTreeMap<String, f64>> for NPac {
    type Error = Error;

    fn try_from(m: BTreeMap<String, f64>) -> Result<Self> {
        let entries = m
            .into_iter()
            .map(|(k, w)| {
                k.trim()
                    .parse::<NpId>()
                    .map(|id| (id, w))
                    .map_err(|_| Error::Format(format!("NPac key {k:?} is not an NP id")))
            })
            .collect::<Result<Vec<_>>>()?;
        NPac::new(entries)
    }
}

impl From<NPac> for BTreeMap<String, f64> {
    fn from(n: NPac) -> Self {
        n.entries.into_iter().map(|(id, w)| (id.to_string(), w)).collect()
    }
}

/// Forward model over raw entries, without merging or normalization:
/// `R(λ) = (Σ wᵢ · Rᵢ(λ)^(1/n))^n`, clamped to `[0, 1]`.
pub fn predict_entries(entries: &[(NpId, f64)], table: &NpTable, yn: YnParams) -> Result<Spectrum> {
    if let [(id, w)] = entries {
        if *w == 1.0 {
            return table.spectrum(*id).copied();
        }
    }
    let mut acc = [0.0; SAMPLES];
    for &(id, w) in entries {
        let s = table.spectrum(id)?;
        for (a, &r) in acc.iter_mut().zip(s.values()) {
            *a += w * yn.linearize(r);
        }
    }
    Ok(Spectrum::clamped(acc.map(|q| yn.delinearize(q))))
}

pub fn predict(npac: &NPac, table: &NpTable, yn: YnParams) -> Result<Spectrum> {
    predict_entries(npac.entries(), table, yn)
}

pub fn predict_lab(npac: &NPac, table: &NpTable, yn: YnParams, vc: &ViewingCondition) -> Result<Lab> {
    Ok(colorimetry::spectrum_to_lab(&predict(npac, table, yn)?, vc))
}
