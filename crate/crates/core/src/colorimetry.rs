//! Spectral to colorimetric conversion and color-difference metrics.
//!
//! Everything runs on a fixed 36-sample grid, 380 nm to 730 nm in 10 nm
//! steps. The CIE tables ship as CSV files under `data/` and are resampled
//! onto this grid the first time a [`ViewingCondition`] is requested.

use std::f64::consts::PI;
use std::fmt;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of spectral samples.
pub const SAMPLES: usize = 36;
pub const FIRST_WAVELENGTH_NM: f64 = 380.0;
pub const STEP_NM: f64 = 10.0;

static CMF_CSV: &str = include_str!("../data/cie1931_2deg_cmf.csv");
static D50_CSV: &str = include_str!("../data/cie_d50.csv");

/// Wavelength in nm of sample `i`.
pub fn wavelength(i: usize) -> f64 {
    FIRST_WAVELENGTH_NM + STEP_NM * i as f64
}

/// Spectral reflectance factors on the fixed grid, each in `[0, 1]`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Spectrum([f64; SAMPLES]);

impl Spectrum {
    pub fn new(values: [f64; SAMPLES]) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::InvalidSpectrum(format!(
                    "sample {i} ({} nm) = {v} is outside [0, 1]",
                    wavelength(i)
                )));
            }
        }
        Ok(Spectrum(values))
    }

    /// Builds a spectrum from arbitrary values, clamping each into `[0, 1]`.
    /// NaN becomes 0.
    pub fn clamped(values: [f64; SAMPLES]) -> Self {
        Spectrum(values.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
    }

    pub fn flat(value: f64) -> Result<Self> {
        Spectrum::new([value; SAMPLES])
    }

    pub fn from_fn(f: impl FnMut(usize) -> f64) -> Result<Self> {
        Spectrum::new(std::array::from_fn(f))
    }

    pub fn values(&self) -> &[f64; SAMPLES] {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Spectrum::new(self.0.map(|v| v * factor))
    }
}

impl fmt::Debug for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Spectrum").field(&&self.0[..]).finish()
    }
}

impl TryFrom<Vec<f64>> for Spectrum {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        let arr: [f64; SAMPLES] = v.try_into().map_err(|v: Vec<f64>| {
            Error::InvalidSpectrum(format!("expected {SAMPLES} samples, got {}", v.len()))
        })?;
        Spectrum::new(arr)
    }
}

impl From<Spectrum> for Vec<f64> {
    fn from(s: Spectrum) -> Self {
        s.0.to_vec()
    }
}

/// CIE tristimulus values, scaled so the perfect reflector has `Y = 100`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Xyz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Xyz {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Xyz { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// CIE 1976 L*a*b*.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Lab { l, a, b }
    }

    pub fn from_lch(l: f64, c: f64, h_deg: f64) -> Self {
        let h = h_deg.to_radians();
        Lab::new(l, c * h.cos(), c * h.sin())
    }

    pub fn chroma(&self) -> f64 {
        self.a.hypot(self.b)
    }

    /// Hue angle in degrees, in `[0, 360)`.
    pub fn hue(&self) -> f64 {
        let h = self.b.atan2(self.a).to_degrees().rem_euclid(360.0);
        if h >= 360.0 {
            0.0
        } else {
            h
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.l, self.a, self.b]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Lab::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.l.is_finite() && self.a.is_finite() && self.b.is_finite()
    }
}

/// Signed smallest difference `to - from` between two hue angles, in `(-180, 180]`.
pub fn hue_difference(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Illuminant and observer sampled on the fixed grid, with the summation
/// weights and whitepoint precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewingCondition {
    pub name: String,
    illuminant: [f64; SAMPLES],
    cmf: [[f64; 3]; SAMPLES],
    weights: [[f64; 3]; SAMPLES],
    white: Xyz,
}

static D50_2DEG: LazyLock<ViewingCondition> = LazyLock::new(|| {
    let cmf_rows = parse_csv(CMF_CSV, 3).expect("embedded CMF table");
    let d50_rows = parse_csv(D50_CSV, 1).expect("embedded D50 table");
    let illuminant = std::array::from_fn(|i| resample(&d50_rows, 0, wavelength(i)));
    let cmf = std::array::from_fn(|i| {
        let w = wavelength(i);
        [
            resample(&cmf_rows, 0, w),
            resample(&cmf_rows, 1, w),
            resample(&cmf_rows, 2, w),
        ]
    });
    ViewingCondition::new("D50/2", illuminant, cmf)
});

impl ViewingCondition {
    pub fn new(name: &str, illuminant: [f64; SAMPLES], cmf: [[f64; 3]; SAMPLES]) -> Self {
        let norm: f64 = (0..SAMPLES).map(|i| illuminant[i] * cmf[i][1]).sum();
        let k = 100.0 / norm;
        let weights = std::array::from_fn(|i| {
            let e = illuminant[i] * k;
            [e * cmf[i][0], e * cmf[i][1], e * cmf[i][2]]
        });
        let mut vc = ViewingCondition {
            name: name.to_owned(),
            illuminant,
            cmf,
            weights,
            white: Xyz::new(0.0, 0.0, 0.0),
        };
        vc.white = vc.integrate(&[1.0; SAMPLES]);
        vc
    }

    /// CIE D50 illuminant with the CIE 1931 2° observer.
    pub fn d50() -> Self {
        D50_2DEG.clone()
    }

    pub fn illuminant(&self) -> &[f64; SAMPLES] {
        &self.illuminant
    }

    pub fn cmf(&self) -> &[[f64; 3]; SAMPLES] {
        &self.cmf
    }

    /// Per-sample weights `k·I(λ)·cmf(λ)`.
    pub fn weights(&self) -> &[[f64; 3]; SAMPLES] {
        &self.weights
    }

    pub fn white(&self) -> Xyz {
        self.white
    }

    /// Weighted sum over an arbitrary (not necessarily bounded) sample vector.
    pub fn integrate(&self, values: &[f64; SAMPLES]) -> Xyz {
        let mut acc = [0.0; 3];
        for (v, w) in values.iter().zip(&self.weights) {
            acc[0] += v * w[0];
            acc[1] += v * w[1];
            acc[2] += v * w[2];
        }
        Xyz::new(acc[0], acc[1], acc[2])
    }
}

impl Default for ViewingCondition {
    fn default() -> Self {
        ViewingCondition::d50()
    }
}

/// Parses `wavelength_nm,value...` rows, skipping the header line.
fn parse_csv(text: &str, columns: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("CIE table line {}: {e}", lineno + 1)))?;
        if fields.len() != columns + 1 {
            return Err(Error::Format(format!(
                "CIE table line {}: expected {} fields",
                lineno + 1,
                columns + 1
            )));
        }
        rows.push((fields[0], fields[1..].to_vec()));
    }
    Ok(rows)
}

/// Linear interpolation of column `col` at wavelength `w`; zero outside the table.
fn resample(rows: &[(f64, Vec<f64>)], col: usize, w: f64) -> f64 {
    let idx = rows.partition_point(|(x, _)| *x < w);
    match (idx.checked_sub(1).and_then(|i| rows.get(i)), rows.get(idx)) {
        (_, Some((x, v))) if *x == w => v[col],
        (Some((x0, v0)), Some((x1, v1))) => {
            let t = (w - x0) / (x1 - x0);
            v0[col] + t * (v1[col] - v0[col])
        }
        _ => 0.0,
    }
}

pub fn spectrum_to_xyz(s: &Spectrum, vc: &ViewingCondition) -> Xyz {
    vc.integrate(s.values())
}

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let t = f * f * f;
    if t > EPSILON {
        t
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

pub fn xyz_to_lab(c: Xyz, vc: &ViewingCondition) -> Lab {
    let w = vc.white();
    let fx = lab_f(c.x / w.x);
    let fy = lab_f(c.y / w.y);
    let fz = lab_f(c.z / w.z);
    Lab::new(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

pub fn lab_to_xyz(c: Lab, vc: &ViewingCondition) -> Xyz {
    let w = vc.white();
    let fy = (c.l + 16.0) / 116.0;
    let fx = fy + c.a / 500.0;
    let fz = fy - c.b / 200.0;
    Xyz::new(w.x * lab_f_inv(fx), w.y * lab_f_inv(fy), w.z * lab_f_inv(fz))
}

/// Jacobian of `xyz_to_lab` at `c`, rows L, a, b and columns X, Y, Z.
pub fn xyz_to_lab_jacobian(c: Xyz, vc: &ViewingCondition) -> [[f64; 3]; 3] {
    let w = vc.white();
    let df = |v: f64, wv: f64| {
        let t = v / wv;
        let d = if t > EPSILON {
            1.0 / (3.0 * t.max(1e-300).cbrt().powi(2))
        } else {
            KAPPA / 116.0
        };
        d / wv
    };
    let (dx, dy, dz) = (df(c.x, w.x), df(c.y, w.y), df(c.z, w.z));
    [
        [0.0, 116.0 * dy, 0.0],
        [500.0 * dx, -500.0 * dy, 0.0],
        [0.0, 200.0 * dy, -200.0 * dz],
    ]
}

pub fn spectrum_to_lab(s: &Spectrum, vc: &ViewingCondition) -> Lab {
    xyz_to_lab(spectrum_to_xyz(s, vc), vc)
}

pub fn delta_e76(a: &Lab, b: &Lab) -> f64 {
    ((a.l - b.l).powi(2) + (a.a - b.a).powi(2) + (a.b - b.b).powi(2)).sqrt()
}

/// CIEDE2000 with unit parametric factors.
pub fn delta_e2000(x: &Lab, y: &Lab) -> f64 {
    let pow25_7 = 25f64.powi(7);
    let c1 = x.a.hypot(x.b);
    let c2 = y.a.hypot(y.b);
    let c_bar7 = ((c1 + c2) / 2.0).powi(7);
    let g = 0.5 * (1.0 - (c_bar7 / (c_bar7 + pow25_7)).sqrt());
    let a1 = x.a * (1.0 + g);
    let a2 = y.a * (1.0 + g);
    let c1p = a1.hypot(x.b);
    let c2p = a2.hypot(y.b);
    let hue = |b: f64, a: f64| {
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            b.atan2(a).to_degrees().rem_euclid(360.0)
        }
    };
    let h1 = hue(x.b, a1);
    let h2 = hue(y.b, a2);

    let dl = y.l - x.l;
    let dc = c2p - c1p;
    let dh = if c1p * c2p == 0.0 {
        0.0
    } else if (h2 - h1).abs() <= 180.0 {
        h2 - h1
    } else if h2 <= h1 {
        h2 - h1 + 360.0
    } else {
        h2 - h1 - 360.0
    };
    let dh_big = 2.0 * (c1p * c2p).sqrt() * (dh.to_radians() / 2.0).sin();

    let l_bar = (x.l + y.l) / 2.0;
    let c_bar_p = (c1p + c2p) / 2.0;
    let h_bar = if c1p * c2p == 0.0 {
        h1 + h2
    } else if (h1 - h2).abs() <= 180.0 {
        (h1 + h2) / 2.0
    } else if h1 + h2 < 360.0 {
        (h1 + h2 + 360.0) / 2.0
    } else {
        (h1 + h2 - 360.0) / 2.0
    };
    let t = 1.0 - 0.17 * (h_bar - 30.0).to_radians().cos()
        + 0.24 * (2.0 * h_bar).to_radians().cos()
        + 0.32 * (3.0 * h_bar + 6.0).to_radians().cos()
        - 0.20 * (4.0 * h_bar - 63.0).to_radians().cos();
    let d_theta = 30.0 * (-((h_bar - 275.0) / 25.0).powi(2)).exp();
    let c_bar_p7 = c_bar_p.powi(7);
    let r_c = 2.0 * (c_bar_p7 / (c_bar_p7 + pow25_7)).sqrt();
    let l50 = (l_bar - 50.0).powi(2);
    let s_l = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let s_c = 1.0 + 0.045 * c_bar_p;
    let s_h = 1.0 + 0.015 * c_bar_p * t;
    let r_t = -(2.0 * d_theta * PI / 180.0).sin() * r_c;

    let tl = dl / s_l;
    let tc = dc / s_c;
    let th = dh_big / s_h;
    (tl * tl + tc * tc + th * th + r_t * tc * th).max(0.0).sqrt()
}

/// A color-difference formula. Implement this to plug in another metric.
pub trait ColorDifference {
    fn delta_e(&self, a: &Lab, b: &Lab) -> f64;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[serde(alias = "cie76")]
    De76,
    #[default]
    #[serde(alias = "ciede2000")]
    De2000,
}

impl ColorDifference for Metric {
    fn delta_e(&self, a: &Lab, b: &Lab) -> f64 {
        match self {
            Metric::De76 => delta_e76(a, b),
            Metric::De2000 => delta_e2000(a, b),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "de76" | "cie76" => Ok(Metric::De76),
            "de2000" | "ciede2000" => Ok(Metric::De2000),
            other => Err(Error::InvalidParameter(format!("unknown metric {other:?}"))),
        }
    }
}

// D50-adapted (Bradford) XYZ to linear sRGB.
const XYZ_D50_TO_SRGB: [[f64; 3]; 3] = [
    [3.1338561, -1.6168667, -0.4906146],
    [-0.9787684, 1.9161415, 0.0334540],
    [0.0719453, -0.2289914, 1.4052427],
];
const D50_REFERENCE_WHITE: [f64; 3] = [0.96422, 1.0, 0.82521];

/// Linear-light sRGB, unclipped. The viewing condition's own whitepoint maps
/// to sRGB white.
pub fn xyz_to_linear_srgb(c: Xyz, vc: &ViewingCondition) -> [f64; 3] {
    let w = vc.white();
    let v = [
        c.x / w.x * D50_REFERENCE_WHITE[0],
        c.y / w.y * D50_REFERENCE_WHITE[1],
        c.z / w.z * D50_REFERENCE_WHITE[2],
    ];
    XYZ_D50_TO_SRGB.map(|row| row[0] * v[0] + row[1] * v[1] + row[2] * v[2])
}

pub fn srgb_encode(linear: f64) -> f64 {
    let v = linear.clamp(0.0, 1.0);
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_u8(linear: [f64; 3]) -> [u8; 3] {
    linear.map(|v| (srgb_encode(v) * 255.0).round() as u8)
}

pub fn xyz_to_srgb8(c: Xyz, vc: &ViewingCondition) -> [u8; 3] {
    srgb_to_u8(xyz_to_linear_srgb(c, vc))
}

pub fn lab_to_srgb8(c: Lab, vc: &ViewingCondition) -> [u8; 3] {
    xyz_to_srgb8(lab_to_xyz(c, vc), vc)
}

pub fn hex(rgb: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2])
}

/// Parses `#rrggbb` (the `#` is optional).
pub fn parse_hex(s: &str) -> Result<[u8; 3]> {
    let digits = s.trim().trim_start_matches('#');
    let bad = || Error::InvalidParameter(format!("{s:?} is not a #rrggbb color"));
    if digits.len() != 6 || !digits.is_ascii() {
        return Err(bad());
    }
    let mut rgb = [0u8; 3];
    for (i, c) in rgb.iter_mut().enumerate() {
        *c = u8::from_str_radix(&digits[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(rgb)
}

// Inverse of XYZ_D50_TO_SRGB.
const SRGB_TO_XYZ_D50: [[f64; 3]; 3] = [
    [0.4360747, 0.3850649, 0.1430804],
    [0.2225045, 0.7168786, 0.0606169],
    [0.0139322, 0.0971045, 0.7141733],
];

pub fn srgb_decode(encoded: f64) -> f64 {
    let v = encoded.clamp(0.0, 1.0);
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse of [`xyz_to_linear_srgb`].
pub fn linear_srgb_to_xyz(rgb: [f64; 3], vc: &ViewingCondition) -> Xyz {
    let v = SRGB_TO_XYZ_D50.map(|row| row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2]);
    let w = vc.white();
    Xyz::new(
        v[0] / D50_REFERENCE_WHITE[0] * w.x,
        v[1] / D50_REFERENCE_WHITE[1] * w.y,
        v[2] / D50_REFERENCE_WHITE[2] * w.z,
    )
}

pub fn srgb8_to_lab(rgb: [u8; 3], vc: &ViewingCondition) -> Lab {
    let linear = rgb.map(|c| srgb_decode(c as f64 / 255.0));
    xyz_to_lab(linear_srgb_to_xyz(linear, vc), vc)
}
