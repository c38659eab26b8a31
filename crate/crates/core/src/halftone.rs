//! Direct pattern control: per-pixel NP selection against a threshold
//! matrix, so local NP frequencies follow the requested NPac.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::colorimetry::{spectrum_to_xyz, xyz_to_srgb8, ViewingCondition};
use crate::error::{Error, Result};
use crate::neugebauer::{np_count, InkSet, NPac, NpId, NpTable};

pub const DEFAULT_LEVELS: u32 = 256;
pub const DEFAULT_BLUE_NOISE_SIZE: u32 = 64;
const MAX_BLUE_NOISE_SIZE: u32 = 128;
const VOID_AND_CLUSTER_SIGMA: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Bayer,
    BlueNoise,
}

impl std::str::FromStr for MatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayer" => Ok(MatrixKind::Bayer),
            "blue_noise" | "blue-noise" => Ok(MatrixKind::BlueNoise),
            other => Err(Error::InvalidParameter(format!("unknown matrix kind {other:?}"))),
        }
    }
}

/// Tiled threshold values in `[0, levels)`, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThresholdMatrix {
    width: u32,
    height: u32,
    levels: u32,
    values: Vec<u32>,
}

impl ThresholdMatrix {
    pub fn new(width: u32, height: u32, levels: u32, values: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || levels == 0 {
            return Err(Error::InvalidParameter("matrix dimensions and levels must be positive".into()));
        }
        if values.len() != (width as usize) * (height as usize) {
            return Err(Error::InvalidParameter(format!(
                "{} values for a {width}x{height} matrix",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|&&v| v >= levels) {
            return Err(Error::InvalidParameter(format!("matrix value {v} not below {levels} levels")));
        }
        Ok(ThresholdMatrix {
            width,
            height,
            levels,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// Value at `(x, y)`, tiling the matrix over the plane.
    pub fn at(&self, x: u32, y: u32) -> u32 {
        self.values[((y % self.height) * self.width + x % self.width) as usize]
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.levels as usize];
        for &v in &self.values {
            h[v as usize] += 1;
        }
        h
    }

    /// PGM with `maxval = levels - 1`.
    pub fn write_pgm(&self, mut w: impl Write) -> Result<()> {
        let maxval = self.levels - 1;
        write!(w, "P5\n{} {}\n{}\n", self.width, self.height, maxval)?;
        write_pgm_samples(&mut w, self.values.iter().map(|&v| v as u64), maxval)?;
        Ok(())
    }

    pub fn read_pgm(r: impl Read) -> Result<Self> {
        let (width, height, maxval, values) = read_pgm(r)?;
        let levels = maxval.checked_add(1).ok_or_else(|| Error::Format("PGM maxval too large".into()))?;
        ThresholdMatrix::new(width, height, levels, values.into_iter().map(|v| v as u32).collect())
    }
}

pub fn generate_matrix(kind: MatrixKind, size: u32, seed: u64) -> Result<ThresholdMatrix> {
    match kind {
        MatrixKind::Bayer => bayer(size),
        MatrixKind::BlueNoise => blue_noise(size, seed),
    }
}

/// Recursive Bayer matrix. The 2×2 base is `[[0, 2], [3, 1]]`. Sizes above
/// 16 are requantized to 256 levels, each appearing equally often.
pub fn bayer(size: u32) -> Result<ThresholdMatrix> {
    if size < 2 || !size.is_power_of_two() || size > 4096 {
        return Err(Error::InvalidParameter(format!(
            "Bayer size must be a power of two between 2 and 4096, got {size}"
        )));
    }
    let mut m = vec![0u32];
    let mut n = 1usize;
    while n < size as usize {
        let next_n = 2 * n;
        let mut next = vec![0u32; next_n * next_n];
        for y in 0..n {
            for x in 0..n {
                let v = 4 * m[y * n + x];
                next[y * next_n + x] = v;
                next[y * next_n + x + n] = v + 2;
                next[(y + n) * next_n + x] = v + 3;
                next[(y + n) * next_n + x + n] = v + 1;
            }
        }
        m = next;
        n = next_n;
    }
    let cells = (size as u64) * (size as u64);
    let levels = cells.min(DEFAULT_LEVELS as u64);
    let values = m.into_iter().map(|v| (v as u64 * levels / cells) as u32).collect();
    ThresholdMatrix::new(size, size, levels as u32, values)
}

/// Void-and-cluster blue noise with a toroidal Gaussian filter, ranked over
/// all cells and quantized to 256 levels.
pub fn blue_noise(size: u32, seed: u64) -> Result<ThresholdMatrix> {
    if !(4..=MAX_BLUE_NOISE_SIZE).contains(&size) {
        return Err(Error::InvalidParameter(format!(
            "blue-noise size must be between 4 and {MAX_BLUE_NOISE_SIZE}, got {size}"
        )));
    }
    let n = size as usize;
    let cells = n * n;
    let kernel = toroidal_gaussian(n, VOID_AND_CLUSTER_SIGMA);

    let mut energy = vec![0.0; cells];
    let mut ones = vec![false; cells];
    let toggle = |energy: &mut [f64], ones: &mut [bool], p: usize, on: bool| {
        ones[p] = on;
        let sign = if on { 1.0 } else { -1.0 };
        let (px, py) = (p % n, p / n);
        for y in 0..n {
            let dy = (y + n - py) % n;
            for x in 0..n {
                let dx = (x + n - px) % n;
                energy[y * n + x] += sign * kernel[dy * n + dx];
            }
        }
    };
    let tightest_cluster = |energy: &[f64], ones: &[bool]| {
        (0..cells)
            .filter(|&p| ones[p])
            .max_by(|&a, &b| energy[a].total_cmp(&energy[b]).then(b.cmp(&a)))
            .expect("pattern has a minority pixel")
    };
    let largest_void = |energy: &[f64], ones: &[bool]| {
        (0..cells)
            .filter(|&p| !ones[p])
            .min_by(|&a, &b| energy[a].total_cmp(&energy[b]).then(a.cmp(&b)))
            .expect("pattern has an empty pixel")
    };

    // Random initial pattern with about a tenth of the cells set, then
    // relaxed by swapping the tightest cluster into the largest void.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..cells).collect();
    order.shuffle(&mut rng);
    let initial = (cells / 10).max(1);
    for &p in &order[..initial] {
        toggle(&mut energy, &mut ones, p, true);
    }
    for _ in 0..(4 * cells) {
        let c = tightest_cluster(&energy, &ones);
        toggle(&mut energy, &mut ones, c, false);
        let v = largest_void(&energy, &ones);
        if v == c {
            toggle(&mut energy, &mut ones, c, true);
            break;
        }
        toggle(&mut energy, &mut ones, v, true);
    }
    let prototype = (energy.clone(), ones.clone());

    let mut rank = vec![0usize; cells];
    // Ranks below the initial count: peel clusters off a copy.
    {
        let (mut e, mut o) = prototype.clone();
        for r in (0..initial).rev() {
            let c = tightest_cluster(&e, &o);
            toggle(&mut e, &mut o, c, false);
            rank[c] = r;
        }
    }
    // Remaining ranks: fill voids. Past half coverage, the tightest cluster
    // of empty pixels is the same pixel as the largest void of set ones,
    // since the two energies sum to a constant.
    let (mut e, mut o) = prototype;
    for r in initial..cells {
        let v = largest_void(&e, &o);
        toggle(&mut e, &mut o, v, true);
        rank[v] = r;
    }

    let levels = DEFAULT_LEVELS.min(cells as u32) as usize;
    let values = rank.into_iter().map(|r| (r * levels / cells) as u32).collect();
    ThresholdMatrix::new(size, size, levels as u32, values)
}

fn toroidal_gaussian(n: usize, sigma: f64) -> Vec<f64> {
    let mut k = vec![0.0; n * n];
    for dy in 0..n {
        let y = dy.min(n - dy) as f64;
        for dx in 0..n {
            let x = dx.min(n - dx) as f64;
            k[dy * n + dx] = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
        }
    }
    k
}

/// Per-pixel NPacs, or one NPac over the whole extent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NPacField {
    Constant { npac: NPac },
    PerPixel { pixels: Vec<NPac> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NPacImage {
    pub width: u32,
    pub height: u32,
    #[serde(flatten)]
    pub field: NPacField,
}

impl NPacImage {
    pub fn constant(width: u32, height: u32, npac: NPac) -> Self {
        NPacImage {
            width,
            height,
            field: NPacField::Constant { npac },
        }
    }

    pub fn per_pixel(width: u32, height: u32, pixels: Vec<NPac>) -> Result<Self> {
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(Error::InvalidParameter(format!(
                "{} NPacs for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(NPacImage {
            width,
            height,
            field: NPacField::PerPixel { pixels },
        })
    }

    pub fn pixel(&self, x: u32, y: u32) -> &NPac {
        match &self.field {
            NPacField::Constant { npac } => npac,
            NPacField::PerPixel { pixels } => &pixels[(y * self.width + x) as usize],
        }
    }

    pub fn validate(&self, inkset: &InkSet) -> Result<()> {
        if let NPacField::PerPixel { pixels } = &self.field {
            if pixels.len() != (self.width as usize) * (self.height as usize) {
                return Err(Error::InvalidParameter("pixel count does not match dimensions".into()));
            }
        }
        let check = |n: &NPac| n.validate(inkset).map_err(Error::InvalidNpac);
        match &self.field {
            NPacField::Constant { npac } => check(npac),
            NPacField::PerPixel { pixels } => pixels.iter().try_for_each(check),
        }
    }
}

/// One NP id per pixel, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HalftoneImage {
    pub width: u32,
    pub height: u32,
    pub ids: Vec<NpId>,
}

/// Selects, per pixel, the NP whose stacked cumulative interval (entries in
/// ascending id order) contains `(threshold + 0.5) / levels`.
pub fn halftone(img: &NPacImage, matrix: &ThresholdMatrix) -> HalftoneImage {
    let levels = matrix.levels() as f64;
    let mut ids = Vec::with_capacity((img.width as usize) * (img.height as usize));
    for y in 0..img.height {
        for x in 0..img.width {
            let t = (matrix.at(x, y) as f64 + 0.5) / levels;
            ids.push(select(img.pixel(x, y), t));
        }
    }
    HalftoneImage {
        width: img.width,
        height: img.height,
        ids,
    }
}

fn select(npac: &NPac, t: f64) -> NpId {
    let entries = npac.entries();
    let mut cumulative = 0.0;
    for &(id, w) in entries {
        cumulative += w;
        if t < cumulative {
            return id;
        }
    }
    // Rounding left the sum a hair under t.
    entries.last().expect("an NPac is never empty").0
}

/// Rectangular pixel region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Normalized NP frequencies over `window`, or over the whole image.
pub fn measure_coverages(h: &HalftoneImage, window: Option<Window>) -> Result<NPac> {
    let w = window.unwrap_or(Window {
        x: 0,
        y: 0,
        width: h.width,
        height: h.height,
    });
    if w.width == 0 || w.height == 0 {
        return Err(Error::InvalidParameter("coverage window is empty".into()));
    }
    if w.x as u64 + w.width as u64 > h.width as u64 || w.y as u64 + w.height as u64 > h.height as u64 {
        return Err(Error::InvalidParameter("coverage window exceeds the image".into()));
    }
    let mut counts: HashMap<NpId, u64> = HashMap::new();
    for y in w.y..w.y + w.height {
        let row = (y * h.width) as usize;
        for x in w.x..w.x + w.width {
            *counts.entry(h.ids[row + x as usize]).or_default() += 1;
        }
    }
    let total = (w.width as u64 * w.height as u64) as f64;
    NPac::new(counts.into_iter().map(|(id, c)| (id, c as f64 / total)))
}

/// 8-bit sRGB rendering, one NP color per pixel.
pub fn render_preview(h: &HalftoneImage, table: &NpTable, vc: &ViewingCondition) -> Result<image::RgbImage> {
    let mut colors: HashMap<NpId, [u8; 3]> = HashMap::new();
    let mut img = image::RgbImage::new(h.width, h.height);
    for (i, &id) in h.ids.iter().enumerate() {
        let rgb = match colors.get(&id) {
            Some(c) => *c,
            None => {
                let c = xyz_to_srgb8(spectrum_to_xyz(table.spectrum(id)?, vc), vc);
                colors.insert(id, c);
                c
            }
        };
        img.put_pixel(i as u32 % h.width, i as u32 / h.width, image::Rgb(rgb));
    }
    Ok(img)
}

pub fn write_png(img: &image::RgbImage, path: &std::path::Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("writing PNG {}: {e}", path.display())))
}

const NPHT_MAGIC: &[u8; 4] = b"NPHT";

impl HalftoneImage {
    /// Bytes per id needed for every NP of `inkset`.
    pub fn id_bytes(inkset: &InkSet) -> u8 {
        match np_count(inkset) {
            Ok(c) if c <= 1 << 8 => 1,
            Ok(c) if c <= 1 << 16 => 2,
            Ok(c) if c <= 1 << 32 => 4,
            _ => 8,
        }
    }

    /// PGM (P5) when every id fits in a byte, the NPHT raster otherwise.
    pub fn write(&self, inkset: &InkSet, w: impl Write) -> Result<()> {
        match Self::id_bytes(inkset) {
            1 => self.write_pgm(w),
            b => self.write_npht(b, w),
        }
    }

    pub fn write_pgm(&self, mut w: impl Write) -> Result<()> {
        if let Some(id) = self.ids.iter().find(|&&id| id > 255) {
            return Err(Error::Format(format!("NP id {id} does not fit in a PGM byte")));
        }
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.ids.iter().map(|&id| id as u8).collect::<Vec<_>>())?;
        Ok(())
    }

    /// 16-byte little-endian header (`NPHT`, width u32, height u32, id
    /// bytes u8, three zero bytes) followed by the ids, row-major.
    pub fn write_npht(&self, id_bytes: u8, mut w: impl Write) -> Result<()> {
        if ![1, 2, 4, 8].contains(&id_bytes) {
            return Err(Error::InvalidParameter(format!("id width {id_bytes} is not 1, 2, 4 or 8")));
        }
        let limit = if id_bytes == 8 { u64::MAX } else { (1u64 << (8 * id_bytes)) - 1 };
        if let Some(id) = self.ids.iter().find(|&&id| id > limit) {
            return Err(Error::Format(format!("NP id {id} does not fit in {id_bytes} bytes")));
        }
        let mut header = [0u8; 16];
        header[..4].copy_from_slice(NPHT_MAGIC);
        header[4..8].copy_from_slice(&self.width.to_le_bytes());
        header[8..12].copy_from_slice(&self.height.to_le_bytes());
        header[12] = id_bytes;
        w.write_all(&header)?;
        let mut body = Vec::with_capacity(self.ids.len() * id_bytes as usize);
        for &id in &self.ids {
            body.extend_from_slice(&id.to_le_bytes()[..id_bytes as usize]);
        }
        w.write_all(&body)?;
        Ok(())
    }

    /// Reads either format, detected from the magic bytes.
    pub fn read(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.starts_with(NPHT_MAGIC) {
            if buf.len() < 16 {
                return Err(Error::Format("truncated NPHT header".into()));
            }
            let width = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes"));
            let height = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
            let id_bytes = buf[12] as usize;
            if ![1, 2, 4, 8].contains(&id_bytes) {
                return Err(Error::Format(format!("NPHT id width {id_bytes} is not 1, 2, 4 or 8")));
            }
            let count = width as usize * height as usize;
            let body = &buf[16..];
            if body.len() != count * id_bytes {
                return Err(Error::Format(format!(
                    "NPHT body has {} bytes, expected {}",
                    body.len(),
                    count * id_bytes
                )));
            }
            let ids = body
                .chunks_exact(id_bytes)
                .map(|c| {
                    let mut b = [0u8; 8];
                    b[..id_bytes].copy_from_slice(c);
                    u64::from_le_bytes(b)
                })
                .collect();
            Ok(HalftoneImage { width, height, ids })
        } else {
            let (width, height, _, values) = read_pgm(&buf[..])?;
            Ok(HalftoneImage { width, height, ids: values })
        }
    }

    pub fn validate(&self, inkset: &InkSet) -> Result<()> {
        if self.ids.len() != self.width as usize * self.height as usize {
            return Err(Error::Format("halftone pixel count does not match dimensions".into()));
        }
        match self.ids.iter().find(|&&id| !inkset.contains(id)) {
            Some(&id) => Err(Error::UnknownNp(id)),
            None => Ok(()),
        }
    }
}

fn write_pgm_samples(w: &mut impl Write, values: impl Iterator<Item = u64>, maxval: u32) -> Result<()> {
    let bytes: Vec<u8> = if maxval < 256 {
        values.map(|v| v as u8).collect()
    } else {
        values.flat_map(|v| (v as u16).to_be_bytes()).collect()
    };
    w.write_all(&bytes)?;
    Ok(())
}

/// Binary PGM: returns width, height, maxval and samples.
fn read_pgm(mut r: impl Read) -> Result<(u32, u32, u32, Vec<u64>)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < buf.len() && buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < buf.len() && buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&buf[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Format("not a binary PGM (P5) or NPHT file".into()));
    }
    let mut num = |what: &str| -> Result<u32> {
        token()?
            .parse()
            .map_err(|_| Error::Format(format!("bad PGM {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} out of range")));
    }
    // Exactly one whitespace byte separates the header from the samples.
    let body = &buf[pos + 1..];
    let count = width as usize * height as usize;
    let values: Vec<u64> = if maxval < 256 {
        if body.len() != count {
            return Err(Error::Format(format!("PGM body has {} bytes, expected {count}", body.len())));
        }
        body.iter().map(|&b| b as u64).collect()
    } else {
        if body.len() != 2 * count {
            return Err(Error::Format(format!("PGM body has {} bytes, expected {}", body.len(), 2 * count)));
        }
        body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as u64).collect()
    };
    if values.iter().any(|&v| v > maxval as u64) {
        return Err(Error::Format("PGM sample exceeds maxval".into()));
    }
    Ok((width, height, maxval, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_bayer() {
        let m = bayer(2).unwrap();
        assert_eq!(m.values(), &[0, 2, 3, 1]);
        assert_eq!(m.levels(), 4);
    }

    #[test]
    fn bayer_16_is_exactly_uniform() {
        let m = bayer(16).unwrap();
        assert_eq!(m.levels(), 256);
        assert!(m.histogram().iter().all(|&c| c == 1));
        let m = bayer(64).unwrap();
        assert!(m.histogram().iter().all(|&c| c == 16));
    }

    #[test]
    fn bad_sizes_are_rejected() {
        assert!(bayer(12).is_err());
        assert!(bayer(1).is_err());
        assert!(blue_noise(2, 0).is_err());
        assert!(generate_matrix(MatrixKind::BlueNoise, 1024, 0).is_err());
    }

    #[test]
    fn blue_noise_is_balanced_and_seeded() {
        let a = blue_noise(16, 5).unwrap();
        assert!(a.histogram().iter().all(|&c| c == 1));
        assert_eq!(a, blue_noise(16, 5).unwrap());
        assert_ne!(a, blue_noise(16, 6).unwrap());
    }

    #[test]
    fn pgm_round_trips() {
        let m = bayer(4).unwrap();
        let mut buf = Vec::new();
        m.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n4 4\n15\n"));
        assert_eq!(ThresholdMatrix::read_pgm(&buf[..]).unwrap(), m);

        let h = HalftoneImage {
            width: 3,
            height: 2,
            ids: vec![0, 1, 2, 3, 15, 7],
        };
        let mut buf = Vec::new();
        h.write_pgm(&mut buf).unwrap();
        assert_eq!(HalftoneImage::read(&buf[..]).unwrap(), h);
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let data = b"P5\n# made by hand\n2 1\n255\n\x01\x02";
        let h = HalftoneImage::read(&data[..]).unwrap();
        assert_eq!(h.ids, vec![1, 2]);
    }

    #[test]
    fn npht_layout() {
        let h = HalftoneImage {
            width: 2,
            height: 1,
            ids: vec![0x0102, 300],
        };
        let mut buf = Vec::new();
        h.write_npht(2, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"NPHT");
        assert_eq!(&buf[4..8], &2u32.to_le_bytes());
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(buf[12], 2);
        assert_eq!(&buf[13..16], &[0, 0, 0]);
        assert_eq!(&buf[16..], &[0x02, 0x01, 0x2c, 0x01]);
        assert_eq!(HalftoneImage::read(&buf[..]).unwrap(), h);
        assert!(h.write_npht(1, &mut Vec::new()).is_err());
    }

    #[test]
    fn format_follows_np_count() {
        let cmyk = InkSet::new(2, ["C", "M", "Y", "K"]).unwrap();
        assert_eq!(HalftoneImage::id_bytes(&cmyk), 1);
        let eight = InkSet::new(3, ["a", "b", "c", "d", "e", "f"]).unwrap();
        assert_eq!(HalftoneImage::id_bytes(&eight), 2);
        let h = HalftoneImage {
            width: 1,
            height: 1,
            ids: vec![700],
        };
        let mut buf = Vec::new();
        h.write(&eight, &mut buf).unwrap();
        assert!(buf.starts_with(b"NPHT"));
    }
}
