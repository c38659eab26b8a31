//! Loading and writing the documented file formats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use npcolor::gamut::{GamutDefinition, GamutModel, GamutOptions};
use npcolor::press::synth_np_table;
use npcolor::{Lab, NPac, PressModel, ViewingCondition};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Pretty JSON to `path`, or to stdout when `path` is `None` or `-`.
pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(text.as_bytes(), path)
}

pub fn write_bytes(bytes: &[u8], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => {
            let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            w.write_all(bytes)?;
            w.flush()?;
        }
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Loads a press file. The names `demo_cmyk.json` and `demo_8ink.json` fall
/// back to the presses built into the library when no such file exists.
pub fn load_press(path: &Path) -> Result<PressModel> {
    if !path.exists() {
        match path.file_name().and_then(|n| n.to_str()) {
            Some("demo_cmyk.json" | "demo_cmyk") => return Ok(PressModel::demo_cmyk()),
            Some("demo_8ink.json" | "demo_8ink") => return Ok(PressModel::demo_8ink()),
            _ => {}
        }
    }
    read_json(path)
}

/// Gamut from a cached definition if given, else built from the press.
pub fn load_gamut(press: &PressModel, cache: Option<&Path>, vc: &ViewingCondition) -> Result<GamutModel> {
    match cache {
        Some(p) => {
            let def: GamutDefinition = read_json(p)?;
            if def.table.inkset() != press.inkset() {
                bail!("gamut cache {} was built for a different ink set", p.display());
            }
            Ok(def.build(vc)?)
        }
        None => build_gamut(press, GamutOptions::default(), vc),
    }
}

pub fn build_gamut(press: &PressModel, options: GamutOptions, vc: &ViewingCondition) -> Result<GamutModel> {
    let table = synth_np_table(press)?;
    Ok(GamutModel::build(&table, press.yn(), vc, options)?)
}

/// `L,a,b` as three comma-separated numbers.
pub fn parse_lab(s: &str) -> Result<Lab> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [l, a, b] = parts.as_slice() else {
        bail!("expected L,a,b but got {s:?}");
    };
    let lab = Lab::new(l.parse()?, a.parse()?, b.parse()?);
    check_lab(&lab)?;
    Ok(lab)
}

pub fn check_lab(lab: &Lab) -> Result<()> {
    if !lab.is_finite() {
        bail!("Lab values must be finite");
    }
    if !(0.0..=100.0).contains(&lab.l) {
        bail!("L* {} outside [0, 100]", lab.l);
    }
    Ok(())
}

/// Inline JSON, or `@path` to read the JSON from a file.
pub fn json_arg<T: DeserializeOwned>(arg: &str) -> Result<T> {
    match arg.strip_prefix('@') {
        Some(path) => read_json(Path::new(path)),
        None => serde_json::from_str(arg).with_context(|| format!("parsing {arg:?}")),
    }
}

pub fn parse_npac(arg: &str) -> Result<NPac> {
    json_arg(arg)
}

/// Comma-separated floats.
pub fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?}")))
        .collect()
}

/// `WxH`.
pub fn parse_size(s: &str) -> Result<(u32, u32)> {
    let (w, h) = s.split_once(['x', 'X']).with_context(|| format!("expected WxH but got {s:?}"))?;
    let (w, h): (u32, u32) = (w.trim().parse()?, h.trim().parse()?);
    if w == 0 || h == 0 {
        bail!("image size must be positive");
    }
    Ok((w, h))
}

/// Current UTC time as RFC 3339.
pub fn now_rfc3339() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .expect("formatting the current time")
}
