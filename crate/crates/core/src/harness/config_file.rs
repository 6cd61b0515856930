//! Line-oriented `key = value` scenario files.
//!
//! `#` starts a comment. Several assignments may share a line when separated
//! by commas; a comma-separated piece without `=` continues the previous
//! value, which is how lists such as `orders = 2:1, 4:2` are written.
//! Lengths need a unit suffix: `nm`, `um` (or `µm`), `mm` or `m`.

use std::path::PathBuf;

use super::spec::{MaskSource, ScenarioId, ScenarioSpec};
use crate::config::CorrelationOrder;
use crate::correlate::ReductionMode;
use crate::error::{Error, Result};

struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn split_entries(text: &str) -> Result<Vec<Entry>> {
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        for piece in content.split(',') {
            match piece.split_once('=') {
                Some((key, value)) => entries.push(Entry {
                    line,
                    key: key.trim().to_string(),
                    value: value.trim().to_string(),
                }),
                None => match entries.last_mut() {
                    Some(prev) => {
                        prev.value.push(',');
                        prev.value.push_str(piece.trim());
                    }
                    None => {
                        return Err(Error::BadUnit {
                            line,
                            value: piece.trim().to_string(),
                            expected: "a `key = value` assignment",
                        })
                    }
                },
            }
        }
    }
    Ok(entries)
}

const LENGTH: &str = "a length with unit nm, um, mm or m";

/// Parses a length such as `532nm` or `0.24 m` into metres.
pub fn parse_length(value: &str, line: usize) -> Result<f64> {
    let v = value.trim();
    let units = [("nm", 1e-9), ("µm", 1e-6), ("um", 1e-6), ("mm", 1e-3), ("m", 1.0)];
    let bad = || Error::BadUnit {
        line,
        value: v.to_string(),
        expected: LENGTH,
    };
    let (number, scale) = units
        .iter()
        .find_map(|&(suffix, scale)| v.strip_suffix(suffix).map(|n| (n, scale)))
        .ok_or_else(bad)?;
    let x: f64 = number.trim().parse().map_err(|_| bad())?;
    Ok(x * scale)
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize, expected: &'static str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::BadUnit {
        line,
        value: value.trim().to_string(),
        expected,
    })
}

fn parse_bool(value: &str, line: usize) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(Error::BadUnit {
            line,
            value: other.to_string(),
            expected: "true or false",
        }),
    }
}

fn parse_orders(value: &str, line: usize) -> Result<Vec<CorrelationOrder>> {
    value
        .split(',')
        .map(|item| {
            let (n_total, n) = item.trim().split_once(':').ok_or_else(|| Error::BadUnit {
                line,
                value: item.trim().to_string(),
                expected: "an order written N:n",
            })?;
            CorrelationOrder::new(
                parse_num(n_total, line, "an integer order")?,
                parse_num(n, line, "an integer split")?,
            )
        })
        .collect()
}

fn parse_mask(value: &str, line: usize) -> Result<MaskSource> {
    let v = value.trim();
    let (name, arg) = match v.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (v, None),
    };
    Ok(match (name, arg) {
        ("glyph", None) => MaskSource::Glyph,
        ("glyph", Some(side)) => MaskSource::GlyphSized(parse_num(side, line, "a glyph size in pixels")?),
        ("double_slit", None) => MaskSource::DoubleSlit,
        ("pinhole", None) => MaskSource::Pinhole,
        ("aperture", Some(cells)) => MaskSource::Aperture(parse_num(cells, line, "a number of coherence areas")?),
        _ => MaskSource::File(PathBuf::from(v)),
    })
}

/// Parses and validates a scenario file. `scenario_id` and `frames` are
/// required; everything else falls back to the scenario's defaults.
pub fn parse_config(text: &str) -> Result<ScenarioSpec> {
    let entries = split_entries(text)?;
    let find = |key: &str| entries.iter().rev().find(|e| e.key == key);

    let id_entry = find("scenario_id").ok_or(Error::MissingRequired("scenario_id"))?;
    let scenario: ScenarioId = id_entry.value.parse().map_err(|_| Error::BadUnit {
        line: id_entry.line,
        value: id_entry.value.clone(),
        expected: "a scenario name",
    })?;
    if find("frames").is_none() {
        return Err(Error::MissingRequired("frames"));
    }

    let mut spec = ScenarioSpec::defaults(scenario);
    let mut pitch_given = false;
    for Entry { line, key, value } in &entries {
        let line = *line;
        let cfg = &mut spec.config;
        match key.as_str() {
            "scenario_id" => {}
            "frames" => spec.frames = parse_num(value, line, "a frame count")?,
            "seed" => cfg.seed = parse_num(value, line, "an unsigned 64-bit seed")?,
            "orders" => spec.orders = parse_orders(value, line)?,
            "wavelength" => cfg.wavelength = parse_length(value, line)?,
            "source_diameter" => cfg.source_diameter = parse_length(value, line)?,
            "z1" => cfg.z1 = parse_length(value, line)?,
            "z2" => cfg.z2 = parse_length(value, line)?,
            "z3" => {
                let zs = value
                    .split(',')
                    .map(|z| parse_length(z, line))
                    .collect::<Result<Vec<_>>>()?;
                if scenario == ScenarioId::DirectImage {
                    cfg.z3 = zs[0];
                    spec.direct_distances = zs;
                } else if let [z] = zs[..] {
                    cfg.z3 = z;
                } else {
                    return Err(Error::RangeError {
                        key: "z3",
                        value: value.clone(),
                        reason: "only direct_image accepts several distances",
                    });
                }
            }
            "pitch" => {
                pitch_given = true;
                cfg.pitch = parse_length(value, line)?;
            }
            "nx" => cfg.nx = parse_num(value, line, "a pixel count")?,
            "ny" => cfg.ny = parse_num(value, line, "a pixel count")?,
            "mean_intensity" => cfg.mean_intensity = parse_num(value, line, "a number")?,
            "mask" => spec.mask = parse_mask(value, line)?,
            "slit_width" => spec.slits.width = parse_length(value, line)?,
            "slit_sep" => spec.slits.separation = parse_length(value, line)?,
            "slit_height" => spec.slits.height = Some(parse_length(value, line)?),
            "blocks" => spec.blocks = parse_num(value, line, "a block count")?,
            "reduction" => {
                spec.reduction = match value.as_str() {
                    "fixed" => ReductionMode::Fixed,
                    "dynamic" => ReductionMode::Dynamic,
                    _ => {
                        return Err(Error::BadUnit {
                            line,
                            value: value.clone(),
                            expected: "fixed or dynamic",
                        })
                    }
                }
            }
            "shot_noise" => spec.detector.shot_noise = parse_bool(value, line)?,
            "read_noise" => spec.detector.read_noise_sigma = parse_num(value, line, "a number")?,
            "quant_bits" => spec.detector.quant_bits = parse_num(value, line, "0, 8 or 16")?,
            "exposure_gain" => spec.detector.exposure_gain = parse_num(value, line, "a number")?,
            "max_order" => spec.max_order = parse_num(value, line, "an integer order")?,
            "save_frames" => spec.save_frames = parse_bool(value, line)?,
            "output_dir" => spec.output_dir = PathBuf::from(value),
            _ => {
                return Err(Error::UnknownKey {
                    line,
                    key: key.clone(),
                })
            }
        }
    }
    // Preset 2D grids sample a quarter coherence length; keep that when the
    // geometry changes and no pitch is given.
    if !pitch_given && !scenario.is_one_dimensional() {
        spec.config.pitch = spec.config.coherence_length() / 4.0;
    }
    spec.validate()
}
