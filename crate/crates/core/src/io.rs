//! File formats: heats, truth and trace CSVs, noise JSON and run manifests.
//!
//! Element fractions are written in ppm and variances of fractions in ppm².
//! Conversion shifts the decimal exponent of the shortest round-trip
//! representation instead of multiplying, so a value read back is the exact
//! `f64` that was written.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::error::{Error, LineError, Result};
use crate::eval::{format_f64, TraceRow, TraceTable};
use crate::model::{ElementSpec, HeatRecord, NoiseSpec, ScrapCatalog};
use crate::synth::SyntheticDataset;

/// Decimal text of `v * 10^shift`, exact in the sense that
/// [`parse_shifted`] with the same shift returns `v`.
pub fn format_shifted(v: f64, shift: i32) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !v.is_finite() {
        return format_f64(v);
    }
    let sci = format!("{v:e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse::<i32>().expect("exponent") + shift;
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let len = digits.len() as i32;
    // the decimal point sits after `point` digits
    let point = exp + 1;
    let body = if !(-6..=21).contains(&point) {
        format!("{mantissa}e{exp}")
    } else if point <= 0 {
        format!("0.{}{digits}", "0".repeat((-point) as usize))
    } else if point >= len {
        format!("{digits}{}", "0".repeat((point - len) as usize))
    } else {
        format!(
            "{}.{}",
            &digits[..point as usize],
            &digits[point as usize..]
        )
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// Parses decimal text and divides by `10^shift` exactly (one rounding).
pub fn parse_shifted(text: &str, shift: i32) -> std::result::Result<f64, String> {
    let t = text.trim();
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (
            &t[..i],
            t[i + 1..]
                .parse::<i32>()
                .map_err(|_| format!("bad number {t:?}"))?,
        ),
        None => (t, 0),
    };
    if mantissa.is_empty()
        || !mantissa
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+'))
    {
        return Err(format!("bad number {t:?}"));
    }
    format!("{mantissa}e{}", exp - shift)
        .parse::<f64>()
        .map_err(|_| format!("bad number {t:?}"))
}

pub fn fraction_to_ppm_text(f: f64) -> String {
    format_shifted(f, 6)
}

pub fn ppm_text_to_fraction(s: &str) -> std::result::Result<f64, String> {
    parse_shifted(s, 6)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_errors(path: &Path, errors: Vec<LineError>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        errors,
    }
}

/// Heats of one element together with the scrap catalog from the header.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatTable {
    pub catalog: ScrapCatalog,
    pub heats: Vec<HeatRecord>,
}

const HEAT_TAIL: [&str; 6] = [
    "m_hm",
    "f_hm",
    "m_steel",
    "f_steel",
    "m_slag",
    "f_feon_slag",
];

/// Header of the heats CSV for a catalog.
pub fn heats_header(catalog: &ScrapCatalog) -> Vec<String> {
    std::iter::once("heat_index".to_string())
        .chain(catalog.ids().iter().map(|id| format!("m_scrap_{id}")))
        .chain(HEAT_TAIL.iter().map(|s| s.to_string()))
        .collect()
}

pub fn load_heats(path: &Path) -> Result<HeatTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_heats(file, path)
}

/// Parses heats CSV text. Masses are kg; `f_hm` and `f_steel` are ppm;
/// `f_feon_slag` is a plain fraction. `f_steel` and `f_feon_slag` may be blank.
pub fn parse_heats<R: Read>(reader: R, path: &Path) -> Result<HeatTable> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let bad_header = |msg: String| {
        parse_errors(
            path,
            vec![LineError {
                line: 1,
                message: msg,
            }],
        )
    };
    if cols.first() != Some(&"heat_index") || cols.len() < 1 + HEAT_TAIL.len() + 1 {
        return Err(bad_header(format!(
            "expected heat_index, m_scrap_<id>..., {}",
            HEAT_TAIL.join(", ")
        )));
    }
    let n = cols.len() - 1 - HEAT_TAIL.len();
    let mut ids = Vec::with_capacity(n);
    for c in &cols[1..=n] {
        match c.strip_prefix("m_scrap_") {
            Some(id) if !id.is_empty() => ids.push(id.to_string()),
            _ => return Err(bad_header(format!("column {c:?} is not m_scrap_<id>"))),
        }
    }
    if cols[n + 1..] != HEAT_TAIL {
        return Err(bad_header(format!(
            "trailing columns must be {}, got {}",
            HEAT_TAIL.join(", "),
            cols[n + 1..].join(", ")
        )));
    }
    let catalog = ScrapCatalog::new(ids).map_err(|e| bad_header(e.to_string()))?;

    let mut heats = Vec::new();
    let mut errors = Vec::new();
    let mut last_index: Option<u64> = None;
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                errors.push(LineError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let mut push = |message: String| errors.push(LineError { line, message });
        if rec.len() != cols.len() {
            push(format!("expected {} fields, got {}", cols.len(), rec.len()));
            continue;
        }
        let field = |i: usize| rec[i].trim();
        let mut row_errors = Vec::new();
        let heat_index = match field(0).parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                row_errors.push(format!("heat_index: bad integer {:?}", field(0)));
                None
            }
        };
        let mut num = |i: usize, ppm: bool| -> Option<f64> {
            let s = field(i);
            let v = if ppm {
                ppm_text_to_fraction(s)
            } else {
                parse_shifted(s, 0)
            };
            v.map_err(|e| row_errors.push(format!("{}: {e}", cols[i])))
                .ok()
        };
        let scrap: Vec<Option<f64>> = (1..=n).map(|i| num(i, false)).collect();
        let m_hm = num(n + 1, false);
        let f_hm = num(n + 2, true);
        let m_steel = num(n + 3, false);
        let f_steel = if field(n + 4).is_empty() {
            Some(None)
        } else {
            num(n + 4, true).map(Some)
        };
        let m_slag = num(n + 5, false);
        let f_feon = if field(n + 6).is_empty() {
            Some(None)
        } else {
            num(n + 6, false).map(Some)
        };
        if !row_errors.is_empty() {
            for e in row_errors {
                push(e);
            }
            continue;
        }
        let heat = HeatRecord {
            heat_index: heat_index.expect("checked"),
            scrap_mass: scrap.into_iter().map(|v| v.expect("checked")).collect(),
            m_hm: m_hm.expect("checked"),
            f_hm: f_hm.expect("checked"),
            m_steel: m_steel.expect("checked"),
            f_steel: f_steel.expect("checked"),
            m_slag: m_slag.expect("checked"),
            f_feon_slag: f_feon.expect("checked"),
        };
        if let Err(e) = heat.validate(n) {
            push(match e {
                Error::InvalidHeat { reason, .. } => reason,
                other => other.to_string(),
            });
            continue;
        }
        if let Some(prev) = last_index {
            if heat.heat_index <= prev {
                push(format!(
                    "heat_index {} does not increase (previous {prev})",
                    heat.heat_index
                ));
                continue;
            }
        }
        last_index = Some(heat.heat_index);
        heats.push(heat);
    }
    if !errors.is_empty() {
        return Err(parse_errors(path, errors));
    }
    Ok(HeatTable { catalog, heats })
}

fn opt_text(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map_or(String::new(), f)
}

pub fn save_heats(path: &Path, catalog: &ScrapCatalog, heats: &[HeatRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let wrap = |e| Error::csv(path, e);
    w.write_record(heats_header(catalog)).map_err(wrap)?;
    for h in heats {
        if h.scrap_mass.len() != catalog.len() {
            return Err(Error::Dimension {
                what: "scrap masses",
                expected: catalog.len(),
                got: h.scrap_mass.len(),
            });
        }
        let mut row = Vec::with_capacity(catalog.len() + 7);
        row.push(h.heat_index.to_string());
        row.extend(h.scrap_mass.iter().map(|m| format_f64(*m)));
        row.push(format_f64(h.m_hm));
        row.push(fraction_to_ppm_text(h.f_hm));
        row.push(format_f64(h.m_steel));
        row.push(opt_text(h.f_steel, fraction_to_ppm_text));
        row.push(format_f64(h.m_slag));
        row.push(opt_text(h.f_feon_slag, format_f64));
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Hidden truth of a synthetic dataset, aligned with its heats.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub heat_index: Vec<u64>,
    pub alpha: Vec<DVector<f64>>,
    pub c: Option<Vec<[f64; 2]>>,
}

/// Truth CSV: `heat_index, alpha_<id>... (ppm)[, c1, c2]`.
pub fn save_truth(path: &Path, dataset: &SyntheticDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let wrap = |e| Error::csv(path, e);
    let mut header = vec!["heat_index".to_string()];
    header.extend(dataset.catalog.ids().iter().map(|id| format!("alpha_{id}")));
    if dataset.truth_c.is_some() {
        header.extend(["c1".to_string(), "c2".to_string()]);
    }
    w.write_record(&header).map_err(wrap)?;
    for (t, h) in dataset.heats.iter().enumerate() {
        let mut row = vec![h.heat_index.to_string()];
        row.extend(
            dataset.truth_alpha[t]
                .iter()
                .map(|a| fraction_to_ppm_text(*a)),
        );
        if let Some(cs) = &dataset.truth_c {
            row.extend(cs[t].iter().map(|c| format_f64(*c)));
        }
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_truth(path: &Path) -> Result<TruthTable> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let n = header.iter().filter(|h| h.starts_with("alpha_")).count();
    let with_c = header.len() == n + 3 && header[n + 1] == "c1" && header[n + 2] == "c2";
    if header.first().map(String::as_str) != Some("heat_index")
        || !(header.len() == n + 1 || with_c)
    {
        return Err(parse_errors(
            path,
            vec![LineError {
                line: 1,
                message: "expected heat_index, alpha_<id>...[, c1, c2]".into(),
            }],
        ));
    }
    let mut out = TruthTable {
        heat_index: Vec::new(),
        alpha: Vec::new(),
        c: with_c.then(Vec::new),
    };
    let mut errors = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = (|| -> std::result::Result<(), String> {
            if rec.len() != header.len() {
                return Err(format!(
                    "expected {} fields, got {}",
                    header.len(),
                    rec.len()
                ));
            }
            let idx = rec[0]
                .trim()
                .parse::<u64>()
                .map_err(|_| "bad heat_index".to_string())?;
            let alpha = (1..=n)
                .map(|i| ppm_text_to_fraction(&rec[i]))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if let Some(c) = out.c.as_mut() {
                c.push([
                    parse_shifted(&rec[n + 1], 0)?,
                    parse_shifted(&rec[n + 2], 0)?,
                ]);
            }
            out.heat_index.push(idx);
            out.alpha.push(DVector::from_vec(alpha));
            Ok(())
        })();
        if let Err(message) = parsed {
            errors.push(LineError { line, message });
        }
    }
    if !errors.is_empty() {
        return Err(parse_errors(path, errors));
    }
    Ok(out)
}

/// Rebuilds a synthetic dataset from its heats and truth files.
pub fn dataset_from_files(
    heats: HeatTable,
    truth: TruthTable,
    element: &ElementSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<SyntheticDataset> {
    if truth.heat_index.len() != heats.heats.len()
        || truth
            .heat_index
            .iter()
            .zip(&heats.heats)
            .any(|(a, h)| *a != h.heat_index)
    {
        return Err(Error::Misaligned(
            "truth heats do not match the heats file".into(),
        ));
    }
    if element.transfers_to_slag != truth.c.is_some() {
        return Err(Error::Misaligned(
            "truth file does not match the element model".into(),
        ));
    }
    let observations = heats
        .heats
        .iter()
        .map(|h| {
            if element.transfers_to_slag {
                h.steel_element_mass()
            } else {
                h.linear_observation()
            }
            .unwrap_or(f64::NAN)
        })
        .collect();
    Ok(SyntheticDataset {
        catalog: heats.catalog,
        element: element.clone(),
        heats: heats.heats,
        truth_alpha: truth.alpha,
        truth_c: truth.c,
        observations,
        seed,
        noise: noise.clone(),
    })
}

/// Noise hyperparameters on disk, with units in the key names.
///
/// `q` and `q_cov` hold plain fractions in memory and are written as exact
/// decimal ppm and ppm² under `q_ppm` and `q_cov_ppm2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseFile {
    pub gamma: f64,
    #[serde(
        rename = "q_ppm",
        serialize_with = "ser_ppm",
        deserialize_with = "de_ppm"
    )]
    pub q: Vec<f64>,
    #[serde(
        rename = "q_cov_ppm2",
        serialize_with = "ser_ppm2",
        deserialize_with = "de_ppm2"
    )]
    pub q_cov: Vec<f64>,
    pub obs_var_kg2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionFile>,
}

fn ser_shifted<S: serde::Serializer>(
    v: &[f64],
    shift: i32,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::{Error as _, SerializeSeq};
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        let raw = RawValue::from_string(format_shifted(*x, shift)).map_err(S::Error::custom)?;
        seq.serialize_element(&raw)?;
    }
    seq.end()
}

fn de_shifted<'de, D: serde::Deserializer<'de>>(
    d: D,
    shift: i32,
) -> std::result::Result<Vec<f64>, D::Error> {
    use serde::de::Error as _;
    Vec::<Box<RawValue>>::deserialize(d)?
        .iter()
        .map(|r| parse_shifted(r.get(), shift).map_err(D::Error::custom))
        .collect()
}

fn ser_ppm<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    ser_shifted(v, 6, s)
}

fn de_ppm<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    de_shifted(d, 6)
}

fn ser_ppm2<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    ser_shifted(v, 12, s)
}

fn de_ppm2<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    de_shifted(d, 12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionFile {
    pub q_c: [f64; 2],
    pub q_c_cov: [f64; 2],
}

impl NoiseFile {
    pub fn from_spec(spec: &NoiseSpec) -> Self {
        Self {
            gamma: spec.gamma,
            q: spec.mean.iter().copied().collect(),
            q_cov: spec.cov_diag.iter().copied().collect(),
            obs_var_kg2: spec.obs_var,
            partition: spec.partition.as_ref().map(|p| PartitionFile {
                q_c: [p.mean[0], p.mean[1]],
                q_c_cov: [p.cov_diag[0], p.cov_diag[1]],
            }),
        }
    }

    pub fn to_spec(&self) -> Result<NoiseSpec> {
        let spec = NoiseSpec::new(
            self.gamma,
            DVector::from_column_slice(&self.q),
            DVector::from_column_slice(&self.q_cov),
            self.obs_var_kg2,
        )?;
        match &self.partition {
            None => Ok(spec),
            Some(p) => spec.with_partition(
                DVector::from_column_slice(&p.q_c),
                DVector::from_column_slice(&p.q_c_cov),
            ),
        }
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn save_noise(path: &Path, spec: &NoiseSpec) -> Result<()> {
    save_json(path, &NoiseFile::from_spec(spec))
}

pub fn load_noise(path: &Path) -> Result<NoiseSpec> {
    load_json::<NoiseFile>(path)?.to_spec()
}

fn trace_header(t: &TraceTable) -> Vec<String> {
    let names = t.state_names();
    let mut h: Vec<String> = [
        "heat_index",
        "predicted_f_steel_ppm",
        "predicted_numerator_kg",
        "predicted_denominator_kg",
        "innovation_kg",
        "innovation_var_kg2",
        "negative_estimate",
        "reflected_points",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(names.iter().map(|n| format!("mean_{n}")));
    if t.rows.first().is_some_and(|r| r.var.is_some()) {
        h.extend(names.iter().map(|n| format!("var_{n}")));
    }
    h
}

/// Trace CSV: predictions and per-state posterior means (ppm for scrap
/// fractions) and variances (ppm²), one row per heat.
pub fn save_trace(path: &Path, table: &TraceTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let wrap = |e| Error::csv(path, e);
    w.write_record(trace_header(table)).map_err(wrap)?;
    let n = table.scrap_ids.len();
    for r in &table.rows {
        let mut row = vec![
            r.heat_index.to_string(),
            opt_text(r.predicted_f_steel, fraction_to_ppm_text),
            format_f64(r.predicted_numerator),
            format_f64(r.predicted_denominator),
            opt_text(r.innovation, format_f64),
            opt_text(r.innovation_variance, format_f64),
            (r.negative_estimate as u8).to_string(),
            r.reflected_points.to_string(),
        ];
        row.extend(r.mean.iter().enumerate().map(|(i, v)| {
            if i < n {
                fraction_to_ppm_text(*v)
            } else {
                format_f64(*v)
            }
        }));
        if let Some(var) = &r.var {
            row.extend(var.iter().enumerate().map(|(i, v)| {
                if i < n {
                    format_shifted(*v, 12)
                } else {
                    format_f64(*v)
                }
            }));
        }
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_trace(path: &Path, element: &ElementSpec) -> Result<TraceTable> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let means: Vec<&str> = header
        .iter()
        .filter_map(|h| h.strip_prefix("mean_"))
        .collect();
    let has_var = header.iter().any(|h| h.starts_with("var_"));
    let n_state = means.len();
    let scrap_ids: Vec<String> = means
        .iter()
        .filter(|m| !(element.transfers_to_slag && matches!(**m, "c1" | "c2")))
        .map(|m| m.to_string())
        .collect();
    let n = scrap_ids.len();
    let expected = 8 + n_state * if has_var { 2 } else { 1 };
    if header.len() != expected || header.first().map(String::as_str) != Some("heat_index") {
        return Err(parse_errors(
            path,
            vec![LineError {
                line: 1,
                message: format!(
                    "unexpected trace header ({} columns, expected {expected})",
                    header.len()
                ),
            }],
        ));
    }
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = (|| -> std::result::Result<TraceRow, String> {
            if rec.len() != expected {
                return Err(format!("expected {expected} fields, got {}", rec.len()));
            }
            let opt = |i: usize, shift: i32| -> std::result::Result<Option<f64>, String> {
                let s = rec[i].trim();
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_shifted(s, shift).map(Some)
                }
            };
            let nan_or = |i: usize| opt(i, 0).map(|v| v.unwrap_or(f64::NAN));
            let state = |offset: usize| -> std::result::Result<DVector<f64>, String> {
                (0..n_state)
                    .map(|i| {
                        parse_shifted(
                            &rec[offset + i],
                            if i < n {
                                if offset == 8 {
                                    6
                                } else {
                                    12
                                }
                            } else {
                                0
                            },
                        )
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map(DVector::from_vec)
            };
            Ok(TraceRow {
                heat_index: rec[0]
                    .trim()
                    .parse()
                    .map_err(|_| "bad heat_index".to_string())?,
                predicted_f_steel: opt(1, 6)?,
                predicted_numerator: nan_or(2)?,
                predicted_denominator: nan_or(3)?,
                innovation: opt(4, 0)?,
                innovation_variance: opt(5, 0)?,
                negative_estimate: &rec[6] == "1",
                reflected_points: rec[7]
                    .trim()
                    .parse()
                    .map_err(|_| "bad reflected_points".to_string())?,
                mean: state(8)?,
                var: if has_var {
                    Some(state(8 + n_state)?)
                } else {
                    None
                },
            })
        })();
        match parsed {
            Ok(r) => rows.push(r),
            Err(message) => errors.push(LineError { line, message }),
        }
    }
    if !errors.is_empty() {
        return Err(parse_errors(path, errors));
    }
    Ok(TraceTable {
        element: element.clone(),
        scrap_ids,
        rows,
    })
}

/// Provenance written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_json: &str, seed: Option<u64>, outputs: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_text_is_readable_and_exact() {
        assert_eq!(fraction_to_ppm_text(208.8e-6), "208.8");
        assert_eq!(fraction_to_ppm_text(0.25), "250000");
        assert_eq!(fraction_to_ppm_text(1.5e-9), "0.0015");
        assert_eq!(ppm_text_to_fraction("208.8").unwrap(), 208.8e-6);
        assert_eq!(ppm_text_to_fraction("2.088e2").unwrap(), 208.8e-6);
        for v in [0.1 / 3.0, 1e-300, 0.999999999, 7.000000000000001e-5] {
            assert_eq!(ppm_text_to_fraction(&fraction_to_ppm_text(v)).unwrap(), v);
        }
        assert!(ppm_text_to_fraction("12x").is_err());
        assert!(ppm_text_to_fraction("").is_err());
    }

    fn header() -> String {
        "heat_index,m_scrap_a,m_scrap_b,m_hm,f_hm,m_steel,f_steel,m_slag,f_feon_slag\n".into()
    }

    #[test]
    fn empty_file_gives_no_heats() {
        let t = parse_heats(header().as_bytes(), Path::new("h.csv")).unwrap();
        assert!(t.heats.is_empty());
        assert_eq!(t.catalog.ids(), ["a", "b"]);
    }

    #[test]
    fn row_errors_are_itemized() {
        let text = header()
            + "1,10,20,100,30,130,25.5,5,0.2\n"
            + "2,10,20,100,30,0,25.5,5,0.2\n"
            + "3,-1,20,100,30,130,,5,\n"
            + "1,1,20,100,30,130,,5,\n";
        let err = parse_heats(text.as_bytes(), Path::new("h.csv")).unwrap_err();
        let Error::Parse { errors, .. } = err else {
            panic!()
        };
        let lines: Vec<u64> = errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![3, 4, 5]);
        assert!(errors[0].message.contains("m_steel"));
    }

    #[test]
    fn bad_header_is_rejected() {
        let text = "heat_index,m_scrap_a,m_hm,f_hm,m_steel,f_steel,m_slag\n";
        assert!(parse_heats(text.as_bytes(), Path::new("h.csv")).is_err());
    }

    #[test]
    fn noise_file_round_trip() {
        let spec = NoiseSpec::new(
            0.25,
            DVector::from_vec(vec![1e-3, 2e-4]),
            DVector::from_vec(vec![5e-6, 2e-7]),
            17.6416,
        )
        .unwrap()
        .with_partition(
            DVector::from_vec(vec![9.7, 0.01]),
            DVector::from_vec(vec![0.5, 1e-4]),
        )
        .unwrap();
        let text = serde_json::to_string(&NoiseFile::from_spec(&spec)).unwrap();
        let back = serde_json::from_str::<NoiseFile>(&text)
            .unwrap()
            .to_spec()
            .unwrap();
        assert_eq!(back, spec);
    }
}
