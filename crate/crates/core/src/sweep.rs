//! Job configuration, parallel sweeps, caching and run records.
//!
//! A job is a JSON document in which every dimensional value carries its unit
//! (`{"value": 100, "unit": "nm"}`). Parsing reports the JSON pointer of the
//! first offending field. The config hash covers everything except the
//! `output` block and is stable under key reordering.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cmt::{fit_fano, FitOptions, FitReport, SpectrumSample};
use crate::optics::{linspace, Medium};
use crate::optomech::{
    figure_of_merit, fom_table_csv, fp_baseline, fp_table_csv, ComplexQuantity, FomRow, FpBaseline,
    FpBaselineSpec, MechanicalSpec, Quantity, Unit,
};
use crate::rcwa::{
    AxisDef, CavitySpec, Factorization, MapKind, MapResult, PhcSlabSpec, Polarization, RcwaConfig,
    RcwaSolver, Structure,
};
use crate::resonance::{
    find_pole, locate_bic, scan_guesses, track_mode, BicFit, CavityPole, Eigenmode, ModeBranch,
    PoleOptions, ScatteringPole,
};
use crate::stack::{effective_layer, tmm_scatter, LayerStack};
use crate::units::{Scale, TAU};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Spectrum,
    Map,
    Eigen,
    Track,
    Bic,
    Fom,
    FpCompare,
    Fit,
}

/// Swept parameter of a map or branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    Freq,
    Gap,
    Period,
    HoleRadius,
    Thickness,
}

impl AxisName {
    fn unit(self) -> &'static str {
        match self {
            AxisName::Freq => "f0",
            _ => "lambda0",
        }
    }
}

/// Axis in normalized units (f₀ for frequency, λ₀ for lengths).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub name: AxisName,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl SweepAxis {
    pub fn grid(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.count)
    }

    fn def(&self) -> AxisDef {
        let name = serde_json::to_value(self.name)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        AxisDef {
            name,
            unit: self.name.unit().into(),
            grid: self.grid(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenConfig {
    /// Real-frequency window scanned for starting guesses (f₀).
    pub window: (f64, f64),
    pub samples: usize,
    /// Explicit starting frequency; otherwise the deepest scan minimum.
    pub guess: Option<f64>,
    /// Modes on each side of the Q maximum used for the quadratic-law fit.
    pub bic_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FomSet {
    pub label: String,
    pub q_m: f64,
    pub im_n: Option<f64>,
    pub reflectance: Option<f64>,
    /// Optical decay rate (Hz, cyclic).
    pub kappa_hz: f64,
    /// Frequency pull `G/2π` (Hz/m).
    pub g_hz_per_m: f64,
}

/// Mechanics shared by all rows; `q_m` may be overridden per row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicsConfig {
    pub freq_hz: f64,
    pub mass_kg: f64,
    pub temperature: f64,
    pub q_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpConfig {
    pub finesse: f64,
    pub wavelength_m: f64,
    pub lengths_m: Vec<f64>,
    pub mim_reflectivity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub cache: bool,
}

/// Parsed and unit-normalized job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    pub task: Task,
    pub scale: Scale,
    pub structure: Option<Structure>,
    pub solver: RcwaConfig,
    pub axes: Vec<SweepAxis>,
    pub quantity: MapKind,
    /// Frequency (f₀) used by maps without a `freq` axis.
    pub frequency: f64,
    pub eigen: Option<EigenConfig>,
    pub mechanics: Option<MechanicsConfig>,
    pub fom_sets: Vec<FomSet>,
    pub fp: Option<FpConfig>,
    pub output: OutputConfig,
    /// Hex SHA-256 of the canonical config without the `output` block.
    pub hash: String,
}

fn err(ptr: &str, msg: impl Into<String>) -> Error {
    Error::config(if ptr.is_empty() { "/" } else { ptr }, msg)
}

fn child(ptr: &str, key: &str) -> String {
    format!("{ptr}/{}", key.replace('~', "~0").replace('/', "~1"))
}

/// Required member of an object.
fn get<'a>(v: &'a Value, ptr: &str, key: &str) -> Result<&'a Value> {
    let obj = v
        .as_object()
        .ok_or_else(|| err(ptr, "expected an object"))?;
    obj.get(key)
        .ok_or_else(|| err(&child(ptr, key), "missing required field"))
}

/// Rejects members not in `allowed`, so a misspelt key cannot be silently ignored.
fn known(v: &Value, ptr: &str, allowed: &[&str]) -> Result<()> {
    let obj = v
        .as_object()
        .ok_or_else(|| err(ptr, "expected an object"))?;
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(err(
            &child(ptr, k),
            format!("unknown field (expected one of {})", allowed.join(", ")),
        )),
        None => Ok(()),
    }
}

fn opt<'a>(v: &'a Value, key: &str) -> Option<&'a Value> {
    v.get(key).filter(|x| !x.is_null())
}

fn number(v: &Value, ptr: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| err(ptr, "expected a finite number"))
}

fn positive(v: &Value, ptr: &str) -> Result<f64> {
    number(v, ptr).and_then(|x| {
        if x > 0.0 {
            Ok(x)
        } else {
            Err(err(ptr, "must be positive"))
        }
    })
}

fn count(v: &Value, ptr: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| err(ptr, "expected a non-negative integer"))
}

fn string<'a>(v: &'a Value, ptr: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| err(ptr, "expected a string"))
}

#[derive(Clone, Copy)]
enum Dim {
    /// Normalized to λ₀.
    Length,
    /// Normalized to f₀.
    OpticalFreq,
    /// Cyclic Hz.
    Rate,
    /// Hz per metre (cyclic).
    Pull,
    Mass,
    Temperature,
}

/// Reads `{"value": x, "unit": "..."}` and converts to the canonical unit of `dim`.
fn quantity(v: &Value, ptr: &str, dim: Dim, scale: &Scale) -> Result<f64> {
    if v.is_number() {
        return Err(err(
            ptr,
            "dimensional value needs an explicit unit: {\"value\": ..., \"unit\": ...}",
        ));
    }
    let x = number(get(v, ptr, "value")?, &child(ptr, "value"))?;
    let uptr = child(ptr, "unit");
    let unit = string(get(v, ptr, "unit")?, &uptr)?;
    let factor = match (dim, unit) {
        (Dim::Length, "lambda0") => return Ok(x),
        (Dim::Length, "m") => 1.0,
        (Dim::Length, "mm") => 1e-3,
        (Dim::Length, "um") => 1e-6,
        (Dim::Length, "nm") => 1e-9,
        (Dim::OpticalFreq, "f0") => return Ok(x),
        (Dim::OpticalFreq, "Hz") => 1.0,
        (Dim::OpticalFreq, "GHz") => 1e9,
        (Dim::OpticalFreq, "THz") => 1e12,
        (Dim::Rate, "Hz") => 1.0,
        (Dim::Rate, "kHz") => 1e3,
        (Dim::Rate, "MHz") => 1e6,
        (Dim::Rate, "GHz") => 1e9,
        (Dim::Rate, "rad/s") => 1.0 / TAU,
        (Dim::Pull, "Hz/m") => 1.0,
        (Dim::Pull, "MHz/nm") => 1e15,
        (Dim::Pull, "GHz/nm") => 1e18,
        (Dim::Pull, "rad/s/m") => 1.0 / TAU,
        (Dim::Mass, "kg") => 1.0,
        (Dim::Mass, "g") => 1e-3,
        (Dim::Mass, "ug") => 1e-9,
        (Dim::Mass, "ng") => 1e-12,
        (Dim::Mass, "pg") => 1e-15,
        (Dim::Temperature, "K") => 1.0,
        (Dim::Temperature, "mK") => 1e-3,
        _ => return Err(err(&uptr, format!("unit {unit:?} does not fit this field"))),
    };
    Ok(match dim {
        Dim::Length => x * factor / scale.lambda0,
        Dim::OpticalFreq => x * factor / scale.f0(),
        _ => x * factor,
    })
}

fn parse_slab(v: &Value, ptr: &str, scale: &Scale) -> Result<PhcSlabSpec> {
    let n_re = opt(v, "n")
        .map(|x| number(x, &child(ptr, "n")))
        .transpose()?
        .unwrap_or(3.374);
    let n_im = opt(v, "n_im")
        .map(|x| number(x, &child(ptr, "n_im")))
        .transpose()?
        .unwrap_or(0.0);
    let slab = PhcSlabSpec {
        thickness: quantity(
            get(v, ptr, "thickness")?,
            &child(ptr, "thickness"),
            Dim::Length,
            scale,
        )?,
        period: quantity(
            get(v, ptr, "period")?,
            &child(ptr, "period"),
            Dim::Length,
            scale,
        )?,
        hole_radius: quantity(
            get(v, ptr, "hole_radius")?,
            &child(ptr, "hole_radius"),
            Dim::Length,
            scale,
        )?,
        slab: Medium { n_re, n_im },
        hole: Medium::VACUUM,
    };
    slab.validate().map_err(|e| err(ptr, e.to_string()))?;
    Ok(slab)
}

fn parse_structure(v: &Value, ptr: &str, scale: &Scale) -> Result<Structure> {
    known(
        v,
        ptr,
        &[
            "kind",
            "period",
            "hole_radius",
            "thickness",
            "gap",
            "n",
            "n_im",
        ],
    )?;
    let kind = string(get(v, ptr, "kind")?, &child(ptr, "kind"))?;
    let slab = parse_slab(v, ptr, scale)?;
    match kind {
        "slab" => Ok(Structure::Slab(slab)),
        "cavity" => {
            let gap = quantity(get(v, ptr, "gap")?, &child(ptr, "gap"), Dim::Length, scale)?;
            let c = CavitySpec::symmetric(slab, gap);
            c.validate()
                .map_err(|e| err(&child(ptr, "gap"), e.to_string()))?;
            Ok(Structure::Cavity(c))
        }
        other => Err(err(
            &child(ptr, "kind"),
            format!("unknown structure kind {other:?} (slab | cavity)"),
        )),
    }
}

fn parse_solver(v: Option<&Value>, ptr: &str) -> Result<RcwaConfig> {
    let mut cfg = RcwaConfig::with_order(5);
    let Some(v) = v else { return Ok(cfg) };
    known(
        v,
        ptr,
        &[
            "half_order",
            "polarization",
            "factorization",
            "bloch_k",
            "use_symmetry",
        ],
    )?;
    if let Some(m) = opt(v, "half_order") {
        cfg.half_order = count(m, &child(ptr, "half_order"))?;
    }
    if let Some(p) = opt(v, "polarization") {
        let pp = child(ptr, "polarization");
        cfg.polarization = match string(p, &pp)? {
            "x" => Polarization::X,
            "y" => Polarization::Y,
            o => return Err(err(&pp, format!("unknown polarization {o:?} (x | y)"))),
        };
    }
    if let Some(f) = opt(v, "factorization") {
        let fp = child(ptr, "factorization");
        cfg.factorization = match string(f, &fp)? {
            "laurent" => Factorization::Laurent,
            "inverse-rule" => Factorization::InverseRule,
            o => return Err(err(&fp, format!("unknown factorization {o:?}"))),
        };
    }
    if let Some(k) = opt(v, "bloch_k") {
        let kp = child(ptr, "bloch_k");
        let arr = k
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| err(&kp, "expected [kx, ky] in units of 2π/period"))?;
        cfg.bloch_k = [
            number(&arr[0], &format!("{kp}/0"))?,
            number(&arr[1], &format!("{kp}/1"))?,
        ];
    }
    if let Some(s) = opt(v, "use_symmetry") {
        cfg.use_symmetry = s
            .as_bool()
            .ok_or_else(|| err(&child(ptr, "use_symmetry"), "expected a boolean"))?;
    }
    cfg.validate().map_err(|e| err(ptr, e.to_string()))?;
    Ok(cfg)
}

fn parse_axis(v: &Value, ptr: &str, scale: &Scale) -> Result<SweepAxis> {
    known(v, ptr, &["name", "min", "max", "count"])?;
    let np = child(ptr, "name");
    let name: AxisName = serde_json::from_value(get(v, ptr, "name")?.clone()).map_err(|_| {
        err(
            &np,
            "axis name must be one of freq, gap, period, hole_radius, thickness",
        )
    })?;
    let dim = if name == AxisName::Freq {
        Dim::OpticalFreq
    } else {
        Dim::Length
    };
    let axis = SweepAxis {
        name,
        min: quantity(get(v, ptr, "min")?, &child(ptr, "min"), dim, scale)?,
        max: quantity(get(v, ptr, "max")?, &child(ptr, "max"), dim, scale)?,
        count: count(get(v, ptr, "count")?, &child(ptr, "count"))?,
    };
    if axis.count < 2 {
        return Err(err(
            &child(ptr, "count"),
            "sweep axes need at least 2 points",
        ));
    }
    if !(axis.max > axis.min) {
        return Err(err(&child(ptr, "max"), "axis max must exceed min"));
    }
    Ok(axis)
}

fn parse_mechanics(v: &Value, ptr: &str, scale: &Scale) -> Result<MechanicsConfig> {
    known(v, ptr, &["frequency", "mass", "temperature", "q_m"])?;
    let m = MechanicsConfig {
        freq_hz: quantity(
            get(v, ptr, "frequency")?,
            &child(ptr, "frequency"),
            Dim::Rate,
            scale,
        )?,
        mass_kg: quantity(get(v, ptr, "mass")?, &child(ptr, "mass"), Dim::Mass, scale)?,
        temperature: quantity(
            get(v, ptr, "temperature")?,
            &child(ptr, "temperature"),
            Dim::Temperature,
            scale,
        )?,
        q_m: opt(v, "q_m")
            .map(|x| positive(x, &child(ptr, "q_m")))
            .transpose()?,
    };
    for (k, x) in [
        ("frequency", m.freq_hz),
        ("mass", m.mass_kg),
        ("temperature", m.temperature),
    ] {
        if !(x > 0.0) {
            return Err(err(&child(ptr, k), "must be positive"));
        }
    }
    Ok(m)
}

/// Canonical form used for hashing: sorted keys, no `output` block.
fn canonical(v: &Value) -> String {
    let mut c = v.clone();
    if let Some(o) = c.as_object_mut() {
        o.remove("output");
    }
    // serde_json's default map is ordered by key, so this is already canonical.
    serde_json::to_string(&c).unwrap_or_default()
}

impl JobConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value =
            serde_json::from_str(s).map_err(|e| err("", format!("invalid JSON: {e}")))?;
        Self::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        known(
            v,
            "",
            &[
                "task",
                "lambda0",
                "frequency",
                "structure",
                "solver",
                "axes",
                "quantity",
                "eigen",
                "mechanics",
                "sets",
                "fabry_perot",
                "output",
            ],
        )?;
        let tp = "/task";
        let task: Task = serde_json::from_value(get(v, "", "task")?.clone()).map_err(|_| {
            err(
                tp,
                "task must be one of spectrum, map, eigen, track, bic, fom, fp-compare, fit",
            )
        })?;
        let scale = match opt(v, "lambda0") {
            Some(l) => {
                let si = quantity(l, "/lambda0", Dim::Length, &Scale::new(1.0))?;
                if !(si > 0.0) {
                    return Err(err("/lambda0", "must be positive"));
                }
                Scale::new(si)
            }
            None => Scale::default(),
        };
        let needs_structure = !matches!(task, Task::Fom | Task::FpCompare);
        let structure = match opt(v, "structure") {
            Some(s) => Some(parse_structure(s, "/structure", &scale)?),
            None if needs_structure => return Err(err("/structure", "missing required field")),
            None => None,
        };
        let solver = parse_solver(opt(v, "solver"), "/solver")?;
        let axes = match opt(v, "axes") {
            Some(a) => a
                .as_array()
                .ok_or_else(|| err("/axes", "expected an array"))?
                .iter()
                .enumerate()
                .map(|(i, x)| parse_axis(x, &format!("/axes/{i}"), &scale))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let quantity_kind = match opt(v, "quantity") {
            Some(q) => serde_json::from_value(q.clone())
                .map_err(|_| err("/quantity", "expected reflectance | transmittance"))?,
            None => MapKind::Transmittance,
        };
        let frequency = opt(v, "frequency")
            .map(|f| quantity(f, "/frequency", Dim::OpticalFreq, &scale))
            .transpose()?
            .unwrap_or(1.0);
        let eigen = opt(v, "eigen")
            .map(|e| -> Result<EigenConfig> {
                known(e, "/eigen", &["window", "samples", "guess", "bic_window"])?;
                let wp = "/eigen/window";
                let w = get(e, "/eigen", "window")?
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .ok_or_else(|| err(wp, "expected [min, max]"))?;
                Ok(EigenConfig {
                    window: (
                        quantity(&w[0], &format!("{wp}/0"), Dim::OpticalFreq, &scale)?,
                        quantity(&w[1], &format!("{wp}/1"), Dim::OpticalFreq, &scale)?,
                    ),
                    samples: opt(e, "samples")
                        .map(|x| count(x, "/eigen/samples"))
                        .transpose()?
                        .unwrap_or(81),
                    guess: opt(e, "guess")
                        .map(|x| quantity(x, "/eigen/guess", Dim::OpticalFreq, &scale))
                        .transpose()?,
                    bic_window: opt(e, "bic_window")
                        .map(|x| count(x, "/eigen/bic_window"))
                        .transpose()?,
                })
            })
            .transpose()?;
        let mechanics = opt(v, "mechanics")
            .map(|m| parse_mechanics(m, "/mechanics", &scale))
            .transpose()?;
        let fom_sets = match opt(v, "sets") {
            Some(s) => s
                .as_array()
                .ok_or_else(|| err("/sets", "expected an array"))?
                .iter()
                .enumerate()
                .map(|(i, x)| -> Result<FomSet> {
                    let p = format!("/sets/{i}");
                    known(
                        x,
                        &p,
                        &["label", "q_m", "im_n", "reflectance", "kappa", "g"],
                    )?;
                    Ok(FomSet {
                        label: opt(x, "label")
                            .and_then(|l| l.as_str())
                            .map(String::from)
                            .unwrap_or_else(|| format!("{}", i + 1)),
                        q_m: positive(get(x, &p, "q_m")?, &child(&p, "q_m"))?,
                        im_n: opt(x, "im_n")
                            .map(|y| number(y, &child(&p, "im_n")))
                            .transpose()?,
                        reflectance: opt(x, "reflectance")
                            .map(|y| number(y, &child(&p, "reflectance")))
                            .transpose()?,
                        kappa_hz: quantity(
                            get(x, &p, "kappa")?,
                            &child(&p, "kappa"),
                            Dim::Rate,
                            &scale,
                        )
                        .and_then(|k| {
                            if k > 0.0 {
                                Ok(k)
                            } else {
                                Err(err(&child(&p, "kappa"), "must be positive"))
                            }
                        })?,
                        g_hz_per_m: quantity(get(x, &p, "g")?, &child(&p, "g"), Dim::Pull, &scale)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let fp = opt(v, "fabry_perot")
            .map(|f| -> Result<FpConfig> {
                let p = "/fabry_perot";
                known(
                    f,
                    p,
                    &["finesse", "wavelength", "lengths", "mim_reflectivity"],
                )?;
                let lengths = get(f, p, "lengths")?
                    .as_array()
                    .ok_or_else(|| err("/fabry_perot/lengths", "expected an array"))?;
                Ok(FpConfig {
                    finesse: positive(get(f, p, "finesse")?, "/fabry_perot/finesse")?,
                    wavelength_m: quantity(
                        get(f, p, "wavelength")?,
                        "/fabry_perot/wavelength",
                        Dim::Length,
                        &scale,
                    )? * scale.lambda0,
                    lengths_m: lengths
                        .iter()
                        .enumerate()
                        .map(|(i, l)| {
                            Ok(quantity(
                                l,
                                &format!("/fabry_perot/lengths/{i}"),
                                Dim::Length,
                                &scale,
                            )? * scale.lambda0)
                        })
                        .collect::<Result<Vec<_>>>()?,
                    mim_reflectivity: opt(f, "mim_reflectivity")
                        .map(|r| number(r, "/fabry_perot/mim_reflectivity"))
                        .transpose()?,
                })
            })
            .transpose()?;
        let output = match opt(v, "output") {
            Some(o) => {
                known(o, "/output", &["dir", "cache"])?;
                OutputConfig {
                    dir: opt(o, "dir")
                        .map(|d| string(d, "/output/dir").map(PathBuf::from))
                        .transpose()?,
                    cache: opt(o, "cache")
                        .map(|c| {
                            c.as_bool()
                                .ok_or_else(|| err("/output/cache", "expected a boolean"))
                        })
                        .transpose()?
                        .unwrap_or(true),
                }
            }
            None => OutputConfig {
                dir: None,
                cache: true,
            },
        };

        let cfg = JobConfig {
            task,
            scale,
            structure,
            solver,
            axes,
            quantity: quantity_kind,
            frequency,
            eigen,
            mechanics,
            fom_sets,
            fp,
            output,
            hash: hex::encode(Sha256::digest(canonical(v).as_bytes())),
        };
        cfg.check_task()?;
        Ok(cfg)
    }

    /// Cross-field requirements of each task.
    fn check_task(&self) -> Result<()> {
        let axis0 = |want: AxisName| -> Result<()> {
            match self.axes.first() {
                Some(a) if a.name == want => Ok(()),
                _ => Err(err(
                    "/axes/0/name",
                    format!("this task needs a first axis named {:?}", want).to_lowercase(),
                )),
            }
        };
        let cavity = || -> Result<()> {
            match self.structure {
                Some(Structure::Cavity(_)) => Ok(()),
                _ => Err(err("/structure/kind", "this task needs a cavity")),
            }
        };
        match self.task {
            Task::Spectrum | Task::Fit => axis0(AxisName::Freq)?,
            Task::Map => {
                if self.axes.len() != 2 {
                    return Err(err("/axes", "a map needs exactly two axes"));
                }
                if self.axes[0].name == self.axes[1].name {
                    return Err(err("/axes/1/name", "map axes must differ"));
                }
                if self.axes.iter().any(|a| a.name == AxisName::Gap) {
                    cavity()?;
                }
                if !matches!(self.quantity, MapKind::Reflectance | MapKind::Transmittance) {
                    return Err(err(
                        "/quantity",
                        "maps support reflectance or transmittance",
                    ));
                }
            }
            Task::Eigen => {
                if self.eigen.is_none() {
                    return Err(err("/eigen", "missing required field"));
                }
            }
            Task::Track | Task::Bic => {
                cavity()?;
                axis0(AxisName::Gap)?;
                if self.eigen.is_none() {
                    return Err(err("/eigen", "missing required field"));
                }
            }
            Task::Fom => {
                if self.mechanics.is_none() {
                    return Err(err("/mechanics", "missing required field"));
                }
                if self.fom_sets.is_empty() {
                    return Err(err("/sets", "need at least one parameter set"));
                }
            }
            Task::FpCompare => {
                if self.mechanics.and_then(|m| m.q_m).is_none() {
                    return Err(err("/mechanics/q_m", "missing required field"));
                }
                if self.fp.is_none() {
                    return Err(err("/fabry_perot", "missing required field"));
                }
            }
        }
        Ok(())
    }
}

/// Applies `key.path=value` overrides to a raw config; the value is parsed as
/// JSON when possible and taken as a string otherwise.
pub fn apply_override(v: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| err("", format!("override {assignment:?} is not key=value")))?;
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = v;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, k) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(k.to_string(), new);
                    return Ok(());
                }
                map.entry(k.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(arr) => {
                let idx: usize = k.parse().map_err(|_| {
                    err(
                        &format!("/{}", keys[..=i].join("/")),
                        "expected an array index",
                    )
                })?;
                let slot = arr.get_mut(idx).ok_or_else(|| {
                    err(&format!("/{}", keys[..=i].join("/")), "index out of range")
                })?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(err(
                    &format!("/{}", keys[..i].join("/")),
                    "cannot descend into a scalar",
                ))
            }
        };
    }
    Ok(())
}

/// Execution options that do not affect results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    /// Recorded for provenance; all fits here are deterministic multi-starts.
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointStatus {
    pub index: usize,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub tool_version: String,
    pub task: Task,
    pub started: String,
    pub finished: String,
    pub solver_calls: usize,
    pub cache_hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub points: Vec<PointStatus>,
    /// File name to hex SHA-256 of its content.
    pub outputs: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn failed_points(&self) -> usize {
        self.points.iter().filter(|p| !p.ok).count()
    }
}

/// Single-slab or cavity spectrum sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub freq: f64,
    pub reflectance: f64,
    pub transmittance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub report: FitReport,
    pub r_d: [f64; 2],
    pub t_d: [f64; 2],
}

/// Result of one job, also the unit stored in the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum TaskOutput {
    Spectrum {
        points: Vec<SpectrumPoint>,
    },
    Map {
        map: MapResult,
    },
    Eigen {
        modes: ModeBranch,
    },
    Track {
        branch: ModeBranch,
    },
    Bic {
        branch: ModeBranch,
        bic: Option<BicFit>,
    },
    Fom {
        rows: Vec<FomRow>,
    },
    FpCompare {
        rows: Vec<FpBaseline>,
    },
    Fit {
        spectrum: Vec<SpectrumPoint>,
        fit: FitOutput,
    },
}

impl TaskOutput {
    /// Files written for this output, in a fixed order.
    pub fn files(&self) -> Result<Vec<(&'static str, String)>> {
        let json = |v: &dyn erased::Json| v.to_json();
        Ok(match self {
            TaskOutput::Spectrum { points } => vec![("spectrum.csv", spectrum_csv(points))],
            TaskOutput::Map { map } => {
                vec![("map.csv", map.to_csv()), ("map.json", map.to_json()?)]
            }
            TaskOutput::Eigen { modes } => vec![("branch.csv", modes.to_csv())],
            TaskOutput::Track { branch } => vec![
                ("branch.csv", branch.to_csv()),
                ("branch.json", json(branch)?),
            ],
            TaskOutput::Bic { branch, bic } => {
                vec![("branch.csv", branch.to_csv()), ("bic.json", json(bic)?)]
            }
            TaskOutput::Fom { rows } => {
                vec![("fom.csv", fom_table_csv(rows)), ("fom.json", json(rows)?)]
            }
            TaskOutput::FpCompare { rows } => vec![
                ("fp_table.csv", fp_table_csv(rows)),
                ("fom.json", json(rows)?),
            ],
            TaskOutput::Fit { spectrum, fit } => vec![
                ("spectrum.csv", spectrum_csv(spectrum)),
                ("fit.json", json(fit)?),
            ],
        })
    }
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> crate::Result<String>;
    }
    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> crate::Result<String> {
            Ok(serde_json::to_string_pretty(self)?)
        }
    }
}

fn spectrum_csv(points: &[SpectrumPoint]) -> String {
    let mut out = String::from("freq[f0],reflectance,transmittance\n");
    for p in points {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e}\n",
            p.freq, p.reflectance, p.transmittance
        ));
    }
    out
}

fn now() -> String {
    let d = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default();
    format!("{}.{:03}", d.as_secs(), d.subsec_millis())
}

fn with_param(s: &Structure, name: AxisName, x: f64) -> Structure {
    let set = |slab: &mut PhcSlabSpec| match name {
        AxisName::Period => slab.period = x,
        AxisName::HoleRadius => slab.hole_radius = x,
        AxisName::Thickness => slab.thickness = x,
        AxisName::Freq | AxisName::Gap => {}
    };
    match *s {
        Structure::Slab(mut slab) => {
            set(&mut slab);
            Structure::Slab(slab)
        }
        Structure::Cavity(mut c) => {
            set(&mut c.slab1);
            set(&mut c.slab2);
            if name == AxisName::Gap {
                c.gap = x;
            }
            Structure::Cavity(c)
        }
    }
}

struct Runner<'a> {
    cfg: &'a JobConfig,
    solver: RcwaSolver,
    calls: AtomicUsize,
}

impl Runner<'_> {
    fn structure(&self) -> Result<Structure> {
        self.cfg
            .structure
            .ok_or_else(|| err("/structure", "missing required field"))
    }

    fn scatter(&self, s: &Structure, f: f64) -> Result<SpectrumPoint> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        s.validate()?;
        let a = self
            .solver
            .scatter(s, Complex64::new(f, 0.0), false)?
            .amplitudes;
        Ok(SpectrumPoint {
            freq: f,
            reflectance: a.reflectance,
            transmittance: a.transmittance,
        })
    }

    fn spectrum(&self, points: &mut Vec<PointStatus>) -> Result<Vec<SpectrumPoint>> {
        let s = self.structure()?;
        let grid = self.cfg.axes[0].grid();
        let res: Vec<Result<SpectrumPoint>> =
            grid.par_iter().map(|&f| self.scatter(&s, f)).collect();
        Ok(res
            .into_iter()
            .zip(&grid)
            .enumerate()
            .map(|(i, (r, &f))| {
                let (p, st) = match r {
                    Ok(p) => (
                        p,
                        PointStatus {
                            index: i,
                            ok: true,
                            message: None,
                        },
                    ),
                    Err(e) => (
                        SpectrumPoint {
                            freq: f,
                            reflectance: f64::NAN,
                            transmittance: f64::NAN,
                        },
                        PointStatus {
                            index: i,
                            ok: false,
                            message: Some(e.to_string()),
                        },
                    ),
                };
                points.push(st);
                p
            })
            .collect())
    }

    fn map(&self, points: &mut Vec<PointStatus>) -> Result<MapResult> {
        let s = self.structure()?;
        let (a1, a2) = (self.cfg.axes[0], self.cfg.axes[1]);
        let (g1, g2) = (a1.grid(), a2.grid());
        let started = now();
        let cells: Vec<(usize, usize)> = (0..g1.len())
            .flat_map(|i| (0..g2.len()).map(move |j| (i, j)))
            .collect();
        let res: Vec<Result<f64>> = cells
            .par_iter()
            .map(|&(i, j)| {
                let mut st = s;
                let mut f = None;
                for (ax, x) in [(a1, g1[i]), (a2, g2[j])] {
                    if ax.name == AxisName::Freq {
                        f = Some(x);
                    } else {
                        st = with_param(&st, ax.name, x);
                    }
                }
                let f = f.unwrap_or(self.cfg.frequency);
                let p = self.scatter(&st, f)?;
                Ok(match self.cfg.quantity {
                    MapKind::Reflectance => p.reflectance,
                    _ => p.transmittance,
                })
            })
            .collect();
        let mut values = vec![vec![f64::NAN; g2.len()]; g1.len()];
        for (k, (r, &(i, j))) in res.into_iter().zip(&cells).enumerate() {
            match r {
                Ok(v) => {
                    values[i][j] = v;
                    points.push(PointStatus {
                        index: k,
                        ok: true,
                        message: None,
                    });
                }
                Err(e) => points.push(PointStatus {
                    index: k,
                    ok: false,
                    message: Some(e.to_string()),
                }),
            }
        }
        Ok(MapResult {
            kind: self.cfg.quantity,
            axis1: a1.def(),
            axis2: a2.def(),
            values,
            config_hash: self.cfg.hash.clone(),
            started,
            finished: now(),
        })
    }

    fn pole_at(&self, s: &Structure, guess: f64, q: f64) -> Result<Eigenmode> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let g = Complex64::new(guess, 0.0);
        match s {
            Structure::Cavity(c) => find_pole(
                &CavityPole {
                    solver: self.solver,
                    cavity: *c,
                },
                g,
                q,
                &PoleOptions::default(),
            ),
            Structure::Slab(_) => find_pole(
                &ScatteringPole {
                    solver: self.solver,
                    structure: *s,
                },
                g,
                q,
                &PoleOptions::default(),
            ),
        }
    }

    fn guesses(&self, s: &Structure, e: &EigenConfig) -> Result<Vec<f64>> {
        if let Some(g) = e.guess {
            return Ok(vec![g]);
        }
        self.calls.fetch_add(e.samples, Ordering::Relaxed);
        match s {
            Structure::Cavity(c) => scan_guesses(
                &CavityPole {
                    solver: self.solver,
                    cavity: *c,
                },
                e.window.0,
                e.window.1,
                e.samples,
            ),
            Structure::Slab(_) => scan_guesses(
                &ScatteringPole {
                    solver: self.solver,
                    structure: *s,
                },
                e.window.0,
                e.window.1,
                e.samples,
            ),
        }
    }

    fn eigen(&self, points: &mut Vec<PointStatus>) -> Result<ModeBranch> {
        let s = self.structure()?;
        let e = self.cfg.eigen.expect("checked");
        let q = match s {
            Structure::Cavity(c) => c.gap,
            Structure::Slab(_) => 0.0,
        };
        let mut modes: Vec<Eigenmode> = Vec::new();
        for (i, g) in self.guesses(&s, &e)?.into_iter().enumerate() {
            match self.pole_at(&s, g, q) {
                Ok(m) if m.f_c.re >= e.window.0 && m.f_c.re <= e.window.1 => {
                    if !modes.iter().any(|x| (x.f_c - m.f_c).norm() < 1e-7) {
                        modes.push(m);
                    }
                    points.push(PointStatus {
                        index: i,
                        ok: true,
                        message: None,
                    });
                }
                Ok(m) => points.push(PointStatus {
                    index: i,
                    ok: false,
                    message: Some(format!("converged outside the window at {:.6}", m.f_c.re)),
                }),
                Err(err) => points.push(PointStatus {
                    index: i,
                    ok: false,
                    message: Some(err.to_string()),
                }),
            }
        }
        modes.sort_by(|a, b| a.f_c.re.total_cmp(&b.f_c.re));
        Ok(ModeBranch {
            modes,
            truncated: None,
        })
    }

    fn track(&self, points: &mut Vec<PointStatus>) -> Result<ModeBranch> {
        let Structure::Cavity(cav) = self.structure()? else {
            unreachable!("checked")
        };
        let e = self.cfg.eigen.expect("checked");
        let qs = self.cfg.axes[0].grid();
        let start = cav.with_gap(qs[0]);
        let guess = self.guesses(&Structure::Cavity(start), &e)?;
        let g0 = *guess
            .first()
            .ok_or_else(|| Error::PoleSearch("no starting guess in the window".into()))?;
        let seed = self.pole_at(&Structure::Cavity(start), g0, qs[0])?;
        let branch = track_mode(
            |q| {
                self.calls.fetch_add(1, Ordering::Relaxed);
                Ok(CavityPole {
                    solver: self.solver,
                    cavity: cav.with_gap(q),
                })
            },
            &qs,
            seed,
            &PoleOptions::default(),
        );
        for (i, q) in qs.iter().enumerate() {
            let ok = branch.modes.iter().any(|m| (m.q - q).abs() < 1e-12);
            points.push(PointStatus {
                index: i,
                ok,
                message: (!ok).then(|| branch.truncated.clone().unwrap_or_default()),
            });
        }
        Ok(branch)
    }
}

/// Runs a job, writing its outputs and `runrecord.json` to the output
/// directory (when one is configured) and returning the record and data.
pub fn run_sweep(cfg: &JobConfig, opts: &RunOptions) -> Result<(RunRecord, TaskOutput)> {
    let dir = opts.out_dir.clone().or_else(|| cfg.output.dir.clone());
    // Fail on an unwritable destination before any solve.
    if let Some(d) = &dir {
        fs::create_dir_all(d)?;
        let probe = d.join(".write-test");
        fs::write(&probe, b"")?;
        fs::remove_file(&probe)?;
    }
    let started = now();
    let cache_path = dir
        .as_ref()
        .filter(|_| cfg.output.cache)
        .map(|d| d.join(".cache").join(format!("{}.json", cfg.hash)));

    let cached: Option<(TaskOutput, Vec<PointStatus>)> = cache_path
        .as_ref()
        .filter(|p| p.exists())
        .and_then(|p| fs::read_to_string(p).ok())
        .and_then(|s| serde_json::from_str(&s).ok());
    let cache_hit = cached.is_some();

    let (output, points, calls) = match cached {
        Some((o, p)) => (o, p, 0),
        None => {
            let runner = Runner {
                cfg,
                solver: RcwaSolver::new(cfg.solver)?,
                calls: AtomicUsize::new(0),
            };
            let mut points = Vec::new();
            let mut run = || execute(&runner, &mut points);
            let output = match opts.threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
                    .install(run)?,
                None => run()?,
            };
            (output, points, runner.calls.load(Ordering::Relaxed))
        }
    };

    let mut outputs = BTreeMap::new();
    if let Some(d) = &dir {
        for (name, content) in output.files()? {
            fs::write(d.join(name), &content)?;
            outputs.insert(
                name.to_string(),
                hex::encode(Sha256::digest(content.as_bytes())),
            );
        }
        if let (Some(p), false) = (&cache_path, cache_hit) {
            fs::create_dir_all(p.parent().expect("cache file has a parent"))?;
            fs::write(p, serde_json::to_string(&(&output, &points))?)?;
        }
    }
    let record = RunRecord {
        config_hash: cfg.hash.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        task: cfg.task,
        started,
        finished: now(),
        solver_calls: calls,
        cache_hit,
        seed: opts.seed,
        points,
        outputs,
    };
    if let Some(d) = &dir {
        fs::write(
            d.join("runrecord.json"),
            serde_json::to_string_pretty(&record)?,
        )?;
    }
    Ok((record, output))
}

fn execute(r: &Runner<'_>, points: &mut Vec<PointStatus>) -> Result<TaskOutput> {
    let cfg = r.cfg;
    Ok(match cfg.task {
        Task::Spectrum => TaskOutput::Spectrum {
            points: r.spectrum(points)?,
        },
        Task::Map => TaskOutput::Map {
            map: r.map(points)?,
        },
        Task::Eigen => TaskOutput::Eigen {
            modes: r.eigen(points)?,
        },
        Task::Track => TaskOutput::Track {
            branch: r.track(points)?,
        },
        Task::Bic => {
            let branch = r.track(points)?;
            let bic = locate_bic(&branch, cfg.eigen.and_then(|e| e.bic_window), None, 1e-9).ok();
            TaskOutput::Bic { branch, bic }
        }
        Task::Fom => {
            let m = cfg.mechanics.expect("checked");
            let rows = cfg
                .fom_sets
                .iter()
                .map(|s| -> Result<FomRow> {
                    let mech = MechanicalSpec::from_hz(m.freq_hz, m.mass_kg, s.q_m, m.temperature)?;
                    let figure = figure_of_merit(
                        ComplexQuantity::new(Complex64::new(s.g_hz_per_m, 0.0), Unit::HzPerM),
                        None,
                        Quantity::new(s.kappa_hz, Unit::Hz),
                        &mech,
                    )?;
                    Ok(FomRow {
                        label: s.label.clone(),
                        q_m: s.q_m,
                        im_n: s.im_n,
                        reflectance: s.reflectance,
                        figure,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            TaskOutput::Fom { rows }
        }
        Task::FpCompare => {
            let m = cfg.mechanics.expect("checked");
            let fp = cfg.fp.as_ref().expect("checked");
            let mech = MechanicalSpec::from_hz(
                m.freq_hz,
                m.mass_kg,
                m.q_m.expect("checked"),
                m.temperature,
            )?;
            let rows = fp
                .lengths_m
                .iter()
                .map(|&length| {
                    fp_baseline(&FpBaselineSpec {
                        length,
                        finesse: fp.finesse,
                        wavelength: fp.wavelength_m,
                        mech,
                        mim_reflectivity: fp.mim_reflectivity,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            TaskOutput::FpCompare { rows }
        }
        Task::Fit => {
            let spectrum = r.spectrum(points)?;
            let Structure::Slab(slab) = r.structure()? else {
                return Err(err("/structure/kind", "fit needs a single slab"));
            };
            let axis = cfg.axes[0];
            let centre = 0.5 * (axis.min + axis.max);
            let bg = tmm_scatter(&LayerStack::new(vec![effective_layer(&slab)?]), centre)?;
            let samples: Vec<SpectrumSample> = spectrum
                .iter()
                .filter(|p| p.reflectance.is_finite())
                .map(|p| SpectrumSample {
                    omega: p.freq,
                    reflectance: p.reflectance,
                    transmittance: p.transmittance,
                })
                .collect();
            let report = fit_fano(&samples, bg.r, bg.t, &FitOptions::default())?;
            TaskOutput::Fit {
                spectrum,
                fit: FitOutput {
                    report,
                    r_d: [bg.r.re, bg.r.im],
                    t_d: [bg.t.re, bg.t.im],
                },
            }
        }
    })
}

/// Reads a config file, applies overrides and parses it.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<JobConfig> {
    let text = fs::read_to_string(path)?;
    let mut v: Value =
        serde_json::from_str(&text).map_err(|e| err("", format!("invalid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut v, o)?;
    }
    JobConfig::from_value(&v)
}
