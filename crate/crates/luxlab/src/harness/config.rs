//! Experiment configuration: a flat `key = value` file with the sections
//! `[experiment]`, `[growth]`, `[fields]`, and `[output]`, parsed into a
//! fully resolved [`ExperimentConfig`] whose echo records every effective
//! value, defaults included.

use super::TheoremId;
use crate::dyadic::{Shift, Window};
use crate::growth::GrowthFunction;
use crate::harness::report::ReportFormat;
use crate::maximal::CubeSet;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::PathBuf;

pub type Sections = BTreeMap<String, BTreeMap<String, String>>;

/// Parses INI-style text: `[section]` headers, `key = value` lines (first
/// `=` splits, so values may contain more), `#`-prefixed comment lines.
pub fn parse_ini(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse(format!("line {}: unclosed section", lineno + 1)))?
                .trim()
                .to_string();
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let section = current.as_ref().ok_or_else(|| {
            Error::Parse(format!(
                "line {}: key `{}` appears before any [section]",
                lineno + 1,
                key.trim()
            ))
        })?;
        sections
            .get_mut(section)
            .unwrap()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

const SECTIONS: [&str; 4] = ["experiment", "growth", "fields", "output"];

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub theorem: TheoremId,
    pub seed: u64,
    pub trials: usize,
    pub d: usize,
    pub n: usize,
    /// Mesh level: `2^level` cells per axis inside the unit window.
    pub level: u32,
    pub alpha: f64,
    /// Lebesgue exponent for the logarithmic-maximal experiment.
    pub p: f64,
    pub cube_set: CubeSet,
    pub window: Window,
    /// Cubes sampled per trial for indicator lower bounds.
    pub sample_cubes: usize,
    /// Threshold-grid size for weak-type sweeps.
    pub lambda_points: usize,
    /// Largest tolerated doubling constant when doubling is a hypothesis.
    pub doubling_cap: f64,
    /// Largest tolerated reverse-Hölder constant when it is a hypothesis.
    pub rh_cap: f64,
    pub phis: Vec<GrowthFunction>,
    pub psi: GrowthFunction,
    /// Replaces the product-composed aggregate when set.
    pub phi_override: Option<GrowthFunction>,
    pub sigma_descs: Vec<String>,
    pub omega_desc: String,
    pub f_descs: Vec<String>,
    pub out_dir: PathBuf,
    pub report_name: String,
    pub format: ReportFormat,
    echo: BTreeMap<String, String>,
}

fn lookup<'a>(sections: &'a Sections, section: &str, key: &str) -> Option<&'a str> {
    sections
        .get(section)
        .and_then(|s| s.get(key))
        .map(|s| s.as_str())
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::Config(format!("[{section}] {key} = {value} is not a valid number"))
    })
}

impl ExperimentConfig {
    pub fn from_ini(text: &str) -> Result<Self> {
        Self::from_sections(&parse_ini(text)?)
    }

    /// Resolves raw sections into a validated configuration. Unknown
    /// sections or keys are configuration errors.
    pub fn from_sections(sections: &Sections) -> Result<Self> {
        for name in sections.keys() {
            if !SECTIONS.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown config section [{name}]; expected one of {SECTIONS:?}"
                )));
            }
        }

        let theorem_text = lookup(sections, "experiment", "theorem")
            .ok_or_else(|| Error::Config("missing [experiment] theorem".into()))?;
        let theorem = TheoremId::parse(theorem_text)?;
        let d: usize = match lookup(sections, "experiment", "d") {
            Some(v) => parse_num("experiment", "d", v)?,
            None => 1,
        };
        let n: usize = match lookup(sections, "experiment", "n") {
            Some(v) => parse_num("experiment", "n", v)?,
            None => match theorem {
                TheoremId::SawyerLocal => 2,
                _ => 1,
            },
        };
        let level_given: Option<u32> = match lookup(sections, "experiment", "level") {
            Some(v) => Some(parse_num("experiment", "level", v)?),
            None => None,
        };
        let seed: u64 = match lookup(sections, "experiment", "seed") {
            Some(v) => parse_num("experiment", "seed", v)?,
            None => 1,
        };
        let trials: usize = match lookup(sections, "experiment", "trials") {
            Some(v) => parse_num("experiment", "trials", v)?,
            None => 20,
        };
        let alpha: f64 = match lookup(sections, "experiment", "alpha") {
            Some(v) => parse_num("experiment", "alpha", v)?,
            None => 0.0,
        };
        let p: f64 = match lookup(sections, "experiment", "p") {
            Some(v) => parse_num("experiment", "p", v)?,
            None => 2.0,
        };
        let sample_cubes: usize = match lookup(sections, "experiment", "sample-cubes") {
            Some(v) => parse_num("experiment", "sample-cubes", v)?,
            None => 8,
        };
        let lambda_points: usize = match lookup(sections, "experiment", "lambda-points") {
            Some(v) => parse_num("experiment", "lambda-points", v)?,
            None => 64,
        };
        let doubling_cap: f64 = match lookup(sections, "experiment", "doubling-cap") {
            Some(v) => parse_num("experiment", "doubling-cap", v)?,
            None => 64.0,
        };
        let rh_cap: f64 = match lookup(sections, "experiment", "rh-cap") {
            Some(v) => parse_num("experiment", "rh-cap", v)?,
            None => 8.0,
        };
        let cube_set_text = lookup(sections, "experiment", "cube-set").unwrap_or("standard");
        let cube_set = parse_cube_set(cube_set_text, d)?;
        let level = level_given.unwrap_or_else(|| default_level(theorem, &cube_set, d));

        if let Some(section) = sections.get("experiment") {
            const KNOWN: [&str; 12] = [
                "theorem",
                "seed",
                "trials",
                "d",
                "n",
                "level",
                "alpha",
                "p",
                "cube-set",
                "sample-cubes",
                "lambda-points",
                "doubling-cap",
            ];
            for key in section.keys() {
                if !KNOWN.contains(&key.as_str()) && key != "rh-cap" {
                    return Err(Error::Config(format!(
                        "unknown key `{key}` in [experiment]"
                    )));
                }
            }
        }

        let mut phis = Vec::with_capacity(n);
        for i in 1..=n {
            let key = format!("phi{i}");
            let desc = lookup(sections, "growth", &key).unwrap_or("power:p=2");
            phis.push(GrowthFunction::from_descriptor(desc)?);
        }
        let psi_desc = lookup(sections, "growth", "psi").unwrap_or("power:p=2");
        let psi = GrowthFunction::from_descriptor(psi_desc)?;
        let phi_override = match lookup(sections, "growth", "phi") {
            Some(desc) => Some(GrowthFunction::from_descriptor(desc)?),
            None => None,
        };
        if let Some(section) = sections.get("growth") {
            for key in section.keys() {
                let known = key == "psi"
                    || key == "phi"
                    || key
                        .strip_prefix("phi")
                        .and_then(|s| s.parse::<usize>().ok())
                        .map(|i| i >= 1 && i <= n)
                        .unwrap_or(false);
                if !known {
                    return Err(Error::Config(format!(
                        "unknown key `{key}` in [growth] (n = {n})"
                    )));
                }
            }
        }

        let mut sigma_descs = Vec::with_capacity(n);
        for i in 1..=n {
            let key = format!("sigma{i}");
            sigma_descs.push(
                lookup(sections, "fields", &key)
                    .unwrap_or("lognormal:rough=0.6")
                    .to_string(),
            );
        }
        let omega_desc = lookup(sections, "fields", "omega")
            .unwrap_or("lognormal:rough=0.6")
            .to_string();
        let mut f_descs = Vec::with_capacity(n);
        for i in 1..=n {
            let key = format!("f{i}");
            f_descs.push(
                lookup(sections, "fields", &key)
                    .unwrap_or("singularity:gamma=-0.3")
                    .to_string(),
            );
        }
        if let Some(section) = sections.get("fields") {
            for key in section.keys() {
                let indexed_ok = |prefix: &str| {
                    key.strip_prefix(prefix)
                        .and_then(|s| s.parse::<usize>().ok())
                        .map(|i| i >= 1 && i <= n)
                        .unwrap_or(false)
                };
                if key != "omega" && !indexed_ok("sigma") && !indexed_ok("f") {
                    return Err(Error::Config(format!(
                        "unknown key `{key}` in [fields] (n = {n})"
                    )));
                }
            }
        }

        let out_dir = match lookup(sections, "output", "dir") {
            Some(v) => PathBuf::from(v),
            None => std::env::var_os("LUXLAB_OUT_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(".")),
        };
        let format = match lookup(sections, "output", "format") {
            Some(v) => ReportFormat::parse(v)?,
            None => ReportFormat::Json,
        };
        let report_name = lookup(sections, "output", "report")
            .map(|s| s.to_string())
            .unwrap_or_else(|| {
                format!(
                    "{}.{}",
                    theorem.name().to_ascii_lowercase(),
                    format.extension()
                )
            });
        if let Some(section) = sections.get("output") {
            for key in section.keys() {
                if !["dir", "report", "format"].contains(&key.as_str()) {
                    return Err(Error::Config(format!("unknown key `{key}` in [output]")));
                }
            }
        }

        let mut cfg = Self {
            theorem,
            seed,
            trials,
            d,
            n,
            level,
            alpha,
            p,
            cube_set,
            window: Window::unit(d.max(1)),
            sample_cubes,
            lambda_points,
            doubling_cap,
            rh_cap,
            phis,
            psi,
            phi_override,
            sigma_descs,
            omega_desc,
            f_descs,
            out_dir,
            report_name,
            format,
            echo: BTreeMap::new(),
        };
        cfg.validate()?;
        cfg.echo = cfg.build_echo();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 || self.d > 3 {
            return Err(Error::Config(format!("d = {} out of range [1, 3]", self.d)));
        }
        if self.n < 1 || self.n > 4 {
            return Err(Error::Config(format!("n = {} out of range [1, 4]", self.n)));
        }
        let heavy = self.theorem.sweep_heavy();
        let aligned = self.cube_set == CubeSet::AllMeshAligned;
        if heavy && aligned {
            return Err(Error::Config(format!(
                "{} evaluates a testing integral per cube; the mesh-aligned cube \
                 family makes that quadratic in the mesh — use standard, \
                 shifted:<…>, or all-grids",
                self.theorem.name()
            )));
        }
        if aligned && self.d == 3 {
            return Err(Error::Config(
                "the mesh-aligned cube family is too large in three dimensions".into(),
            ));
        }
        // Experiments revisit the instance two levels finer, so the caps
        // leave headroom for the refined pass.
        let level_cap = match (heavy, aligned, self.d) {
            (true, _, 1) => 9,
            (true, _, 2) => 3,
            (true, _, _) => 2,
            (false, true, 1) => 8,
            (false, true, _) => 3,
            (false, false, 1) => 12,
            (false, false, 2) => 5,
            (false, false, _) => 3,
        };
        if self.level < 2 || self.level > level_cap {
            return Err(Error::Config(format!(
                "level = {} out of range [2, {}] for d = {}, {}, cube-set {}",
                self.level,
                level_cap,
                self.d,
                self.theorem.name(),
                cube_set_text(&self.cube_set)
            )));
        }
        for desc in self
            .sigma_descs
            .iter()
            .chain(std::iter::once(&self.omega_desc))
            .chain(self.f_descs.iter())
        {
            if desc.starts_with("csv:") {
                return Err(Error::Config(
                    "csv fields are pinned to one resolution, but experiments \
                     compare two mesh levels — use a generator descriptor"
                        .into(),
                ));
            }
        }
        if self.trials < 1 || self.trials > 10_000 {
            return Err(Error::Config(format!(
                "trials = {} out of range [1, 10000]",
                self.trials
            )));
        }
        let nd = (self.n * self.d) as f64;
        if !(self.alpha >= 0.0 && self.alpha < nd) {
            return Err(Error::Config(format!(
                "alpha = {} out of range [0, {nd})",
                self.alpha
            )));
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("p = {} must be positive", self.p)));
        }
        if self.sample_cubes < 1 || self.lambda_points < 2 {
            return Err(Error::Config(
                "sample-cubes must be ≥ 1 and lambda-points ≥ 2".into(),
            ));
        }
        if self.phis.len() != self.n
            || self.sigma_descs.len() != self.n
            || self.f_descs.len() != self.n
        {
            return Err(Error::Config(
                "growth and field lists must all have length n".into(),
            ));
        }
        match self.theorem {
            TheoremId::OrliczMaxBound | TheoremId::LogMaxLp => {
                if self.n != 1 {
                    return Err(Error::Config(format!(
                        "{} is a single-function experiment; set n = 1",
                        self.theorem.name()
                    )));
                }
            }
            TheoremId::SawyerLocal => {
                if self.n != 2 {
                    return Err(Error::Config(
                        "SAWYER_LOCAL is bilinear; set n = 2".into(),
                    ));
                }
                let standard = CubeSet::SingleGrid(Shift::standard(self.d));
                if self.cube_set != standard {
                    return Err(Error::Config(
                        "SAWYER_LOCAL runs on the standard dyadic grid; \
                         set cube-set = standard"
                            .into(),
                    ));
                }
            }
            TheoremId::SawyerPq => match &self.psi {
                GrowthFunction::Power { p } if *p > 1.0 => {}
                _ => {
                    return Err(Error::Config(
                        "SAWYER_PQ requires psi = power:p=<q> with q > 1".into(),
                    ));
                }
            },
            _ => {}
        }
        Ok(())
    }

    fn build_echo(&self) -> BTreeMap<String, String> {
        let mut echo = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            echo.insert(k.to_string(), v);
        };
        put("experiment.theorem", self.theorem.name().to_string());
        put("experiment.seed", self.seed.to_string());
        put("experiment.trials", self.trials.to_string());
        put("experiment.d", self.d.to_string());
        put("experiment.n", self.n.to_string());
        put("experiment.level", self.level.to_string());
        put("experiment.alpha", self.alpha.to_string());
        put("experiment.p", self.p.to_string());
        put("experiment.cube-set", cube_set_text(&self.cube_set));
        put("experiment.sample-cubes", self.sample_cubes.to_string());
        put("experiment.lambda-points", self.lambda_points.to_string());
        put("experiment.doubling-cap", self.doubling_cap.to_string());
        put("experiment.rh-cap", self.rh_cap.to_string());
        for (i, phi) in self.phis.iter().enumerate() {
            put(&format!("growth.phi{}", i + 1), phi.descriptor());
        }
        put("growth.psi", self.psi.descriptor());
        if let Some(phi) = &self.phi_override {
            put("growth.phi", phi.descriptor());
        }
        for (i, desc) in self.sigma_descs.iter().enumerate() {
            put(&format!("fields.sigma{}", i + 1), desc.clone());
        }
        put("fields.omega", self.omega_desc.clone());
        for (i, desc) in self.f_descs.iter().enumerate() {
            put(&format!("fields.f{}", i + 1), desc.clone());
        }
        put("output.dir", self.out_dir.display().to_string());
        put("output.report", self.report_name.clone());
        put("output.format", self.format.extension().to_string());
        echo
    }

    /// Every effective setting, defaults included, as `section.key` pairs.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.echo
    }

    /// Resolution used at the configured level (cells per axis `2^level`).
    pub fn resolution(&self) -> u32 {
        self.level
    }

    pub fn report_path(&self) -> PathBuf {
        self.out_dir.join(&self.report_name)
    }
}

fn default_level(theorem: TheoremId, cube_set: &CubeSet, d: usize) -> u32 {
    let heavy = theorem.sweep_heavy();
    let aligned = *cube_set == CubeSet::AllMeshAligned;
    match d {
        1 => 8,
        2 => {
            if heavy || aligned {
                3
            } else {
                5
            }
        }
        _ => {
            if heavy {
                2
            } else {
                3
            }
        }
    }
}

/// Parses a cube-set name: `standard`, `all-grids`, `mesh-aligned`, or
/// `shifted:<shift-descriptor>` in dimension `d`.
pub fn parse_cube_set(text: &str, d: usize) -> Result<CubeSet> {
    let text = text.trim();
    match text {
        "standard" => Ok(CubeSet::SingleGrid(Shift::standard(d))),
        "all-grids" => Ok(CubeSet::AllGrids),
        "mesh-aligned" => Ok(CubeSet::AllMeshAligned),
        other => {
            if let Some(desc) = other.strip_prefix("shifted:") {
                let shift = Shift::from_descriptor(desc)?;
                if shift.d() != d {
                    return Err(Error::Config(format!(
                        "cube-set shift has dimension {}, but d = {d}",
                        shift.d()
                    )));
                }
                Ok(CubeSet::SingleGrid(shift))
            } else {
                Err(Error::Config(format!(
                    "unknown cube-set `{other}`; expected standard, all-grids, \
                     mesh-aligned, or shifted:<descriptor>"
                )))
            }
        }
    }
}

fn cube_set_text(cube_set: &CubeSet) -> String {
    match cube_set {
        CubeSet::SingleGrid(shift) => {
            if (0..shift.d()).any(|j| shift.is_shifted(j)) {
                format!("shifted:{}", shift.descriptor())
            } else {
                "standard".into()
            }
        }
        CubeSet::AllGrids => "all-grids".into(),
        CubeSet::AllMeshAligned => "mesh-aligned".into(),
    }
}
