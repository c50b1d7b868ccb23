//! Flat `key = value` experiment configuration with dotted sections.
//!
//! Lines are `key = value`; `#` starts a comment. Lists are comma separated.
//! Unknown or repeated keys are errors, every key has a default, and
//! [`ExperimentConfig::to_text`] writes a form that parses back to the same
//! value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fluctuation::Potential;
use crate::homogenization::InitialCondition;
use crate::random_field::{FrequencySampling, ShapeFunction, SpectrumModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    FieldSample,
    Sigma2,
    Corrector,
    Simulate,
    Rates,
    DistTest,
    SpdeVar,
    Validate,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::FieldSample,
        ExperimentKind::Sigma2,
        ExperimentKind::Corrector,
        ExperimentKind::Simulate,
        ExperimentKind::Rates,
        ExperimentKind::DistTest,
        ExperimentKind::SpdeVar,
        ExperimentKind::Validate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::FieldSample => "field-sample",
            ExperimentKind::Sigma2 => "sigma2",
            ExperimentKind::Corrector => "corrector",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Rates => "rates",
            ExperimentKind::DistTest => "dist-test",
            ExperimentKind::SpdeVar => "spde-var",
            ExperimentKind::Validate => "validate",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| cfg_err("kind", format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialConfig {
    Gaussian { amplitude: f64, width: f64, modes: usize, sampling: FrequencySampling },
    Poisson { radius: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DtPolicy {
    Auto,
    Fixed(f64),
}

impl DtPolicy {
    pub fn value(&self) -> Option<f64> {
        match self {
            DtPolicy::Auto => None,
            DtPolicy::Fixed(v) => Some(*v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dim: usize,
    pub potential: PotentialConfig,
    pub initial: InitialCondition,
    pub t: f64,
    pub x: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub n_omega: usize,
    pub n_paths: usize,
    pub max_paths: usize,
    pub pilot_omega: usize,
    pub n_samples: usize,
    pub dt: DtPolicy,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Validate,
            dim: 3,
            potential: PotentialConfig::Gaussian {
                amplitude: 1.0,
                width: 1.0,
                modes: 256,
                sampling: FrequencySampling::Spectral,
            },
            initial: InitialCondition::Constant { value: 1.0 },
            t: 1.0,
            x: vec![0.0; 3],
            eps_list: vec![0.4, 0.2, 0.1],
            lambdas: vec![1e-2, 1e-4, 1e-6, 1e-8],
            n_omega: 256,
            n_paths: 64,
            max_paths: 4096,
            pilot_omega: 64,
            n_samples: 100_000,
            dt: DtPolicy::Auto,
            seed: 1,
            out: PathBuf::from("results"),
        }
    }
}

const KEYS: &[&str] = &[
    "kind",
    "dim",
    "potential.kind",
    "potential.amplitude",
    "potential.width",
    "potential.modes",
    "potential.sampling",
    "potential.r_min",
    "potential.r_max",
    "potential.mix",
    "potential.radius",
    "potential.scale",
    "initial.kind",
    "initial.value",
    "initial.center",
    "initial.width",
    "initial.height",
    "problem.t",
    "problem.x",
    "problem.eps_list",
    "problem.lambdas",
    "sampling.n_omega",
    "sampling.n_paths",
    "sampling.max_paths",
    "sampling.pilot_omega",
    "sampling.n_samples",
    "sampling.dt",
    "run.seed",
    "run.out",
];

fn cfg_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), reason: reason.into() }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| cfg_err(key, format!("cannot parse `{v}`")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(vec![]);
    }
    v.split(',').map(|s| num(key, s)).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut seen = std::collections::BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(&format!("line {}", no + 1), "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(cfg_err(k, "unknown key"));
            }
            if seen.insert(k.to_string(), v.to_string()).is_some() {
                return Err(cfg_err(k, "key given twice"));
            }
        }
        Self::from_map(&seen)
    }

    fn from_map(m: &std::collections::BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| m.get(k).map(String::as_str);
        let mut c = Self::default();
        if let Some(v) = get("kind") {
            c.kind = v.parse()?;
        }
        if let Some(v) = get("dim") {
            c.dim = num("dim", v)?;
        }
        c.x = vec![0.0; c.dim];

        let pk = get("potential.kind").unwrap_or("gaussian");
        let only = |keys: &[&str], kind: &str| -> Result<()> {
            for k in keys {
                if m.contains_key(*k) {
                    return Err(cfg_err(k, format!("not used by potential.kind = {kind}")));
                }
            }
            Ok(())
        };
        c.potential = match pk {
            "gaussian" => {
                only(&["potential.radius", "potential.scale"], pk)?;
                let sampling = match get("potential.sampling").unwrap_or("spectral") {
                    "spectral" => {
                        only(&["potential.r_min", "potential.r_max", "potential.mix"], "gaussian with spectral sampling")?;
                        FrequencySampling::Spectral
                    }
                    "log-radial" => FrequencySampling::LogRadial {
                        r_min: get("potential.r_min").map_or(Ok(1e-4), |v| num("potential.r_min", v))?,
                        r_max: get("potential.r_max").map_or(Ok(8.0), |v| num("potential.r_max", v))?,
                        mix: get("potential.mix").map_or(Ok(0.5), |v| num("potential.mix", v))?,
                    },
                    other => return Err(cfg_err("potential.sampling", format!("unknown sampling `{other}`"))),
                };
                PotentialConfig::Gaussian {
                    amplitude: get("potential.amplitude").map_or(Ok(1.0), |v| num("potential.amplitude", v))?,
                    width: get("potential.width").map_or(Ok(1.0), |v| num("potential.width", v))?,
                    modes: get("potential.modes").map_or(Ok(256), |v| num("potential.modes", v))?,
                    sampling,
                }
            }
            "poisson" => {
                only(
                    &["potential.amplitude", "potential.width", "potential.modes", "potential.sampling", "potential.r_min", "potential.r_max", "potential.mix"],
                    pk,
                )?;
                PotentialConfig::Poisson {
                    radius: get("potential.radius").map_or(Ok(1.0), |v| num("potential.radius", v))?,
                    scale: get("potential.scale").map_or(Ok(1.0), |v| num("potential.scale", v))?,
                }
            }
            other => return Err(cfg_err("potential.kind", format!("unknown potential `{other}`"))),
        };

        c.initial = match get("initial.kind").unwrap_or("constant") {
            "constant" => {
                for k in ["initial.center", "initial.width", "initial.height"] {
                    if m.contains_key(k) {
                        return Err(cfg_err(k, "not used by initial.kind = constant"));
                    }
                }
                InitialCondition::Constant { value: get("initial.value").map_or(Ok(1.0), |v| num("initial.value", v))? }
            }
            "bump" => {
                if m.contains_key("initial.value") {
                    return Err(cfg_err("initial.value", "not used by initial.kind = bump"));
                }
                InitialCondition::GaussianBump {
                    center: get("initial.center").map_or(Ok(vec![0.0; c.dim]), |v| list("initial.center", v))?,
                    width: get("initial.width").map_or(Ok(1.0), |v| num("initial.width", v))?,
                    height: get("initial.height").map_or(Ok(1.0), |v| num("initial.height", v))?,
                }
            }
            other => return Err(cfg_err("initial.kind", format!("unknown initial condition `{other}`"))),
        };

        if let Some(v) = get("problem.t") {
            c.t = num("problem.t", v)?;
        }
        if let Some(v) = get("problem.x") {
            c.x = list("problem.x", v)?;
        }
        if let Some(v) = get("problem.eps_list") {
            c.eps_list = list("problem.eps_list", v)?;
        }
        if let Some(v) = get("problem.lambdas") {
            c.lambdas = list("problem.lambdas", v)?;
        }
        if let Some(v) = get("sampling.n_omega") {
            c.n_omega = num("sampling.n_omega", v)?;
        }
        if let Some(v) = get("sampling.n_paths") {
            c.n_paths = num("sampling.n_paths", v)?;
        }
        if let Some(v) = get("sampling.max_paths") {
            c.max_paths = num("sampling.max_paths", v)?;
        }
        if let Some(v) = get("sampling.pilot_omega") {
            c.pilot_omega = num("sampling.pilot_omega", v)?;
        }
        if let Some(v) = get("sampling.n_samples") {
            c.n_samples = num("sampling.n_samples", v)?;
        }
        if let Some(v) = get("sampling.dt") {
            c.dt = if v == "auto" { DtPolicy::Auto } else { DtPolicy::Fixed(num("sampling.dt", v)?) };
        }
        if let Some(v) = get("run.seed") {
            c.seed = num("run.seed", v)?;
        }
        if let Some(v) = get("run.out") {
            c.out = PathBuf::from(v);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::Dimension {
                dim: self.dim,
                reason: "d ≥ 3 is required: σ² = 4(2π)^{-d}∫R̂/|ξ|² diverges in d ≤ 2 and no homogenized limit exists".into(),
            });
        }
        if self.dim > crate::random_field::MAX_DIM {
            return Err(cfg_err("dim", format!("at most {} dimensions are supported", crate::random_field::MAX_DIM)));
        }
        let pos = |k: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(cfg_err(k, format!("must be finite and > 0, got {v}")))
            }
        };
        match &self.potential {
            PotentialConfig::Gaussian { amplitude, width, modes, sampling } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(cfg_err("potential.amplitude", "must be finite and >= 0"));
                }
                pos("potential.width", *width)?;
                if *modes == 0 {
                    return Err(cfg_err("potential.modes", "must be >= 1"));
                }
                if let FrequencySampling::LogRadial { r_min, r_max, mix } = sampling {
                    pos("potential.r_min", *r_min)?;
                    if !(r_max > r_min && r_max.is_finite()) {
                        return Err(cfg_err("potential.r_max", "must exceed potential.r_min"));
                    }
                    if !(0.0..1.0).contains(mix) {
                        return Err(cfg_err("potential.mix", "must lie in [0, 1)"));
                    }
                }
            }
            PotentialConfig::Poisson { radius, scale } => {
                pos("potential.radius", *radius)?;
                if !scale.is_finite() || *scale == 0.0 {
                    return Err(cfg_err("potential.scale", "must be finite and nonzero"));
                }
            }
        }
        if let InitialCondition::GaussianBump { center, .. } = &self.initial {
            if center.len() != self.dim {
                return Err(cfg_err("initial.center", format!("expected {} coordinates", self.dim)));
            }
        }
        self.initial.validate(self.dim).map_err(|e| cfg_err("initial", e.to_string()))?;
        pos("problem.t", self.t)?;
        if self.x.len() != self.dim {
            return Err(cfg_err("problem.x", format!("expected {} coordinates", self.dim)));
        }
        if self.eps_list.is_empty() {
            return Err(cfg_err("problem.eps_list", "must not be empty"));
        }
        for &e in &self.eps_list {
            pos("problem.eps_list", e)?;
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(cfg_err("problem.eps_list", "must be strictly decreasing"));
        }
        for &l in &self.lambdas {
            pos("problem.lambdas", l)?;
        }
        for (k, v) in [
            ("sampling.n_omega", self.n_omega),
            ("sampling.n_paths", self.n_paths),
            ("sampling.max_paths", self.max_paths),
            ("sampling.pilot_omega", self.pilot_omega),
            ("sampling.n_samples", self.n_samples),
        ] {
            if v == 0 {
                return Err(cfg_err(k, "must be >= 1"));
            }
        }
        if self.max_paths < self.n_paths {
            return Err(cfg_err("sampling.max_paths", "must be >= sampling.n_paths"));
        }
        if let DtPolicy::Fixed(v) = self.dt {
            pos("sampling.dt", v)?;
        }
        Ok(())
    }

    /// Canonical text form; floats use the shortest round-trip representation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("kind", self.kind.name().into());
        kv("dim", self.dim.to_string());
        match &self.potential {
            PotentialConfig::Gaussian { amplitude, width, modes, sampling } => {
                kv("potential.kind", "gaussian".into());
                kv("potential.amplitude", format!("{amplitude:?}"));
                kv("potential.width", format!("{width:?}"));
                kv("potential.modes", modes.to_string());
                match sampling {
                    FrequencySampling::Spectral => kv("potential.sampling", "spectral".into()),
                    FrequencySampling::LogRadial { r_min, r_max, mix } => {
                        kv("potential.sampling", "log-radial".into());
                        kv("potential.r_min", format!("{r_min:?}"));
                        kv("potential.r_max", format!("{r_max:?}"));
                        kv("potential.mix", format!("{mix:?}"));
                    }
                }
            }
            PotentialConfig::Poisson { radius, scale } => {
                kv("potential.kind", "poisson".into());
                kv("potential.radius", format!("{radius:?}"));
                kv("potential.scale", format!("{scale:?}"));
            }
        }
        match &self.initial {
            InitialCondition::Constant { value } => {
                kv("initial.kind", "constant".into());
                kv("initial.value", format!("{value:?}"));
            }
            InitialCondition::GaussianBump { center, width, height } => {
                kv("initial.kind", "bump".into());
                kv("initial.center", fmt_list(center));
                kv("initial.width", format!("{width:?}"));
                kv("initial.height", format!("{height:?}"));
            }
        }
        kv("problem.t", format!("{:?}", self.t));
        kv("problem.x", fmt_list(&self.x));
        kv("problem.eps_list", fmt_list(&self.eps_list));
        kv("problem.lambdas", fmt_list(&self.lambdas));
        kv("sampling.n_omega", self.n_omega.to_string());
        kv("sampling.n_paths", self.n_paths.to_string());
        kv("sampling.max_paths", self.max_paths.to_string());
        kv("sampling.pilot_omega", self.pilot_omega.to_string());
        kv("sampling.n_samples", self.n_samples.to_string());
        kv(
            "sampling.dt",
            match self.dt {
                DtPolicy::Auto => "auto".into(),
                DtPolicy::Fixed(v) => format!("{v:?}"),
            },
        );
        kv("run.seed", self.seed.to_string());
        kv("run.out", self.out.display().to_string());
        s
    }

    pub fn spectrum(&self) -> Result<SpectrumModel> {
        match &self.potential {
            PotentialConfig::Gaussian { amplitude, width, .. } => SpectrumModel::gaussian_bump(self.dim, *amplitude, *width),
            PotentialConfig::Poisson { radius, scale } => {
                SpectrumModel::poisson_induced(ShapeFunction::new(self.dim, *radius, *scale)?)
            }
        }
    }

    pub fn potential(&self) -> Result<Potential> {
        match &self.potential {
            PotentialConfig::Gaussian { modes, sampling, .. } => Potential::gaussian(self.spectrum()?, *modes, *sampling),
            PotentialConfig::Poisson { radius, scale } => Potential::poisson(ShapeFunction::new(self.dim, *radius, *scale)?),
        }
    }
}
