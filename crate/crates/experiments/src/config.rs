//! Flat `key=value` experiment configuration.
//!
//! One key per line, `#` starts a comment. Floats are written in their
//! shortest round-trip form, so `parse(render(c)) == c`.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use gfflab_core::gff::TRACE_LIMIT;
use gfflab_core::green::IDENTITY_VOLUME_LIMIT;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    GreenVerify,
    CouplingScan,
    SandwichScan,
    PercScan,
    EtaCurve,
    HStar,
    BoundaryProbe,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::GreenVerify,
        Kind::CouplingScan,
        Kind::SandwichScan,
        Kind::PercScan,
        Kind::EtaCurve,
        Kind::HStar,
        Kind::BoundaryProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::GreenVerify => "green-verify",
            Kind::CouplingScan => "coupling-scan",
            Kind::SandwichScan => "sandwich-scan",
            Kind::PercScan => "perc-scan",
            Kind::EtaCurve => "eta-curve",
            Kind::HStar => "hstar",
            Kind::BoundaryProbe => "boundary-probe",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ConfigError::Value {
                key: "kind".into(),
                msg: format!("unknown experiment `{s}`"),
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    /// Torus side lengths.
    pub sides: Vec<usize>,
    pub dim: usize,
    pub delta: f64,
    pub h: Vec<f64>,
    pub eps: f64,
    pub reps: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Ball radii for eta curves and the critical-level proxy.
    pub radii: Vec<usize>,
    pub bracket: (f64, f64),
    pub tau: f64,
    pub resolution: f64,
    /// Write the fields of replicate 0 as GFF1 snapshots.
    pub snapshots: bool,
}

impl ExperimentConfig {
    /// Defaults for a kind; any field can be overridden afterwards.
    pub fn defaults(kind: Kind) -> Self {
        let mut c = ExperimentConfig {
            kind,
            sides: vec![4],
            dim: 3,
            delta: 0.75,
            h: vec![0.0],
            eps: 0.2,
            reps: 100,
            seed: 42,
            out: PathBuf::from("results"),
            radii: vec![10],
            bracket: (-0.5, 1.5),
            tau: gfflab_core::percolation::DEFAULT_TAU,
            resolution: 1e-3,
            snapshots: false,
        };
        match kind {
            Kind::GreenVerify => {}
            Kind::CouplingScan => {
                c.sides = vec![16, 24, 32];
                c.reps = 200;
            }
            Kind::SandwichScan => {
                c.sides = vec![32];
                c.reps = 200;
            }
            Kind::PercScan => {
                c.sides = vec![32];
                c.h = vec![-0.5, 0.0, 0.5, 1.0, 1.5];
            }
            Kind::EtaCurve => {
                c.h = (-10..=15).map(|k| k as f64 / 10.0).collect();
                c.reps = 1000;
            }
            Kind::HStar => c.reps = 2000,
            Kind::BoundaryProbe => c.sides = vec![16, 24, 32, 48],
        }
        c
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let list = |v: &[String]| v.join(",");
        let f = |x: f64| format!("{x:?}");
        let _ = writeln!(s, "kind={}", self.kind);
        let _ = writeln!(s, "N={}", list(&self.sides.iter().map(|x| x.to_string()).collect::<Vec<_>>()));
        let _ = writeln!(s, "d={}", self.dim);
        let _ = writeln!(s, "delta={}", f(self.delta));
        let _ = writeln!(s, "h={}", list(&self.h.iter().map(|&x| f(x)).collect::<Vec<_>>()));
        let _ = writeln!(s, "eps={}", f(self.eps));
        let _ = writeln!(s, "reps={}", self.reps);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "out={}", self.out.display());
        let _ = writeln!(s, "n={}", list(&self.radii.iter().map(|x| x.to_string()).collect::<Vec<_>>()));
        let _ = writeln!(s, "bracket={},{}", f(self.bracket.0), f(self.bracket.1));
        let _ = writeln!(s, "tau={}", f(self.tau));
        let _ = writeln!(s, "resolution={}", f(self.resolution));
        let _ = writeln!(s, "snapshots={}", self.snapshots);
        s
    }

    /// Parses a config file. `kind` must be present unless `fallback` is given.
    pub fn parse(text: &str, fallback: Option<Kind>) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        let mut kind = fallback;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                msg: format!("expected key=value, got `{line}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k == "kind" {
                kind = Some(v.parse()?);
            } else {
                pairs.push((k.to_string(), v.to_string()));
            }
        }
        let kind = kind.ok_or_else(|| ConfigError::Invalid("missing `kind`".into()))?;
        let mut c = ExperimentConfig::defaults(kind);
        for (k, v) in pairs {
            c.set(&k, &v)?;
        }
        Ok(c)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |msg: String| ConfigError::Value {
            key: key.to_string(),
            msg,
        };
        match key {
            "kind" => self.kind = value.parse()?,
            "N" => self.sides = parse_list(value).map_err(bad)?,
            "d" => self.dim = parse_one(value).map_err(bad)?,
            "delta" => self.delta = parse_one(value).map_err(bad)?,
            "h" => self.h = parse_list(value).map_err(bad)?,
            "eps" => self.eps = parse_one(value).map_err(bad)?,
            "reps" => self.reps = parse_one(value).map_err(bad)?,
            "seed" => self.seed = parse_one(value).map_err(bad)?,
            "out" => self.out = PathBuf::from(value),
            "n" => self.radii = parse_list(value).map_err(bad)?,
            "bracket" => {
                let v: Vec<f64> = parse_list(value).map_err(bad)?;
                if v.len() != 2 {
                    return Err(bad(format!("expected lo,hi, got {} values", v.len())));
                }
                self.bracket = (v[0], v[1]);
            }
            "tau" => self.tau = parse_one(value).map_err(bad)?,
            "resolution" => self.resolution = parse_one(value).map_err(bad)?,
            "snapshots" => self.snapshots = parse_one(value).map_err(bad)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Range checks, run before any computation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        if self.dim == 0 {
            return fail("d must be >= 1".into());
        }
        if self.sides.is_empty() || self.sides.contains(&0) {
            return fail("N must be a non-empty list of positive sides".into());
        }
        if self.reps == 0 {
            return fail("reps must be >= 1".into());
        }
        if self.h.iter().any(|h| !h.is_finite()) {
            return fail("h values must be finite".into());
        }
        if self.dim < 3 {
            return fail(format!("d must be >= 3, got {}", self.dim));
        }
        match self.kind {
            Kind::GreenVerify => {
                if let Some(&n) = self.sides.iter().find(|&&n| n < 2) {
                    return fail(format!("green-verify needs N >= 2, got {n}"));
                }
            }
            Kind::CouplingScan | Kind::SandwichScan => {
                if !(self.delta > 0.5 && self.delta < 1.0) {
                    return fail(format!("delta must lie in (1/2, 1), got {}", self.delta));
                }
                if let Some(&n) = self.sides.iter().find(|&&n| n < 3) {
                    return fail(format!("the coupling needs N >= 3, got {n}"));
                }
                if !(self.eps >= 0.0 && self.eps.is_finite()) {
                    return fail(format!("eps must be finite and >= 0, got {}", self.eps));
                }
            }
            Kind::PercScan => {
                if self.h.is_empty() {
                    return fail("perc-scan needs at least one level".into());
                }
                if let Some(&n) = self.sides.iter().find(|&&n| n < 2) {
                    return fail(format!("perc-scan needs N >= 2, got {n}"));
                }
            }
            Kind::EtaCurve | Kind::HStar => {
                if self.radii.is_empty() || self.radii.contains(&0) {
                    return fail("n must be a non-empty list of radii >= 1".into());
                }
                if self.kind == Kind::EtaCurve && self.h.is_empty() {
                    return fail("eta-curve needs at least one level".into());
                }
                if self.kind == Kind::HStar {
                    let (lo, hi) = self.bracket;
                    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                        return fail(format!("bracket must satisfy lo < hi, got {lo},{hi}"));
                    }
                    if !(self.tau > 0.0 && self.tau < 1.0) {
                        return fail(format!("tau must lie in (0, 1), got {}", self.tau));
                    }
                    if !(self.resolution > 0.0) {
                        return fail("resolution must be positive".into());
                    }
                }
            }
            Kind::BoundaryProbe => {
                if let Some(&n) = self.sides.iter().find(|&&n| n < 4) {
                    return fail(format!("boundary-probe needs N >= 4, got {n}"));
                }
            }
        }
        Ok(())
    }

    /// Size guards that would otherwise trip deep inside a run:
    /// `(what, actual, limit)` of the first violation.
    pub fn size_violation(&self) -> Option<(&'static str, usize, usize)> {
        let d = self.dim as u32;
        let face = |side: usize| 2 * self.dim * side.pow(d - 1);
        match self.kind {
            Kind::GreenVerify => self
                .sides
                .iter()
                .map(|&n| n.pow(d))
                .find(|&v| v > IDENTITY_VOLUME_LIMIT)
                .map(|v| ("torus volume for the identity suite", v, IDENTITY_VOLUME_LIMIT)),
            Kind::CouplingScan | Kind::SandwichScan => self
                .sides
                .iter()
                .map(|&n| face(n - 2))
                .find(|&b| b > TRACE_LIMIT)
                .map(|b| ("boundary sites of U_N", b, TRACE_LIMIT)),
            Kind::EtaCurve | Kind::HStar => self
                .radii
                .iter()
                .map(|&n| face(2 * n + 1))
                .find(|&b| b > TRACE_LIMIT)
                .map(|b| ("boundary sites of B(n)", b, TRACE_LIMIT)),
            Kind::PercScan | Kind::BoundaryProbe => None,
        }
    }
}

fn parse_one<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.trim().parse().map_err(|e: T::Err| format!("`{s}`: {e}"))
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_one).collect()
}
