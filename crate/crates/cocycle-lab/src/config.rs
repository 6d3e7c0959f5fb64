//! Flat key-value run configuration.
//!
//! One `key = value` assignment per line, `#` comments, no nesting: every
//! parameter in this tool is a scalar or a short list, and flat files diff
//! cleanly inside result archives. Unknown keys are rejected and every
//! numeric value is range-checked before any computation starts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::potential::SamplingFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Lyapunov,
    Ap,
    Ldt,
    Angles,
    Spectrum,
    Localize,
    Greens,
    Holder,
    Ids,
    Resonance,
    Goodset,
    Selftest,
}

impl Command {
    pub const ALL: [Command; 12] = [
        Command::Lyapunov,
        Command::Ap,
        Command::Ldt,
        Command::Angles,
        Command::Spectrum,
        Command::Localize,
        Command::Greens,
        Command::Holder,
        Command::Ids,
        Command::Resonance,
        Command::Goodset,
        Command::Selftest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Lyapunov => "lyapunov",
            Command::Ap => "ap",
            Command::Ldt => "ldt",
            Command::Angles => "angles",
            Command::Spectrum => "spectrum",
            Command::Localize => "localize",
            Command::Greens => "greens",
            Command::Holder => "holder",
            Command::Ids => "ids",
            Command::Resonance => "resonance",
            Command::Goodset => "goodset",
            Command::Selftest => "selftest",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Command::ALL
            .iter()
            .find(|c| c.name() == s)
            .copied()
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown command `{s}`; expected one of {}",
                    Command::ALL.map(|c| c.name()).join(", ")
                ))
            })
    }
}

/// Energies to evaluate: a single value or a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergySpec {
    Single(f64),
    Grid { min: f64, max: f64, count: usize },
}

impl EnergySpec {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            EnergySpec::Single(e) => vec![e],
            EnergySpec::Grid { min, max, count } => (0..count)
                .map(|i| min + (max - min) * i as f64 / (count - 1) as f64)
                .collect(),
        }
    }

    fn canonical(&self) -> String {
        match *self {
            EnergySpec::Single(e) => format!("{e}"),
            EnergySpec::Grid { min, max, count } => format!("grid({min},{max},{count})"),
        }
    }
}

/// Potential profile selection, kept in its config syntax for hashing.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Identity,
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl PotentialSpec {
    pub fn build(&self) -> Result<SamplingFunction> {
        match self {
            PotentialSpec::Identity => Ok(SamplingFunction::identity()),
            PotentialSpec::PiecewiseLinear(points) => {
                SamplingFunction::piecewise_linear(points.clone())
            }
        }
    }

    fn canonical(&self) -> String {
        match self {
            PotentialSpec::Identity => "identity".into(),
            PotentialSpec::PiecewiseLinear(points) => {
                let mut s = String::from("pwl:[");
                for (i, (x, y)) in points.iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    let _ = write!(s, "({x},{y})");
                }
                s.push(']');
                s
            }
        }
    }
}

/// A fully validated run plan with defaults filled in.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub lambda: f64,
    pub potential: PotentialSpec,
    pub energy: EnergySpec,
    /// Orbit length for estimators.
    pub n: usize,
    /// Operator size N (sites 0..=N).
    pub big_n: usize,
    /// Block length K of the accelerated estimator.
    pub block_k: usize,
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: String,
    /// Orbit lengths of a deviation profile.
    pub n_list: Vec<usize>,
    /// Deviation thresholds.
    pub thresholds: Vec<f64>,
    /// Angle-concentration half-widths.
    pub deltas: Vec<f64>,
    /// Hölder test exponent.
    pub alpha: f64,
    /// Couplings below this fall back from the polar to the transfer form.
    pub lambda_min: f64,
    /// Resonance-scan knobs.
    pub ca_slack: f64,
    pub n1_list: Vec<usize>,
    pub shift_list: Vec<usize>,
    pub inner_samples: usize,
    pub budget: f64,
    /// Good-set knobs.
    pub k0_cap: usize,
    pub k0_samples: usize,
    pub window_cap: usize,
    /// Green's-function site window.
    pub greens_window: (usize, usize),
    /// Energy for the Thouless residual (ids command), if any.
    pub e_eval: Option<f64>,
    /// Start angle for angle statistics.
    pub beta: f64,
    /// Eigenvalue tolerance.
    pub tol: f64,
}

const KEYS: &[&str] = &[
    "command",
    "lambda",
    "potential",
    "energy",
    "n",
    "N",
    "K",
    "samples",
    "seed",
    "workers",
    "out",
    "n_list",
    "thresholds",
    "deltas",
    "alpha",
    "lambda_min",
    "ca_slack",
    "n1_list",
    "shift_list",
    "inner_samples",
    "budget",
    "k0_cap",
    "k0_samples",
    "window_cap",
    "window",
    "e_eval",
    "beta",
    "tol",
];

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::config(format!("key `{key}`: `{v}` is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::config(format!("key `{key}`: `{v}` is not a non-negative integer")))
}

fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|p| parse_usize(key, p.trim()))
        .collect::<Result<Vec<_>>>()
        .and_then(|list| {
            if list.is_empty() {
                Err(Error::config(format!("key `{key}`: empty list")))
            } else {
                Ok(list)
            }
        })
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|p| parse_f64(key, p.trim()))
        .collect::<Result<Vec<_>>>()
}

fn parse_energy(v: &str) -> Result<EnergySpec> {
    let v = v.trim();
    if let Some(inner) = v.strip_prefix("grid(").and_then(|s| s.strip_suffix(')')) {
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::config(
                "key `energy`: grid form is grid(min,max,count)",
            ));
        }
        let min = parse_f64("energy", parts[0])?;
        let max = parse_f64("energy", parts[1])?;
        let count = parse_usize("energy", parts[2])?;
        if max <= min {
            return Err(Error::config("key `energy`: grid needs max > min"));
        }
        if !(2..=100_000).contains(&count) {
            return Err(Error::config("key `energy`: grid count must lie in 2..=100000"));
        }
        Ok(EnergySpec::Grid { min, max, count })
    } else {
        Ok(EnergySpec::Single(parse_f64("energy", v)?))
    }
}

fn parse_potential(v: &str) -> Result<PotentialSpec> {
    let v = v.trim();
    if v == "identity" {
        return Ok(PotentialSpec::Identity);
    }
    if let Some(body) = v.strip_prefix("pwl:[").and_then(|s| s.strip_suffix(']')) {
        let mut points = Vec::new();
        for chunk in body.split("),(") {
            let chunk = chunk.trim_start_matches('(').trim_end_matches(')');
            let parts: Vec<&str> = chunk.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Error::config(
                    "key `potential`: pwl points must be (x,y) pairs",
                ));
            }
            points.push((
                parse_f64("potential", parts[0])?,
                parse_f64("potential", parts[1])?,
            ));
        }
        // constructing validates monotonicity and anchors
        SamplingFunction::piecewise_linear(points.clone())
            .map_err(|e| Error::config(format!("key `potential`: {e}")))?;
        return Ok(PotentialSpec::PiecewiseLinear(points));
    }
    Err(Error::config(format!(
        "key `potential`: `{v}` is neither `identity` nor `pwl:[(x,y),...]`"
    )))
}

fn parse_window(v: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::config("key `window`: expected `low:high`"));
    }
    let lo = parse_usize("window", parts[0])?;
    let hi = parse_usize("window", parts[1])?;
    if lo >= hi {
        return Err(Error::config("key `window`: need low < high"));
    }
    Ok((lo, hi))
}

fn check_range_usize(key: &str, v: usize, lo: usize, hi: usize) -> Result<usize> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(Error::config(format!(
            "key `{key}`: value {v} outside accepted range {lo}..={hi}"
        )))
    }
}

fn check_range_f64(key: &str, v: f64, lo: f64, hi: f64) -> Result<f64> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(v)
    } else {
        Err(Error::config(format!(
            "key `{key}`: value {v} outside accepted range [{lo}, {hi}]"
        )))
    }
}

/// Parses and validates a flat config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::config(format!(
                "line {}: unknown key `{key}`",
                lineno + 1
            )));
        }
        if seen.insert(key.clone(), value).is_some() {
            return Err(Error::config(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
    }

    let command = match seen.get("command") {
        Some(c) => Command::parse(c)?,
        None => return Err(Error::config("missing required key `command`")),
    };

    let lambda = match seen.get("lambda") {
        Some(v) => check_range_f64("lambda", parse_f64("lambda", v)?, 0.0, 1e6)?,
        None if command == Command::Selftest => 0.0,
        None => return Err(Error::config("missing required key `lambda`")),
    };
    let potential = match seen.get("potential") {
        Some(v) => parse_potential(v)?,
        None => PotentialSpec::Identity,
    };
    let needs_energy = matches!(
        command,
        Command::Lyapunov
            | Command::Ap
            | Command::Ldt
            | Command::Angles
            | Command::Greens
            | Command::Holder
            | Command::Ids
            | Command::Goodset
    );
    let energy = match seen.get("energy") {
        Some(v) => parse_energy(v)?,
        None if !needs_energy => EnergySpec::Single(0.0),
        None => return Err(Error::config("missing required key `energy`")),
    };
    if matches!(command, Command::Holder | Command::Ids) {
        if let EnergySpec::Single(_) = energy {
            return Err(Error::config(format!(
                "command `{}` needs `energy = grid(min,max,count)`",
                command.name()
            )));
        }
    }

    let n = match seen.get("n") {
        Some(v) => check_range_usize("n", parse_usize("n", v)?, 1, 10_000_000)?,
        None => 2000,
    };
    let big_n = match seen.get("N") {
        Some(v) => check_range_usize("N", parse_usize("N", v)?, 1, 100_000)?,
        None => 300,
    };
    let block_k = match seen.get("K") {
        Some(v) => check_range_usize("K", parse_usize("K", v)?, 2, 100_000)?,
        None => 50,
    };
    let samples = match seen.get("samples") {
        Some(v) => check_range_usize("samples", parse_usize("samples", v)?, 1, 100_000_000)?,
        None => 500,
    };
    let seed = match seen.get("seed") {
        Some(v) => v
            .parse::<u64>()
            .map_err(|_| Error::config(format!("key `seed`: `{v}` is not a u64")))?,
        None => 1,
    };
    let workers = match seen.get("workers") {
        Some(v) => check_range_usize("workers", parse_usize("workers", v)?, 1, 1024)?,
        None => 1,
    };
    let out_dir = seen.get("out").cloned().unwrap_or_else(|| ".".into());
    let n_list = match seen.get("n_list") {
        Some(v) => {
            let list = parse_usize_list("n_list", v)?;
            for &x in &list {
                check_range_usize("n_list", x, 1, 10_000_000)?;
            }
            list
        }
        None => vec![200, 400, 800, 1600],
    };
    let thresholds = match seen.get("thresholds") {
        Some(v) => {
            let list = parse_f64_list("thresholds", v)?;
            for &t in &list {
                check_range_f64("thresholds", t, 1e-9, 1e6)?;
            }
            list
        }
        None => vec![2.0],
    };
    let deltas = match seen.get("deltas") {
        Some(v) => {
            let list = parse_f64_list("deltas", v)?;
            for &d in &list {
                check_range_f64("deltas", d, 1e-12, std::f64::consts::FRAC_PI_2)?;
            }
            list
        }
        None => vec![0.2, 0.1, 0.05, 0.025],
    };
    let alpha = match seen.get("alpha") {
        Some(v) => check_range_f64("alpha", parse_f64("alpha", v)?, 1e-6, 1.0)?,
        None => 0.1,
    };
    let lambda_min = match seen.get("lambda_min") {
        Some(v) => check_range_f64("lambda_min", parse_f64("lambda_min", v)?, 0.0, 1e6)?,
        None => 10.0,
    };
    let ca_slack = match seen.get("ca_slack") {
        Some(v) => check_range_f64("ca_slack", parse_f64("ca_slack", v)?, 0.0, 1e6)?,
        None => 3.0,
    };
    let n1_list = match seen.get("n1_list") {
        Some(v) => {
            let list = parse_usize_list("n1_list", v)?;
            for &x in &list {
                check_range_usize("n1_list", x, 1, 10_000)?;
            }
            list
        }
        None => vec![64, 128],
    };
    let shift_list = match seen.get("shift_list") {
        Some(v) => {
            let list = parse_usize_list("shift_list", v)?;
            for &x in &list {
                check_range_usize("shift_list", x, 1, 100_000)?;
            }
            list
        }
        None => vec![192, 384],
    };
    let inner_samples = match seen.get("inner_samples") {
        Some(v) => check_range_usize("inner_samples", parse_usize("inner_samples", v)?, 1, 1_000_000)?,
        None => 64,
    };
    let budget = match seen.get("budget") {
        Some(v) => check_range_f64("budget", parse_f64("budget", v)?, 1.0, 1e15)?,
        None => 2e9,
    };
    let k0_cap = match seen.get("k0_cap") {
        Some(v) => check_range_usize("k0_cap", parse_usize("k0_cap", v)?, 0, 1_000_000)?,
        None => 10_000,
    };
    let k0_samples = match seen.get("k0_samples") {
        Some(v) => check_range_usize("k0_samples", parse_usize("k0_samples", v)?, 1, 10_000)?,
        None => 8,
    };
    let window_cap = match seen.get("window_cap") {
        Some(v) => check_range_usize("window_cap", parse_usize("window_cap", v)?, 1, 1_000_000)?,
        None => 10_000,
    };
    let greens_window = match seen.get("window") {
        Some(v) => parse_window(v)?,
        None => {
            let hi = big_n.saturating_sub(big_n / 10).max(2);
            (big_n / 10, hi)
        }
    };
    let e_eval = match seen.get("e_eval") {
        Some(v) => Some(parse_f64("e_eval", v)?),
        None => None,
    };
    let beta = match seen.get("beta") {
        Some(v) => check_range_f64("beta", parse_f64("beta", v)?, 0.0, std::f64::consts::PI)?,
        None => 0.0,
    };
    let tol = match seen.get("tol") {
        Some(v) => check_range_f64("tol", parse_f64("tol", v)?, 1e-14, 1.0)?,
        None => 1e-10,
    };

    if command == Command::Greens && greens_window.1 > big_n {
        return Err(Error::config(format!(
            "key `window`: upper end {} exceeds the operator size N = {big_n}",
            greens_window.1
        )));
    }

    Ok(RunConfig {
        command,
        lambda,
        potential,
        energy,
        n,
        big_n,
        block_k,
        samples,
        seed,
        workers,
        out_dir,
        n_list,
        thresholds,
        deltas,
        alpha,
        lambda_min,
        ca_slack,
        n1_list,
        shift_list,
        inner_samples,
        budget,
        k0_cap,
        k0_samples,
        window_cap,
        greens_window,
        e_eval,
        beta,
        tol,
    })
}

impl RunConfig {
    /// Canonical rendering of the effective config: every field, sorted,
    /// one per line. This is what gets hashed into the manifest and echoed
    /// into result archives.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "K = {}", self.block_k);
        let _ = writeln!(s, "N = {}", self.big_n);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "budget = {}", self.budget);
        let _ = writeln!(s, "ca_slack = {}", self.ca_slack);
        let _ = writeln!(s, "command = {}", self.command.name());
        let _ = writeln!(
            s,
            "deltas = {}",
            self.deltas.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        );
        if let Some(e) = self.e_eval {
            let _ = writeln!(s, "e_eval = {e}");
        }
        let _ = writeln!(s, "energy = {}", self.energy.canonical());
        let _ = writeln!(s, "inner_samples = {}", self.inner_samples);
        let _ = writeln!(s, "k0_cap = {}", self.k0_cap);
        let _ = writeln!(s, "k0_samples = {}", self.k0_samples);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "lambda_min = {}", self.lambda_min);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(
            s,
            "n1_list = {}",
            self.n1_list.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(
            s,
            "n_list = {}",
            self.n_list.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(s, "potential = {}", self.potential.canonical());
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(
            s,
            "shift_list = {}",
            self.shift_list.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(
            s,
            "thresholds = {}",
            self.thresholds.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(s, "tol = {}", self.tol);
        let _ = writeln!(s, "window = {}:{}", self.greens_window.0, self.greens_window.1);
        let _ = writeln!(s, "window_cap = {}", self.window_cap);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_standard_sweep() {
        let cfg = parse_config(
            "command = lyapunov\nlambda = 100\nenergy = grid(-200,200,41)\nn = 2000\nsamples = 500\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.command, Command::Lyapunov);
        assert_eq!(cfg.lambda, 100.0);
        assert_eq!(cfg.energy.values().len(), 41);
        assert_eq!(cfg.n, 2000);
        assert_eq!(cfg.samples, 500);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn rejects_negative_lambda_naming_the_key() {
        let err = parse_config("command = lyapunov\nlambda = -1\nenergy = 0\n").unwrap_err();
        assert!(err.to_string().contains("lambda"), "{err}");
    }

    #[test]
    fn empty_document_names_command() {
        let err = parse_config("").unwrap_err();
        assert!(err.to_string().contains("command"), "{err}");
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let err = parse_config("command = lyapunov\nlambda = 1\nenergy = 0\nbogus = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = parse_config("command = lyapunov\nlambda = 1\nlambda = 2\nenergy = 0\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn parses_pwl_potential_and_comments() {
        let cfg = parse_config(
            "# sweep\ncommand = angles\nlambda = 100\nenergy = 50\npotential = pwl:[(0,0),(0.5,0.3),(1,1)]\n",
        )
        .unwrap();
        match cfg.potential {
            PotentialSpec::PiecewiseLinear(ref p) => assert_eq!(p.len(), 3),
            _ => panic!("expected pwl"),
        }
        assert!(cfg.potential.build().is_ok());
    }

    #[test]
    fn holder_requires_a_grid() {
        let err = parse_config("command = holder\nlambda = 100\nenergy = 3\n").unwrap_err();
        assert!(err.to_string().contains("grid"), "{err}");
    }

    #[test]
    fn canonical_round_trips_through_parse() {
        let cfg = parse_config(
            "command = ldt\nlambda = 100\nenergy = 50\nthresholds = 0.8,2\nn_list = 200,400\n",
        )
        .unwrap();
        let canon = cfg.canonical();
        let reparsed = parse_config(&canon).unwrap();
        assert_eq!(reparsed.canonical(), canon);
    }

    #[test]
    fn window_must_fit_operator() {
        let err =
            parse_config("command = greens\nlambda = 10\nenergy = 3\nN = 100\nwindow = 10:200\n")
                .unwrap_err();
        assert!(err.to_string().contains("window"), "{err}");
    }
}
