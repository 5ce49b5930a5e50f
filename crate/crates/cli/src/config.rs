//! Line-oriented `[section]` / `key = value` run configuration.

use radgas::potential::{PotentialFamily, TestFunction};
use std::collections::HashMap;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("line {line}: {msg}")]
pub struct ConfigError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, msg: msg.into() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub family: PotentialFamily,
    pub test_function: TestFunction,
    pub s: Option<Vec<f64>>,
    pub alpha: f64,
    pub n: Vec<usize>,
    pub c_cut: f64,
    pub seed: u64,
    pub samples: usize,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub save_batch: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            family: PotentialFamily::ginibre(),
            test_function: TestFunction::r_squared(),
            s: None,
            alpha: 0.0,
            n: vec![100],
            c_cut: 20.0,
            seed: 20251017,
            samples: 100_000,
            out: PathBuf::from("radgas-out"),
            workers: None,
            save_batch: false,
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("potential", &["family", "scale", "coeffs", "shift", "amplitude", "beta", "m", "slope", "t", "width"]),
    ("test_function", &["name", "value", "coef", "power", "center", "width", "height"]),
    ("perturbation", &["s", "alpha"]),
    ("run", &["n", "seed", "samples", "out", "workers", "save_batch"]),
    ("policy", &["c_cut"]),
];

type Section = HashMap<String, (String, usize)>;

struct Parsed {
    sections: HashMap<String, Section>,
    headers: HashMap<String, usize>,
}

impl Parsed {
    fn get(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    fn typed<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).or_else(|_| err(*line, format!("cannot parse {key} = {v:?}"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, line)) => {
                parse_list(v).map(Some).map_err(|m| ConfigError { line: *line, msg: format!("{key}: {m}") })
            }
        }
    }

    fn required<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError> {
        let line = self.headers.get(section).copied().unwrap_or(0);
        self.typed(section, key)?.map_or_else(|| err(line, format!("[{section}] needs {key}")), Ok)
    }
}

/// Comma-separated values.
pub fn parse_list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String> {
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err("empty list".into());
    }
    items.iter().map(|s| s.parse().map_err(|_| format!("cannot parse {s:?}"))).collect()
}

fn tokenize(text: &str) -> Result<Parsed, ConfigError> {
    let mut sections: HashMap<String, Section> = HashMap::new();
    let mut headers = HashMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return err(line, "unterminated section header");
            };
            let name = name.trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return err(line, format!("unknown section [{name}]"));
            }
            if headers.insert(name.to_string(), line).is_some() {
                return err(line, format!("section [{name}] appears twice"));
            }
            current = Some(name.to_string());
            continue;
        }
        let Some(section) = &current else {
            return err(line, "key outside of any section");
        };
        let Some((key, value)) = body.split_once('=') else {
            return err(line, "expected key = value");
        };
        let (key, value) = (key.trim(), value.trim());
        let allowed = KEYS.iter().find(|(s, _)| s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return err(line, format!("unknown key {key:?} in [{section}]"));
        }
        if value.is_empty() {
            return err(line, format!("{key} has no value"));
        }
        let entry = sections.entry(section.clone()).or_default();
        if entry.insert(key.to_string(), (value.to_string(), line)).is_some() {
            return err(line, format!("duplicate key {key:?}"));
        }
    }
    Ok(Parsed { sections, headers })
}

fn family(p: &Parsed) -> Result<Option<PotentialFamily>, ConfigError> {
    let Some((name, line)) = p.get("potential", "family").cloned() else {
        if let Some(&line) = p.headers.get("potential") {
            return err(line, "[potential] needs family");
        }
        return Ok(None);
    };
    let sec = "potential";
    let fam = match name.as_str() {
        "ginibre" => PotentialFamily::Ginibre { scale: p.typed(sec, "scale")?.unwrap_or(1.0) },
        "even_polynomial" => PotentialFamily::EvenPolynomial {
            coeffs: p.list(sec, "coeffs")?.map_or_else(|| err(line, "even_polynomial needs coeffs"), Ok)?,
            shift: p.typed(sec, "shift")?.unwrap_or(0.0),
        },
        "gap_polynomial" => PotentialFamily::gap_polynomial(
            p.required(sec, "amplitude")?,
            p.required(sec, "beta")?,
            p.required(sec, "m")?,
            p.required(sec, "slope")?,
        ),
        "ginibre_outpost" => {
            let t = p.required(sec, "t")?;
            let width = p.required(sec, "width")?;
            PotentialFamily::ginibre_with_outpost(t, width).or_else(|e| err(line, e.to_string()))?
        }
        other => return err(line, format!("unknown family {other:?}")),
    };
    fam.validate().or_else(|e| err(line, e.to_string()))?;
    Ok(Some(fam))
}

fn test_function(p: &Parsed) -> Result<Option<TestFunction>, ConfigError> {
    let Some((name, line)) = p.get("test_function", "name").cloned() else {
        return Ok(None);
    };
    let sec = "test_function";
    let f = match name.as_str() {
        "const" => TestFunction::Constant { value: p.typed(sec, "value")?.unwrap_or(1.0) },
        "r2" => TestFunction::r_squared(),
        "power" => TestFunction::Power { coef: p.typed(sec, "coef")?.unwrap_or(1.0), power: p.required(sec, "power")? },
        "log" => TestFunction::Log,
        "cosh_window" => TestFunction::CoshWindow {
            center: p.required(sec, "center")?,
            width: p.required(sec, "width")?,
            height: p.typed(sec, "height")?.unwrap_or(1.0),
        },
        "smooth_step" => {
            TestFunction::SmoothStep { center: p.required(sec, "center")?, width: p.required(sec, "width")? }
        }
        other => return err(line, format!("unknown test function {other:?}")),
    };
    Ok(Some(f))
}

/// Parses a configuration; keys left out keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let p = tokenize(text)?;
    let mut cfg = RunConfig::default();
    if let Some(f) = family(&p)? {
        cfg.family = f;
    }
    if let Some(h) = test_function(&p)? {
        cfg.test_function = h;
    }
    cfg.s = p.list("perturbation", "s")?;
    if let Some(a) = p.typed("perturbation", "alpha")? {
        cfg.alpha = a;
    }
    if let Some(n) = p.list::<usize>("run", "n")? {
        if let Some(bad) = n.iter().find(|&&k| k < 2) {
            return err(p.get("run", "n").unwrap().1, format!("n = {bad} must be at least 2"));
        }
        cfg.n = n;
    }
    if let Some(v) = p.typed("run", "seed")? {
        cfg.seed = v;
    }
    if let Some(v) = p.typed("run", "samples")? {
        cfg.samples = v;
    }
    if let Some((v, _)) = p.get("run", "out") {
        cfg.out = PathBuf::from(v);
    }
    cfg.workers = p.typed("run", "workers")?;
    if let Some(v) = p.typed("run", "save_batch")? {
        cfg.save_batch = v;
    }
    if let Some(c) = p.typed::<f64>("policy", "c_cut")? {
        if !(c > 0.0) {
            return err(p.get("policy", "c_cut").unwrap().1, "c_cut must be positive");
        }
        cfg.c_cut = c;
    }
    Ok(cfg)
}
