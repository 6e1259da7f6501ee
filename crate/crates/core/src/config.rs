//! Run configuration: a flat INI dialect with `[section]` headers, `key = value`
//! lines and `#` comments.
//!
//! ```ini
//! [lattice]
//! a1 = 6.283185307179586
//!
//! [potential]
//! preset = mathieu1d
//! V0 = 0.5
//!
//! [window]
//! n = 0
//! m = 1
//!
//! [grid]
//! N = 64
//! cutoff = 8
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fiber::{BandWindow, PotentialSpec};
use crate::linalg::{c, C64};
use crate::optimizer::OptimizerConfig;

/// One `key = value` entry with its 1-based source line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

/// Raw sections in file order. Repeated section headers are rejected.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ini {
    pub sections: Vec<Section>,
}

impl Ini {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

/// Splits the text into sections; syntax errors carry the line number.
pub fn parse_ini(text: &str) -> Result<Ini> {
    let mut ini = Ini::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse { line, msg: "unterminated section header".into() })?
                .trim();
            if name.is_empty() || !name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
                return Err(Error::Parse { line, msg: format!("invalid section name '{name}'") });
            }
            if ini.section(name).is_some() {
                return Err(Error::Parse { line, msg: format!("duplicate section [{name}]") });
            }
            ini.sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
            continue;
        }
        let (key, value) =
            content.split_once('=').ok_or_else(|| Error::Parse { line, msg: "expected 'key = value'".into() })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse { line, msg: "empty key".into() });
        }
        let section =
            ini.sections.last_mut().ok_or_else(|| Error::Parse { line, msg: "entry before any section header".into() })?;
        section.entries.push(Entry { key: key.to_string(), value: value.trim().to_string(), line });
    }
    Ok(ini)
}

fn parse_f64(e: &Entry) -> Result<f64> {
    let v: f64 = e.value.parse().map_err(|_| Error::config(Some(e.line), format!("{}: not a number: '{}'", e.key, e.value)))?;
    if !v.is_finite() {
        return Err(Error::config(Some(e.line), format!("{}: must be finite", e.key)));
    }
    Ok(v)
}

fn parse_usize(e: &Entry) -> Result<usize> {
    e.value.parse().map_err(|_| Error::config(Some(e.line), format!("{}: not a non-negative integer: '{}'", e.key, e.value)))
}

fn parse_list<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<Vec<T>> {
    s.split(|ch: char| ch == ',' || ch.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| Error::config(Some(line), format!("{what}: cannot parse '{t}'"))))
        .collect()
}

/// Parses one explicit Fourier coefficient, `a,b,c ; re,im`, into (G, V̂_G).
///
/// Fewer than three integer components are padded with zeros.
pub fn parse_potential_line(value: &str, line: usize) -> Result<([i32; 3], C64)> {
    let (g, v) = value.split_once(';').ok_or_else(|| Error::config(Some(line), "potential line needs 'a,b,c ; re,im'"))?;
    let gi: Vec<i32> = parse_list(g, line, "G")?;
    if gi.is_empty() || gi.len() > 3 {
        return Err(Error::config(Some(line), "G needs 1 to 3 integer components"));
    }
    let vv: Vec<f64> = parse_list(v, line, "coefficient")?;
    if vv.len() != 2 || vv.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(Some(line), "coefficient needs finite 're,im'"));
    }
    let mut out = [0; 3];
    out[..gi.len()].copy_from_slice(&gi);
    Ok((out, c(vv[0], vv[1])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialKind {
    /// Windowed window eigenvectors at k = 0.
    Eigen,
    /// Windowed seeded random low plane waves.
    Random,
    /// A fixed k-independent set of plane-wave columns (not equivariant).
    Constant,
}

impl TrialKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eigen" => Some(TrialKind::Eigen),
            "random" => Some(TrialKind::Random),
            "constant" => Some(TrialKind::Constant),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    pub trial: TrialKind,
    pub center: Option<Vec<f64>>,
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartKind {
    Identity,
    Random,
    /// Identity moved by a seeded random skew field of the given size.
    Perturbed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub sizes: Vec<usize>,
    pub cutoff: f64,
    pub samples: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub json: bool,
    pub csv: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub lattice: Vec<Vec<f64>>,
    pub potential: PotentialSpec,
    pub window: BandWindow,
    /// Number of bands written by the band-structure command.
    pub bands: usize,
    pub grid: GridConfig,
    pub optimizer: OptimizerConfig,
    pub start: StartKind,
    pub frame: FrameConfig,
    pub output: OutputConfig,
}

/// `identity`, `random` or `perturbed:EPS`.
pub fn parse_start(s: &str) -> std::result::Result<StartKind, String> {
    match s {
        "identity" => Ok(StartKind::Identity),
        "random" => Ok(StartKind::Random),
        _ => {
            let eps = s
                .strip_prefix("perturbed:")
                .and_then(|t| t.trim().parse::<f64>().ok())
                .ok_or_else(|| format!("unknown start '{s}' (identity, random or perturbed:EPS)"))?;
            if eps.is_finite() && eps > 0.0 {
                Ok(StartKind::Perturbed(eps))
            } else {
                Err("perturbation size must be positive".into())
            }
        }
    }
}

fn check_keys(s: &Section, allowed: &[&str]) -> Result<()> {
    for e in &s.entries {
        if !allowed.contains(&e.key.as_str()) {
            return Err(Error::config(Some(e.line), format!("unknown key '{}' in [{}]", e.key, s.name)));
        }
    }
    let mut seen = BTreeMap::new();
    for e in &s.entries {
        if e.key != "G" {
            if let Some(first) = seen.insert(e.key.clone(), e.line) {
                return Err(Error::config(Some(e.line), format!("duplicate key '{}' (first at line {first})", e.key)));
            }
        }
    }
    Ok(())
}

fn get<'a>(s: &'a Section, key: &str) -> Option<&'a Entry> {
    s.entries.iter().find(|e| e.key == key)
}

fn require<'a>(s: &'a Section, key: &str) -> Result<&'a Entry> {
    get(s, key).ok_or_else(|| Error::config(Some(s.line), format!("[{}] is missing '{key}'", s.name)))
}

fn require_section<'a>(ini: &'a Ini, name: &str) -> Result<&'a Section> {
    ini.section(name).ok_or_else(|| Error::config(None, format!("missing section [{name}]")))
}

fn per_axis(e: &Entry, dim: usize) -> Result<Vec<usize>> {
    let v: Vec<usize> = parse_list(&e.value, e.line, &e.key)?;
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v),
        n => Err(Error::config(Some(e.line), format!("{}: expected 1 or {dim} values, got {n}", e.key))),
    }
}

const SECTIONS: [&str; 7] = ["lattice", "potential", "window", "grid", "optimizer", "frame", "output"];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_ini(&parse_ini(text)?)
    }

    pub fn from_ini(ini: &Ini) -> Result<Self> {
        for s in &ini.sections {
            if !SECTIONS.contains(&s.name.as_str()) {
                return Err(Error::config(Some(s.line), format!("unknown section [{}]", s.name)));
            }
        }

        let lat = require_section(ini, "lattice")?;
        check_keys(lat, &["a1", "a2", "a3"])?;
        let mut lattice = Vec::new();
        for key in ["a1", "a2", "a3"] {
            match get(lat, key) {
                Some(e) => {
                    let v: Vec<f64> = parse_list(&e.value, e.line, key)?;
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::config(Some(e.line), format!("{key}: must be finite")));
                    }
                    lattice.push(v);
                }
                None => break,
            }
        }
        let dim = lattice.len();
        if dim == 0 {
            return Err(Error::config(Some(lat.line), "[lattice] needs a1"));
        }
        if lattice.iter().any(|v| v.len() != dim) {
            return Err(Error::config(Some(lat.line), format!("every lattice vector needs {dim} components")));
        }
        if dim < 3 && get(lat, ["a2", "a3"][dim - 1]).is_some() {
            return Err(Error::config(Some(lat.line), "lattice vectors must be given in order a1, a2, a3"));
        }

        let pot = require_section(ini, "potential")?;
        check_keys(pot, &["preset", "V0", "G"])?;
        let potential = match get(pot, "preset") {
            Some(p) => {
                if get(pot, "G").is_some() {
                    return Err(Error::config(Some(p.line), "use either a preset or explicit G lines, not both"));
                }
                let v0 = get(pot, "V0").map(parse_f64).transpose()?.unwrap_or(0.0);
                let want = match p.value.as_str() {
                    "free" => 0,
                    "mathieu1d" => 1,
                    "cos2d" => 2,
                    "cos3d" => 3,
                    other => return Err(Error::config(Some(p.line), format!("unknown preset '{other}'"))),
                };
                if want != 0 && want != dim {
                    return Err(Error::config(Some(p.line), format!("preset {} needs a {want}-d lattice", p.value)));
                }
                if want == 0 {
                    PotentialSpec::free()
                } else {
                    PotentialSpec::cosines(dim, v0)
                }
            }
            None => {
                if let Some(e) = get(pot, "V0") {
                    return Err(Error::config(Some(e.line), "V0 requires a preset"));
                }
                let mut entries = Vec::new();
                for e in pot.entries.iter().filter(|e| e.key == "G") {
                    let (g, v) = parse_potential_line(&e.value, e.line)?;
                    if g[dim..].iter().any(|&x| x != 0) {
                        return Err(Error::config(Some(e.line), format!("G has components beyond dimension {dim}")));
                    }
                    entries.push((g, v));
                }
                PotentialSpec::new(&entries).map_err(|err| Error::config(Some(pot.line), err.to_string()))?
            }
        };

        let win = require_section(ini, "window")?;
        check_keys(win, &["n", "m", "bands"])?;
        let first = parse_usize(require(win, "n")?)?;
        let count = parse_usize(require(win, "m")?)?;
        if count == 0 {
            return Err(Error::config(Some(require(win, "m")?.line), "m must be at least 1"));
        }
        let bands = get(win, "bands").map(parse_usize).transpose()?.unwrap_or(first + count + 2).max(1);

        let grid_s = require_section(ini, "grid")?;
        check_keys(grid_s, &["N", "cutoff", "samples"])?;
        let sizes = per_axis(require(grid_s, "N")?, dim)?;
        let cut_e = require(grid_s, "cutoff")?;
        let cutoff = parse_f64(cut_e)?;
        if cutoff <= 0.0 {
            return Err(Error::config(Some(cut_e.line), "cutoff must be positive"));
        }
        let samples = get(grid_s, "samples").map(|e| per_axis(e, dim)).transpose()?;
        if let (Some(s), Some(e)) = (&samples, get(grid_s, "samples")) {
            if s.iter().any(|&x| x == 0) {
                return Err(Error::config(Some(e.line), "samples must be positive"));
            }
        }

        let mut optimizer = OptimizerConfig::default();
        let mut start = StartKind::Identity;
        if let Some(o) = ini.section("optimizer") {
            check_keys(
                o,
                &["maxIter", "gradTol", "armijoC", "initialStep", "stepShrink", "recenterEvery", "seed", "checkEvery", "start"],
            )?;
            for e in &o.entries {
                match e.key.as_str() {
                    "maxIter" => optimizer.max_iter = parse_usize(e)?,
                    "gradTol" => optimizer.grad_tol = parse_f64(e)?,
                    "armijoC" => optimizer.armijo_c = parse_f64(e)?,
                    "initialStep" => optimizer.initial_step = parse_f64(e)?,
                    "stepShrink" => optimizer.step_shrink = parse_f64(e)?,
                    "recenterEvery" => optimizer.recenter_every = parse_usize(e)?,
                    "seed" => {
                        optimizer.seed =
                            e.value.parse().map_err(|_| Error::config(Some(e.line), format!("seed: not an integer: '{}'", e.value)))?
                    }
                    "checkEvery" => optimizer.check_every = parse_usize(e)?,
                    _ => {
                        start = parse_start(&e.value).map_err(|msg| Error::config(Some(e.line), msg))?;
                    }
                }
            }
            optimizer.validate().map_err(|err| Error::config(Some(o.line), err.to_string()))?;
        }

        let mut frame = FrameConfig { trial: TrialKind::Eigen, center: None, width: None };
        if let Some(f) = ini.section("frame") {
            check_keys(f, &["trial", "center", "width"])?;
            for e in &f.entries {
                match e.key.as_str() {
                    "trial" => {
                        frame.trial = TrialKind::parse(&e.value)
                            .ok_or_else(|| Error::config(Some(e.line), format!("unknown trial '{}'", e.value)))?
                    }
                    "center" => {
                        let v: Vec<f64> = parse_list(&e.value, e.line, "center")?;
                        if v.len() != dim || v.iter().any(|x| !x.is_finite()) {
                            return Err(Error::config(Some(e.line), format!("center needs {dim} finite components")));
                        }
                        frame.center = Some(v);
                    }
                    _ => {
                        let w = parse_f64(e)?;
                        if w <= 0.0 {
                            return Err(Error::config(Some(e.line), "width must be positive"));
                        }
                        frame.width = Some(w);
                    }
                }
            }
        }

        let mut output = OutputConfig { dir: None, json: true, csv: true };
        if let Some(o) = ini.section("output") {
            check_keys(o, &["dir", "formats"])?;
            if let Some(e) = get(o, "dir") {
                if e.value.is_empty() {
                    return Err(Error::config(Some(e.line), "dir must not be empty"));
                }
                output.dir = Some(e.value.clone());
            }
            if let Some(e) = get(o, "formats") {
                output.json = false;
                output.csv = false;
                for f in e.value.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                    match f {
                        "json" => output.json = true,
                        "csv" => output.csv = true,
                        other => return Err(Error::config(Some(e.line), format!("unknown format '{other}'"))),
                    }
                }
            }
        }

        Ok(RunConfig {
            lattice,
            potential,
            window: BandWindow::new(first, count),
            bands,
            grid: GridConfig { sizes, cutoff, samples },
            optimizer,
            start,
            frame,
            output,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MATHIEU: &str = "\
# Mathieu test case
[lattice]
a1 = 6.283185307179586

[potential]
preset = mathieu1d
V0 = 0.5   # amplitude

[window]
n = 0
m = 1

[grid]
N = 64
cutoff = 8
";

    #[test]
    fn parses_mathieu() {
        let cfg = RunConfig::parse(MATHIEU).unwrap();
        assert_eq!(cfg.lattice, vec![vec![std::f64::consts::TAU]]);
        assert_eq!(cfg.grid.sizes, vec![64]);
        assert_eq!(cfg.window.count, 1);
        assert_eq!(cfg.potential, PotentialSpec::mathieu1d(0.5));
        assert_eq!(cfg.frame.trial, TrialKind::Eigen);
    }

    #[test]
    fn missing_window_names_the_section() {
        let text = MATHIEU.replace("[window]\nn = 0\nm = 1\n", "");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("[window]"), "{err}");
    }

    #[test]
    fn unknown_key_carries_line() {
        let text = MATHIEU.replace("cutoff = 8", "cutoff = 8\nfoo = 1");
        match RunConfig::parse(&text).unwrap_err() {
            Error::Config { line: Some(l), msg } => {
                assert_eq!(l, 16);
                assert!(msg.contains("foo"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn explicit_coefficients_match_preset() {
        let text = MATHIEU.replace("preset = mathieu1d\nV0 = 0.5   # amplitude", "G = 1 ; 0.5, 0\nG = -1 ; 0.5, 0");
        assert_eq!(RunConfig::parse(&text).unwrap().potential, PotentialSpec::mathieu1d(0.5));
    }

    #[test]
    fn potential_line_pads_and_rejects() {
        assert_eq!(parse_potential_line("1, -2 ; 0.25, -1", 1).unwrap(), ([1, -2, 0], c(0.25, -1.0)));
        assert!(parse_potential_line("1,2,3,4 ; 1,0", 1).is_err());
        assert!(parse_potential_line("1 ; 1", 1).is_err());
        assert!(parse_potential_line("1 ; nan, 0", 1).is_err());
    }

    #[test]
    fn syntax_errors_have_lines() {
        assert_eq!(parse_ini("[a]\nnovalue\n").unwrap_err(), Error::Parse { line: 2, msg: "expected 'key = value'".into() });
        assert!(matches!(parse_ini("x = 1").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(matches!(parse_ini("[a]\n[a]").unwrap_err(), Error::Parse { line: 2, .. }));
    }
}
