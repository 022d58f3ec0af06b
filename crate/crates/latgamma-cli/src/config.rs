//! Flat key-value run configuration.
//!
//! The file is INI-like: `[section]` headers and `key = value` lines, with
//! `#` comments. Values stay strings until a typed getter pulls them out, and
//! command-line flags override file keys.

use anyhow::{anyhow, bail, Context, Result};
use latgamma::field::{AxisBound, HalfSpaceCut, TargetSet};
use latgamma::gammalab::Schedule;
use latgamma::kernel::Kernel;
use latgamma::lattice::PeriodicLattice;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    entries: BTreeMap<(String, String), String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {}: unterminated section header", lineno + 1))?;
                section = name.trim().to_lowercase();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected 'key = value', got '{line}'", lineno + 1))?;
            entries.insert(
                (section.clone(), key.trim().to_lowercase()),
                value.trim().to_string(),
            );
        }
        Ok(RunConfig { entries })
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        RunConfig::parse(&text)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.entries.insert((section.to_string(), key.to_string()), value.to_string());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries.get(&(section.to_string(), key.to_string())).map(|s| s.as_str())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key)
            .ok_or_else(|| anyhow!("missing config key [{section}] {key}"))
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.get(section, key)
            .map(|s| s.parse::<f64>().with_context(|| format!("[{section}] {key} = '{s}'")))
            .transpose()
    }

    pub fn require_f64(&self, section: &str, key: &str) -> Result<f64> {
        self.get_f64(section, key)?
            .ok_or_else(|| anyhow!("missing config key [{section}] {key}"))
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        self.get(section, key)
            .map(|s| s.parse::<usize>().with_context(|| format!("[{section}] {key} = '{s}'")))
            .transpose()
    }

    pub fn get_u64(&self, section: &str, key: &str) -> Result<Option<u64>> {
        self.get(section, key)
            .map(|s| s.parse::<u64>().with_context(|| format!("[{section}] {key} = '{s}'")))
            .transpose()
    }

    fn vec_f64(s: &str) -> Result<Vec<f64>> {
        s.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| anyhow!("bad number '{p}': {e}")))
            .collect()
    }

    // ---- assembled objects -------------------------------------------------

    pub fn dim(&self) -> Result<usize> {
        Ok(self.get_usize("kernel", "dim")?.unwrap_or(2))
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let dim = self.dim()?;
        let kind = self.get("kernel", "kind").unwrap_or("ball");
        let kernel = match kind {
            "ball" => {
                let r = self.get_f64("kernel", "radius")?.unwrap_or(1.0);
                Kernel::ball(dim, r)?
            }
            "exp" => {
                let rate = self.require_f64("kernel", "rate")?;
                let cutoff = self.require_f64("kernel", "cutoff")?;
                Kernel::truncated_exponential(dim, rate, cutoff)?
            }
            "table" => {
                let path = self.require("kernel", "table")?;
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading kernel table {path}"))?;
                let mut samples = Vec::new();
                for line in text.lines() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let mut it = line.split_whitespace();
                    let r: f64 = it
                        .next()
                        .ok_or_else(|| anyhow!("table line '{line}'"))?
                        .parse()?;
                    let v: f64 = it
                        .next()
                        .ok_or_else(|| anyhow!("table line '{line}' needs two columns"))?
                        .parse()?;
                    samples.push((r, v));
                }
                Kernel::tabulated(dim, samples)?
            }
            other => bail!("unknown kernel kind '{other}' (ball | exp | table)"),
        };
        Ok(kernel)
    }

    pub fn lattice(&self) -> Result<PeriodicLattice> {
        let dim = self.dim()?;
        match self.get("lattice", "offsets") {
            None => Ok(PeriodicLattice::cubic(dim)),
            Some(s) => {
                let offsets: Vec<Vec<f64>> = s
                    .split(';')
                    .map(|o| Self::vec_f64(o.trim()))
                    .collect::<Result<_>>()?;
                Ok(PeriodicLattice::with_offsets(dim, offsets)?)
            }
        }
    }

    pub fn boundary(&self) -> Result<Vec<AxisBound>> {
        let dim = self.dim()?;
        match self.get("field", "boundary") {
            None => Ok(vec![AxisBound::Restricted; dim]),
            Some(s) => {
                let toks: Vec<&str> = s.split_whitespace().collect();
                if toks.len() != dim {
                    bail!("boundary needs {dim} tokens, got {}", toks.len());
                }
                toks.iter()
                    .map(|t| {
                        if *t == "restricted" {
                            Ok(AxisBound::Restricted)
                        } else if *t == "periodic" {
                            Ok(AxisBound::periodic(dim))
                        } else if let Some(rest) = t.strip_prefix("periodic:") {
                            let twist: Vec<i64> = rest
                                .split(',')
                                .map(|p| p.trim().parse::<i64>().map_err(|e| anyhow!("twist '{p}': {e}")))
                                .collect::<Result<_>>()?;
                            Ok(AxisBound::Periodic { twist })
                        } else {
                            bail!("unknown boundary token '{t}'")
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn window_extents(&self) -> Result<Vec<usize>> {
        let dim = self.dim()?;
        let s = self.require("field", "window")?;
        let exts: Vec<usize> = s
            .split_whitespace()
            .map(|p| p.parse::<usize>().map_err(|e| anyhow!("window extent '{p}': {e}")))
            .collect::<Result<_>>()?;
        if exts.len() == 1 && dim > 1 {
            return Ok(vec![exts[0]; dim]);
        }
        if exts.len() != dim {
            bail!("window needs {dim} extents, got {}", exts.len());
        }
        Ok(exts)
    }

    pub fn target(&self) -> Result<TargetSet> {
        let dim = self.dim()?;
        let kind = self.get("target", "kind").unwrap_or("halfspace");
        let set = match kind {
            "fullspace" => TargetSet::FullSpace,
            "halfspace" => {
                let nu = Self::vec_f64(self.get("target", "nu").unwrap_or("1,0"))?;
                let n = (nu.iter().map(|c| c * c).sum::<f64>()).sqrt();
                if n == 0.0 {
                    bail!("target nu must be nonzero");
                }
                TargetSet::HalfSpace {
                    normal: nu.iter().map(|c| c / n).collect(),
                    offset: self.get_f64("target", "offset")?.unwrap_or(0.0),
                }
            }
            "polytope" => {
                let s = self.require("target", "cuts")?;
                let cuts: Vec<HalfSpaceCut> = s
                    .split(';')
                    .map(|cut| -> Result<HalfSpaceCut> {
                        let (n, c) = cut
                            .trim()
                            .split_once(':')
                            .ok_or_else(|| anyhow!("cut '{cut}' needs 'normal:offset'"))?;
                        Ok(HalfSpaceCut {
                            normal: Self::vec_f64(n)?,
                            offset: c.trim().parse()?,
                        })
                    })
                    .collect::<Result<_>>()?;
                TargetSet::Polytope(cuts)
            }
            "ball" => TargetSet::Ball {
                center: Self::vec_f64(self.get("target", "center").unwrap_or("0,0"))?,
                radius: self.require_f64("target", "radius")?,
            },
            "perforated" => TargetSet::PerforatedConstant {
                n: self.get_u64("target", "n")?.unwrap_or(2) as u32,
            },
            other => bail!("unknown target kind '{other}'"),
        };
        set.validate(dim).map_err(|e| anyhow!("{e}"))?;
        Ok(set)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let window = self.get_f64("schedule", "window")?.unwrap_or(0.5);
        match self.get("schedule", "explicit") {
            Some(s) => {
                let steps: Vec<(f64, f64)> = s
                    .split(';')
                    .map(|pair| -> Result<(f64, f64)> {
                        let v = Self::vec_f64(pair.trim())?;
                        if v.len() != 2 {
                            bail!("schedule step '{pair}' needs 'eps,eta'");
                        }
                        Ok((v[0], v[1]))
                    })
                    .collect::<Result<_>>()?;
                Ok(Schedule::explicit(steps, window, "explicit")?)
            }
            None => {
                let eps0 = self.get_f64("schedule", "eps0")?.unwrap_or(1.0 / 256.0);
                let steps = self.get_usize("schedule", "steps")?.unwrap_or(5);
                let factor = self.get_f64("schedule", "factor")?.unwrap_or(0.5);
                Ok(Schedule::sqrt_rule(eps0, steps, factor, window)?)
            }
        }
    }

    /// Direction and offset for half-space experiments, independent of the
    /// configured target kind (the `--nu` flag implies a half-space).
    pub fn halfspace_direction(&self) -> Result<(Vec<f64>, f64)> {
        let dim = self.dim()?;
        let nu = match self.get("target", "nu") {
            Some(s) => Self::vec_f64(s)?,
            None => {
                let mut v = vec![0.0; dim];
                v[0] = 1.0;
                v
            }
        };
        if nu.len() != dim {
            bail!("target nu needs {dim} components, got {}", nu.len());
        }
        let n = (nu.iter().map(|c| c * c).sum::<f64>()).sqrt();
        if n == 0.0 {
            bail!("target nu must be nonzero");
        }
        let offset = self.get_f64("target", "offset")?.unwrap_or(0.0);
        Ok((nu.iter().map(|c| c / n).collect(), offset))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("output", "dir").unwrap_or("out"))
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.get_u64("run", "seed")?.unwrap_or(0))
    }

    pub fn threads(&self) -> Result<usize> {
        if let Some(n) = self.get_usize("run", "threads")? {
            return Ok(n);
        }
        if let Ok(env) = std::env::var("LATGAMMA_THREADS") {
            return env
                .parse::<usize>()
                .with_context(|| format!("LATGAMMA_THREADS = '{env}'"));
        }
        Ok(0)
    }

    pub fn delta(&self) -> Result<f64> {
        Ok(self.get_f64("coarsegrain", "delta")?.unwrap_or(0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_overrides() {
        let text = "\
[kernel]
kind = ball   # a comment
radius = 2.0
dim = 1

[field]
eps = 0.5
window = 8
";
        let mut cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.get("kernel", "kind"), Some("ball"));
        let k = cfg.kernel().unwrap();
        assert_eq!(k.support_radius(), 2.0);
        cfg.set("kernel", "radius", "3.0");
        assert_eq!(cfg.kernel().unwrap().support_radius(), 3.0);
        assert_eq!(cfg.window_extents().unwrap(), vec![8]);
    }

    #[test]
    fn parses_targets_and_schedules() {
        let text = "\
[kernel]
dim = 2
[target]
kind = polytope
cuts = -1,0:0 ; 1,0:1 ; 0,-1:0 ; 0,1:1
[schedule]
eps0 = 0.0625
steps = 2
factor = 0.25
window = 1.5
";
        let cfg = RunConfig::parse(text).unwrap();
        let t = cfg.target().unwrap();
        assert!(matches!(t, TargetSet::Polytope(ref c) if c.len() == 4));
        let s = cfg.schedule().unwrap();
        assert_eq!(s.steps.len(), 2);
        assert_eq!(s.window, 1.5);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(RunConfig::parse("[kernel\nkind = ball").is_err());
        assert!(RunConfig::parse("no equals sign here").is_err());
    }
}
