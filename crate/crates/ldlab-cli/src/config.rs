//! Sectioned key-value (INI-style) configuration with `--set` overrides.
//!
//! One section per module, diffable plain text, no schema toolchain.
//! Typed accessors validate on read and report the offending
//! `[section] key` (with the source line when it came from a file).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use ldlab_core::maps::{MapSystem, VianaParams};
use ldlab_core::observable::{Observable, ObservableKind};

/// Default configuration embedded in the binary; every key the runners
/// read appears here with its default.
pub const DEFAULT_CONFIG: &str = "\
[run]
seed = 42
label = default
workers = 0

[map]
kind = doubling
gamma = 0.5
viana_d = 16
viana_alpha = 0.01
viana_a0 = auto

[observable]
kind = cosine
constant_value = 1.0
bump_center = 0.3
bump_width = 0.2
bump_exponent = 0.5

[center]
method = ulam
bins = 1024
budget = 100000

[ulam]
bins = 2048
n_max = 200
dump_matrix = false
refine_check = false

[fit]
window_min = 1
window_max = 0

[theory]
theta = 1.0
tau_prime_scale = 1.0

[ld]
ns = 16,64,256,1024,4096
epsilons = 0.05,0.1,0.2
samples = 100000
burn_in = 1000

[moments]
qs = 1,2,4,8
ns = 100,1000,10000
samples = 100000
burn_in = 1000
held_out_q = 6
held_out_n = 3000

[expmoment]
ns = 10,100,1000
samples = 100000
burn_in = 1000

[gordin]
envelope = fit
synthetic_c = 1.0
synthetic_tau = 1.0
synthetic_theta = 1.0
tail_target = 1e-6
cap = 1000
dump_grid = false
";

// key -> (value, source line or 0 for overrides)
type Section = BTreeMap<String, (String, usize)>;

#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, Section>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("config line {line_no}: unterminated section header"))?;
                section = name.trim().to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!("config line {line_no}: expected `key = value`, got {line:?}")
            })?;
            if section.is_empty() {
                bail!("config line {line_no}: key outside any [section]");
            }
            cfg.sections
                .get_mut(&section)
                .unwrap()
                .insert(key.trim().to_string(), (value.trim().to_string(), line_no));
        }
        Ok(cfg)
    }

    pub fn defaults() -> Self {
        Self::parse(DEFAULT_CONFIG).expect("embedded default config parses")
    }

    /// Merge `other` on top of `self` (later wins).
    pub fn merge(&mut self, other: &Config) {
        for (sec, keys) in &other.sections {
            let dst = self.sections.entry(sec.clone()).or_default();
            for (k, v) in keys {
                dst.insert(k.clone(), v.clone());
            }
        }
    }

    /// Apply a `section.key=value` override.
    pub fn apply_set(&mut self, expr: &str) -> Result<()> {
        let (path, value) = expr
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects section.key=value, got {expr:?}"))?;
        let (sec, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| anyhow!("--set expects section.key=value, got {expr:?}"))?;
        self.sections
            .entry(sec.trim().to_string())
            .or_default()
            .insert(key.trim().to_string(), (value.trim().to_string(), 0));
        Ok(())
    }

    /// Canonical resolved text (sorted sections and keys).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (sec, keys) in &self.sections {
            let _ = writeln!(out, "[{sec}]");
            for (k, (v, _)) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
            let _ = writeln!(out);
        }
        out
    }

    fn raw(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    fn locate(&self, section: &str, key: &str) -> String {
        match self.raw(section, key) {
            Some((_, 0)) | None => format!("[{section}] {key}"),
            Some((_, line)) => format!("config line {line}: [{section}] {key}"),
        }
    }

    pub fn get_str(&self, section: &str, key: &str) -> Result<&str> {
        self.raw(section, key)
            .map(|(v, _)| v.as_str())
            .ok_or_else(|| anyhow!("missing config key [{section}] {key}"))
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<f64> {
        let v = self.get_str(section, key)?;
        v.parse().with_context(|| {
            format!(
                "{}: expected a number, got {v:?}",
                self.locate(section, key)
            )
        })
    }

    pub fn get_u64(&self, section: &str, key: &str) -> Result<u64> {
        let v = self.get_str(section, key)?;
        v.parse().with_context(|| {
            format!(
                "{}: expected an integer, got {v:?}",
                self.locate(section, key)
            )
        })
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<usize> {
        Ok(self.get_u64(section, key)? as usize)
    }

    pub fn get_bool(&self, section: &str, key: &str) -> Result<bool> {
        let v = self.get_str(section, key)?;
        match v {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => bail!(
                "{}: expected a boolean, got {v:?}",
                self.locate(section, key)
            ),
        }
    }

    pub fn get_list_u64(&self, section: &str, key: &str) -> Result<Vec<u64>> {
        self.get_str(section, key)?
            .split(',')
            .map(|t| {
                t.trim().parse().with_context(|| {
                    format!(
                        "{}: expected integers, got {t:?}",
                        self.locate(section, key)
                    )
                })
            })
            .collect()
    }

    pub fn get_list_f64(&self, section: &str, key: &str) -> Result<Vec<f64>> {
        self.get_str(section, key)?
            .split(',')
            .map(|t| {
                t.trim().parse().with_context(|| {
                    format!("{}: expected numbers, got {t:?}", self.locate(section, key))
                })
            })
            .collect()
    }

    pub fn seed(&self) -> Result<u64> {
        self.get_u64("run", "seed")
    }

    /// Build the configured map, with field diagnostics on rejection.
    pub fn map_system(&self) -> Result<MapSystem> {
        match self.get_str("map", "kind")? {
            "doubling" => Ok(MapSystem::doubling()),
            "intermittent" => {
                let gamma = self.get_f64("map", "gamma")?;
                MapSystem::intermittent(gamma)
                    .map_err(|e| anyhow!("{}: {e}", self.locate("map", "gamma")))
            }
            "viana" => {
                let a0 = match self.get_str("map", "viana_a0")? {
                    "auto" => None,
                    v => Some(v.parse::<f64>().with_context(|| {
                        format!(
                            "{}: expected `auto` or a number",
                            self.locate("map", "viana_a0")
                        )
                    })?),
                };
                let params = VianaParams {
                    a0,
                    alpha: self.get_f64("map", "viana_alpha")?,
                    d: self.get_u64("map", "viana_d")? as u32,
                };
                MapSystem::viana(params).map_err(|e| anyhow!("[map]: {e}"))
            }
            other => bail!("{}: unknown map kind {other:?}", self.locate("map", "kind")),
        }
    }

    pub fn observable(&self) -> Result<Observable> {
        let kind = match self.get_str("observable", "kind")? {
            "cosine" => ObservableKind::Cosine,
            "coordinate" => ObservableKind::CoordinateCentered,
            "holder_bump" => ObservableKind::HolderBump {
                center: self.get_f64("observable", "bump_center")?,
                width: self.get_f64("observable", "bump_width")?,
                exponent: self.get_f64("observable", "bump_exponent")?,
            },
            "viana_fiber" => ObservableKind::VianaFiber,
            "constant" => ObservableKind::Constant(self.get_f64("observable", "constant_value")?),
            other => bail!(
                "{}: unknown observable kind {other:?}",
                self.locate("observable", "kind")
            ),
        };
        Ok(Observable::new(kind))
    }
}

/// Resolve the effective config: defaults, then an optional profile,
/// then an optional file, then `--set` overrides.
pub fn resolve(
    profile: Option<&str>,
    file_text: Option<&str>,
    overrides: &[String],
) -> Result<Config> {
    let mut cfg = Config::defaults();
    if let Some(name) = profile {
        let text = crate::profiles::profile_config(name)
            .ok_or_else(|| anyhow!("unknown profile {name:?} (expected p1..p7)"))?;
        cfg.merge(&Config::parse(text)?);
    }
    if let Some(text) = file_text {
        cfg.merge(&Config::parse(text)?);
    }
    for expr in overrides {
        cfg.apply_set(expr)?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_keys_and_comments() {
        let cfg =
            Config::parse("# comment\n[map]\nkind = doubling\n; more\ngamma = 0.5\n").unwrap();
        assert_eq!(cfg.get_str("map", "kind").unwrap(), "doubling");
        assert_eq!(cfg.get_f64("map", "gamma").unwrap(), 0.5);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("[map\nkind = doubling\n").is_err());
        assert!(Config::parse("kind = doubling\n").is_err());
        assert!(Config::parse("[map]\nkind doubling\n").is_err());
    }

    #[test]
    fn set_overrides_win() {
        let mut cfg = Config::defaults();
        cfg.apply_set("map.kind=intermittent").unwrap();
        cfg.apply_set("map.gamma=0.25").unwrap();
        let m = cfg.map_system().unwrap();
        assert_eq!(m.id(), "intermittent(gamma=0.25)");
        assert!(cfg.apply_set("nonsense").is_err());
    }

    #[test]
    fn gamma_rejection_cites_the_constraint() {
        let mut cfg = Config::defaults();
        cfg.apply_set("map.kind=intermittent").unwrap();
        cfg.apply_set("map.gamma=1.5").unwrap();
        let err = cfg.map_system().unwrap_err().to_string();
        assert!(err.contains("(0, 1]"), "diagnostic was: {err}");
        assert!(err.contains("gamma"));
    }

    #[test]
    fn line_numbers_reported_for_file_keys() {
        let cfg = Config::parse("[map]\nkind = intermittent\ngamma = nope\n").unwrap();
        let err = format!("{:#}", cfg.get_f64("map", "gamma").unwrap_err());
        assert!(err.contains("line 3"), "diagnostic was: {err}");
    }

    #[test]
    fn canonical_text_roundtrips() {
        let cfg = Config::defaults();
        let text = cfg.to_text();
        let re = Config::parse(&text).unwrap();
        assert_eq!(text, re.to_text());
    }

    #[test]
    fn defaults_cover_all_runner_keys() {
        let cfg = Config::defaults();
        cfg.map_system().unwrap();
        cfg.observable().unwrap();
        cfg.seed().unwrap();
        cfg.get_list_u64("ld", "ns").unwrap();
        cfg.get_list_f64("ld", "epsilons").unwrap();
        cfg.get_list_f64("moments", "qs").unwrap();
        cfg.get_bool("ulam", "dump_matrix").unwrap();
    }
}
