//! Pipeline configuration: one TOML file, every field defaulted.
//!
//! A user file only needs the keys it changes. It is merged over the
//! embedded defaults, `--set section.key=value` overrides are applied on
//! top, and keys that do not exist in the schema are rejected.

use std::path::{Path, PathBuf};

use qrse_core::diagnostics::{
    AdfOptions, DfkOptions, KpssOptions, RamseyRothmanOptions, TestSpec, DEFAULT_SIGNIFICANCE, DEFAULT_SURROGATES,
};
use qrse_core::fit::RollingOptions;
use qrse_core::ingest::{CsvLayout, TruncationScope};
use qrse_core::model::ReturnGrid;
use qrse_core::regimes::RegimeOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub input: InputConfig,
    pub truncation: TruncationConfig,
    pub regimes: RegimeOptions,
    pub rolling: RollingOptions,
    pub diagnostics: DiagnosticsConfig,
    pub selftest: SelftestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputConfig {
    /// Price file; relative paths resolve against the config file.
    pub prices: PathBuf,
    pub layout: CsvLayout,
    /// Optional `date,close` index file. Without it the index is the
    /// cap-weighted average of the panel, which needs a market-cap column.
    pub index: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub enabled: bool,
    pub k_sd: f64,
    pub scope: TruncationScope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub enabled: bool,
    pub window_sizes: Vec<usize>,
    pub stride: usize,
    pub significance: f64,
    pub tests: Vec<TestSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelftestConfig {
    pub seed: u64,
    pub identity_points: usize,
    pub recovery_windows: usize,
    pub recovery_samples: usize,
    pub grid_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("qrse-out"),
            jobs: 0,
            input: InputConfig {
                prices: PathBuf::from("prices.csv"),
                layout: CsvLayout::Long,
                index: None,
            },
            truncation: TruncationConfig {
                enabled: true,
                k_sd: 8.0,
                scope: TruncationScope::Pooled,
            },
            regimes: RegimeOptions::default(),
            rolling: RollingOptions::default(),
            diagnostics: DiagnosticsConfig {
                enabled: true,
                window_sizes: vec![500, 750, 1000],
                stride: 20,
                significance: DEFAULT_SIGNIFICANCE,
                tests: ["adf", "kpss", "ramsey_rothman", "dfk", "hvg_degree", "clustering"]
                    .iter()
                    .filter_map(|n| default_test(n))
                    .collect(),
            },
            selftest: SelftestConfig {
                seed: 0,
                identity_points: 10_000,
                recovery_windows: 5,
                recovery_samples: 100_000,
                grid_points: 801,
            },
        }
    }
}

/// Default parameters for a test, keyed by its `test` tag.
pub fn default_test(tag: &str) -> Option<TestSpec> {
    Some(match tag {
        "adf" => TestSpec::Adf(AdfOptions::default()),
        "kpss" => TestSpec::Kpss(KpssOptions::default()),
        "ramsey_rothman" => TestSpec::RamseyRothman(RamseyRothmanOptions::default()),
        "dfk" => TestSpec::Dfk(DfkOptions::default()),
        "hvg_degree" => TestSpec::HvgDegree {
            surrogates: DEFAULT_SURROGATES,
            seed: 0,
        },
        "clustering" => TestSpec::Clustering { seed: 0 },
        _ => return None,
    })
}

impl PipelineConfig {
    /// Parse a TOML document over the defaults, then apply `key=value` overrides.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut user: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        if let Some(Value::Table(d)) = user.get_mut("diagnostics") {
            if let Some(Value::Array(tests)) = d.get_mut("tests") {
                fill_test_defaults(tests)?;
            }
        }
        let mut merged = to_table(&Self::default())?;
        merge(&mut merged, user.clone());
        let config: Self = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&user, &to_table(&config)?, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(CliError::Config(format!("unknown key(s): {}", unknown.join(", "))));
        }
        config.validate()?;
        Ok(config)
    }

    /// Load a config file, resolving relative input paths against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = Self::from_toml_str(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.input.prices = base.join(&config.input.prices);
        config.input.index = config.input.index.map(|p| base.join(p));
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Hex SHA-256 of the serialized config, ignoring fields that cannot
    /// change results (output directory and thread count).
    pub fn hash(&self) -> Result<String> {
        let canonical = Self {
            out_dir: PathBuf::new(),
            jobs: 0,
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Replace every seed in the config.
    pub fn set_seed(&mut self, seed: u64) {
        self.selftest.seed = seed;
        for t in &mut self.diagnostics.tests {
            match t {
                TestSpec::RamseyRothman(o) => o.seed = seed,
                TestSpec::Dfk(o) => o.seed = seed,
                TestSpec::HvgDegree { seed: s, .. } | TestSpec::Clustering { seed: s } => *s = seed,
                TestSpec::Adf(_) | TestSpec::Kpss(_) => {}
            }
        }
    }

    /// `(test, seed)` for every seeded test, plus the selftest seed.
    pub fn seeds(&self) -> Vec<(String, u64)> {
        let mut out: Vec<(String, u64)> = self
            .diagnostics
            .tests
            .iter()
            .filter_map(|t| {
                let seed = match t {
                    TestSpec::RamseyRothman(o) => o.seed,
                    TestSpec::Dfk(o) => o.seed,
                    TestSpec::HvgDegree { seed, .. } | TestSpec::Clustering { seed } => *seed,
                    TestSpec::Adf(_) | TestSpec::Kpss(_) => return None,
                };
                Some((t.name().to_string(), seed))
            })
            .collect();
        out.push(("selftest".into(), self.selftest.seed));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let t = &self.truncation;
        if !(t.k_sd > 0.0 && t.k_sd.is_finite()) {
            return bad(format!("truncation.k_sd must be positive, got {}", t.k_sd));
        }
        let g = &self.regimes;
        if g.short_span < 1 || g.long_span <= g.short_span {
            return bad(format!(
                "regimes: need 1 <= short_span < long_span, got {} and {}",
                g.short_span, g.long_span
            ));
        }
        let r = &self.rolling;
        if r.window_days < 1 || r.stride < 1 || r.chunk_size < 1 || r.min_obs < 1 {
            return bad("rolling: window_days, stride, chunk_size and min_obs must be at least 1".into());
        }
        if r.grid_points < ReturnGrid::MIN_POINTS {
            return bad(format!(
                "rolling.grid_points must be at least {}, got {}",
                ReturnGrid::MIN_POINTS,
                r.grid_points
            ));
        }
        if !(r.grid_padding >= 0.0 && r.grid_padding.is_finite()) {
            return bad(format!("rolling.grid_padding must be non-negative, got {}", r.grid_padding));
        }
        let f = &r.fit;
        if f.max_iterations < 1 || !(f.gradient_tolerance > 0.0) || !(f.fd_step > 0.0) {
            return bad("rolling.fit: max_iterations, gradient_tolerance and fd_step must be positive".into());
        }
        f.init.validate().map_err(|e| CliError::Config(format!("rolling.fit.init: {e}")))?;
        let d = &self.diagnostics;
        if d.stride < 1 || d.window_sizes.contains(&0) {
            return bad("diagnostics: stride and window sizes must be at least 1".into());
        }
        if !(d.significance > 0.0 && d.significance < 1.0) {
            return bad(format!("diagnostics.significance must lie in (0, 1), got {}", d.significance));
        }
        let s = &self.selftest;
        if s.identity_points < 1 || s.recovery_samples < 1000 || s.grid_points < ReturnGrid::MIN_POINTS {
            return bad("selftest: need identity_points >= 1, recovery_samples >= 1000 and a valid grid".into());
        }
        Ok(())
    }
}

fn to_table<T: Serialize>(value: &T) -> Result<Table> {
    Table::try_from(value).map_err(|e| CliError::Config(e.to_string()))
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Each `[[diagnostics.tests]]` entry only needs `test` plus the fields it changes.
fn fill_test_defaults(tests: &mut [Value]) -> Result<()> {
    for (i, t) in tests.iter_mut().enumerate() {
        let Value::Table(user) = t else {
            return Err(CliError::Config(format!("diagnostics.tests[{i}] must be a table")));
        };
        let tag = user.get("test").and_then(Value::as_str).unwrap_or("");
        let Some(spec) = default_test(tag) else {
            return Err(CliError::Config(format!(
                "diagnostics.tests[{i}]: unknown test `{tag}` (expected adf, kpss, ramsey_rothman, dfk, hvg_degree or clustering)"
            )));
        };
        let mut full = to_table(&spec)?;
        merge(&mut full, user.clone());
        *user = full;
    }
    Ok(())
}

fn unknown_keys(user: &Table, effective: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (v, effective.get(k)) {
            (_, None) => out.push(path),
            (Value::Table(u), Some(Value::Table(e))) => unknown_keys(u, e, &path, out),
            (Value::Array(u), Some(Value::Array(e))) => {
                for (i, (a, b)) in u.iter().zip(e).enumerate() {
                    if let (Value::Table(a), Value::Table(b)) = (a, b) {
                        unknown_keys(a, b, &format!("{path}[{i}]"), out);
                    }
                }
            }
            _ => {}
        }
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a bare string
/// when it does not parse as one.
fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override `{spec}` has an empty key")));
    }
    let mut node = table;
    for k in &keys[..keys.len() - 1] {
        let entry = node.entry(k.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("override `{spec}`: `{k}` is not a section"))),
        };
    }
    node.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = PipelineConfig::default();
        let text = c.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text, &[]).unwrap(), c);
    }

    #[test]
    fn partial_file_and_overrides() {
        let text = "[rolling]\nwindow_days = 80\n\n[[diagnostics.tests]]\ntest = \"ramsey_rothman\"\nlag = 3\n";
        let c = PipelineConfig::from_toml_str(text, &["rolling.stride=5".into(), "input.layout=wide".into()]).unwrap();
        assert_eq!(c.rolling.window_days, 80);
        assert_eq!(c.rolling.stride, 5);
        assert_eq!(c.rolling.grid_points, 801);
        assert_eq!(c.input.layout, CsvLayout::Wide);
        assert_eq!(
            c.diagnostics.tests,
            vec![TestSpec::RamseyRothman(RamseyRothmanOptions {
                lag: 3,
                ..Default::default()
            })]
        );
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        let e = PipelineConfig::from_toml_str("[rolling]\nwindow_dayz = 80\n", &[]).unwrap_err();
        assert!(e.to_string().contains("rolling.window_dayz"), "{e}");
        let e = PipelineConfig::from_toml_str("", &["truncation.k_sd=-1".into()]).unwrap_err();
        assert!(e.to_string().contains("k_sd"), "{e}");
        let e = PipelineConfig::from_toml_str("[[diagnostics.tests]]\ntest = \"bds\"\n", &[]).unwrap_err();
        assert!(e.to_string().contains("bds"), "{e}");
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.jobs = 3;
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.set_seed(9);
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert!(b.seeds().iter().all(|(_, s)| *s == 9));
    }
}
