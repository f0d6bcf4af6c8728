//! Declarative run configuration: one TOML file describing the game, the
//! run parameters, and the output locations. Unknown keys are rejected so
//! config drift fails loudly, and every parse error carries the TOML line.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use saddlesim_core::ConvexSet;
use saddlesim_sim::dynamics::{RunConfig, DEFAULT_ETA, DEFAULT_ROUND_LOG_STRIDE};
use saddlesim_sim::game::GameInstance;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub game: GameSection,
    pub run: RunSection,
    pub out: OutSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub set_x: SetDesc,
    pub set_y: SetDesc,
    /// Inline dense matrix, row-major.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Path to a dense CSV (rows = n, comma-separated), relative to the
    /// config file.
    #[serde(default)]
    pub matrix_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetDesc {
    Simplex {
        dim: usize,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Vpolytope {
        vertices: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub delta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub max_phases: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub batch_c: f64,
    #[serde(default = "one")]
    pub fallback_c: f64,
    #[serde(default)]
    pub audit_enabled: bool,
    #[serde(default = "default_stride")]
    pub round_log_stride: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutSection {
    pub dir: PathBuf,
    #[serde(default)]
    pub emit_svg: bool,
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn one() -> f64 {
    1.0
}

fn default_stride() -> u64 {
    DEFAULT_ROUND_LOG_STRIDE
}

/// A parsed config plus the raw bytes (hashed into the run metadata and
/// copied into the run directory for exact replay).
pub struct LoadedConfig {
    pub config: ConfigFile,
    pub raw: String,
    pub dir: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig, String> {
    let raw = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let config: ConfigFile = toml::from_str(&raw)
        .map_err(|e| format!("config {}: {e}", path.display()))?;
    validate(&config)?;
    Ok(LoadedConfig {
        config,
        raw,
        dir: path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf(),
    })
}

fn validate(config: &ConfigFile) -> Result<(), String> {
    let run = &config.run;
    if run.delta.is_nan() || run.delta <= 0.0 || run.delta > 0.5 {
        return Err(format!(
            "run.delta = {} violates the required range (0, 1/2]",
            run.delta
        ));
    }
    if run.max_phases == 0 {
        return Err("run.max_phases must be >= 1".into());
    }
    if run.eta.is_nan() || run.eta <= 0.0 {
        return Err("run.eta must be positive".into());
    }
    if run.batch_c.is_nan() || run.batch_c <= 0.0 || run.fallback_c.is_nan() || run.fallback_c <= 0.0 {
        return Err("run.batch_c and run.fallback_c must be positive".into());
    }
    if run.round_log_stride == 0 {
        return Err("run.round_log_stride must be >= 1".into());
    }
    match (&config.game.matrix, &config.game.matrix_csv) {
        (Some(_), Some(_)) => Err("give game.matrix or game.matrix_csv, not both".into()),
        (None, None) => Err("game needs a matrix (game.matrix or game.matrix_csv)".into()),
        _ => Ok(()),
    }
}

pub fn build_set(desc: &SetDesc) -> Result<ConvexSet, String> {
    let set = match desc {
        SetDesc::Simplex { dim } => ConvexSet::simplex(*dim),
        SetDesc::Box { lower, upper } => ConvexSet::bounded_box(
            DVector::from_vec(lower.clone()),
            DVector::from_vec(upper.clone()),
        ),
        SetDesc::Ball { center, radius } => {
            ConvexSet::ball(DVector::from_vec(center.clone()), *radius)
        }
        SetDesc::Vpolytope { vertices } => ConvexSet::vpolytope(
            vertices.iter().cloned().map(DVector::from_vec).collect(),
        ),
    };
    set.map_err(|e| e.to_string())
}

fn load_matrix(loaded: &LoadedConfig) -> Result<DMatrix<f64>, String> {
    let rows: Vec<Vec<f64>> = if let Some(rows) = &loaded.config.game.matrix {
        rows.clone()
    } else {
        let rel = loaded.config.game.matrix_csv.as_ref().unwrap();
        let path = loaded.dir.join(rel);
        let text = fs::read_to_string(&path)
            .map_err(|e| format!("cannot read matrix csv {}: {e}", path.display()))?;
        let mut rows = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> = line
                .split(',')
                .map(|cell| cell.trim().parse::<f64>())
                .collect();
            rows.push(row.map_err(|e| {
                format!("{}:{}: bad matrix entry: {e}", path.display(), idx + 1)
            })?);
        }
        rows
    };
    let n = rows.len();
    if n == 0 {
        return Err("matrix has no rows".into());
    }
    let m = rows[0].len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err("matrix rows must be nonempty and equal length".into());
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(n, m, &flat))
}

pub fn build_game(loaded: &LoadedConfig) -> Result<GameInstance, String> {
    let set_x = build_set(&loaded.config.game.set_x)?;
    let set_y = build_set(&loaded.config.game.set_y)?;
    let a = load_matrix(loaded)?;
    GameInstance::new(set_x, set_y, a).map_err(|e| e.to_string())
}

pub fn build_run_config(loaded: &LoadedConfig) -> RunConfig {
    let run = &loaded.config.run;
    RunConfig {
        delta: run.delta,
        eta: run.eta,
        max_phases: run.max_phases,
        batch_c: run.batch_c,
        fallback_c: run.fallback_c,
        seed: run.seed,
        audit: run.audit_enabled,
        round_log_stride: run.round_log_stride,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(toml_text: &str) -> Result<ConfigFile, String> {
        let config: ConfigFile =
            toml::from_str(toml_text).map_err(|e| e.to_string())?;
        validate(&config)?;
        Ok(config)
    }

    const GOOD: &str = r#"
[game]
set_x = { kind = "simplex", dim = 2 }
set_y = { kind = "simplex", dim = 2 }
matrix = [[1.0, -1.0], [-1.0, 1.0]]

[run]
delta = 0.1
max_phases = 5
seed = 1

[out]
dir = "out"
"#;

    #[test]
    fn good_config_parses_with_defaults() {
        let c = parse(GOOD).unwrap();
        assert_eq!(c.run.eta, DEFAULT_ETA);
        assert_eq!(c.run.batch_c, 1.0);
        assert!(!c.run.audit_enabled);
        assert_eq!(c.run.round_log_stride, 100);
    }

    #[test]
    fn delta_above_half_is_rejected_citing_the_bound() {
        let bad = GOOD.replace("delta = 0.1", "delta = 0.7");
        let err = parse(&bad).unwrap_err();
        assert!(err.contains("(0, 1/2]"), "message was: {err}");
    }

    #[test]
    fn unknown_keys_are_errors() {
        let bad = GOOD.replace("seed = 1", "seed = 1\nturbo = true");
        let err = parse(&bad).unwrap_err();
        assert!(err.contains("turbo"), "message was: {err}");
    }

    #[test]
    fn matrix_must_be_given_exactly_once() {
        let none = GOOD.replace("matrix = [[1.0, -1.0], [-1.0, 1.0]]", "");
        assert!(parse(&none).is_err());
        let both = GOOD.replace(
            "matrix = [[1.0, -1.0], [-1.0, 1.0]]",
            "matrix = [[1.0]]\nmatrix_csv = \"a.csv\"",
        );
        assert!(parse(&both).is_err());
    }

    #[test]
    fn set_descriptors_build() {
        assert!(build_set(&SetDesc::Simplex { dim: 3 }).is_ok());
        assert!(build_set(&SetDesc::Box {
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0]
        })
        .is_ok());
        assert!(build_set(&SetDesc::Ball {
            center: vec![0.0, 0.0],
            radius: 2.0
        })
        .is_ok());
        // Radius zero propagates the construction error.
        assert!(build_set(&SetDesc::Ball {
            center: vec![0.0],
            radius: 0.0
        })
        .is_err());
    }
}
