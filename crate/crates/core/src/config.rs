//! Flat key=value experiment configuration: total parser, validation at the
//! offending line, and a canonical serializer whose output reparses to an
//! equal configuration.
//!
//! Value syntax: plain numbers, `Npi` box sizes (`8pi` parses to `8·π` so
//! the lattice spacing stays an exact dyadic), comma-separated lists, and
//! bare paths. `#` starts a comment; blank lines are ignored; an empty file
//! yields the all-defaults configuration.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::profile::ProfileKind;
use crate::random::RandomizeMode;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    /// Box side length (key `grid.L`).
    pub grid_l: f64,
    /// Points per axis (key `grid.M`).
    pub grid_m: usize,
    /// Data regularity for profile generation and admissibility checks.
    pub s: f64,
    pub epsilon: f64,
    /// Narrowing exponent of the cube decomposition.
    pub a: u32,
    /// Summability index of the target Besov space.
    pub q: f64,
    /// Outermost dyadic shell; 0 means "derive the largest shell the grid
    /// resolves".
    pub n_max: u32,
    pub n_samples: usize,
    pub seed: u64,
    pub rho_list: Vec<f64>,
    /// Levels for the tail fit; empty means "derive from the sampled
    /// statistic".
    pub lambda_grid: Vec<f64>,
    /// Field file to randomize; `None` generates the configured profile.
    pub profile_path: Option<String>,
    pub profile: ProfileKind,
    pub amplitude: f64,
    pub mode: RandomizeMode,
    /// Viscosity override for solver convergence studies.
    pub nu: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 2,
            grid_l: 2.0 * std::f64::consts::PI,
            grid_m: 256,
            s: -0.8,
            epsilon: 0.05,
            a: 0,
            q: 4.0,
            n_max: 0,
            n_samples: 10_000,
            seed: 0,
            rho_list: vec![2.0, 3.0, 4.0, 6.0, 8.0],
            lambda_grid: Vec::new(),
            profile_path: None,
            profile: ProfileKind::PowerLaw,
            amplitude: 1.0,
            mode: RandomizeMode::Hermitian,
            nu: 1.0,
        }
    }
}

/// Recognized keys, in canonical serialization order.
const KEYS: &[&str] = &[
    "d",
    "grid.L",
    "grid.M",
    "s",
    "epsilon",
    "a",
    "q",
    "n_max",
    "n_samples",
    "seed",
    "rho_list",
    "lambda_grid",
    "profile_path",
    "profile",
    "amplitude",
    "mode",
    "nu",
];

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config { line, message: message.into() }
}

/// Parses a standalone length with the same syntax as `grid.L` values
/// (`8pi`, `pi`, or a plain float).
pub fn length_value(text: &str) -> Result<f64> {
    parse_length(text, 0)
}

/// Parses a length value: a plain float, or `<coef>pi` with an implied
/// coefficient of 1 (`pi` alone). The product with `std::f64::consts::PI`
/// is computed once, so `8pi` is bit-identical to `8.0 * PI`.
fn parse_length(v: &str, line: usize) -> Result<f64> {
    let lower = v.trim();
    if let Some(prefix) = lower.strip_suffix("pi") {
        let coef = if prefix.trim().is_empty() {
            1.0
        } else {
            prefix.trim().parse::<f64>().map_err(|_| {
                cfg_err(line, format!("expected `<number>pi`, got `{v}`"))
            })?
        };
        return Ok(coef * std::f64::consts::PI);
    }
    lower.parse::<f64>().map_err(|_| cfg_err(line, format!("expected a number, got `{v}`")))
}

fn parse_f64(v: &str, line: usize) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|_| cfg_err(line, format!("expected a number, got `{v}`")))
}

fn parse_int<T: std::str::FromStr>(v: &str, line: usize) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| cfg_err(line, format!("expected an integer, got `{v}`")))
}

fn parse_list(v: &str, line: usize) -> Result<Vec<f64>> {
    let v = v.trim();
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|item| parse_f64(item, line)).collect()
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| cfg_err(line, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let value = value.trim();
        if !KEYS.contains(&key) {
            return Err(cfg_err(line, format!("unknown key `{key}`")));
        }
        if let Some(first) = seen.insert(key.to_string(), line) {
            return Err(cfg_err(line, format!("key `{key}` already set on line {first}")));
        }
        match key {
            "d" => cfg.d = parse_int(value, line)?,
            "grid.L" => cfg.grid_l = parse_length(value, line)?,
            "grid.M" => cfg.grid_m = parse_int(value, line)?,
            "s" => cfg.s = parse_f64(value, line)?,
            "epsilon" => cfg.epsilon = parse_f64(value, line)?,
            "a" => cfg.a = parse_int(value, line)?,
            "q" => cfg.q = parse_f64(value, line)?,
            "n_max" => cfg.n_max = parse_int(value, line)?,
            "n_samples" => cfg.n_samples = parse_int(value, line)?,
            "seed" => cfg.seed = parse_int(value, line)?,
            "rho_list" => cfg.rho_list = parse_list(value, line)?,
            "lambda_grid" => cfg.lambda_grid = parse_list(value, line)?,
            "profile_path" => {
                cfg.profile_path = if value.is_empty() { None } else { Some(value.to_string()) }
            }
            "profile" => {
                cfg.profile = value
                    .parse::<ProfileKind>()
                    .map_err(|e| cfg_err(line, format!("bad profile kind: {e}")))?
            }
            "mode" => {
                cfg.mode = match value {
                    "hermitian" => RandomizeMode::Hermitian,
                    "complex" => RandomizeMode::Complex,
                    other => {
                        return Err(cfg_err(
                            line,
                            format!("mode must be `hermitian` or `complex`, got `{other}`"),
                        ))
                    }
                }
            }
            "amplitude" => cfg.amplitude = parse_f64(value, line)?,
            "nu" => cfg.nu = parse_f64(value, line)?,
            _ => unreachable!("key membership checked above"),
        }
    }
    validate(&cfg, &seen)?;
    Ok(cfg)
}

/// Line-attributed semantic validation. Defaults are valid by construction,
/// so every reported line refers to an explicit setting.
fn validate(cfg: &ExperimentConfig, seen: &HashMap<String, usize>) -> Result<()> {
    let at = |key: &str| seen.get(key).copied().unwrap_or(0);
    if cfg.d < 2 || cfg.d > 3 {
        return Err(cfg_err(at("d"), format!("d must be 2 or 3, got {}", cfg.d)));
    }
    if !(cfg.grid_l.is_finite() && cfg.grid_l > 0.0) {
        return Err(cfg_err(at("grid.L"), format!("grid.L must be positive, got {}", cfg.grid_l)));
    }
    if cfg.grid_m < 8 || !cfg.grid_m.is_power_of_two() {
        return Err(cfg_err(
            at("grid.M"),
            format!("grid.M must be a power of two >= 8, got {}", cfg.grid_m),
        ));
    }
    if !cfg.s.is_finite() {
        return Err(cfg_err(at("s"), "s must be finite"));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 0.5) {
        return Err(cfg_err(
            at("epsilon"),
            format!("epsilon must lie in (0, 0.5), got {}", cfg.epsilon),
        ));
    }
    if !(cfg.q >= 1.0 && cfg.q.is_finite()) {
        return Err(cfg_err(at("q"), format!("q must be >= 1, got {}", cfg.q)));
    }
    if cfg.n_max != 0 && !cfg.n_max.is_power_of_two() {
        return Err(cfg_err(
            at("n_max"),
            format!("n_max must be 0 (auto) or a power of two, got {}", cfg.n_max),
        ));
    }
    if cfg.n_samples == 0 {
        return Err(cfg_err(at("n_samples"), "n_samples must be positive"));
    }
    if cfg.rho_list.len() < 2 {
        return Err(cfg_err(at("rho_list"), "rho_list needs at least two orders"));
    }
    for w in cfg.rho_list.windows(2) {
        if !(w[1] > w[0]) {
            return Err(cfg_err(at("rho_list"), "rho_list must be strictly increasing"));
        }
    }
    if cfg.rho_list.iter().any(|r| !(*r >= 2.0 && *r <= 16.0)) {
        return Err(cfg_err(at("rho_list"), "rho_list entries must lie in [2, 16]"));
    }
    for w in cfg.lambda_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(cfg_err(at("lambda_grid"), "lambda_grid must be strictly increasing"));
        }
    }
    if cfg.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(cfg_err(at("lambda_grid"), "lambda_grid entries must be finite and >= 0"));
    }
    if !(cfg.amplitude.is_finite() && cfg.amplitude > 0.0) {
        return Err(cfg_err(
            at("amplitude"),
            format!("amplitude must be positive, got {}", cfg.amplitude),
        ));
    }
    if !(cfg.nu.is_finite() && cfg.nu > 0.0) {
        return Err(cfg_err(at("nu"), format!("nu must be positive, got {}", cfg.nu)));
    }
    Ok(())
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

/// Canonical serialization: every key, fixed order, shortest-roundtrip float
/// formatting. `serialize_config(parse_config(x)?)` reparses to a config
/// equal to `parse_config(x)?`.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let kind = match cfg.profile {
        ProfileKind::PowerLaw => "power-law",
        ProfileKind::SingleShell => "single-shell",
        ProfileKind::TaylorGreen => "taylor-green",
        ProfileKind::MixedMode => "mixed-mode",
    };
    let mode = match cfg.mode {
        RandomizeMode::Hermitian => "hermitian",
        RandomizeMode::Complex => "complex",
    };
    for key in KEYS {
        let value = match *key {
            "d" => cfg.d.to_string(),
            "grid.L" => format!("{:?}", cfg.grid_l),
            "grid.M" => cfg.grid_m.to_string(),
            "s" => format!("{:?}", cfg.s),
            "epsilon" => format!("{:?}", cfg.epsilon),
            "a" => cfg.a.to_string(),
            "q" => format!("{:?}", cfg.q),
            "n_max" => cfg.n_max.to_string(),
            "n_samples" => cfg.n_samples.to_string(),
            "seed" => cfg.seed.to_string(),
            "rho_list" => fmt_list(&cfg.rho_list),
            "lambda_grid" => fmt_list(&cfg.lambda_grid),
            "profile_path" => cfg.profile_path.clone().unwrap_or_default(),
            "profile" => kind.to_string(),
            "amplitude" => format!("{:?}", cfg.amplitude),
            "mode" => mode.to_string(),
            "nu" => format!("{:?}", cfg.nu),
            other => unreachable!("serializer covers every key, missing {other}"),
        };
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_yields_all_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.epsilon, 0.05);
        assert_eq!(cfg.q, 4.0);
        assert_eq!(cfg.grid_m, 256);
        assert_eq!(cfg.grid_l, 2.0 * std::f64::consts::PI);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# experiment\n\n  s = -1.5  # regularity\n\nseed = 42\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.s, -1.5);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn pi_suffix_is_exact() {
        let cfg = parse_config("grid.L = 8pi").unwrap();
        assert_eq!(cfg.grid_l, 8.0 * std::f64::consts::PI);
        let cfg = parse_config("grid.L = pi").unwrap();
        assert_eq!(cfg.grid_l, std::f64::consts::PI);
        let cfg = parse_config("grid.L = 0.5pi").unwrap();
        assert_eq!(cfg.grid_l, 0.5 * std::f64::consts::PI);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let err = parse_config("s = -1\nbogus = 3\n").unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let err = parse_config("seed = 1\nseed = 2\n").unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("already set"), "{message}");
            }
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn semantic_validation_points_at_the_bad_line() {
        let err = parse_config("d = 2\ngrid.M = 100\n").unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("power of two"), "{message}");
            }
            other => panic!("expected config error, got {other}"),
        }
        assert!(parse_config("epsilon = 0.7").is_err());
        assert!(parse_config("rho_list = 4,3").is_err());
        assert!(parse_config("rho_list = 2,32").is_err());
    }

    #[test]
    fn canonical_output_reparses_to_the_same_config() {
        let text = "grid.L = 8pi\ngrid.M = 128\ns = -2\nrho_list = 2,4,8\nmode = complex\nprofile = taylor-green\n";
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&serialize_config(&cfg)).unwrap();
        assert_eq!(cfg, again);
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            (
                2usize..=3,
                prop_oneof![Just(8usize), Just(16), Just(64), Just(256), Just(1024)],
                0.1f64..200.0,
                -3.0f64..1.0,
                0.01f64..0.49,
                0u32..=3,
                1.0f64..16.0,
                prop_oneof![Just(0u32), Just(1), Just(2), Just(8)],
            ),
            (
                1usize..100_000,
                any::<u64>(),
                prop::collection::vec(2.0f64..16.0, 2..6),
                prop::collection::vec(0.0f64..10.0, 0..6),
                prop::option::of("[a-z]{1,12}\\.nsrf"),
                prop_oneof![
                    Just(ProfileKind::PowerLaw),
                    Just(ProfileKind::SingleShell),
                    Just(ProfileKind::TaylorGreen),
                    Just(ProfileKind::MixedMode)
                ],
                0.1f64..10.0,
                prop_oneof![Just(RandomizeMode::Hermitian), Just(RandomizeMode::Complex)],
                0.01f64..10.0,
            ),
        )
            .prop_map(
                |(
                    (d, grid_m, grid_l, s, epsilon, a, q, n_max),
                    (n_samples, seed, mut rho, mut lambda, profile_path, profile, amplitude, mode, nu),
                )| {
                    rho.sort_by(|x, y| x.partial_cmp(y).unwrap());
                    rho.dedup_by(|x, y| *x <= *y + 1e-9);
                    if rho.len() < 2 {
                        rho = vec![2.0, 4.0];
                    }
                    lambda.sort_by(|x, y| x.partial_cmp(y).unwrap());
                    lambda.dedup_by(|x, y| *x <= *y + 1e-9);
                    ExperimentConfig {
                        d,
                        grid_l,
                        grid_m,
                        s,
                        epsilon,
                        a,
                        q,
                        n_max,
                        n_samples,
                        seed,
                        rho_list: rho,
                        lambda_grid: lambda,
                        profile_path,
                        profile,
                        amplitude,
                        mode,
                        nu,
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn serializer_round_trips(cfg in arb_config()) {
            let text = serialize_config(&cfg);
            let parsed = parse_config(&text).unwrap();
            prop_assert_eq!(cfg, parsed);
        }
    }
}
