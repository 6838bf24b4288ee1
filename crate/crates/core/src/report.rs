//! Artifact schemas shared by the command-line tools — decomposition
//! inventories, draw sidecars, norm evaluations, solver summaries — plus
//! the Markdown merger that folds JSON artifacts into one human-readable
//! summary with a checks table.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::io::Write;

use crate::decomp::{min_admissible_a, CubeFamily};
use crate::error::Error;
use crate::field::VectorField;
use crate::norms::{besov_norm, lp_norm, sobolev_norm};
use crate::random::{RandomDraw, RandomizeMode};
use crate::solver::{energy_report, Trajectory};
use crate::Result;

/// Per-shell inventory entry. Both cube-count conventions are reported:
/// the geometric count tiles the shell between boxes of extent `N` and
/// `2N`, while the half-size convention counts between `N/2` and `N`; the
/// two differ by the constant factor `2^d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShellSummary {
    pub n: u32,
    pub side: f64,
    pub geometric_count: u64,
    pub half_size_count: u64,
    pub count_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubeRecord {
    pub j: u64,
    /// Shell value; 0 denotes the central cube.
    pub n: u32,
    pub center: Vec<f64>,
    pub side: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub d: usize,
    pub s: f64,
    pub epsilon: f64,
    pub a: u32,
    pub n_max: u32,
    pub min_admissible_a: u32,
    pub admissible: bool,
    pub coverage_extent: f64,
    pub total_cubes: u64,
    pub shells: Vec<ShellSummary>,
    /// Full cube listing; omitted for large families.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cubes: Option<Vec<CubeRecord>>,
}

pub fn decomposition_report(family: &CubeFamily, with_cubes: bool) -> Result<DecompositionReport> {
    let p = family.params();
    let mut shells = Vec::new();
    for n in family.shell_values() {
        let geometric = family.shell_cube_count(n)?;
        let half = family.shell_cube_count_half_size_convention(n)?;
        shells.push(ShellSummary {
            n,
            side: (n as f64).powi(-(p.a as i32)),
            geometric_count: geometric,
            half_size_count: half,
            count_ratio: geometric as f64 / half as f64,
        });
    }
    let cubes = if with_cubes {
        let mut records = vec![CubeRecord {
            j: 0,
            n: 0,
            center: vec![0.0; p.d],
            side: 2.0,
        }];
        for n in family.shell_values() {
            for cube in family.shell_cubes(n)? {
                records.push(CubeRecord {
                    j: cube.index,
                    n: cube.shell,
                    center: cube.center.clone(),
                    side: cube.side,
                });
            }
        }
        Some(records)
    } else {
        None
    };
    Ok(DecompositionReport {
        d: p.d,
        s: p.s,
        epsilon: p.epsilon,
        a: p.a,
        n_max: p.n_max,
        min_admissible_a: min_admissible_a(p.s, p.epsilon, p.d)?,
        admissible: p.is_admissible(),
        coverage_extent: family.coverage_extent(),
        total_cubes: family.total_cubes(),
        shells,
        cubes,
    })
}

/// Metadata embedded next to a randomized field file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrawSidecar {
    pub seed: u64,
    pub sample: u64,
    pub mode: RandomizeMode,
    pub a: u32,
    pub epsilon: f64,
    pub n_max: u32,
    pub coefficients_used: usize,
}

pub fn draw_sidecar(family: &CubeFamily, draw: &RandomDraw) -> DrawSidecar {
    let p = family.params();
    DrawSidecar {
        seed: draw.seed,
        sample: draw.sample,
        mode: draw.mode,
        a: p.a,
        epsilon: p.epsilon,
        n_max: p.n_max,
        coefficients_used: draw.coefficients_used,
    }
}

/// A norm request parsed from a `kind:key=value,...` string, e.g.
/// `Bdot:s=-0.8,p=20,q=4`, `Lp:p=4`, `H:s=1`, `Hdot:s=-0.5`, `Wk:k=1,p=2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormRequest {
    Lp { p: f64 },
    SobolevH { s: f64 },
    SobolevHdot { s: f64 },
    BesovBdot { s: f64, p: f64, q: f64 },
    SobolevWk { k: u32, p: f64 },
}

pub fn parse_norm_spec(spec: &str) -> Result<NormRequest> {
    let bad = |msg: String| Error::Format(format!("norm spec `{spec}`: {msg}"));
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut fields: std::collections::HashMap<&str, f64> = std::collections::HashMap::new();
    if !rest.trim().is_empty() {
        for item in rest.split(',') {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{item}`")))?;
            let value = v
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number `{v}` for `{k}`")))?;
            if fields.insert(k.trim(), value).is_some() {
                return Err(bad(format!("duplicate field `{k}`")));
            }
        }
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("missing field `{k}`")));
    let req = match kind.trim() {
        "Lp" => NormRequest::Lp { p: get("p")? },
        "H" => NormRequest::SobolevH { s: get("s")? },
        "Hdot" => NormRequest::SobolevHdot { s: get("s")? },
        "Bdot" => NormRequest::BesovBdot { s: get("s")?, p: get("p")?, q: get("q")? },
        "Wk" => {
            let k = get("k")?;
            if k < 0.0 || k.fract() != 0.0 {
                return Err(bad(format!("k must be a nonnegative integer, got {k}")));
            }
            NormRequest::SobolevWk { k: k as u32, p: get("p")? }
        }
        other => return Err(bad(format!("unknown kind `{other}`"))),
    };
    let expected: usize = match req {
        NormRequest::Lp { .. } | NormRequest::SobolevH { .. } | NormRequest::SobolevHdot { .. } => 1,
        NormRequest::SobolevWk { .. } => 2,
        NormRequest::BesovBdot { .. } => 3,
    };
    if fields.len() != expected {
        return Err(bad(format!("expected {expected} fields, got {}", fields.len())));
    }
    Ok(req)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockValue {
    pub n: f64,
    pub lp_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormReport {
    pub spec: String,
    pub value: f64,
    pub blocks: Vec<BlockValue>,
}

pub fn evaluate_norm(f: &VectorField, spec: &str) -> Result<NormReport> {
    let req = parse_norm_spec(spec)?;
    let (value, blocks) = match req {
        NormRequest::Lp { p } => (lp_norm(f, p)?, Vec::new()),
        NormRequest::SobolevH { s } => (sobolev_norm(f, s, false)?, Vec::new()),
        NormRequest::SobolevHdot { s } => (sobolev_norm(f, s, true)?, Vec::new()),
        NormRequest::BesovBdot { s, p, q } => {
            let b = besov_norm(f, s, p, q)?;
            let blocks =
                b.blocks.iter().map(|bl| BlockValue { n: bl.n, lp_value: bl.lp }).collect();
            (b.value, blocks)
        }
        NormRequest::SobolevWk { k, p } => {
            let weighted = crate::norms::apply_inhomogeneous_weight(f, k as f64)?;
            (lp_norm(&weighted, p)?, Vec::new())
        }
    };
    Ok(NormReport { spec: spec.to_string(), value, blocks })
}

/// Machine-readable summary of an integration run; the full time series
/// goes to CSV, the fields to binary snapshots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub scheme: String,
    pub dt: f64,
    pub t_end: f64,
    pub nu: f64,
    pub records: usize,
    pub blow_up: Option<(usize, f64)>,
    pub aliasing_warned: bool,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub dissipation_integral: f64,
    pub defect: f64,
    pub relative_defect: f64,
    pub monotone_energy: bool,
}

pub fn solve_summary(traj: &Trajectory) -> Result<SolveSummary> {
    let e = energy_report(traj)?;
    Ok(SolveSummary {
        scheme: format!("{:?}", traj.params.scheme).to_lowercase(),
        dt: traj.params.dt,
        t_end: traj.params.t_end,
        nu: traj.params.nu,
        records: traj.times.len(),
        blow_up: traj.blow_up,
        aliasing_warned: traj.aliasing_warned,
        initial_energy: e.initial_energy,
        final_energy: e.final_energy,
        dissipation_integral: e.dissipation_integral,
        defect: e.defect,
        relative_defect: e.relative_defect,
        monotone_energy: e.monotone,
    })
}

/// Writes the recorded time series as CSV with a fixed column set.
pub fn write_series_csv(traj: &Trajectory, mut w: impl Write) -> Result<()> {
    writeln!(w, "time,energy,enstrophy,max_div").map_err(Error::from)?;
    for i in 0..traj.times.len() {
        writeln!(
            w,
            "{:?},{:?},{:?},{:?}",
            traj.times[i], traj.energy[i], traj.enstrophy[i], traj.max_divergence[i]
        )
        .map_err(Error::from)?;
    }
    Ok(())
}

fn check_row(out: &mut String, name: &str, pass: bool, detail: String) {
    out.push_str(&format!("| {name} | {} | {detail} |\n", if pass { "pass" } else { "FAIL" }));
}

fn fmt_val(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_i64() || n.is_u64() => n.to_string(),
        Value::Number(n) => n
            .as_f64()
            .map(|x| {
                if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e6) {
                    format!("{x:.3e}")
                } else {
                    format!("{x:.6}")
                }
            })
            .unwrap_or_else(|| n.to_string()),
        Value::Bool(b) => b.to_string(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn scalar_bullets(out: &mut String, v: &Value) {
    if let Value::Object(map) = v {
        for (k, val) in map {
            match val {
                Value::Number(_) | Value::Bool(_) | Value::String(_) => {
                    out.push_str(&format!("- {k}: {}\n", fmt_val(val)));
                }
                _ => {}
            }
        }
    }
}

/// Folds named JSON artifacts into a Markdown summary. Recognized shapes
/// (experiment bundles, decomposition inventories, norm evaluations,
/// solver summaries, iteration reports) get structured sections and rows
/// in the checks table; anything else is listed generically.
pub fn merge_markdown(artifacts: &[(String, Value)]) -> String {
    let mut body = String::from("# Summary\n");
    let mut checks = String::new();
    for (name, v) in artifacts {
        body.push_str(&format!("\n## {name}\n\n"));
        if let Some(orth) = v.get("orthogonality") {
            // Experiment bundle.
            scalar_bullets(&mut body, orth);
            if let Some(m) = v.get("moments") {
                body.push_str(&format!(
                    "- moment fit exponent: {}\n",
                    m.get("fit_exponent").map(fmt_val).unwrap_or_default()
                ));
            }
            if let Some(t) = v.get("tail") {
                body.push_str(&format!(
                    "- tail r-squared (squared-exponent model): {}\n",
                    t.get("r_squared").map(fmt_val).unwrap_or_default()
                ));
            }
            if let Some(w) = v.get("admissibility_warning") {
                body.push_str(&format!("- admissibility warning: {}\n", fmt_val(w)));
            }
            let frame_ok = orth.get("within_bounds").and_then(Value::as_bool).unwrap_or(false);
            check_row(
                &mut checks,
                "frame bounds",
                frame_ok,
                format!("ratio {}", orth.get("ratio").map(fmt_val).unwrap_or_default()),
            );
            if let Some(slope) = v.pointer("/moments/fit_exponent").and_then(Value::as_f64) {
                check_row(&mut checks, "moment growth", slope <= 0.6, format!("slope {slope:.3}"));
            }
            if let Some(t) = v.get("tail") {
                let r2 = t.get("r_squared").and_then(Value::as_f64).unwrap_or(0.0);
                let wins = t.get("quadratic_wins").and_then(Value::as_bool).unwrap_or(false);
                check_row(
                    &mut checks,
                    "tail shape",
                    r2 >= 0.95 && wins,
                    format!("r2 {r2:.3}, squared model wins: {wins}"),
                );
            }
            if let Some(stable) = v.get("refinement_stable").and_then(Value::as_bool) {
                check_row(&mut checks, "refinement stability", stable, String::new());
            }
        } else if let Some(shells) = v.get("shells").and_then(Value::as_array) {
            // Decomposition inventory.
            scalar_bullets(&mut body, v);
            body.push_str("\n| shell | side | cubes | half-size count |\n|---|---|---|---|\n");
            for sh in shells {
                body.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    sh.get("n").map(fmt_val).unwrap_or_default(),
                    sh.get("side").map(fmt_val).unwrap_or_default(),
                    sh.get("geometric_count").map(fmt_val).unwrap_or_default(),
                    sh.get("half_size_count").map(fmt_val).unwrap_or_default(),
                ));
            }
            if let Some(adm) = v.get("admissible").and_then(Value::as_bool) {
                check_row(
                    &mut checks,
                    "narrowing admissible",
                    adm,
                    format!(
                        "a = {}, threshold {}",
                        v.get("a").map(fmt_val).unwrap_or_default(),
                        v.get("min_admissible_a").map(fmt_val).unwrap_or_default()
                    ),
                );
            }
        } else if v.get("relative_defect").is_some() {
            // Solver summary.
            scalar_bullets(&mut body, v);
            let defect = v.get("relative_defect").and_then(Value::as_f64).unwrap_or(f64::NAN);
            let monotone = v.get("monotone_energy").and_then(Value::as_bool).unwrap_or(false);
            let no_blow_up = v.get("blow_up").map(Value::is_null).unwrap_or(false);
            check_row(
                &mut checks,
                "energy balance",
                defect.abs() <= 1e-6 && monotone,
                format!("relative defect {defect:.3e}, monotone {monotone}"),
            );
            check_row(&mut checks, "no blow-up", no_blow_up, String::new());
        } else if v.get("contracted").is_some() {
            // Iteration report.
            scalar_bullets(&mut body, v);
            let ok = v.get("contracted").and_then(Value::as_bool).unwrap_or(false);
            check_row(
                &mut checks,
                "small-data contraction",
                ok,
                format!("horizon {}", v.get("t_used").map(fmt_val).unwrap_or_default()),
            );
        } else if let Some(value) = v.get("value") {
            // Norm evaluation.
            body.push_str(&format!(
                "- spec: {}\n- value: {}\n",
                v.get("spec").map(fmt_val).unwrap_or_default(),
                fmt_val(value)
            ));
            if let Some(blocks) = v.get("blocks").and_then(Value::as_array) {
                if !blocks.is_empty() {
                    body.push_str("\n| block | value |\n|---|---|\n");
                    for b in blocks {
                        body.push_str(&format!(
                            "| {} | {} |\n",
                            b.get("n").map(fmt_val).unwrap_or_default(),
                            b.get("lp_value").map(fmt_val).unwrap_or_default()
                        ));
                    }
                }
            }
        } else {
            scalar_bullets(&mut body, v);
        }
    }
    if !checks.is_empty() {
        body.push_str("\n## Checks\n\n| check | status | detail |\n|---|---|---|\n");
        body.push_str(&checks);
    }
    body
}
