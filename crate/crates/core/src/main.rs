//! Command-line driver: builds cube decompositions, synthesizes and
//! randomizes velocity fields, evaluates norms, runs Monte Carlo
//! experiments, integrates the viscous dynamics, and merges JSON
//! artifacts into a Markdown summary.

use clap::{Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use nslab::config::{length_value, parse_config, ExperimentConfig};
use nslab::decomp::{max_shell_for_grid, CubeFamily, DecompParams};
use nslab::grid::SpectralGrid;
use nslab::mc::run_experiment;
use nslab::nsrf;
use nslab::profile::{make_profile, ProfileKind, ProfileParams};
use nslab::random::{RandomizeMode, Randomizer};
use nslab::report::{
    decomposition_report, draw_sidecar, evaluate_norm, merge_markdown, solve_summary,
    write_series_csv,
};
use nslab::solver::{integrate, Scheme, SolveParams};
use nslab::{Error, Result};

/// Refuse to dump a full per-cube listing beyond this size; the shell
/// summary carries the counts either way.
const MAX_LISTED_CUBES: u64 = 1_000_000;

#[derive(Parser)]
#[command(
    name = "nslab",
    version,
    about = "Dyadic cube decompositions, randomized divergence-free fields, Besov/Sobolev \
             norms, Monte Carlo statistics, and a pseudo-spectral Navier-Stokes solver \
             on the periodic box"
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    /// The thread count never changes any output byte.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the cube-family inventory (per-shell counts and per-cube
    /// geometry) as JSON.
    Decompose {
        /// Optional config file supplying d, s, epsilon, a, n_max and the
        /// grid used when n_max is auto-selected; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Spatial dimension (2 or 3).
        #[arg(short, long)]
        d: Option<usize>,
        /// Data regularity the family is tuned for.
        #[arg(short, long, allow_hyphen_values = true)]
        s: Option<f64>,
        /// Integrability parameter; the target Lebesgue exponent is 1/epsilon.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Narrowing exponent: shell N is tiled by cubes of side N^-a.
        #[arg(short, long)]
        a: Option<u32>,
        /// Outermost dyadic shell (power of two); 0 selects it from the grid.
        #[arg(short, long)]
        n_max: Option<u32>,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit only the per-shell summary, not the per-cube listing.
        #[arg(long)]
        shells_only: bool,
    },
    /// Synthesize a deterministic divergence-free profile and store it.
    Profile {
        /// Profile family.
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Target Sobolev regularity of the synthesized field.
        #[arg(short, long, default_value_t = -0.8, allow_hyphen_values = true)]
        s: f64,
        /// Band limit (shell value for single-shell); ignored by the
        /// Taylor-Green kinds.
        #[arg(long, default_value_t = 4.0)]
        band: f64,
        /// Sobolev-norm normalization of the output.
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        /// Phase seed; same seed, same field, bit for bit.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Spatial dimension.
        #[arg(short, long, default_value_t = 2)]
        d: usize,
        /// Box side length; accepts `8pi` or a plain number.
        #[arg(long = "grid-l", default_value = "2pi")]
        grid_l: String,
        /// Grid points per dimension (power of two).
        #[arg(long = "grid-m", default_value_t = 256)]
        grid_m: usize,
        /// Output field file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw one randomized field from a stored profile; writes the field
    /// plus a JSON sidecar with the draw metadata.
    Randomize {
        #[arg(long)]
        seed: u64,
        /// Draw index; distinct indices give independent coefficients.
        #[arg(long, default_value_t = 0)]
        sample: u64,
        /// Input profile field file.
        #[arg(long)]
        profile: PathBuf,
        /// Output field file; the sidecar lands next to it as `.json`.
        #[arg(long)]
        out: PathBuf,
        /// Data regularity recorded with the decomposition.
        #[arg(short, long, default_value_t = -0.8, allow_hyphen_values = true)]
        s: f64,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Narrowing exponent.
        #[arg(short, long, default_value_t = 0)]
        a: u32,
        /// Outermost shell; 0 selects the largest the grid resolves.
        #[arg(short, long, default_value_t = 0)]
        n_max: u32,
        /// Coefficient symmetry: hermitian keeps real fields real.
        #[arg(long, value_enum, default_value_t = ModeArg::Hermitian)]
        mode: ModeArg,
    },
    /// Evaluate a norm of a stored field and print JSON.
    Norms {
        /// Input field file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Norm request, e.g. "Bdot:s=-0.8,p=20,q=4", "Lp:p=2", "H:s=1",
        /// "Hdot:s=-0.5", "Wk:k=1,p=2".
        #[arg(long)]
        spec: String,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full Monte Carlo experiment described by a config file.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Output report JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate the viscous dynamics from a stored field; writes initial
    /// and final snapshots, a scalar time series, and a summary.
    Solve {
        /// Initial field file.
        #[arg(long)]
        init: PathBuf,
        /// Time step.
        #[arg(long)]
        dt: f64,
        /// Final time.
        #[arg(long = "T")]
        t_end: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Viscosity.
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(long, value_enum, default_value_t = SchemeArg::Ifrk4)]
        scheme: SchemeArg,
        /// Record the scalar series every this many steps.
        #[arg(long, default_value_t = 1)]
        record_every: usize,
    },
    /// Merge JSON artifacts into one Markdown summary with a checks table.
    Report {
        /// Artifact JSON files produced by the other subcommands.
        inputs: Vec<PathBuf>,
        /// Write Markdown here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    PowerLaw,
    SingleShell,
    TaylorGreen,
    MixedMode,
}

impl From<KindArg> for ProfileKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::PowerLaw => ProfileKind::PowerLaw,
            KindArg::SingleShell => ProfileKind::SingleShell,
            KindArg::TaylorGreen => ProfileKind::TaylorGreen,
            KindArg::MixedMode => ProfileKind::MixedMode,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hermitian,
    Complex,
}

impl From<ModeArg> for RandomizeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Hermitian => RandomizeMode::Hermitian,
            ModeArg::Complex => RandomizeMode::Complex,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Ifrk4,
    Etdrk4,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Ifrk4 => Scheme::IfRk4,
            SchemeArg::Etdrk4 => Scheme::Etdrk4,
        }
    }
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let text = format!(
        "{}\n",
        serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?
    );
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Decompose { config, d, s, epsilon, a, n_max, out, shells_only } => {
            let base = match config {
                Some(p) => read_config(&p)?,
                None => ExperimentConfig::default(),
            };
            let d = d.unwrap_or(base.d);
            let s = s.unwrap_or(base.s);
            let epsilon = epsilon.unwrap_or(base.epsilon);
            let a = a.unwrap_or(base.a);
            let mut n_max = n_max.unwrap_or(base.n_max);
            if n_max == 0 {
                let grid = SpectralGrid::new(d, base.grid_l, base.grid_m)?;
                n_max = max_shell_for_grid(&grid, a, 2.0)?;
            }
            let family = CubeFamily::new(DecompParams::new(d, s, epsilon, a, n_max)?)?;
            if !shells_only && family.total_cubes() > MAX_LISTED_CUBES {
                return Err(Error::Domain(format!(
                    "inventory would list {} cubes; rerun with --shells-only",
                    family.total_cubes()
                )));
            }
            emit_json(out.as_deref(), &decomposition_report(&family, !shells_only)?)
        }
        Cmd::Profile { kind, s, band, amplitude, seed, d, grid_l, grid_m, out } => {
            let l = length_value(&grid_l)
                .map_err(|_| Error::Domain(format!("bad length `{grid_l}` (number or `<n>pi`)")))?;
            let grid = SpectralGrid::new(d, l, grid_m)?;
            let f = make_profile(&grid, &ProfileParams::new(kind.into(), s, band, amplitude, seed))?;
            nsrf::write_field(&out, &f)
        }
        Cmd::Randomize { seed, sample, profile, out, s, epsilon, a, n_max, mode } => {
            let f = nsrf::read_field(&profile)?;
            let grid = f.grid().clone();
            let n_max =
                if n_max == 0 { max_shell_for_grid(&grid, a, 2.0)? } else { n_max };
            let family = CubeFamily::new(DecompParams::new(grid.dim(), s, epsilon, a, n_max)?)?;
            let randomizer = Randomizer::new(&family, grid)?;
            let (drawn, draw) = randomizer.draw(&f, seed, sample, mode.into())?;
            nsrf::write_field(&out, &drawn)?;
            emit_json(Some(&out.with_extension("json")), &draw_sidecar(&family, &draw))
        }
        Cmd::Norms { input, spec, out } => {
            let f = nsrf::read_field(&input)?;
            emit_json(out.as_deref(), &evaluate_norm(&f, &spec)?)
        }
        Cmd::Mc { config, out } => {
            let cfg = read_config(&config)?;
            emit_json(Some(&out), &run_experiment(&cfg)?)
        }
        Cmd::Solve { init, dt, t_end, out, nu, scheme, record_every } => {
            let f = nsrf::read_field(&init)?;
            let mut params = SolveParams::new(scheme.into(), dt, t_end, nu);
            params.record_every = record_every.max(1);
            let traj = integrate(&f, &params)?;
            fs::create_dir_all(&out)?;
            nsrf::write_field(out.join("init.nsrf"), &f)?;
            nsrf::write_field(out.join("final.nsrf"), &traj.final_field)?;
            let csv = fs::File::create(out.join("series.csv"))?;
            write_series_csv(&traj, std::io::BufWriter::new(csv))?;
            let summary = solve_summary(&traj)?;
            emit_json(Some(&out.join("summary.json")), &summary)?;
            emit_json(None, &summary)
        }
        Cmd::Report { inputs, out } => {
            let mut artifacts = Vec::new();
            for p in &inputs {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
                let value: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
                let name = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string());
                artifacts.push((name, value));
            }
            let md = merge_markdown(&artifacts);
            match out {
                Some(p) => fs::write(p, md)?,
                None => print!("{md}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        // Ignore a second initialization (possible only under test harnesses).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global();
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
