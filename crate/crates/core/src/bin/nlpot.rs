//! Command-line front end: potential evaluation, elliptic and parabolic
//! solves, Caccioppoli checks, estimate verification and preset experiment
//! runs with JSON/CSV/SVG artifacts.
//!
//! Exit codes: 0 success (and all PASS for `run`), 1 completed with
//! failing criteria, 2 invalid configuration or input, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nlpot::elliptic::{
    dini_integral, solve_dirichlet, Coefficient, DomainMask, Modulus, SolverConfig,
    StructuredVectorField,
};
use nlpot::error::Error;
use nlpot::field::ScalarField;
use nlpot::fractional::caccioppoli_nonlocal;
use nlpot::grid::Grid;
use nlpot::measure::RadonMeasure;
use nlpot::parabolic::{solve_parabolic, ParabolicConfig, ParabolicVectorField, TimeCoefficient};
use nlpot::potential::{profile, PotentialKind, QuadratureSpec};
use nlpot::preset::{preset, preset_names, run, ExperimentConfig};
use nlpot::report::{write_csv, write_json, write_svg_scatter};
use nlpot::util::quantile;
use nlpot::verify::{
    mapping_experiment, verify_gradient_elliptic, verify_gradient_elliptic_p2,
    verify_lipschitz_criterion, verify_parabolic_gradient, verify_parabolic_zero_order,
    verify_riesz_domination, verify_zero_order_elliptic,
};

#[derive(Parser)]
#[command(
    name = "nlpot",
    about = "Nonlinear potentials, measure-data solvers, and empirical verification of pointwise estimates",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a potential profile R -> value at a base point.
    Potential(PotentialArgs),
    /// Solve the elliptic Dirichlet problem -div a(x, Du) = mu.
    Solve(SolveArgs),
    /// Solve the parabolic problem u_t - div a(x, t, Du) = mu.
    SolveParabolic(SolveParabolicArgs),
    /// Non-local Caccioppoli reports over a level ladder.
    Caccioppoli(CaccioppoliArgs),
    /// Measure both sides of a pointwise estimate.
    Verify(VerifyArgs),
    /// Print (or write) a canonical experiment configuration.
    Preset(PresetArgs),
    /// Run an experiment configuration and write reports.
    Run(RunArgs),
}

#[derive(Args)]
struct PotentialArgs {
    /// riesz | wolff | havin-mazja | caloric
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Base point, comma-separated coordinates.
    #[arg(long)]
    point: String,
    /// Vertex time for caloric potentials.
    #[arg(long)]
    time: Option<f64>,
    #[arg(long)]
    radius: f64,
    #[arg(long)]
    measure: PathBuf,
    #[arg(long, default_value_t = 256)]
    nodes: usize,
    /// Number of radii in the output ladder.
    #[arg(long, default_value_t = 32)]
    radii: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    /// const:K | holder:BASE,AMP,THETA | jump:AXIS,THRESH,LO,HI | dip:BASE,DEPTH,RADIUS
    #[arg(long, default_value = "const:1")]
    coeff: String,
    /// zero | power:THETA | log
    #[arg(long, default_value = "zero")]
    omega: String,
    #[arg(long)]
    measure: PathBuf,
    /// Intervals per axis of the node grid over the measure box.
    #[arg(long)]
    grid: usize,
    /// box | ball:R (centered) | ball:CX,CY[,CZ]:R
    #[arg(long, default_value = "box")]
    mask: String,
    /// Optional TOML solver configuration mirroring the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveParabolicArgs {
    /// const:K | piecewise-t:TSPLIT,BEFORE,AFTER | holder:BASE,AMP,THETA | dip:BASE,DEPTH,RADIUS
    #[arg(long, default_value = "const:1")]
    coeff: String,
    #[arg(long)]
    measure: PathBuf,
    /// Intervals per spatial axis; dt = h^2.
    #[arg(long)]
    grid: usize,
    #[arg(long)]
    tmin: Option<f64>,
    #[arg(long)]
    tmax: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CaccioppoliArgs {
    #[arg(long)]
    sigma: f64,
    /// Quantile levels for k, comma-separated (e.g. 0,0.25,0.5).
    #[arg(long, default_value = "0,0.25,0.5,0.75,0.9")]
    levels: String,
    /// CX,CY[,CZ]:R
    #[arg(long)]
    ball: String,
    /// Solution field file; the gradient component is derived from it.
    #[arg(long)]
    field: PathBuf,
    /// Gradient component index xi.
    #[arg(long, default_value_t = 0)]
    component: usize,
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// km-zero | grad-p | grad-2 | parabolic-grad | parabolic-zero |
    /// riesz-dom | lipschitz | mapping
    #[arg(long)]
    estimate: String,
    /// Solution field (gradient estimates derive Du from it).
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long)]
    measure: Option<PathBuf>,
    /// sweep:N or a file of points (one per line, comma-separated; time
    /// last for parabolic estimates).
    #[arg(long, default_value = "sweep:20")]
    points: String,
    #[arg(long, default_value_t = 0.2)]
    radius: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    /// gamma exponent for the mapping estimate.
    #[arg(long, default_value_t = 1.5)]
    gamma: f64,
    #[arg(long, default_value_t = 20090)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV mirror of the per-point table.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Optional SVG ratio plot.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct PresetArgs {
    /// Preset name; `list` prints the available names.
    name: String,
    /// Write the TOML configuration here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for JSON reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::NoConvergence { .. } | Error::LinearSolve { .. } => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Potential(a) => cmd_potential(a),
        Command::Solve(a) => cmd_solve(a),
        Command::SolveParabolic(a) => cmd_solve_parabolic(a),
        Command::Caccioppoli(a) => cmd_caccioppoli(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Preset(a) => cmd_preset(a),
        Command::Run(a) => cmd_run(a),
    }
}

fn parse_coords(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad coordinate {t:?}: {e}")))
        })
        .collect()
}

fn parse_coeff(s: &str) -> Result<Coefficient, Error> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let nums = parse_coords(rest).unwrap_or_default();
    match kind {
        "const" => Ok(Coefficient::Constant(*nums.first().unwrap_or(&1.0))),
        "holder" if nums.len() >= 3 => Ok(Coefficient::HolderRadial {
            base: nums[0],
            amplitude: nums[1],
            theta: nums[2],
            center: vec![0.0; 3],
        }),
        "jump" if nums.len() >= 4 => Ok(Coefficient::Jump {
            axis: nums[0] as usize,
            threshold: nums[1],
            low: nums[2],
            high: nums[3],
        }),
        "dip" if nums.len() >= 3 => Ok(Coefficient::Dip {
            base: nums[0],
            depth: nums[1],
            center: vec![0.0; 3],
            radius: nums[2],
        }),
        _ => Err(Error::Config(format!("bad coefficient spec {s:?}"))),
    }
}

fn parse_time_coeff(s: &str) -> Result<TimeCoefficient, Error> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let nums = parse_coords(rest).unwrap_or_default();
    match kind {
        "const" => Ok(TimeCoefficient::Constant(*nums.first().unwrap_or(&1.0))),
        "piecewise-t" if nums.len() >= 3 => Ok(TimeCoefficient::PiecewiseT {
            t_split: nums[0],
            before: nums[1],
            after: nums[2],
        }),
        "holder" if nums.len() >= 3 => Ok(TimeCoefficient::HolderX {
            base: nums[0],
            amplitude: nums[1],
            theta: nums[2],
            center: vec![0.0; 3],
        }),
        "dip" if nums.len() >= 3 => Ok(TimeCoefficient::Dip {
            base: nums[0],
            depth: nums[1],
            center: vec![0.0; 3],
            radius: nums[2],
        }),
        _ => Err(Error::Config(format!("bad coefficient spec {s:?}"))),
    }
}

fn parse_omega(s: &str) -> Result<Modulus, Error> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "zero" => Ok(Modulus::Zero),
        "power" => {
            let theta = rest
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad power modulus {s:?}")))?;
            Ok(Modulus::Power { theta })
        }
        "log" => Ok(Modulus::LogReciprocal),
        _ => Err(Error::Config(format!("bad modulus spec {s:?}"))),
    }
}

fn parse_mask(s: &str, dim: usize) -> Result<DomainMask, Error> {
    if s == "box" {
        return Ok(DomainMask::Box);
    }
    if let Some(rest) = s.strip_prefix("ball:") {
        if let Some((c, r)) = rest.rsplit_once(':') {
            let center = parse_coords(c)?;
            let radius = r
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad mask radius {r:?}")))?;
            return Ok(DomainMask::Ball { center, radius });
        }
        let radius = rest
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad mask {s:?}")))?;
        return Ok(DomainMask::Ball {
            center: vec![0.0; dim],
            radius,
        });
    }
    Err(Error::Config(format!("bad mask spec {s:?}")))
}

fn parse_ball(s: &str) -> Result<(Vec<f64>, f64), Error> {
    let (c, r) = s
        .rsplit_once(':')
        .ok_or_else(|| Error::Config(format!("bad ball spec {s:?} (want CX,CY:R)")))?;
    Ok((
        parse_coords(c)?,
        r.parse::<f64>()
            .map_err(|_| Error::Config(format!("bad ball radius {r:?}")))?,
    ))
}

fn cmd_potential(a: PotentialArgs) -> Result<ExitCode, Error> {
    let mu = RadonMeasure::load(&a.measure)?;
    let x0 = parse_coords(&a.point)?;
    let kind = match a.kind.as_str() {
        "riesz" => PotentialKind::Riesz { beta: a.beta },
        "wolff" => PotentialKind::Wolff {
            beta: a.beta,
            p: a.p,
        },
        "havin-mazja" => PotentialKind::HavinMazja { p: a.p },
        "caloric" => PotentialKind::Caloric { beta: a.beta },
        other => return Err(Error::Config(format!("unknown potential kind {other:?}"))),
    };
    let quad = QuadratureSpec {
        nodes: a.nodes,
        rho_min: None,
    };
    let radii: Vec<f64> = (1..=a.radii)
        .map(|k| a.radius * k as f64 / a.radii as f64)
        .collect();
    let prof = profile(&mu, kind, &x0, a.time, &radii, &quad)?;
    let rows: Vec<Vec<f64>> = prof
        .radii
        .iter()
        .zip(&prof.values)
        .map(|(&r, &v)| vec![r, v])
        .collect();
    write_csv(&a.out, "R,value", &rows)?;
    println!(
        "{} profile at {:?}: value at R = {} is {:.6e}",
        a.kind,
        x0,
        a.radius,
        prof.values.last().unwrap()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_solver_config(path: Option<&Path>) -> Result<SolverConfig, Error> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(SolverConfig::default()),
    }
}

fn cmd_solve(a: SolveArgs) -> Result<ExitCode, Error> {
    let mu = RadonMeasure::load(&a.measure)?;
    if mu.is_spacetime() {
        return Err(Error::Config(
            "elliptic solve needs a spatial measure; use solve-parabolic".into(),
        ));
    }
    let grid = Grid::nodes_on_box(mu.box_min(), mu.box_max(), a.grid)?;
    let mask = parse_mask(&a.mask, mu.space_dim())?;
    let cfg = load_solver_config(a.config.as_deref())?;
    let field = StructuredVectorField {
        p: a.p,
        s: a.s,
        nu: 1.0,
        l: 2.0 * a.p,
        l1: 1.0,
        alpha: if a.p > 2.0 {
            Some(0.5 * (a.p - 2.0).min(1.0))
        } else {
            None
        },
        kappa: parse_coeff(&a.coeff)?,
        omega: parse_omega(&a.omega)?,
    };
    // report the Dini integral of the chosen modulus alongside the solve
    let dini = dini_integral(&field.omega, 1.0, a.p);
    let u = solve_dirichlet(&field, &mu, &grid, &mask, &cfg)?;
    u.save(&a.out)?;
    println!(
        "solved p = {} on {} nodes; d(1) = {dini:.4}; wrote {}",
        a.p,
        grid.space_len(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve_parabolic(a: SolveParabolicArgs) -> Result<ExitCode, Error> {
    let mu = RadonMeasure::load(&a.measure)?;
    if !mu.is_spacetime() {
        return Err(Error::Config("parabolic solve needs a spacetime measure".into()));
    }
    let h = (mu.box_max()[0] - mu.box_min()[0]) / a.grid as f64;
    let (t0_measure, _) = mu.tspan().unwrap();
    let t0 = a.tmin.unwrap_or(t0_measure);
    let dt = h * h;
    let nt = ((a.tmax - t0) / dt).round() as usize + 1;
    let shape: Vec<usize> = mu.box_min().iter().map(|_| a.grid + 1).collect();
    let grid = Grid::spacetime(mu.box_min().to_vec(), h, shape, t0, dt, nt)?;
    let field = ParabolicVectorField {
        kappa: parse_time_coeff(&a.coeff)?,
        s: 0.0,
        nu: 1.0,
        l: 2.0,
        l1: 1.0,
        omega: Modulus::Zero,
    };
    let u = solve_parabolic(&field, &mu, &grid, &ParabolicConfig::default())?;
    u.save(&a.out)?;
    println!(
        "solved {} steps of {} nodes; wrote {}",
        nt - 1,
        grid.space_len(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_caccioppoli(a: CaccioppoliArgs) -> Result<ExitCode, Error> {
    let u = ScalarField::load(&a.field)?;
    let mu = RadonMeasure::load(&a.measure)?;
    let (center, radius) = parse_ball(&a.ball)?;
    let d = u.gradient().component(a.component);
    let levels = parse_coords(&a.levels)?;
    let abs_vals: Vec<f64> = u
        .grid
        .nodes_in_ball(&center, radius)
        .iter()
        .map(|&f| d.at(f).abs())
        .collect();
    let mut reports = Vec::new();
    for &q in &levels {
        let k = quantile(&abs_vals, q);
        reports.push(caccioppoli_nonlocal(&d, &mu, &center, radius, a.sigma, k)?);
    }
    write_json(&a.out, &reports)?;
    let max_c = reports.iter().map(|r| r.c).fold(0.0f64, f64::max);
    println!(
        "sigma = {}, {} levels, max empirical c = {max_c:.4}; wrote {}",
        a.sigma,
        levels.len(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

enum PointSet {
    Spatial(Vec<Vec<f64>>),
    Spacetime(Vec<(Vec<f64>, f64)>),
}

fn gather_points(
    spec: &str,
    grid: &Grid,
    mu: &RadonMeasure,
    radius: f64,
    seed: u64,
    spacetime: bool,
) -> Result<PointSet, Error> {
    if let Some(n) = spec.strip_prefix("sweep:") {
        let count: usize = n
            .parse()
            .map_err(|_| Error::Config(format!("bad sweep count {n:?}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = grid.dim();
        let margin = 2.0 * radius + 2.0 * grid.h;
        let mut spatial = Vec::new();
        let mut st = Vec::new();
        let mut guard = 0usize;
        while spatial.len() < count && st.len() < count {
            guard += 1;
            if guard > 100_000 {
                return Err(Error::Config(
                    "sweep could not place points; radius too large for the domain".into(),
                ));
            }
            let x: Vec<f64> = (0..dim)
                .map(|d| {
                    let lo = grid.min[d] + margin;
                    let hi = grid.max_coord(d) - margin;
                    if lo >= hi {
                        f64::NAN
                    } else {
                        rng.gen_range(lo..hi)
                    }
                })
                .collect();
            if x.iter().any(|v| v.is_nan()) {
                return Err(Error::Config(
                    "sweep could not place points; radius too large for the domain".into(),
                ));
            }
            if mu
                .atoms()
                .iter()
                .any(|at| nlpot::util::dist(&at.pos, &x) < 2.0 * grid.h)
            {
                continue;
            }
            if spacetime {
                let ta = grid.time.expect("spacetime grid");
                let t_lo = ta.t_min + radius * radius + ta.dt;
                let t_hi = ta.t_min + ta.dt * (ta.nt - 1) as f64;
                if t_lo >= t_hi {
                    return Err(Error::Config("time span too short for the radius".into()));
                }
                st.push((x, rng.gen_range(t_lo..t_hi)));
            } else {
                spatial.push(x);
            }
        }
        return Ok(if spacetime {
            PointSet::Spacetime(st)
        } else {
            PointSet::Spatial(spatial)
        });
    }
    // points file: one point per line, comma-separated, time last when
    // spacetime
    let text = std::fs::read_to_string(spec)?;
    let mut spatial = Vec::new();
    let mut st = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let mut nums = parse_coords(line)?;
        if spacetime {
            let t = nums.pop().ok_or_else(|| {
                Error::Config("spacetime points need coordinates and a time".into())
            })?;
            st.push((nums, t));
        } else {
            spatial.push(nums);
        }
    }
    Ok(if spacetime {
        PointSet::Spacetime(st)
    } else {
        PointSet::Spatial(spatial)
    })
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode, Error> {
    let quad = QuadratureSpec::default();
    // mapping needs no inputs
    if a.estimate == "mapping" {
        let rep = mapping_experiment(a.gamma, a.p, 2, 1024, 1.0, &quad)?;
        write_json(&a.out, &rep)?;
        if let Some(svg) = &a.svg {
            let pts: Vec<(f64, f64)> = rep
                .radii
                .iter()
                .zip(&rep.values)
                .map(|(&r, &v)| (r.ln(), v.ln()))
                .collect();
            write_svg_scatter(svg, "log W vs log r", &pts)?;
        }
        println!(
            "mapping: slope {:.4} (expected {:.4}), critical exponent {:.3} vs {:.3}",
            rep.slope, rep.expected_slope, rep.critical_inferred, rep.critical_formula
        );
        return Ok(ExitCode::SUCCESS);
    }

    let field_path = a
        .field
        .as_ref()
        .ok_or_else(|| Error::Config("--field is required for this estimate".into()))?;
    let measure_path = a
        .measure
        .as_ref()
        .ok_or_else(|| Error::Config("--measure is required for this estimate".into()))?;
    let u = ScalarField::load(field_path)?;
    let mu = RadonMeasure::load(measure_path)?;
    let spacetime = matches!(a.estimate.as_str(), "parabolic-grad" | "parabolic-zero");
    let points = gather_points(&a.points, &u.grid, &mu, a.radius, a.seed, spacetime)?;

    let (report_json, table): (serde_json::Value, Vec<Vec<f64>>) = match a.estimate.as_str() {
        "km-zero" => {
            let PointSet::Spatial(pts) = points else {
                return Err(Error::Config("expected spatial points".into()));
            };
            let rep = verify_zero_order_elliptic(&u, &mu, a.p, &pts, a.radius, &quad)?;
            let table = rep
                .points
                .iter()
                .map(|pc| vec![pc.lhs, pc.c])
                .collect();
            (serde_json::to_value(&rep).unwrap(), table)
        }
        "grad-p" => {
            let PointSet::Spatial(pts) = points else {
                return Err(Error::Config("expected spatial points".into()));
            };
            let du = u.gradient();
            let rep = verify_gradient_elliptic(&du, &mu, a.p, a.s, &pts, a.radius, &quad)?;
            let table = rep.points.iter().map(|pc| vec![pc.lhs, pc.c]).collect();
            (serde_json::to_value(&rep).unwrap(), table)
        }
        "grad-2" => {
            let PointSet::Spatial(pts) = points else {
                return Err(Error::Config("expected spatial points".into()));
            };
            let du = u.gradient();
            let rep = verify_gradient_elliptic_p2(&du, &mu, a.s, &pts, a.radius, &quad)?;
            let table = rep
                .magnitude
                .points
                .iter()
                .map(|pc| vec![pc.lhs, pc.c])
                .collect();
            (serde_json::to_value(&rep).unwrap(), table)
        }
        "riesz-dom" => {
            let PointSet::Spatial(pts) = points else {
                return Err(Error::Config("expected spatial points".into()));
            };
            let inner = nlpot::potential::default_inner_grid(&mu)?;
            let rep = verify_riesz_domination(&mu, a.p, &pts, &inner, &quad)?;
            let table = rep
                .points
                .iter()
                .map(|pc| vec![pc.wolff, pc.havin_mazja, pc.ratio])
                .collect();
            (serde_json::to_value(&rep).unwrap(), table)
        }
        "lipschitz" => {
            let du = u.gradient();
            let center = vec![0.0; u.grid.dim()];
            let rep =
                verify_lipschitz_criterion(&du, &mu, a.p, a.s, &center, a.radius, &quad)?;
            let table = vec![vec![rep.lhs, rep.avg_term, rep.wolff_sup]];
            (serde_json::to_value(&rep).unwrap(), table)
        }
        "parabolic-grad" => {
            let PointSet::Spacetime(pts) = points else {
                return Err(Error::Config("expected spacetime points".into()));
            };
            let du = u.gradient();
            let rep = verify_parabolic_gradient(&du, &mu, a.s, &pts, a.radius, &quad)?;
            let table = rep.points.iter().map(|pc| vec![pc.lhs, pc.c]).collect();
            (serde_json::to_value(&rep).unwrap(), table)
        }
        "parabolic-zero" => {
            let PointSet::Spacetime(pts) = points else {
                return Err(Error::Config("expected spacetime points".into()));
            };
            let rep = verify_parabolic_zero_order(&u, &mu, a.s, &pts, a.radius, &quad)?;
            let table = rep.points.iter().map(|pc| vec![pc.lhs, pc.c]).collect();
            (serde_json::to_value(&rep).unwrap(), table)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown estimate {other:?}; see --help for the list"
            )))
        }
    };

    write_json(&a.out, &report_json)?;
    if let Some(csv) = &a.csv {
        write_csv(csv, "lhs,c", &table)?;
    }
    if let Some(svg) = &a.svg {
        let pts: Vec<(f64, f64)> = table
            .iter()
            .enumerate()
            .map(|(i, row)| (i as f64, *row.last().unwrap()))
            .collect();
        write_svg_scatter(svg, &format!("{} empirical c per point", a.estimate), &pts)?;
    }
    println!("{}: wrote {}", a.estimate, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_preset(a: PresetArgs) -> Result<ExitCode, Error> {
    if a.name == "list" {
        for n in preset_names() {
            println!("{n}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let cfg = preset(&a.name)?;
    let text = toml::to_string_pretty(&cfg).expect("serializable config");
    match a.out {
        Some(path) => {
            std::fs::write(&path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(a: RunArgs) -> Result<ExitCode, Error> {
    let cfg: ExperimentConfig = match (&a.preset, &a.config) {
        (Some(name), None) => preset(name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        _ => {
            return Err(Error::Config(
                "run needs exactly one of --preset or --config".into(),
            ))
        }
    };
    let report = run(&cfg, a.out.as_deref())?;
    for o in &report.outcomes {
        println!("{}: {}", o.name, if o.pass { "PASS" } else { "FAIL" });
    }
    if report.outcomes.is_empty() {
        println!("no experiments configured");
    }
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
