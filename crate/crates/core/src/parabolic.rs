//! Implicit-Euler solver for quasilinear parabolic problems
//! u_t - div(a(x, t, Du)) = mu with a(x, t, z) = kappa(x, t) z, and the
//! sampled structure checks for the parabolic growth/monotonicity
//! assumptions. The coefficient may be merely measurable in t.
//!
//! Each backward step solves one linear elliptic problem with the step's
//! measure slice: atoms land in the step containing their time and are
//! hat-split with density mass / (cellvol * dt); lateral and initial data
//! are zero. Earlier levels never see later sources, so modifying the
//! measure strictly after a vertex time leaves the solution at that vertex
//! bitwise unchanged.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::measure::RadonMeasure;
use crate::sparse::{cg, CooBuilder};
use crate::util::dist;

/// Spacetime scalar coefficient kappa(x, t).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum TimeCoefficient {
    Constant(f64),
    /// Piecewise constant in t: `before` for t < t_split, `after` from
    /// t_split on. Measurable but discontinuous in time.
    PiecewiseT {
        t_split: f64,
        before: f64,
        after: f64,
    },
    /// base + amplitude * |x - center|^theta, time-independent.
    HolderX {
        base: f64,
        amplitude: f64,
        theta: f64,
        center: Vec<f64>,
    },
    /// base - depth * exp(-|x - center|^2 / radius^2).
    Dip {
        base: f64,
        depth: f64,
        center: Vec<f64>,
        radius: f64,
    },
}

impl TimeCoefficient {
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            TimeCoefficient::Constant(c) => *c,
            TimeCoefficient::PiecewiseT {
                t_split,
                before,
                after,
            } => {
                if t < *t_split {
                    *before
                } else {
                    *after
                }
            }
            TimeCoefficient::HolderX {
                base,
                amplitude,
                theta,
                center,
            } => base + amplitude * dist(x, center).powf(*theta),
            TimeCoefficient::Dip {
                base,
                depth,
                center,
                radius,
            } => {
                let d = dist(x, center);
                base - depth * (-d * d / (radius * radius)).exp()
            }
        }
    }

    fn time_dependent(&self) -> bool {
        matches!(self, TimeCoefficient::PiecewiseT { .. })
    }
}

/// Parabolic vector field a(x, t, z) = kappa(x, t) z with claimed constants.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParabolicVectorField {
    pub kappa: TimeCoefficient,
    pub s: f64,
    pub nu: f64,
    pub l: f64,
    pub l1: f64,
    pub omega: crate::elliptic::Modulus,
}

impl ParabolicVectorField {
    pub fn heat(kappa: f64) -> Self {
        ParabolicVectorField {
            kappa: TimeCoefficient::Constant(kappa),
            s: 0.0,
            nu: kappa,
            l: 2.0 * kappa,
            l1: 1.0,
            omega: crate::elliptic::Modulus::Zero,
        }
    }
}

/// Which assumption set a parabolic structure check samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParabolicAssumptions {
    /// Growth + ellipticity of a_z + x-continuity (differentiable theory).
    Full,
    /// Growth + monotonicity of a in z only (zero-order theory).
    Monotonicity,
}

pub use crate::elliptic::{StructureReport, Witness};

/// Samples the parabolic structure inequalities on random
/// (x, x0, t, z, lambda) tuples.
pub fn check_parabolic_structure(
    a: &ParabolicVectorField,
    box_min: &[f64],
    box_max: &[f64],
    tspan: (f64, f64),
    samples: usize,
    seed: u64,
    level: ParabolicAssumptions,
) -> Result<StructureReport> {
    if samples < 1000 {
        return Err(Error::Parameter(format!(
            "structure check needs at least 1000 samples, got {samples}"
        )));
    }
    let dim = box_min.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slack = 1.0 + 1e-9;
    let s = a.s;

    let mut measured_l: f64 = 0.0;
    let mut min_ratio = f64::INFINITY;
    let mut measured_l1: f64 = 0.0;
    let mut violations: Vec<Witness> = Vec::new();

    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|t| *t /= n);
        v
    };

    for _ in 0..samples {
        let x: Vec<f64> = (0..dim)
            .map(|d| rng.gen_range(box_min[d]..box_max[d]))
            .collect();
        let t = rng.gen_range(tspan.0..tspan.1);
        let sep = 10f64.powf(rng.gen_range(-6.0..-0.3));
        let dir = unit(&mut rng);
        let x0: Vec<f64> = (0..dim)
            .map(|d| (x[d] + sep * dir[d]).clamp(box_min[d], box_max[d]))
            .collect();
        let zmag = 10f64.powf(rng.gen_range(-3.0..3.0));
        let z: Vec<f64> = unit(&mut rng).iter().map(|v| v * zmag).collect();
        let kap = a.kappa.eval(&x, t);
        let zs = zmag + s;

        match level {
            ParabolicAssumptions::Full => {
                // |a| + |a_z| (|z| + s) <= L (|z| + s); a_z = kappa I
                let lhs = kap.abs() * zmag + kap.abs() * zs;
                let l_here = lhs / zs;
                measured_l = measured_l.max(l_here);
                if l_here > a.l * slack && violations.len() < 8 {
                    violations.push(Witness {
                        line: "growth".into(),
                        x: x.clone(),
                        x0: None,
                        z: z.clone(),
                        lhs,
                        rhs: a.l * zs,
                    });
                }
                // nu |lambda|^2 <= <a_z lambda, lambda> = kappa |lambda|^2
                min_ratio = min_ratio.min(kap);
                if kap * slack < a.nu && violations.len() < 8 {
                    violations.push(Witness {
                        line: "ellipticity".into(),
                        x: x.clone(),
                        x0: None,
                        z: z.clone(),
                        lhs: kap,
                        rhs: a.nu,
                    });
                }
                // |a(x,t,z) - a(x0,t,z)| <= L1 omega(|x - x0|)(|z| + s)
                let diff = (kap - a.kappa.eval(&x0, t)).abs() * zmag;
                if diff > 0.0 {
                    let om = a.omega.eval(dist(&x, &x0));
                    let l1_here = if om > 0.0 { diff / (om * zs) } else { f64::INFINITY };
                    measured_l1 = measured_l1.max(l1_here);
                    if l1_here > a.l1 * slack && violations.len() < 8 {
                        violations.push(Witness {
                            line: "continuity".into(),
                            x: x.clone(),
                            x0: Some(x0.clone()),
                            z: z.clone(),
                            lhs: diff,
                            rhs: a.l1 * om * zs,
                        });
                    }
                }
            }
            ParabolicAssumptions::Monotonicity => {
                // |a| <= L (|z| + s)
                let lhs = kap.abs() * zmag;
                let l_here = lhs / zs;
                measured_l = measured_l.max(l_here);
                if l_here > a.l * slack && violations.len() < 8 {
                    violations.push(Witness {
                        line: "growth".into(),
                        x: x.clone(),
                        x0: None,
                        z: z.clone(),
                        lhs,
                        rhs: a.l * zs,
                    });
                }
                // nu |z2 - z1|^2 <= <a(z2) - a(z1), z2 - z1> = kappa |z2 - z1|^2
                min_ratio = min_ratio.min(kap);
                if kap * slack < a.nu && violations.len() < 8 {
                    violations.push(Witness {
                        line: "monotonicity".into(),
                        x: x.clone(),
                        x0: None,
                        z: z.clone(),
                        lhs: kap,
                        rhs: a.nu,
                    });
                }
            }
        }
    }

    Ok(StructureReport {
        pass: violations.is_empty(),
        samples,
        measured_l,
        measured_nu: min_ratio,
        measured_l1,
        measured_holder: None,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParabolicConfig {
    pub linear_tol: f64,
    pub max_linear: usize,
}

impl Default for ParabolicConfig {
    fn default() -> Self {
        ParabolicConfig {
            linear_tol: 1e-12,
            max_linear: 40_000,
        }
    }
}

/// Backward-Euler solve of u_t - div(kappa Du) = mu on the spacetime grid,
/// zero initial level and zero lateral boundary. Step k covers
/// (t_{k-1}, t_k]; atoms at exactly the initial time fire in step 1.
pub fn solve_parabolic(
    a: &ParabolicVectorField,
    mu: &RadonMeasure,
    grid: &Grid,
    cfg: &ParabolicConfig,
) -> Result<ScalarField> {
    let ta = grid
        .time
        .ok_or_else(|| Error::Parameter("parabolic solver needs a spacetime grid".into()))?;
    if !mu.is_spacetime() {
        return Err(Error::SpacetimeRequired);
    }
    let dim = grid.dim();
    let sl = grid.space_len();
    let dt = ta.dt;
    let h = grid.h;

    // interior nodes (strictly inside the spatial box)
    let mut strides = vec![1usize; dim];
    for d in (0..dim.saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * grid.shape[d + 1];
    }
    let mut interior = Vec::new();
    let mut inv = vec![usize::MAX; sl];
    let mut idx = vec![0usize; dim];
    for flat in 0..sl {
        grid.space_unindex(flat, &mut idx);
        let on_face = (0..dim).any(|d| idx[d] == 0 || idx[d] == grid.shape[d] - 1);
        if !on_face {
            inv[flat] = interior.len();
            interior.push(flat);
        }
    }
    if interior.is_empty() {
        return Err(Error::EmptyRegion);
    }

    // per-step atom sources: hat-split, divided by cellvol * dt
    let cellvol = grid.space_cell_volume();
    let mut atom_src: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ta.nt];
    for atom in mu.atoms() {
        let t_atom = atom.t.unwrap();
        // step index: smallest k >= 1 with t_k >= t_atom
        let raw = (t_atom - ta.t_min) / dt;
        let k = raw.ceil().max(1.0) as usize;
        if k >= ta.nt {
            continue; // fires after the last level
        }
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for d in 0..dim {
            let p = (atom.pos[d] - grid.min[d]) / h;
            let i = (p.floor() as isize).clamp(0, grid.shape[d] as isize - 2) as usize;
            base[d] = i;
            frac[d] = (p - i as f64).clamp(0.0, 1.0);
        }
        for corner in 0..(1usize << dim) {
            let mut w = atom.weight;
            let mut flat = 0;
            for d in 0..dim {
                let up = corner >> d & 1 == 1;
                w *= if up { frac[d] } else { 1.0 - frac[d] };
                flat = flat * grid.shape[d] + base[d] + usize::from(up);
            }
            atom_src[k].push((flat, w / (cellvol * dt)));
        }
    }

    let assemble = |t: f64| -> crate::sparse::CsrMatrix {
        let n = interior.len();
        let mut builder = CooBuilder::new(n);
        let mut idx = vec![0usize; dim];
        let mut pos = vec![0.0; dim];
        let mut pos_nb = vec![0.0; dim];
        for (row, &flat) in interior.iter().enumerate() {
            grid.node_position(flat, &mut idx, &mut pos);
            let mut diag = 1.0 / dt;
            for d in 0..dim {
                for dir in [1isize, -1] {
                    let nb = (flat as isize + dir * strides[d] as isize) as usize;
                    pos_nb.copy_from_slice(&pos);
                    pos_nb[d] += dir as f64 * h;
                    let mid: Vec<f64> = pos
                        .iter()
                        .zip(&pos_nb)
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect();
                    let w = a.kappa.eval(&mid, t) / (h * h);
                    diag += w;
                    let col = inv[nb];
                    if col != usize::MAX {
                        builder.push(row, col, -w);
                    }
                }
            }
            builder.push(row, row, diag);
        }
        builder.build()
    };

    let mut values = vec![0.0; grid.len()];
    let mut x_prev: Vec<f64> = vec![0.0; interior.len()];
    let mut mat = assemble(grid.time_coord(1.min(ta.nt - 1)));
    let mut pos = vec![0.0; dim];

    for k in 1..ta.nt {
        let t_k = grid.time_coord(k);
        if a.kappa.time_dependent() && k > 1 {
            mat = assemble(t_k);
        }
        // rhs = u^{k-1}/dt + f_k on interior
        let mut rhs: Vec<f64> = interior
            .iter()
            .enumerate()
            .map(|(row, &flat)| x_prev[row] / dt + density_at(mu, grid, flat, t_k, &mut idx, &mut pos))
            .collect();
        for &(flat, w) in &atom_src[k] {
            let row = inv[flat];
            if row != usize::MAX {
                rhs[row] += w;
            }
        }
        let mut x = x_prev.clone();
        cg(&mat, &rhs, &mut x, cfg.linear_tol, cfg.max_linear).map_err(|res| {
            Error::LinearSolve {
                step: k,
                reason: format!("stalled at relative residual {res:.3e}"),
            }
        })?;
        for (row, &flat) in interior.iter().enumerate() {
            values[k * sl + flat] = x[row];
        }
        x_prev = x;
    }

    // sentinel-free by construction
    let mut f = ScalarField::zeros(grid.clone());
    f.values_mut().copy_from_slice(&values);
    Ok(f)
}

fn density_at(
    mu: &RadonMeasure,
    grid: &Grid,
    flat: usize,
    t: f64,
    idx: &mut [usize],
    pos: &mut [f64],
) -> f64 {
    match mu.density() {
        Some(den) => {
            grid.node_position(flat, idx, pos);
            let it = den.grid.nearest_time(t);
            den.values[den.grid.index(it, den.grid.nearest_node(pos))]
        }
        None => 0.0,
    }
}

/// Heat kernel in n = 1: Phi(x, t) = (4 pi t)^(-1/2) exp(-x^2 / (4 t)).
pub fn heat_kernel_1d(x: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (4.0 * std::f64::consts::PI * t).powf(-0.5) * (-x * x / (4.0 * t)).exp()
}

/// Spatial derivative magnitude of the 1-d heat kernel.
pub fn heat_kernel_gradient_1d(x: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (x.abs() / (2.0 * t)) * heat_kernel_1d(x, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Heat instance: spacetime grid on [-2, 2] x [t0, t1] with dt = h^2 and
    /// a unit Dirac at (0, 0).
    fn heat_setup(h: f64, t0: f64, t1: f64) -> (Grid, RadonMeasure) {
        let n = (4.0 / h).round() as usize;
        let nt = ((t1 - t0) / (h * h)).round() as usize + 1;
        let grid = Grid::spacetime(vec![-2.0], h, vec![n + 1], t0, h * h, nt).unwrap();
        let mut mu = RadonMeasure::spacetime(vec![-2.0], vec![2.0], t0, t1).unwrap();
        mu.push_spacetime_atom(vec![0.0], 0.0, 1.0).unwrap();
        (grid, mu)
    }

    #[test]
    fn zero_measure_gives_zero() {
        let grid = Grid::spacetime(vec![-1.0], 0.1, vec![21], 0.0, 0.01, 20).unwrap();
        let mu = RadonMeasure::spacetime(vec![-1.0], vec![1.0], 0.0, 0.2).unwrap();
        let a = ParabolicVectorField::heat(1.0);
        let u = solve_parabolic(&a, &mu, &grid, &ParabolicConfig::default()).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirac_approximates_heat_kernel() {
        let (grid, mu) = heat_setup(0.025, 0.0, 0.05);
        let a = ParabolicVectorField::heat(1.0);
        let u = solve_parabolic(&a, &mu, &grid, &ParabolicConfig::default()).unwrap();
        let got = u.value_at_spacetime(&[0.5], 0.04);
        let oracle = heat_kernel_1d(0.5, 0.04);
        assert!((oracle - 0.2957).abs() < 5e-4);
        assert!((got - oracle).abs() / oracle < 0.05, "got {got} vs {oracle}");
        // gradient
        let g = u.gradient().magnitude_at_spacetime(&[0.5], 0.04);
        let goracle = heat_kernel_gradient_1d(0.5, 0.04);
        assert!((goracle - 1.848).abs() < 1e-3);
        assert!((g - goracle).abs() / goracle < 0.05, "got {g} vs {goracle}");
    }

    #[test]
    fn heat_kernel_error_decreases_under_refinement() {
        let a = ParabolicVectorField::heat(1.0);
        let mut errs = Vec::new();
        for h in [0.05, 0.025] {
            let (grid, mu) = heat_setup(h, 0.0, 0.05);
            let u = solve_parabolic(&a, &mu, &grid, &ParabolicConfig::default()).unwrap();
            // sup error over nodes with t >= 0.02, |x| <= 1
            let ta = grid.time.unwrap();
            let mut err = 0.0f64;
            for it in 0..ta.nt {
                let t = grid.time_coord(it);
                if t < 0.02 {
                    continue;
                }
                for i in 0..grid.shape[0] {
                    let x = grid.node_coord(0, i);
                    if x.abs() > 1.0 {
                        continue;
                    }
                    let v = u.values()[it * grid.space_len() + i];
                    err = err.max((v - heat_kernel_1d(x, t)).abs());
                }
            }
            errs.push(err);
        }
        assert!(errs[1] < 0.6 * errs[0], "errors: {errs:?}");
    }

    #[test]
    fn nonnegative_data_nonnegative_solution() {
        let (grid, mu) = heat_setup(0.05, 0.0, 0.05);
        let a = ParabolicVectorField::heat(1.0);
        let u = solve_parabolic(&a, &mu, &grid, &ParabolicConfig::default()).unwrap();
        assert!(u.values().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn backward_causality_is_exact() {
        let (grid, mu) = heat_setup(0.05, 0.0, 0.08);
        let a = ParabolicVectorField::heat(1.0);
        let u1 = solve_parabolic(&a, &mu, &grid, &ParabolicConfig::default()).unwrap();
        // add an atom strictly after the vertex time 0.04
        let mut mu2 = mu.clone();
        mu2.push_spacetime_atom(vec![0.25], 0.06, 3.0).unwrap();
        let u2 = solve_parabolic(&a, &mu2, &grid, &ParabolicConfig::default()).unwrap();
        let v1 = u1.value_at_spacetime(&[0.5], 0.04);
        let v2 = u2.value_at_spacetime(&[0.5], 0.04);
        assert_eq!(v1.to_bits(), v2.to_bits());
    }

    #[test]
    fn constant_coefficient_passes_structure() {
        let a = ParabolicVectorField::heat(1.0);
        for level in [ParabolicAssumptions::Full, ParabolicAssumptions::Monotonicity] {
            let rep = check_parabolic_structure(
                &a,
                &[-1.0],
                &[1.0],
                (-1.0, 0.0),
                2000,
                11,
                level,
            )
            .unwrap();
            assert!(rep.pass, "{level:?}: {:?}", rep.violations);
        }
    }

    #[test]
    fn time_jump_coefficient_passes_par2() {
        // measurable-in-t coefficients need no time continuity
        let mut a = ParabolicVectorField::heat(1.0);
        a.kappa = TimeCoefficient::PiecewiseT {
            t_split: -0.5,
            before: 1.0,
            after: 2.0,
        };
        a.nu = 1.0;
        a.l = 4.0;
        let rep = check_parabolic_structure(
            &a,
            &[-1.0],
            &[1.0],
            (-1.0, 0.0),
            2000,
            13,
            ParabolicAssumptions::Monotonicity,
        )
        .unwrap();
        assert!(rep.pass, "{:?}", rep.violations);
        // and Full as well: the x-continuity line is untouched by t jumps
        let rep2 = check_parabolic_structure(
            &a,
            &[-1.0],
            &[1.0],
            (-1.0, 0.0),
            2000,
            13,
            ParabolicAssumptions::Full,
        )
        .unwrap();
        assert!(rep2.pass, "{:?}", rep2.violations);
    }

    #[test]
    fn negative_dip_fails_monotonicity() {
        let mut a = ParabolicVectorField::heat(1.0);
        a.kappa = TimeCoefficient::Dip {
            base: 1.0,
            depth: 1.5,
            center: vec![0.0],
            radius: 0.3,
        };
        a.l = 10.0;
        let rep = check_parabolic_structure(
            &a,
            &[-1.0],
            &[1.0],
            (-1.0, 0.0),
            5000,
            17,
            ParabolicAssumptions::Monotonicity,
        )
        .unwrap();
        assert!(!rep.pass);
        assert!(rep.violations.iter().any(|w| w.line == "monotonicity"));
    }
}
