//! Both-sides measurement of the pointwise estimates: zero-order and
//! gradient bounds (elliptic and parabolic), Wolff-by-Riesz domination, the
//! Lipschitz criterion, the Lq mapping experiment and refinement trend
//! studies.
//!
//! Every report records the left-hand side, the decomposed right-hand side
//! and the empirical constant c = lhs / (sum of rhs terms) per evaluation
//! point (0/0 reads as 0). The scientific content is the boundedness and
//! stability of c across points and refinements, never its particular
//! value.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Region, ScalarField, VectorField};
use crate::grid::Grid;
use crate::measure::{BackwardCylinder, DensityGrid, RadonMeasure};
use crate::potential::{
    caloric_potential, truncated_riesz, wolff, HavinMazjaPotential, QuadratureSpec,
};
use crate::util::{dist, ls_slope, median};

#[derive(Debug, Clone, Serialize)]
pub struct PointCheck {
    pub point: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub lhs: f64,
    pub rhs: Vec<(String, f64)>,
    pub c: f64,
}

impl PointCheck {
    fn new(point: Vec<f64>, t: Option<f64>, lhs: f64, rhs: Vec<(String, f64)>) -> Self {
        let denom: f64 = rhs.iter().map(|(_, v)| v).sum();
        let c = if denom == 0.0 { 0.0 } else { lhs / denom };
        PointCheck {
            point,
            t,
            lhs,
            rhs,
            c,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub estimate: String,
    pub points: Vec<PointCheck>,
    pub max_c: f64,
    pub median_c: f64,
}

impl VerificationReport {
    fn from_points(estimate: &str, points: Vec<PointCheck>) -> Self {
        let cs: Vec<f64> = points.iter().map(|p| p.c).collect();
        let max_c = cs.iter().copied().fold(0.0f64, f64::max);
        VerificationReport {
            estimate: estimate.into(),
            points,
            max_c,
            median_c: median(&cs),
        }
    }
}

/// Evaluation points must keep B(x0, 2R) inside the domain and stay away
/// from the atoms of the measure (the estimates hold at regular points).
fn check_point(grid: &Grid, mu: &RadonMeasure, x0: &[f64], r2: f64) -> Result<()> {
    if !grid.ball_inside(x0, r2) {
        return Err(Error::RegionOutsideGrid);
    }
    for atom in mu.atoms() {
        if dist(&atom.pos, x0) < 2.0 * grid.h {
            return Err(Error::Parameter(
                "evaluation point within 2h of an atom".into(),
            ));
        }
    }
    Ok(())
}

/// Zero-order estimate: |u(x0)| against the (p-1)-average of u on B(x0, R)
/// plus the Wolff potential W_{1,p}(x0, 2R). Needs p <= n.
pub fn verify_zero_order_elliptic(
    u: &ScalarField,
    mu: &RadonMeasure,
    p: f64,
    points: &[Vec<f64>],
    r: f64,
    quad: &QuadratureSpec,
) -> Result<VerificationReport> {
    let n = u.grid.dim() as f64;
    if p > n {
        return Err(Error::Parameter(format!(
            "zero-order Wolff bound needs p <= n, got p = {p}, n = {n}"
        )));
    }
    let mut checks = Vec::with_capacity(points.len());
    for x0 in points {
        check_point(&u.grid, mu, x0, 2.0 * r)?;
        let lhs = u.value_at(x0).abs();
        let avg = u.ball_average(x0, r, p - 1.0)?;
        let pot = wolff(mu, 1.0, p, x0, 2.0 * r, quad)?;
        checks.push(PointCheck::new(
            x0.clone(),
            None,
            lhs,
            vec![("avg".into(), avg), ("wolff".into(), pot)],
        ));
    }
    Ok(VerificationReport::from_points("km-zero", checks))
}

/// Gradient estimate for general p: |Du(x0)| against the p/2-power average
/// of |Du| + s on B(x0, R) plus W_{1/p, p}(x0, 2R).
pub fn verify_gradient_elliptic(
    du: &VectorField,
    mu: &RadonMeasure,
    p: f64,
    s: f64,
    points: &[Vec<f64>],
    r: f64,
    quad: &QuadratureSpec,
) -> Result<VerificationReport> {
    let mut checks = Vec::with_capacity(points.len());
    for x0 in points {
        check_point(&du.grid, mu, x0, 2.0 * r)?;
        let lhs = du.magnitude_at_point(x0);
        let avg = du.shifted_ball_average(x0, r, 0.5 * p, s)?;
        let pot = wolff(mu, 1.0 / p, p, x0, 2.0 * r, quad)?;
        checks.push(PointCheck::new(
            x0.clone(),
            None,
            lhs,
            vec![("avg".into(), avg), ("wolff".into(), pot)],
        ));
    }
    Ok(VerificationReport::from_points("grad-p", checks))
}

#[derive(Debug, Clone, Serialize)]
pub struct Grad2Report {
    pub magnitude: VerificationReport,
    /// Componentwise form: the bound holds for each single component of
    /// the gradient.
    pub components: Vec<VerificationReport>,
}

/// Linear (p = 2) gradient estimate: |Du(x0)| against the plain average of
/// |Du| + s plus the truncated Riesz potential I_1(x0, 2R), together with
/// its componentwise strengthening.
pub fn verify_gradient_elliptic_p2(
    du: &VectorField,
    mu: &RadonMeasure,
    s: f64,
    points: &[Vec<f64>],
    r: f64,
    quad: &QuadratureSpec,
) -> Result<Grad2Report> {
    let mut mag = Vec::with_capacity(points.len());
    let dim = du.components();
    let mut comps: Vec<Vec<PointCheck>> = vec![Vec::with_capacity(points.len()); dim];
    for x0 in points {
        check_point(&du.grid, mu, x0, 2.0 * r)?;
        let pot = truncated_riesz(mu, 1.0, x0, 2.0 * r, quad)?;
        let lhs = du.magnitude_at_point(x0);
        let avg = du.shifted_ball_average(x0, r, 1.0, s)?;
        mag.push(PointCheck::new(
            x0.clone(),
            None,
            lhs,
            vec![("avg".into(), avg), ("riesz".into(), pot)],
        ));
        for xi in 0..dim {
            let comp = du.component(xi);
            let lhs_c = comp.value_at(x0).abs();
            let avg_c = comp.ball_average(x0, r, 1.0)?;
            comps[xi].push(PointCheck::new(
                x0.clone(),
                None,
                lhs_c,
                vec![("avg".into(), avg_c + s), ("riesz".into(), pot)],
            ));
        }
    }
    Ok(Grad2Report {
        magnitude: VerificationReport::from_points("grad-2", mag),
        components: comps
            .into_iter()
            .enumerate()
            .map(|(xi, checks)| {
                VerificationReport::from_points(&format!("grad-2-component-{xi}"), checks)
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DominationPoint {
    pub point: Vec<f64>,
    pub wolff: f64,
    pub havin_mazja: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    pub p: f64,
    pub r_big: f64,
    pub points: Vec<DominationPoint>,
    pub max_ratio: f64,
}

/// Wolff-by-Riesz domination: W_{1/p,p}(x, R_big) / HM(x) pointwise, with
/// R_big standing in for the untruncated potential.
pub fn verify_riesz_domination(
    mu: &RadonMeasure,
    p: f64,
    points: &[Vec<f64>],
    inner: &Grid,
    quad: &QuadratureSpec,
) -> Result<DominationReport> {
    let hm = HavinMazjaPotential::new(mu, p, inner)?;
    let r_big = mu.box_diameter();
    let mut out = Vec::with_capacity(points.len());
    let mut max_ratio = 0.0f64;
    for x in points {
        let w = wolff(mu, 1.0 / p, p, x, r_big, quad)?;
        let h = hm.eval(x);
        let ratio = if w == 0.0 && h == 0.0 { 0.0 } else { w / h };
        max_ratio = max_ratio.max(ratio);
        out.push(DominationPoint {
            point: x.clone(),
            wolff: w,
            havin_mazja: h,
            ratio,
        });
    }
    Ok(DominationReport {
        p,
        r_big,
        points: out,
        max_ratio,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub center: Vec<f64>,
    pub radius: f64,
    /// sup of |Du| over B_{R/2}.
    pub lhs: f64,
    pub avg_term: f64,
    /// sup of the Wolff field W_{1/p,p}(., R) over B_R; infinite when the
    /// hypothesis fails.
    pub wolff_sup: f64,
    /// None when the Wolff field is unbounded on B_R (criterion hypothesis
    /// fails on this instance).
    pub c: Option<f64>,
}

/// Lipschitz criterion: bounded Wolff field on B_R controls the sup of the
/// gradient on the half ball.
pub fn verify_lipschitz_criterion(
    du: &VectorField,
    mu: &RadonMeasure,
    p: f64,
    s: f64,
    center: &[f64],
    r: f64,
    quad: &QuadratureSpec,
) -> Result<LipschitzReport> {
    if !du.grid.ball_inside(center, 2.0 * r) {
        return Err(Error::RegionOutsideGrid);
    }
    let lhs = du.linf_norm(&Region::Ball {
        center: center.to_vec(),
        radius: 0.5 * r,
    })?;
    let avg_term = du.shifted_ball_average(center, r, 0.5 * p, s)?;
    let mut wolff_sup = 0.0f64;
    for flat in du.grid.nodes_in_ball(center, r) {
        let mut idx = vec![0usize; du.grid.dim()];
        let mut pos = vec![0.0; du.grid.dim()];
        du.grid.node_position(flat, &mut idx, &mut pos);
        wolff_sup = wolff_sup.max(wolff(mu, 1.0 / p, p, &pos, r, quad)?);
    }
    let c = if wolff_sup.is_finite() {
        let denom = avg_term + wolff_sup;
        Some(if denom == 0.0 { 0.0 } else { lhs / denom })
    } else {
        None
    };
    Ok(LipschitzReport {
        center: center.to_vec(),
        radius: r,
        lhs,
        avg_term,
        wolff_sup,
        c,
    })
}

/// Parabolic gradient estimate at cylinder vertices (x0, t0): |Du| against
/// the cylinder average of |Du| + s plus the caloric potential
/// I_1^{|mu|}(x0, t0; 2R).
pub fn verify_parabolic_gradient(
    du: &VectorField,
    mu: &RadonMeasure,
    s: f64,
    points: &[(Vec<f64>, f64)],
    r: f64,
    quad: &QuadratureSpec,
) -> Result<VerificationReport> {
    let mut checks = Vec::with_capacity(points.len());
    for (x0, t0) in points {
        let lhs = du.magnitude_at_spacetime(x0, *t0);
        let q = BackwardCylinder::new(x0.clone(), *t0, r)?;
        let avg = du.shifted_cylinder_average(&q, 1.0, s)?;
        let pot = caloric_potential(mu, 1.0, x0, *t0, 2.0 * r, quad)?;
        checks.push(PointCheck::new(
            x0.clone(),
            Some(*t0),
            lhs,
            vec![("avg".into(), avg), ("caloric".into(), pot)],
        ));
    }
    Ok(VerificationReport::from_points("parabolic-grad", checks))
}

/// Parabolic zero-order estimate: |u(x0, t0)| against the cylinder average
/// of |u| + s, the order-2 caloric potential, and the R*s term.
pub fn verify_parabolic_zero_order(
    u: &ScalarField,
    mu: &RadonMeasure,
    s: f64,
    points: &[(Vec<f64>, f64)],
    r: f64,
    quad: &QuadratureSpec,
) -> Result<VerificationReport> {
    let mut checks = Vec::with_capacity(points.len());
    for (x0, t0) in points {
        let lhs = u.value_at_spacetime(x0, *t0).abs();
        let q = BackwardCylinder::new(x0.clone(), *t0, r)?;
        let avg = u.shifted_cylinder_average(&q, 1.0, s)?;
        let pot = caloric_potential(mu, 2.0, x0, *t0, 2.0 * r, quad)?;
        checks.push(PointCheck::new(
            x0.clone(),
            Some(*t0),
            lhs,
            vec![
                ("avg".into(), avg),
                ("caloric".into(), pot),
                ("rs".into(), r * s),
            ],
        ));
    }
    Ok(VerificationReport::from_points("parabolic-zero", checks))
}

#[derive(Debug, Clone, Serialize)]
pub struct MappingReport {
    pub gamma: f64,
    pub p: f64,
    pub n: usize,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub expected_slope: f64,
    /// Marginal integrability q = n / gamma.
    pub q: f64,
    /// Critical exponent inferred from the fitted slope: n / (-slope).
    pub critical_inferred: f64,
    /// n q (p - 1) / (n - q).
    pub critical_formula: f64,
}

/// Radial mapping experiment: for the density |x|^(-gamma) the Wolff field
/// behaves like r^((1-gamma)/(p-1)) near the origin; the fitted log-log
/// slope pins the critical integrability exponent.
pub fn mapping_experiment(
    gamma: f64,
    p: f64,
    n: usize,
    cells: usize,
    box_half: f64,
    quad: &QuadratureSpec,
) -> Result<MappingReport> {
    if n < 2 {
        return Err(Error::Parameter("mapping experiment needs n >= 2".into()));
    }
    if !(gamma * 1.0 < n as f64) {
        return Err(Error::Parameter(format!(
            "gamma = {gamma} must satisfy gamma < n for local integrability"
        )));
    }
    let box_min = vec![-box_half; n];
    let box_max = vec![box_half; n];
    // even cell counts keep the singularity off all cell centers
    let cells = cells + cells % 2;
    let grid = Grid::cell_centers_in_box(&box_min, &box_max, cells)?;
    let den = DensityGrid::from_fn(grid, |x| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        r.powf(-gamma)
    })?;
    let mut mu = RadonMeasure::spatial(box_min.clone(), box_max)?;
    mu.set_density(den)?;

    // fit close to the origin: the truncation tail contributes a constant
    // offset that would bias the slope at larger radii
    let h = mu.density_spacing().unwrap();
    let r_lo = 4.0 * h;
    let r_hi = (0.025 * box_half).max(8.0 * h);
    let r_trunc = mu.box_diameter();
    let count = 12usize;
    let beta = 1.0 / p;
    let mut radii = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count);
    for k in 0..count {
        let r = r_lo * (r_hi / r_lo).powf(k as f64 / (count - 1) as f64);
        let mut x0 = vec![0.0; n];
        x0[0] = r;
        let w = wolff(&mu, beta, p, &x0, r_trunc, quad)?;
        radii.push(r);
        values.push(w);
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let slope = ls_slope(&xs, &ys);
    let expected_slope = (1.0 - gamma) / (p - 1.0);
    let q = n as f64 / gamma;
    let critical_inferred = if slope < 0.0 {
        n as f64 / (-slope)
    } else {
        f64::INFINITY
    };
    let critical_formula = n as f64 * q * (p - 1.0) / (n as f64 - q);
    Ok(MappingReport {
        gamma,
        p,
        n,
        radii,
        values,
        slope,
        expected_slope,
        q,
        critical_inferred,
        critical_formula,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GridOutcome {
    pub cells: usize,
    pub converged: bool,
    /// Aggregate empirical constant on this grid; None when the solve
    /// failed.
    pub max_c: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendReport {
    pub estimate: String,
    pub per_grid: Vec<GridOutcome>,
    /// True when the two finest grids both converged and their constants
    /// agree within the stability factor.
    pub pass: bool,
    pub stability_factor: f64,
}

/// Runs one estimate over a ladder of grids and decides stability: the two
/// finest constants must agree within `stability_factor`.
pub fn refinement_study(
    estimate: &str,
    grids: &[usize],
    stability_factor: f64,
    mut runner: impl FnMut(usize) -> Result<f64>,
) -> TrendReport {
    let mut per_grid = Vec::with_capacity(grids.len());
    for &cells in grids {
        match runner(cells) {
            Ok(c) => per_grid.push(GridOutcome {
                cells,
                converged: true,
                max_c: Some(c),
            }),
            Err(_) => per_grid.push(GridOutcome {
                cells,
                converged: false,
                max_c: None,
            }),
        }
    }
    let pass = if per_grid.len() >= 2 {
        let a = &per_grid[per_grid.len() - 2];
        let b = &per_grid[per_grid.len() - 1];
        match (a.converged, b.converged, a.max_c, b.max_c) {
            (true, true, Some(ca), Some(cb)) if ca > 0.0 && cb > 0.0 => {
                let ratio = (ca / cb).max(cb / ca);
                ratio < stability_factor
            }
            (true, true, Some(ca), Some(cb)) => ca == cb, // both zero passes
            _ => false,
        }
    } else {
        per_grid.iter().all(|g| g.converged)
    };
    TrendReport {
        estimate: estimate.into(),
        per_grid,
        pass,
        stability_factor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: QuadratureSpec = QuadratureSpec {
        nodes: 256,
        rho_min: None,
    };

    #[test]
    fn zero_field_zero_measure_gives_zero_constants() {
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 32).unwrap();
        let u = ScalarField::zeros(grid);
        let mu = RadonMeasure::spatial(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let rep =
            verify_zero_order_elliptic(&u, &mu, 2.0, &[vec![0.0, 0.0]], 0.2, &QUAD).unwrap();
        assert_eq!(rep.max_c, 0.0);
    }

    #[test]
    fn zero_order_rejects_p_above_n() {
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 8).unwrap();
        let u = ScalarField::zeros(grid);
        let mu = RadonMeasure::spatial(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert!(verify_zero_order_elliptic(&u, &mu, 2.5, &[vec![0.0, 0.0]], 0.2, &QUAD).is_err());
    }

    #[test]
    fn affine_gradient_with_zero_measure_has_c_one() {
        // |Du| constant: lhs equals the average term exactly, so c = 1
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 32).unwrap();
        let u = ScalarField::from_fn(grid, |p| p[0]).unwrap();
        let du = u.gradient();
        let mu = RadonMeasure::spatial(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let rep =
            verify_gradient_elliptic(&du, &mu, 2.0, 0.0, &[vec![0.0, 0.0]], 0.25, &QUAD).unwrap();
        assert!((rep.max_c - 1.0).abs() < 1e-12, "c = {}", rep.max_c);
    }

    #[test]
    fn points_near_atoms_are_rejected() {
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 32).unwrap();
        let u = ScalarField::zeros(grid);
        let mut mu = RadonMeasure::spatial(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        mu.push_atom(vec![0.0, 0.0], 1.0).unwrap();
        let near = vec![vec![0.01, 0.0]];
        assert!(verify_zero_order_elliptic(&u, &mu, 2.0, &near, 0.2, &QUAD).is_err());
    }

    #[test]
    fn domination_zero_measure_reads_zero() {
        let mu = RadonMeasure::spatial(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let inner = Grid::cell_centers_in_box(&[-1.0, -1.0], &[1.0, 1.0], 16).unwrap();
        let rep =
            verify_riesz_domination(&mu, 2.0, &[vec![0.5, 0.0]], &inner, &QUAD).unwrap();
        assert_eq!(rep.max_ratio, 0.0);
    }

    #[test]
    fn lipschitz_affine_case() {
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 32).unwrap();
        let u = ScalarField::from_fn(grid, |p| p[0]).unwrap();
        let du = u.gradient();
        let mu = RadonMeasure::spatial(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let rep =
            verify_lipschitz_criterion(&du, &mu, 2.0, 0.0, &[0.0, 0.0], 0.4, &QUAD).unwrap();
        assert!((rep.c.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_reports_unbounded_wolff_as_inapplicable() {
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 32).unwrap();
        let u = ScalarField::from_fn(grid, |p| p[0]).unwrap();
        let du = u.gradient();
        let mut mu = RadonMeasure::spatial(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        mu.push_atom(vec![0.0, 0.0], 1.0).unwrap();
        let rep =
            verify_lipschitz_criterion(&du, &mu, 2.0, 0.0, &[0.0, 0.0], 0.4, &QUAD).unwrap();
        assert!(rep.c.is_none());
        assert!(rep.wolff_sup.is_infinite());
    }

    #[test]
    fn mapping_slope_for_gamma_three_halves() {
        let rep = mapping_experiment(1.5, 2.0, 2, 1024, 1.0, &QUAD).unwrap();
        assert!(
            (rep.slope - rep.expected_slope).abs() < 0.05,
            "slope {} vs {}",
            rep.slope,
            rep.expected_slope
        );
        assert!((rep.expected_slope + 0.5).abs() < 1e-12);
        assert!(
            (rep.critical_inferred - rep.critical_formula).abs() / rep.critical_formula < 0.1,
            "inferred {} vs formula {}",
            rep.critical_inferred,
            rep.critical_formula
        );
    }

    #[test]
    fn mapping_subcritical_gamma_stays_bounded() {
        let rep = mapping_experiment(0.5, 2.0, 2, 256, 1.0, &QUAD).unwrap();
        // the field stays bounded toward the origin: values level off
        assert!(rep.values.iter().all(|v| v.is_finite()));
        let vmax = rep.values.iter().cloned().fold(0.0f64, f64::max);
        let vmin = rep.values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(vmax / vmin < 2.0, "spread {vmax} / {vmin}");
    }

    #[test]
    fn refinement_study_flags_failures() {
        let ok = refinement_study("t", &[16, 32], 2.0, |_| Ok(1.0));
        assert!(ok.pass);
        let drifting = refinement_study("t", &[16, 32], 2.0, |n| Ok(n as f64));
        assert!(!drifting.pass);
        let failing = refinement_study("t", &[16, 32], 2.0, |n| {
            if n > 16 {
                Err(Error::NoConvergence {
                    residual: 1.0,
                    iterations: 1,
                    history: vec![1.0],
                })
            } else {
                Ok(1.0)
            }
        });
        assert!(!failing.pass);
    }
}
