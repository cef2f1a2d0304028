//! Structured vector fields a(x, z) = kappa(x) (|z|^2 + s^2)^((p-2)/2) z,
//! sampled structure checks, the Dini integral of a modulus of continuity,
//! and the finite-difference Dirichlet solver for -div a(x, Du) = mu.
//!
//! The discretization is the conservative 5-point (n = 2) / 7-point (n = 3)
//! scheme with edge-midpoint gradient reconstruction: the normal component
//! of Du on an edge is the two-point difference, tangential components
//! average the central differences at the edge endpoints. Summing the
//! discrete divergence telescopes to the boundary flux, so the discrete
//! divergence theorem is exact.
//!
//! The nonlinearity is handled by damped Newton on the regularized
//! coefficient (|z|^2 + s^2 + eps^2)^((p-2)/2) with continuation eps -> 0,
//! falling back to Picard (lagged diffusivity) steps whenever a Newton step
//! stalls.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::measure::RadonMeasure;
use crate::sparse::{bicgstab, cg, CooBuilder};
use crate::util::dist;

// ---- coefficient families and moduli ------------------------------------

/// Modulus of continuity omega: non-decreasing, omega(0) = 0, omega <= 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Modulus {
    Zero,
    /// min(1, rho^theta), theta in (0, 1].
    Power { theta: f64 },
    /// min(1, 1/log(e/rho)): not Dini for exponent 2/p <= 1.
    LogReciprocal,
}

impl Modulus {
    pub fn eval(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        match *self {
            Modulus::Zero => 0.0,
            Modulus::Power { theta } => rho.powf(theta).min(1.0),
            Modulus::LogReciprocal => {
                let l = (std::f64::consts::E / rho).ln();
                if l <= 1.0 {
                    1.0
                } else {
                    1.0 / l
                }
            }
        }
    }
}

/// Scalar coefficient kappa(x).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Coefficient {
    Constant(f64),
    /// base + amplitude * |x - center|^theta: exactly theta-Hoelder.
    HolderRadial {
        base: f64,
        amplitude: f64,
        theta: f64,
        center: Vec<f64>,
    },
    /// Discontinuous step across the hyperplane x[axis] = threshold.
    Jump {
        axis: usize,
        threshold: f64,
        low: f64,
        high: f64,
    },
    /// base - depth * exp(-|x - center|^2 / radius^2); a deep dip breaks
    /// ellipticity.
    Dip {
        base: f64,
        depth: f64,
        center: Vec<f64>,
        radius: f64,
    },
}

impl Coefficient {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::HolderRadial {
                base,
                amplitude,
                theta,
                center,
            } => base + amplitude * dist(x, center).powf(*theta),
            Coefficient::Jump {
                axis,
                threshold,
                low,
                high,
            } => {
                if x[*axis] < *threshold {
                    *low
                } else {
                    *high
                }
            }
            Coefficient::Dip {
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
}

/// The equation's vector field with its claimed structure constants.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StructuredVectorField {
    pub p: f64,
    pub s: f64,
    /// Claimed ellipticity: 1/nu lower-bounds the a_z quadratic form ratio.
    pub nu: f64,
    /// Claimed growth constant.
    pub l: f64,
    /// Claimed coefficient-continuity constant.
    pub l1: f64,
    /// Hoelder exponent for the a_z continuity check, p > 2 only.
    pub alpha: Option<f64>,
    pub kappa: Coefficient,
    pub omega: Modulus,
}

impl StructuredVectorField {
    /// Prototype p-Laplacian: s = 0, kappa = 1.
    pub fn p_laplacian(p: f64) -> Self {
        StructuredVectorField {
            p,
            s: 0.0,
            nu: 1.0,
            l: 2.0 * p,
            l1: 1.0,
            alpha: if p > 2.0 {
                Some(0.5 * (p - 2.0).min(1.0))
            } else {
                None
            },
            kappa: Coefficient::Constant(1.0),
            omega: Modulus::Zero,
        }
    }

    pub fn kappa_at(&self, x: &[f64]) -> f64 {
        self.kappa.eval(x)
    }

    /// (|z|^2 + s^2 + eps^2)^((p-2)/2).
    fn gamma(&self, q: f64) -> f64 {
        if self.p == 2.0 {
            1.0
        } else {
            q.powf(0.5 * (self.p - 2.0))
        }
    }

    /// d gamma / d q.
    fn dgamma(&self, q: f64) -> f64 {
        if self.p == 2.0 {
            0.0
        } else {
            0.5 * (self.p - 2.0) * q.powf(0.5 * (self.p - 4.0))
        }
    }

    /// a(x, z) with regularization eps, written into `out`.
    pub fn a(&self, x: &[f64], z: &[f64], eps: f64, out: &mut [f64]) {
        let q = z.iter().map(|v| v * v).sum::<f64>() + self.s * self.s + eps * eps;
        let k = self.kappa_at(x) * self.gamma(q);
        for (o, &zi) in out.iter_mut().zip(z) {
            *o = k * zi;
        }
    }

    /// Jacobian a_z(x, z) with regularization eps, written into `out`
    /// (row-major dim x dim).
    pub fn a_z(&self, x: &[f64], z: &[f64], eps: f64, out: &mut [f64]) {
        let dim = z.len();
        let q = z.iter().map(|v| v * v).sum::<f64>() + self.s * self.s + eps * eps;
        let kap = self.kappa_at(x);
        let g = self.gamma(q);
        let dg = self.dgamma(q);
        for r in 0..dim {
            for c in 0..dim {
                let mut v = 2.0 * dg * z[r] * z[c];
                if r == c {
                    v += g;
                }
                out[r * dim + c] = kap * v;
            }
        }
    }
}

// ---- structure checks ----------------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct Witness {
    pub line: String,
    pub x: Vec<f64>,
    pub x0: Option<Vec<f64>>,
    pub z: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StructureReport {
    pub pass: bool,
    pub samples: usize,
    /// Smallest L making the growth line hold on the samples.
    pub measured_l: f64,
    /// Smallest admissible nu (1 / min quadratic-form ratio).
    pub measured_nu: f64,
    /// Smallest L1 making the continuity line hold on the samples.
    pub measured_l1: f64,
    /// Smallest constant for the a_z Hoelder line, when checked.
    pub measured_holder: Option<f64>,
    pub violations: Vec<Witness>,
}

fn op_norm_symmetric(m: &[f64], dim: usize) -> f64 {
    // power iteration; m is symmetric so the dominant eigenvalue magnitude
    // is the operator norm
    let mut v = vec![1.0; dim];
    let mut w = vec![0.0; dim];
    let mut lambda = 0.0;
    for _ in 0..50 {
        for r in 0..dim {
            w[r] = (0..dim).map(|c| m[r * dim + c] * v[c]).sum();
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        for r in 0..dim {
            v[r] = w[r] / norm;
        }
    }
    lambda
}

/// Samples the growth/ellipticity/continuity inequalities of the vector
/// field on random (x, x0, z, lambda) tuples and reports the measured best
/// constants; passes iff the claimed constants are admissible.
pub fn check_structure(
    a: &StructuredVectorField,
    box_min: &[f64],
    box_max: &[f64],
    samples: usize,
    seed: u64,
) -> Result<StructureReport> {
    if samples < 1000 {
        return Err(Error::Parameter(format!(
            "structure check needs at least 1000 samples, got {samples}"
        )));
    }
    let dim = box_min.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = a.p;
    let s = a.s;
    let slack = 1.0 + 1e-9;

    let mut measured_l: f64 = 0.0;
    let mut measured_min_ratio = f64::INFINITY;
    let mut measured_l1: f64 = 0.0;
    let mut measured_holder: f64 = 0.0;
    let mut violations: Vec<Witness> = Vec::new();
    let mut av = vec![0.0; dim];
    let mut av0 = vec![0.0; dim];
    let mut jac = vec![0.0; dim * dim];
    let mut jac2 = vec![0.0; dim * dim];

    for i in 0..samples {
        let x: Vec<f64> = (0..dim)
            .map(|d| rng.gen_range(box_min[d]..box_max[d]))
            .collect();
        // pair at log-spaced separation to probe small-scale continuity
        let sep = 10f64.powf(rng.gen_range(-6.0..-0.3));
        let dir: Vec<f64> = {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = v.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
            v.iter_mut().for_each(|t| *t /= n);
            v
        };
        let x0: Vec<f64> = (0..dim)
            .map(|d| (x[d] + sep * dir[d]).clamp(box_min[d], box_max[d]))
            .collect();
        let zmag = 10f64.powf(rng.gen_range(-3.0..3.0));
        let z: Vec<f64> = {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = v.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
            v.iter_mut().for_each(|t| *t *= zmag / n);
            v
        };
        let lambda: Vec<f64> = {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = v.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
            v.iter_mut().for_each(|t| *t /= n);
            v
        };

        let q = z.iter().map(|v| v * v).sum::<f64>() + s * s;
        if q == 0.0 {
            continue;
        }
        a.a(&x, &z, 0.0, &mut av);
        a.a_z(&x, &z, 0.0, &mut jac);

        // growth: |a| + |a_z| sqrt(q) <= L q^((p-1)/2)
        let a_norm = av.iter().map(|v| v * v).sum::<f64>().sqrt();
        let az_norm = op_norm_symmetric(&jac, dim);
        let lhs1 = a_norm + az_norm * q.sqrt();
        let rhs1_unit = q.powf(0.5 * (p - 1.0));
        let l_here = lhs1 / rhs1_unit;
        measured_l = measured_l.max(l_here);
        if l_here > a.l * slack && violations.len() < 8 {
            violations.push(Witness {
                line: "growth".into(),
                x: x.clone(),
                x0: None,
                z: z.clone(),
                lhs: lhs1,
                rhs: a.l * rhs1_unit,
            });
        }

        // ellipticity: (1/nu) q^((p-2)/2) |lambda|^2 <= <a_z lambda, lambda>
        let mut quad = 0.0;
        for r in 0..dim {
            for c in 0..dim {
                quad += jac[r * dim + c] * lambda[r] * lambda[c];
            }
        }
        let ratio = quad / q.powf(0.5 * (p - 2.0));
        measured_min_ratio = measured_min_ratio.min(ratio);
        if ratio * slack < 1.0 / a.nu && violations.len() < 8 {
            violations.push(Witness {
                line: "ellipticity".into(),
                x: x.clone(),
                x0: None,
                z: z.clone(),
                lhs: quad,
                rhs: q.powf(0.5 * (p - 2.0)) / a.nu,
            });
        }

        // continuity: |a(x,z) - a(x0,z)| <= L1 omega(|x-x0|) q^((p-1)/2)
        a.a(&x0, &z, 0.0, &mut av0);
        let diff = av
            .iter()
            .zip(&av0)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt();
        let om = a.omega.eval(dist(&x, &x0));
        if diff > 0.0 {
            let l1_here = if om > 0.0 {
                diff / (om * rhs1_unit)
            } else {
                f64::INFINITY
            };
            measured_l1 = measured_l1.max(l1_here);
            if l1_here > a.l1 * slack && violations.len() < 8 {
                violations.push(Witness {
                    line: "continuity".into(),
                    x: x.clone(),
                    x0: Some(x0.clone()),
                    z: z.clone(),
                    lhs: diff,
                    rhs: a.l1 * om * rhs1_unit,
                });
            }
        }

        // a_z Hoelder continuity, p > 2 only
        if let Some(alpha) = a.alpha {
            if p > 2.0 && i % 4 == 0 {
                let z2mag = 10f64.powf(rng.gen_range(-3.0..3.0));
                let z2: Vec<f64> = {
                    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let n = v.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
                    v.iter_mut().for_each(|t| *t *= z2mag / n);
                    v
                };
                a.a_z(&x, &z2, 0.0, &mut jac2);
                let mut d = vec![0.0; dim * dim];
                for k in 0..dim * dim {
                    d[k] = jac[k] - jac2[k];
                }
                let dn = op_norm_symmetric(&d, dim);
                let dz = z
                    .iter()
                    .zip(&z2)
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum::<f64>()
                    .sqrt();
                let qq = z.iter().map(|v| v * v).sum::<f64>()
                    + z2.iter().map(|v| v * v).sum::<f64>()
                    + s * s;
                if dz > 0.0 && qq > 0.0 {
                    let denom = dz.powf(alpha) * qq.powf(0.5 * (p - 2.0 - alpha));
                    if denom > 0.0 {
                        let c_here = dn / denom;
                        measured_holder = measured_holder.max(c_here);
                        if c_here > a.l * slack && violations.len() < 8 {
                            violations.push(Witness {
                                line: "holder".into(),
                                x: x.clone(),
                                x0: None,
                                z: z.clone(),
                                lhs: dn,
                                rhs: a.l * denom,
                            });
                        }
                    }
                }
            }
        }
    }

    Ok(StructureReport {
        pass: violations.is_empty(),
        samples,
        measured_l,
        measured_nu: if measured_min_ratio > 0.0 {
            1.0 / measured_min_ratio
        } else {
            f64::INFINITY
        },
        measured_l1,
        measured_holder: a.alpha.map(|_| measured_holder),
        violations,
    })
}

/// Dini integral d(R) = integral over (0, R] of omega(rho)^(2/p) d(rho)/rho,
/// marched decade by decade toward zero; returns the +inf sentinel when the
/// decade contributions do not vanish.
pub fn dini_integral(omega: &Modulus, r: f64, p: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let e = 2.0 / p;
    let per_decade = 64;
    let mut total = 0.0;
    let mut prev_inc = f64::NAN;
    for k in 0..200 {
        let hi = r * 10f64.powi(-k);
        let lo = hi / 10.0;
        let (la, lb) = (lo.ln(), hi.ln());
        let du = (lb - la) / per_decade as f64;
        let mut inc = 0.0;
        for j in 0..per_decade {
            let u = la + (j as f64 + 0.5) * du;
            inc += omega.eval(u.exp()).powf(e) * du;
        }
        total += inc;
        if inc < 1e-12 * total.max(1e-300) {
            return total;
        }
        // geometric decay lets us close the tail analytically
        if prev_inc.is_finite() && prev_inc > 0.0 {
            let ratio = inc / prev_inc;
            if ratio < 0.97 {
                let tail = inc * ratio / (1.0 - ratio);
                if tail < 1e-9 * total.max(1e-300) {
                    return total + tail;
                }
            }
        }
        prev_inc = inc;
    }
    f64::INFINITY
}

// ---- Dirichlet solver ----------------------------------------------------

/// Zero-boundary domain inside the grid box.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum DomainMask {
    /// All nodes strictly inside the box are unknowns.
    Box,
    /// Nodes with |x - center| < radius (and strictly inside the box).
    Ball { center: Vec<f64>, radius: f64 },
}

impl DomainMask {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            DomainMask::Box => true,
            DomainMask::Ball { center, radius } => dist(x, center) < *radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    /// Residual L-inf tolerance relative to the data scale.
    pub tol_rel: f64,
    /// Regularization ladder, relative to the gradient scale of the first
    /// sweep; must end at the target regularization.
    pub eps_ladder: Vec<f64>,
    pub max_newton: usize,
    pub max_picard: usize,
    pub max_linear: usize,
    pub linear_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_rel: 1e-8,
            eps_ladder: vec![1e-1, 1e-2, 1e-4, 1e-6, 1e-8],
            max_newton: 30,
            max_picard: 400,
            max_linear: 40_000,
            linear_tol: 1e-12,
        }
    }
}

struct Discretization<'a> {
    field: &'a StructuredVectorField,
    grid: &'a Grid,
    /// interior flat indices
    interior: Vec<usize>,
    /// flat -> interior id (or usize::MAX)
    inv: Vec<usize>,
    /// per-axis strides in flat space
    strides: Vec<usize>,
    kappa_cache: Vec<f64>, // kappa at edge midpoints would need per-edge keys; cache per node instead
}

impl<'a> Discretization<'a> {
    fn new(field: &'a StructuredVectorField, grid: &'a Grid, mask: &DomainMask) -> Self {
        let dim = grid.dim();
        let mut strides = vec![1usize; dim];
        for d in (0..dim.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * grid.shape[d + 1];
        }
        let mut interior = Vec::new();
        let mut inv = vec![usize::MAX; grid.space_len()];
        let mut idx = vec![0usize; dim];
        let mut pos = vec![0.0; dim];
        for flat in 0..grid.space_len() {
            grid.node_position(flat, &mut idx, &mut pos);
            let on_face = (0..dim).any(|d| idx[d] == 0 || idx[d] == grid.shape[d] - 1);
            if !on_face && mask.contains(&pos) {
                inv[flat] = interior.len();
                interior.push(flat);
            }
        }
        let mut kappa_cache = vec![0.0; grid.space_len()];
        for flat in 0..grid.space_len() {
            grid.node_position(flat, &mut idx, &mut pos);
            kappa_cache[flat] = field.kappa_at(&pos);
        }
        Discretization {
            field,
            grid,
            interior,
            inv,
            strides,
            kappa_cache,
        }
    }

    /// kappa at the midpoint of the edge from `flat` in +d, approximated by
    /// the endpoint average (second order, avoids re-evaluating coefficients
    /// off the lattice).
    fn kappa_edge(&self, flat: usize, d: usize) -> f64 {
        0.5 * (self.kappa_cache[flat] + self.kappa_cache[flat + self.strides[d]])
    }

    /// Gradient reconstruction at the midpoint of edge (A, A + e_d); values
    /// outside the box read as zero.
    fn edge_gradient(&self, u: &[f64], a_idx: &[usize], a_flat: usize, d: usize, g: &mut [f64]) {
        let grid = self.grid;
        let dim = grid.dim();
        let h = grid.h;
        let b_flat = a_flat + self.strides[d];
        g[d] = (u[b_flat] - u[a_flat]) / h;
        for k in 0..dim {
            if k == d {
                continue;
            }
            let stride_k = self.strides[k];
            let nk = grid.shape[k];
            let ik = a_idx[k];
            let mut acc = 0.0;
            // central differences at both endpoints, zero outside the box
            for base in [a_flat, b_flat] {
                let up = if ik + 1 < nk { u[base + stride_k] } else { 0.0 };
                let dn = if ik > 0 { u[base - stride_k] } else { 0.0 };
                acc += up - dn;
            }
            g[k] = acc / (4.0 * h);
        }
    }

    /// Residual of -div a(x, Du) - mu at every interior node.
    fn residual(&self, u: &[f64], source: &[f64], eps: f64, out: &mut [f64]) {
        let dim = self.grid.dim();
        let h = self.grid.h;
        out.par_iter_mut()
            .zip(self.interior.par_iter())
            .for_each(|(o, &flat)| {
                let mut idx = vec![0usize; dim];
                let mut g = vec![0.0; dim];
                self.grid.space_unindex(flat, &mut idx);
                let mut div = 0.0;
                for d in 0..dim {
                    // outgoing edge (flat, flat + e_d)
                    self.edge_gradient(u, &idx, flat, d, &mut g);
                    let f_out = self.flux(flat, d, &g, eps);
                    // incoming edge (flat - e_d, flat)
                    let a_flat = flat - self.strides[d];
                    idx[d] -= 1;
                    self.edge_gradient(u, &idx, a_flat, d, &mut g);
                    idx[d] += 1;
                    let f_in = self.flux(a_flat, d, &g, eps);
                    div += f_out - f_in;
                }
                *o = -div / h - source[flat];
            });
    }

    /// d-component of the flux on the edge from `a_flat` in +d.
    fn flux(&self, a_flat: usize, d: usize, g: &[f64], eps: f64) -> f64 {
        let q = g.iter().map(|v| v * v).sum::<f64>()
            + self.field.s * self.field.s
            + eps * eps;
        self.kappa_edge(a_flat, d) * self.field.gamma(q) * g[d]
    }

    /// Frozen-coefficient (Picard) SPD system: for the current iterate the
    /// edge diffusivity gamma(|g|^2 + s^2 + eps^2) multiplies the standard
    /// two-point flux.
    fn picard_system(&self, u: &[f64], source: &[f64], eps: f64) -> (crate::sparse::CsrMatrix, Vec<f64>) {
        let dim = self.grid.dim();
        let h = self.grid.h;
        let n = self.interior.len();
        let mut builder = CooBuilder::new(n);
        let mut rhs = vec![0.0; n];
        let mut idx = vec![0usize; dim];
        let mut g = vec![0.0; dim];
        for (row, &flat) in self.interior.iter().enumerate() {
            self.grid.space_unindex(flat, &mut idx);
            let mut diag = 0.0;
            for d in 0..dim {
                for (a_flat, nb_flat) in [
                    (flat, flat + self.strides[d]),
                    (flat - self.strides[d], flat - self.strides[d]),
                ] {
                    let (edge_base, neighbor) = if a_flat == flat {
                        (flat, nb_flat)
                    } else {
                        (a_flat, a_flat)
                    };
                    // recompute multi-index for the edge base
                    if edge_base != flat {
                        idx[d] -= 1;
                    }
                    self.edge_gradient(u, &idx, edge_base, d, &mut g);
                    if edge_base != flat {
                        idx[d] += 1;
                    }
                    let q = g.iter().map(|v| v * v).sum::<f64>()
                        + self.field.s * self.field.s
                        + eps * eps;
                    let w = self.kappa_edge(edge_base, d) * self.field.gamma(q) / (h * h);
                    diag += w;
                    let col = self.inv[neighbor];
                    if col != usize::MAX {
                        builder.push(row, col, -w);
                    }
                }
            }
            builder.push(row, row, diag);
            rhs[row] = source[flat];
        }
        (builder.build(), rhs)
    }

    /// Exact Jacobian of the residual (9-point stencil in 2D, 19 in 3D).
    fn jacobian(&self, u: &[f64], eps: f64) -> crate::sparse::CsrMatrix {
        let dim = self.grid.dim();
        let h = self.grid.h;
        let n = self.interior.len();
        let s2 = self.field.s * self.field.s + eps * eps;
        let mut builder = CooBuilder::new(n);
        let mut idx = vec![0usize; dim];
        let mut g = vec![0.0; dim];
        // enumerate edges (a, a + e_d) adjacent to at least one interior node
        for a_flat in 0..self.grid.space_len() {
            self.grid.space_unindex(a_flat, &mut idx);
            for d in 0..dim {
                if idx[d] + 1 >= self.grid.shape[d] {
                    continue;
                }
                let b_flat = a_flat + self.strides[d];
                let row_a = self.inv[a_flat];
                let row_b = self.inv[b_flat];
                if row_a == usize::MAX && row_b == usize::MAX {
                    continue;
                }
                self.edge_gradient(u, &idx, a_flat, d, &mut g);
                let q = g.iter().map(|v| v * v).sum::<f64>() + s2;
                let kap = self.kappa_edge(a_flat, d);
                let gam = self.field.gamma(q);
                let dgam = self.field.dgamma(q);
                // stencil: (node, axis, dcoeff) with dg[axis]/du_node = dcoeff
                let mut scatter = |node: usize, axis: usize, dcoeff: f64| {
                    let col = self.inv[node];
                    if col == usize::MAX {
                        return;
                    }
                    // dF/du = kappa [2 dgamma g_axis dcoeff g_d + gamma dcoeff delta(axis=d)]
                    let mut df = 2.0 * dgam * g[axis] * dcoeff * g[d];
                    if axis == d {
                        df += gam * dcoeff;
                    }
                    df *= kap;
                    // R_A -= F/h, R_B += F/h
                    if row_a != usize::MAX {
                        builder.push(row_a, col, -df / h);
                    }
                    if row_b != usize::MAX {
                        builder.push(row_b, col, df / h);
                    }
                };
                scatter(a_flat, d, -1.0 / h);
                scatter(b_flat, d, 1.0 / h);
                for k in 0..dim {
                    if k == d {
                        continue;
                    }
                    let stride_k = self.strides[k];
                    let nk = self.grid.shape[k];
                    let ik = idx[k];
                    let c = 1.0 / (4.0 * h);
                    if ik + 1 < nk {
                        scatter(a_flat + stride_k, k, c);
                        scatter(b_flat + stride_k, k, c);
                    }
                    if ik > 0 {
                        scatter(a_flat - stride_k, k, -c);
                        scatter(b_flat - stride_k, k, -c);
                    }
                }
            }
        }
        builder.build()
    }
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Nodal source for -div a = mu: atom masses are hat-split onto the 2^n
/// surrounding nodes (conserving mass and first moment) and divided by the
/// cell volume; density values are sampled at the node.
pub(crate) fn nodal_source(mu: &RadonMeasure, grid: &Grid) -> Vec<f64> {
    let dim = grid.dim();
    let mut src = vec![0.0; grid.space_len()];
    let cellvol = grid.space_cell_volume();
    for atom in mu.atoms() {
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for d in 0..dim {
            let a = (atom.pos[d] - grid.min[d]) / grid.h;
            let i = (a.floor() as isize).clamp(0, grid.shape[d] as isize - 2) as usize;
            base[d] = i;
            frac[d] = (a - i as f64).clamp(0.0, 1.0);
        }
        for corner in 0..(1usize << dim) {
            let mut w = atom.weight;
            let mut flat = 0;
            for d in 0..dim {
                let up = corner >> d & 1 == 1;
                w *= if up { frac[d] } else { 1.0 - frac[d] };
                flat = flat * grid.shape[d] + base[d] + usize::from(up);
            }
            src[flat] += w / cellvol;
        }
    }
    if let Some(den) = mu.density() {
        let mut idx = vec![0usize; dim];
        let mut pos = vec![0.0; dim];
        for flat in 0..grid.space_len() {
            grid.node_position(flat, &mut idx, &mut pos);
            src[flat] += den.values[den.grid.nearest_node(&pos)];
        }
    }
    src
}

/// Solves the zero-boundary Dirichlet problem -div a(x, Du) = mu on the
/// masked grid. Returns the solution with zeros on all non-interior nodes.
pub fn solve_dirichlet(
    a: &StructuredVectorField,
    mu: &RadonMeasure,
    grid: &Grid,
    mask: &DomainMask,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    if grid.is_spacetime() {
        return Err(Error::Parameter("elliptic solver needs a spatial grid".into()));
    }
    if a.p < 2.0 {
        return Err(Error::Parameter(format!("solver needs p >= 2, got {}", a.p)));
    }
    let disc = Discretization::new(a, grid, mask);
    if disc.interior.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let source = nodal_source(mu, grid);
    let scale = linf(&source).max(1e-300);
    let tol = cfg.tol_rel * scale;
    let mut u = vec![0.0; grid.space_len()];
    let mut history: Vec<f64> = Vec::new();

    let scatter = |u: &mut [f64], x: &[f64], disc: &Discretization| {
        for (i, &flat) in disc.interior.iter().enumerate() {
            u[flat] = x[i];
        }
    };

    // initial sweep: frozen coefficients at the zero state
    {
        let (mat, rhs) = disc.picard_system(&u, &source, a.s.max(1.0));
        let mut x = vec![0.0; disc.interior.len()];
        cg(&mat, &rhs, &mut x, cfg.linear_tol, cfg.max_linear).map_err(|res| {
            Error::LinearSolve {
                step: 0,
                reason: format!("initial sweep stalled at relative residual {res:.3e}"),
            }
        })?;
        scatter(&mut u, &x, &disc);
    }

    if a.p == 2.0 {
        // the problem is linear; the initial sweep already solved it when
        // s >= 1 matched, otherwise redo with the exact coefficient
        let (mat, rhs) = disc.picard_system(&u, &source, 0.0);
        let mut x = vec![0.0; disc.interior.len()];
        cg(&mat, &rhs, &mut x, cfg.linear_tol, cfg.max_linear).map_err(|res| {
            Error::LinearSolve {
                step: 0,
                reason: format!("linear solve stalled at relative residual {res:.3e}"),
            }
        })?;
        scatter(&mut u, &x, &disc);
        let mut r = vec![0.0; disc.interior.len()];
        disc.residual(&u, &source, 0.0, &mut r);
        let res = linf(&r);
        if res > tol {
            return Err(Error::NoConvergence {
                residual: res,
                iterations: 1,
                history: vec![res],
            });
        }
        return finish(grid, u);
    }

    // gradient scale from the initial sweep fixes the epsilon ladder
    let g_ref = {
        let field = ScalarField::new(grid.clone(), u.clone())
            .unwrap_or_else(|_| ScalarField::zeros(grid.clone()));
        let grad = field.gradient();
        let m = (0..grid.space_len())
            .map(|i| grad.magnitude_at(i))
            .fold(0.0f64, f64::max);
        if m > 0.0 {
            m
        } else {
            1.0
        }
    };

    let mut r = vec![0.0; disc.interior.len()];
    let mut total_iters = 0usize;
    for (step, &eps_rel) in cfg.eps_ladder.iter().enumerate() {
        let eps = eps_rel * g_ref;
        let mut newton_left = cfg.max_newton;
        let mut picard_left = cfg.max_picard;
        loop {
            disc.residual(&u, &source, eps, &mut r);
            let res = linf(&r);
            history.push(res);
            if res <= tol {
                break;
            }
            total_iters += 1;
            let mut stepped = false;
            if newton_left > 0 {
                newton_left -= 1;
                let jac = disc.jacobian(&u, eps);
                let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
                let mut delta = vec![0.0; disc.interior.len()];
                if bicgstab(&jac, &rhs, &mut delta, 1e-10, cfg.max_linear).is_ok() {
                    // damped line search on the residual norm
                    let mut lambda = 1.0;
                    let mut trial = u.clone();
                    let mut rt = vec![0.0; disc.interior.len()];
                    for _ in 0..12 {
                        for (i, &flat) in disc.interior.iter().enumerate() {
                            trial[flat] = u[flat] + lambda * delta[i];
                        }
                        disc.residual(&trial, &source, eps, &mut rt);
                        if linf(&rt) < res * (1.0 - 1e-4 * lambda) {
                            u.copy_from_slice(&trial);
                            stepped = true;
                            break;
                        }
                        lambda *= 0.5;
                    }
                }
            }
            if !stepped {
                // Picard fallback: full frozen-coefficient solve
                if picard_left == 0 {
                    return Err(Error::NoConvergence {
                        residual: res,
                        iterations: total_iters,
                        history,
                    });
                }
                picard_left -= 1;
                let (mat, rhs) = disc.picard_system(&u, &source, eps);
                let mut x: Vec<f64> = disc.interior.iter().map(|&f| u[f]).collect();
                cg(&mat, &rhs, &mut x, cfg.linear_tol, cfg.max_linear).map_err(|resid| {
                    Error::LinearSolve {
                        step,
                        reason: format!("picard solve stalled at {resid:.3e}"),
                    }
                })?;
                scatter(&mut u, &x, &disc);
            }
            if total_iters > cfg.max_newton + cfg.max_picard {
                disc.residual(&u, &source, eps, &mut r);
                return Err(Error::NoConvergence {
                    residual: linf(&r),
                    iterations: total_iters,
                    history,
                });
            }
        }
    }

    // final check at the end of the ladder
    let eps_final = cfg.eps_ladder.last().copied().unwrap_or(0.0) * g_ref;
    disc.residual(&u, &source, eps_final, &mut r);
    let res = linf(&r);
    if res > tol {
        return Err(Error::NoConvergence {
            residual: res,
            iterations: total_iters,
            history,
        });
    }
    finish(grid, u)
}

fn finish(grid: &Grid, u: Vec<f64>) -> Result<ScalarField> {
    ScalarField::new(grid.clone(), u)
}

/// Net outward discrete flux through the interface between interior and
/// exterior nodes; by the discrete divergence theorem this equals minus the
/// total interior source mass once the residual vanishes.
pub fn boundary_flux(
    a: &StructuredVectorField,
    u: &ScalarField,
    mask: &DomainMask,
    eps: f64,
) -> f64 {
    let grid = &u.grid;
    let disc = Discretization::new(a, grid, mask);
    let dim = grid.dim();
    let h = grid.h;
    let mut idx = vec![0usize; dim];
    let mut g = vec![0.0; dim];
    let mut total = 0.0;
    let area = h.powi(dim as i32 - 1);
    for a_flat in 0..grid.space_len() {
        grid.space_unindex(a_flat, &mut idx);
        for d in 0..dim {
            if idx[d] + 1 >= grid.shape[d] {
                continue;
            }
            let b_flat = a_flat + disc.strides[d];
            let a_in = disc.inv[a_flat] != usize::MAX;
            let b_in = disc.inv[b_flat] != usize::MAX;
            if a_in == b_in {
                continue;
            }
            disc.edge_gradient(u.values(), &idx, a_flat, d, &mut g);
            let f = disc.flux(a_flat, d, &g, eps);
            // outward from the interior side
            total += if a_in { f } else { -f } * area;
        }
    }
    total
}

/// Total hat-split source mass over interior nodes (for flux-balance
/// diagnostics).
pub fn interior_source_mass(mu: &RadonMeasure, grid: &Grid, mask: &DomainMask) -> f64 {
    let src = nodal_source(mu, grid);
    let dim = grid.dim();
    let vol = grid.space_cell_volume();
    let mut idx = vec![0usize; dim];
    let mut pos = vec![0.0; dim];
    let mut total = 0.0;
    for flat in 0..grid.space_len() {
        grid.node_position(flat, &mut idx, &mut pos);
        let on_face = (0..dim).any(|d| idx[d] == 0 || idx[d] == grid.shape[d] - 1);
        if !on_face && mask.contains(&pos) {
            total += src[flat] * vol;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::DensityGrid;

    fn disk_measure(grid: &Grid) -> RadonMeasure {
        let den = DensityGrid::from_fn(grid.clone(), |p| {
            if p.iter().map(|v| v * v).sum::<f64>() < 1.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let mut mu = RadonMeasure::spatial(vec![-1.0; grid.dim()], vec![1.0; grid.dim()]).unwrap();
        mu.set_density(den).unwrap();
        mu
    }

    fn disk_mask() -> DomainMask {
        DomainMask::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 16).unwrap();
        let mu = RadonMeasure::spatial(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let a = StructuredVectorField::p_laplacian(2.0);
        let u = solve_dirichlet(&a, &mu, &grid, &DomainMask::Box, &SolverConfig::default())
            .unwrap();
        assert!(u.values().iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn poisson_disk_matches_radial_solution() {
        // p = 2: u = (1 - r^2)/4, |Du|(0.5) = 0.25
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 96).unwrap();
        let mu = disk_measure(&grid);
        let a = StructuredVectorField::p_laplacian(2.0);
        let u = solve_dirichlet(&a, &mu, &grid, &disk_mask(), &SolverConfig::default()).unwrap();
        let u0 = u.value_at(&[0.0, 0.0]);
        assert!((u0 - 0.25).abs() < 0.01, "u(0) = {u0}");
        let grad = u.gradient();
        let g = grad.magnitude_at_point(&[0.5, 0.0]);
        assert!((g - 0.25).abs() < 0.01, "|Du|(0.5) = {g}");
    }

    #[test]
    fn p3_disk_matches_radial_solution() {
        // p = 3: |Du| = (r/2)^(1/2), u(0) = 2/(3 sqrt(2))
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 96).unwrap();
        let mu = disk_measure(&grid);
        let a = StructuredVectorField::p_laplacian(3.0);
        let u = solve_dirichlet(&a, &mu, &grid, &disk_mask(), &SolverConfig::default()).unwrap();
        let u0 = u.value_at(&[0.0, 0.0]);
        let oracle = 2.0 / (3.0 * 2.0f64.sqrt());
        assert!((u0 - oracle).abs() / oracle < 0.02, "u(0) = {u0} vs {oracle}");
        let g = u.gradient().magnitude_at_point(&[0.5, 0.0]);
        assert!((g - 0.5).abs() < 0.02, "|Du|(0.5) = {g}");
    }

    #[test]
    fn maximum_principle_for_p2() {
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 32).unwrap();
        let mu = disk_measure(&grid);
        let a = StructuredVectorField::p_laplacian(2.0);
        let u = solve_dirichlet(&a, &mu, &grid, &disk_mask(), &SolverConfig::default()).unwrap();
        assert!(u.values().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn refinement_improves_linf_error() {
        let a = StructuredVectorField::p_laplacian(2.0);
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], n).unwrap();
            let mu = disk_measure(&grid);
            let u =
                solve_dirichlet(&a, &mu, &grid, &disk_mask(), &SolverConfig::default()).unwrap();
            // compare against the radial solution on nodes well inside
            let mut idx = [0usize; 2];
            let mut pos = [0.0f64; 2];
            let mut err = 0.0f64;
            for flat in 0..grid.space_len() {
                grid.node_position(flat, &mut idx, &mut pos);
                let r2 = pos[0] * pos[0] + pos[1] * pos[1];
                if r2 < 0.8 {
                    let exact = (1.0 - r2) / 4.0;
                    err = err.max((u.at(flat) - exact).abs());
                }
            }
            errs.push(err);
        }
        assert!(
            errs[1] < 0.75 * errs[0],
            "errors did not decrease: {errs:?}"
        );
    }

    #[test]
    fn flux_balance_discrete_divergence() {
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 48).unwrap();
        let mu = disk_measure(&grid);
        let a = StructuredVectorField::p_laplacian(2.0);
        let mask = disk_mask();
        let u = solve_dirichlet(&a, &mu, &grid, &mask, &SolverConfig::default()).unwrap();
        let flux = boundary_flux(&a, &u, &mask, 0.0);
        let mass = interior_source_mass(&mu, &grid, &mask);
        assert!(
            (flux + mass).abs() < 1e-6 * mass.abs().max(1.0),
            "flux {flux} vs -mass {}",
            -mass
        );
    }

    #[test]
    fn degenerate_dirac_p3_converges() {
        // s = 0, p = 3, Dirac data: continuation must carry the solve
        let grid = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 48).unwrap();
        let mut mu = RadonMeasure::spatial(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        mu.push_atom(vec![0.0, 0.0], 1.0).unwrap();
        let a = StructuredVectorField::p_laplacian(3.0);
        let u = solve_dirichlet(&a, &mu, &grid, &disk_mask(), &SolverConfig::default()).unwrap();
        // radial oracle away from the atom: |u'|(r) = (r / (2 pi r^2))^(1/2)
        let g = u.gradient().magnitude_at_point(&[0.5, 0.0]);
        let oracle = (1.0 / (2.0 * std::f64::consts::PI * 0.5)).sqrt();
        assert!((g - oracle).abs() / oracle < 0.05, "got {g} vs {oracle}");
    }

    #[test]
    fn prototype_passes_structure_check() {
        let a = StructuredVectorField::p_laplacian(3.0);
        let rep = check_structure(&a, &[-1.0, -1.0], &[1.0, 1.0], 2000, 42).unwrap();
        assert!(rep.pass, "violations: {:?}", rep.violations);
        assert!(rep.measured_l <= a.l);
        assert!(rep.measured_nu <= a.nu + 1e-9);
        assert!(rep.measured_holder.unwrap() < a.l);
    }

    #[test]
    fn jump_coefficient_fails_continuity() {
        let mut a = StructuredVectorField::p_laplacian(2.0);
        a.kappa = Coefficient::Jump {
            axis: 0,
            threshold: 0.0,
            low: 1.0,
            high: 2.0,
        };
        a.omega = Modulus::Power { theta: 0.5 };
        a.l1 = 2.0;
        a.l = 10.0;
        let rep = check_structure(&a, &[-1.0, -1.0], &[1.0, 1.0], 5000, 7).unwrap();
        assert!(!rep.pass);
        assert!(rep.violations.iter().any(|w| w.line == "continuity"));
    }

    #[test]
    fn negative_dip_fails_ellipticity() {
        let mut a = StructuredVectorField::p_laplacian(2.0);
        a.kappa = Coefficient::Dip {
            base: 1.0,
            depth: 1.5,
            center: vec![0.0, 0.0],
            radius: 0.3,
        };
        a.l = 10.0;
        let rep = check_structure(&a, &[-1.0, -1.0], &[1.0, 1.0], 5000, 3).unwrap();
        assert!(!rep.pass);
        assert!(rep.violations.iter().any(|w| w.line == "ellipticity"));
    }

    #[test]
    fn dini_integral_of_power_modulus() {
        // omega = rho^theta, p = 2: d(1) = 1/theta
        for theta in [0.25, 0.5, 1.0] {
            let v = dini_integral(&Modulus::Power { theta }, 1.0, 2.0);
            assert!(
                (v - 1.0 / theta).abs() / (1.0 / theta) < 0.01,
                "theta {theta}: {v}"
            );
        }
        assert_eq!(dini_integral(&Modulus::Zero, 1.0, 2.0), 0.0);
    }

    #[test]
    fn dini_integral_diverges_for_log_modulus() {
        let v = dini_integral(&Modulus::LogReciprocal, 1.0, 2.0);
        assert!(v.is_infinite());
    }
}
