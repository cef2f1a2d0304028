//! Radon measures with finite total mass: signed atoms plus an optional
//! gridded density, on a box domain or a spacetime box.
//!
//! All potentials consume the total-variation mass of balls
//! `|mu|(B(x0, rho))` and backward cylinders `|mu|(Q(x0, t0; rho))`; the
//! signed mass is kept for completeness. Ball and cylinder membership is
//! strict (open sets), and density mass is attributed by the
//! cell-center-in-ball rule.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::util::{dist, parabolic_dist};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassMode {
    Signed,
    TotalVariation,
}

#[derive(Debug, Clone)]
pub struct Atom {
    pub pos: Vec<f64>,
    /// Present exactly when the owning measure is a spacetime measure.
    pub t: Option<f64>,
    pub weight: f64,
}

/// Gridded density: one value per cell center of `grid`.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Parameter(format!(
                "density has {} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("density contains non-finite values".into()));
        }
        Ok(DensityGrid { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let dim = grid.dim();
        let mut idx = vec![0usize; dim];
        let mut pos = vec![0.0; dim];
        let mut values = Vec::with_capacity(grid.len());
        let nt = grid.time.map_or(1, |t| t.nt);
        for _it in 0..nt {
            for flat in 0..grid.space_len() {
                grid.node_position(flat, &mut idx, &mut pos);
                values.push(f(&pos));
            }
        }
        DensityGrid::new(grid, values)
    }
}

/// Backward parabolic cylinder B(x0, R) x (t0 - R^2, t0) with vertex
/// (x0, t0); the time extent is exactly R^2 and open at both ends.
#[derive(Debug, Clone)]
pub struct BackwardCylinder {
    pub x: Vec<f64>,
    pub t: f64,
    pub r: f64,
}

impl BackwardCylinder {
    pub fn new(x: Vec<f64>, t: f64, r: f64) -> Result<Self> {
        if r < 0.0 {
            return Err(Error::Parameter(format!("cylinder radius {r}")));
        }
        Ok(BackwardCylinder { x, t, r })
    }

    /// Strict membership: |y - x0| < R and t0 - R^2 < s < t0.
    pub fn contains(&self, y: &[f64], s: f64) -> bool {
        s < self.t && s > self.t - self.r * self.r && dist(y, &self.x) < self.r
    }
}

/// The radial mass profile rho -> |mu|(B(x0, rho)) seen from a fixed base
/// point: sorted jump distances with cumulative sums. Caloric profiles use
/// the parabolic distance to the cylinder vertex instead.
#[derive(Debug, Clone)]
pub struct MassProfile {
    dists: Vec<f64>,
    cum_tv: Vec<f64>,
    nearest_atom: f64,
}

impl MassProfile {
    fn build(entries: &mut Vec<(f64, f64)>, nearest_atom: f64) -> Self {
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut dists = Vec::with_capacity(entries.len());
        let mut cum_tv = Vec::with_capacity(entries.len());
        let mut acc = 0.0;
        for &(d, m) in entries.iter() {
            acc += m;
            match dists.last() {
                Some(&last) if last == d => {
                    *cum_tv.last_mut().unwrap() = acc;
                }
                _ => {
                    dists.push(d);
                    cum_tv.push(acc);
                }
            }
        }
        MassProfile {
            dists,
            cum_tv,
            nearest_atom,
        }
    }

    /// Total-variation mass strictly within radius `rho`.
    pub fn mass(&self, rho: f64) -> f64 {
        let k = self.dists.partition_point(|&d| d < rho);
        if k == 0 {
            0.0
        } else {
            self.cum_tv[k - 1]
        }
    }

    /// Distances at which the profile jumps, sorted ascending.
    pub fn breakpoints(&self) -> &[f64] {
        &self.dists
    }

    /// Distance from the base point to the nearest atom (+inf if none).
    pub fn nearest_atom(&self) -> f64 {
        self.nearest_atom
    }

    pub fn total(&self) -> f64 {
        self.cum_tv.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct RadonMeasure {
    space_dim: usize,
    box_min: Vec<f64>,
    box_max: Vec<f64>,
    tspan: Option<(f64, f64)>,
    atoms: Vec<Atom>,
    density: Option<DensityGrid>,
}

impl RadonMeasure {
    pub fn spatial(box_min: Vec<f64>, box_max: Vec<f64>) -> Result<Self> {
        Self::check_box(&box_min, &box_max)?;
        Ok(RadonMeasure {
            space_dim: box_min.len(),
            box_min,
            box_max,
            tspan: None,
            atoms: Vec::new(),
            density: None,
        })
    }

    pub fn spacetime(box_min: Vec<f64>, box_max: Vec<f64>, t0: f64, t1: f64) -> Result<Self> {
        Self::check_box(&box_min, &box_max)?;
        if t1 <= t0 {
            return Err(Error::Parameter(format!("time span [{t0}, {t1}]")));
        }
        Ok(RadonMeasure {
            space_dim: box_min.len(),
            box_min,
            box_max,
            tspan: Some((t0, t1)),
            atoms: Vec::new(),
            density: None,
        })
    }

    fn check_box(min: &[f64], max: &[f64]) -> Result<()> {
        if min.len() != max.len() || min.is_empty() || min.len() > 3 {
            return Err(Error::Parameter("box dimension must be 1, 2 or 3".into()));
        }
        if min.iter().zip(max).any(|(a, b)| a >= b) {
            return Err(Error::Parameter("box has empty extent".into()));
        }
        Ok(())
    }

    /// Dirac measure on a symmetric box [-a, a]^n.
    pub fn dirac(n: usize, half_width: f64, pos: Vec<f64>, weight: f64) -> Result<Self> {
        let mut m = RadonMeasure::spatial(vec![-half_width; n], vec![half_width; n])?;
        m.push_atom(pos, weight)?;
        Ok(m)
    }

    pub fn push_atom(&mut self, pos: Vec<f64>, weight: f64) -> Result<()> {
        if self.tspan.is_some() {
            return Err(Error::SpatialRequired);
        }
        self.check_pos(&pos)?;
        self.atoms.push(Atom {
            pos,
            t: None,
            weight,
        });
        Ok(())
    }

    pub fn push_spacetime_atom(&mut self, pos: Vec<f64>, t: f64, weight: f64) -> Result<()> {
        let (t0, t1) = self.tspan.ok_or(Error::SpacetimeRequired)?;
        self.check_pos(&pos)?;
        if t < t0 || t > t1 {
            return Err(Error::Parameter(format!("atom time {t} outside [{t0}, {t1}]")));
        }
        self.atoms.push(Atom {
            pos,
            t: Some(t),
            weight,
        });
        Ok(())
    }

    fn check_pos(&self, pos: &[f64]) -> Result<()> {
        if pos.len() != self.space_dim {
            return Err(Error::Parameter("atom dimension mismatch".into()));
        }
        for d in 0..self.space_dim {
            if pos[d] < self.box_min[d] || pos[d] > self.box_max[d] {
                return Err(Error::Parameter(format!(
                    "atom coordinate {} outside box axis {d}",
                    pos[d]
                )));
            }
        }
        Ok(())
    }

    pub fn set_density(&mut self, density: DensityGrid) -> Result<()> {
        if density.grid.dim() != self.space_dim {
            return Err(Error::Parameter("density dimension mismatch".into()));
        }
        if density.grid.is_spacetime() != self.tspan.is_some() {
            return Err(Error::Parameter(
                "density time axis does not match the measure".into(),
            ));
        }
        self.density = Some(density);
        Ok(())
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn is_spacetime(&self) -> bool {
        self.tspan.is_some()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&DensityGrid> {
        self.density.as_ref()
    }

    pub fn box_min(&self) -> &[f64] {
        &self.box_min
    }

    pub fn box_max(&self) -> &[f64] {
        &self.box_max
    }

    pub fn tspan(&self) -> Option<(f64, f64)> {
        self.tspan
    }

    pub fn box_diameter(&self) -> f64 {
        dist(&self.box_min, &self.box_max)
    }

    /// Grid spacing of the density part, if any.
    pub fn density_spacing(&self) -> Option<f64> {
        self.density.as_ref().map(|d| d.grid.h)
    }

    pub fn total_variation(&self) -> f64 {
        self.total_mass(MassMode::TotalVariation)
    }

    pub fn total_mass(&self, mode: MassMode) -> f64 {
        let weight = |w: f64| match mode {
            MassMode::Signed => w,
            MassMode::TotalVariation => w.abs(),
        };
        let mut m: f64 = self.atoms.iter().map(|a| weight(a.weight)).sum();
        if let Some(d) = &self.density {
            let vol = d.grid.cell_volume();
            m += d.values.iter().map(|&v| weight(v) * vol).sum::<f64>();
        }
        m
    }

    /// Mass of the open ball B(x0, rho). Spatial measures only.
    pub fn ball_mass(&self, x0: &[f64], rho: f64, mode: MassMode) -> Result<f64> {
        if self.tspan.is_some() {
            return Err(Error::SpatialRequired);
        }
        if rho < 0.0 {
            return Err(Error::Parameter(format!("ball radius {rho}")));
        }
        let weight = |w: f64| match mode {
            MassMode::Signed => w,
            MassMode::TotalVariation => w.abs(),
        };
        let mut m = 0.0;
        for a in &self.atoms {
            if dist(&a.pos, x0) < rho {
                m += weight(a.weight);
            }
        }
        if let Some(d) = &self.density {
            let vol = d.grid.cell_volume();
            for flat in d.grid.nodes_in_ball(x0, rho) {
                m += weight(d.values[flat]) * vol;
            }
        }
        Ok(m)
    }

    /// Mass of a backward cylinder. Spacetime measures only. The vertex time
    /// is excluded (half-open top) and so is the bottom face.
    pub fn cylinder_mass(&self, q: &BackwardCylinder, mode: MassMode) -> Result<f64> {
        if self.tspan.is_none() {
            return Err(Error::SpacetimeRequired);
        }
        let weight = |w: f64| match mode {
            MassMode::Signed => w,
            MassMode::TotalVariation => w.abs(),
        };
        let mut m = 0.0;
        for a in &self.atoms {
            if q.contains(&a.pos, a.t.unwrap()) {
                m += weight(a.weight);
            }
        }
        if let Some(d) = &self.density {
            let g = &d.grid;
            let vol = g.cell_volume();
            let ta = g.time.expect("spacetime density");
            let mut idx = vec![0usize; g.dim()];
            let mut pos = vec![0.0; g.dim()];
            for it in 0..ta.nt {
                let t = g.time_coord(it);
                if t >= q.t || t <= q.t - q.r * q.r {
                    continue;
                }
                for flat in g.nodes_in_ball(&q.x, q.r) {
                    g.node_position(flat, &mut idx, &mut pos);
                    m += weight(d.values[g.index(it, flat)]) * vol;
                }
            }
        }
        Ok(m)
    }

    /// Restriction to the open ball B(x0, rho): atoms outside dropped,
    /// density zeroed outside. Spatial measures only.
    pub fn restrict(&self, x0: &[f64], rho: f64) -> Result<RadonMeasure> {
        if self.tspan.is_some() {
            return Err(Error::SpatialRequired);
        }
        let mut out = self.clone();
        out.atoms.retain(|a| dist(&a.pos, x0) < rho);
        if let Some(d) = &mut out.density {
            let keep: std::collections::HashSet<usize> =
                d.grid.nodes_in_ball(x0, rho).into_iter().collect();
            for (flat, v) in d.values.iter_mut().enumerate() {
                if !keep.contains(&flat) {
                    *v = 0.0;
                }
            }
        }
        Ok(out)
    }

    /// Total-variation radial mass profile around `x0`. Spatial only.
    pub fn mass_profile(&self, x0: &[f64]) -> Result<MassProfile> {
        if self.tspan.is_some() {
            return Err(Error::SpatialRequired);
        }
        let mut entries = Vec::with_capacity(self.atoms.len());
        let mut nearest = f64::INFINITY;
        for a in &self.atoms {
            let d = dist(&a.pos, x0);
            if a.weight != 0.0 {
                nearest = nearest.min(d);
            }
            entries.push((d, a.weight.abs()));
        }
        if let Some(den) = &self.density {
            let g = &den.grid;
            let vol = g.cell_volume();
            let mut idx = vec![0usize; g.dim()];
            let mut pos = vec![0.0; g.dim()];
            entries.reserve(g.len());
            for flat in 0..g.len() {
                let v = den.values[flat];
                if v == 0.0 {
                    continue;
                }
                g.node_position(flat, &mut idx, &mut pos);
                entries.push((dist(&pos, x0), v.abs() * vol));
            }
        }
        Ok(MassProfile::build(&mut entries, nearest))
    }

    /// Caloric mass profile: rho -> |mu|(Q(x0, t0; rho)), keyed by the
    /// parabolic distance to the vertex. Mass at or after the vertex time
    /// never enters any cylinder. Spacetime only.
    pub fn mass_profile_caloric(&self, x0: &[f64], t0: f64) -> Result<MassProfile> {
        if self.tspan.is_none() {
            return Err(Error::SpacetimeRequired);
        }
        let mut entries = Vec::with_capacity(self.atoms.len());
        let mut nearest = f64::INFINITY;
        for a in &self.atoms {
            let t = a.t.unwrap();
            if t >= t0 {
                continue;
            }
            let d = parabolic_dist(&a.pos, t, x0, t0);
            if a.weight != 0.0 {
                nearest = nearest.min(d);
            }
            entries.push((d, a.weight.abs()));
        }
        if let Some(den) = &self.density {
            let g = &den.grid;
            let vol = g.cell_volume();
            let ta = g.time.expect("spacetime density");
            let mut idx = vec![0usize; g.dim()];
            let mut pos = vec![0.0; g.dim()];
            for it in 0..ta.nt {
                let t = g.time_coord(it);
                if t >= t0 {
                    continue;
                }
                for flat in 0..g.space_len() {
                    let v = den.values[g.index(it, flat)];
                    if v == 0.0 {
                        continue;
                    }
                    g.node_position(flat, &mut idx, &mut pos);
                    entries.push((parabolic_dist(&pos, t, x0, t0), v.abs() * vol));
                }
            }
        }
        Ok(MassProfile::build(&mut entries, nearest))
    }

    /// Sum of two measures on the same box.
    pub fn sum(&self, other: &RadonMeasure) -> Result<RadonMeasure> {
        if self.space_dim != other.space_dim || self.tspan != other.tspan {
            return Err(Error::Parameter("measure domains differ".into()));
        }
        let mut out = self.clone();
        out.atoms.extend(other.atoms.iter().cloned());
        match (&mut out.density, &other.density) {
            (Some(a), Some(b)) => {
                if a.grid != b.grid {
                    return Err(Error::Parameter("density grids differ".into()));
                }
                for (x, y) in a.values.iter_mut().zip(&b.values) {
                    *x += y;
                }
            }
            (None, Some(b)) => out.density = Some(b.clone()),
            _ => {}
        }
        Ok(out)
    }

    // ---- structured text I/O ------------------------------------------

    /// Loads a measure spec file. Format (one directive per line, `#`
    /// comments):
    ///
    /// ```text
    /// dim 2
    /// box -1 1 -1 1
    /// tbox -1 0            # spacetime measures only
    /// atom 0.0 0.0 1.0     # coords..., weight (spacetime: coords..., t, weight)
    /// density grid.dat     # optional, path relative to this file
    /// ```
    pub fn load(path: impl AsRef<Path>) -> Result<RadonMeasure> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };

        let mut dim: Option<usize> = None;
        let mut bbox: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut tbox: Option<(f64, f64)> = None;
        let mut atoms: Vec<(Vec<f64>, Option<f64>, f64)> = Vec::new();
        let mut density_path: Option<String> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            let rest: Vec<&str> = parts.collect();
            let nums = |rest: &[&str]| -> Result<Vec<f64>> {
                rest.iter()
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|e| perr(lineno + 1, format!("bad number {s:?}: {e}")))
                    })
                    .collect()
            };
            match key {
                "dim" => {
                    dim = Some(
                        rest.first()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| perr(lineno + 1, "dim needs an integer".into()))?,
                    );
                }
                "box" => {
                    let v = nums(&rest)?;
                    if v.len() % 2 != 0 {
                        return Err(perr(lineno + 1, "box needs min max per axis".into()));
                    }
                    let n = v.len() / 2;
                    let mut min = Vec::new();
                    let mut max = Vec::new();
                    for d in 0..n {
                        min.push(v[2 * d]);
                        max.push(v[2 * d + 1]);
                    }
                    bbox = Some((min, max));
                }
                "tbox" => {
                    let v = nums(&rest)?;
                    if v.len() != 2 {
                        return Err(perr(lineno + 1, "tbox needs two numbers".into()));
                    }
                    tbox = Some((v[0], v[1]));
                }
                "atom" => {
                    let v = nums(&rest)?;
                    let n = dim.ok_or_else(|| perr(lineno + 1, "dim must come first".into()))?;
                    if tbox.is_some() {
                        if v.len() != n + 2 {
                            return Err(perr(
                                lineno + 1,
                                format!("spacetime atom needs {} numbers", n + 2),
                            ));
                        }
                        atoms.push((v[..n].to_vec(), Some(v[n]), v[n + 1]));
                    } else {
                        if v.len() != n + 1 {
                            return Err(perr(lineno + 1, format!("atom needs {} numbers", n + 1)));
                        }
                        atoms.push((v[..n].to_vec(), None, v[n]));
                    }
                }
                "density" => {
                    density_path = Some(rest.join(" "));
                }
                other => {
                    return Err(perr(lineno + 1, format!("unknown directive {other:?}")));
                }
            }
        }

        let (box_min, box_max) = bbox.ok_or_else(|| perr(0, "missing box".into()))?;
        let dim = dim.ok_or_else(|| perr(0, "missing dim".into()))?;
        if box_min.len() != dim {
            return Err(perr(0, "box does not match dim".into()));
        }
        let mut m = match tbox {
            Some((t0, t1)) => RadonMeasure::spacetime(box_min, box_max, t0, t1)?,
            None => RadonMeasure::spatial(box_min, box_max)?,
        };
        for (pos, t, w) in atoms {
            match t {
                Some(t) => m.push_spacetime_atom(pos, t, w)?,
                None => m.push_atom(pos, w)?,
            }
        }
        if let Some(rel) = density_path {
            let dpath = path.parent().unwrap_or(Path::new(".")).join(rel);
            let (grid, mut blocks) = crate::field::read_grid_file(&dpath, 1)?;
            m.set_density(DensityGrid::new(grid, blocks.pop().unwrap())?)?;
        }
        Ok(m)
    }

    /// Writes the measure spec (and `<stem>.density.dat` when a density is
    /// present) next to `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::new();
        writeln!(s, "dim {}", self.space_dim).unwrap();
        write!(s, "box").unwrap();
        for d in 0..self.space_dim {
            write!(s, " {} {}", self.box_min[d], self.box_max[d]).unwrap();
        }
        writeln!(s).unwrap();
        if let Some((t0, t1)) = self.tspan {
            writeln!(s, "tbox {t0} {t1}").unwrap();
        }
        for a in &self.atoms {
            write!(s, "atom").unwrap();
            for c in &a.pos {
                write!(s, " {c}").unwrap();
            }
            if let Some(t) = a.t {
                write!(s, " {t}").unwrap();
            }
            writeln!(s, " {}", a.weight).unwrap();
        }
        if let Some(d) = &self.density {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "measure".into());
            let dname = format!("{stem}.density.dat");
            writeln!(s, "density {dname}").unwrap();
            let dpath = path.parent().unwrap_or(Path::new(".")).join(dname);
            crate::field::write_grid_file(&dpath, &d.grid, &[&d.values])?;
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta_at(pos: Vec<f64>) -> RadonMeasure {
        RadonMeasure::dirac(pos.len(), 4.0, pos, 1.0).unwrap()
    }

    #[test]
    fn atom_inside_ball() {
        let m = delta_at(vec![0.0, 0.0]);
        let v = m.ball_mass(&[0.0, 0.0], 1.0, MassMode::TotalVariation).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn atom_outside_ball() {
        let m = delta_at(vec![2.0, 0.0]);
        let v = m.ball_mass(&[0.0, 0.0], 1.0, MassMode::TotalVariation).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn density_disk_mass_converges_to_pi() {
        // density 1 on [-2,2]^2; |mu|(B(0,1)) ~ area of unit disk
        let mut errs = Vec::new();
        for cells in [64usize, 128] {
            let g = Grid::cell_centers_in_box(&[-2.0, -2.0], &[2.0, 2.0], cells).unwrap();
            let den = DensityGrid::from_fn(g, |_| 1.0).unwrap();
            let mut m = RadonMeasure::spatial(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
            m.set_density(den).unwrap();
            let v = m.ball_mass(&[0.0, 0.0], 1.0, MassMode::TotalVariation).unwrap();
            errs.push((v - std::f64::consts::PI).abs());
        }
        assert!(errs[0] < 0.05);
        // refinement shrinks the error
        assert!(errs[1] < errs[0]);
    }

    #[test]
    fn cylinder_membership_matches_parabolic_distance() {
        // spacetime delta at (0, 0); vertex (0.5, 0.04): in Q iff R > 0.5
        let mut m =
            RadonMeasure::spacetime(vec![-2.0], vec![2.0], -1.0, 1.0).unwrap();
        m.push_spacetime_atom(vec![0.0], 0.0, 1.0).unwrap();
        let q6 = BackwardCylinder::new(vec![0.5], 0.04, 0.6).unwrap();
        let q4 = BackwardCylinder::new(vec![0.5], 0.04, 0.4).unwrap();
        assert_eq!(m.cylinder_mass(&q6, MassMode::TotalVariation).unwrap(), 1.0);
        assert_eq!(m.cylinder_mass(&q4, MassMode::TotalVariation).unwrap(), 0.0);
        // empty measure
        let empty = RadonMeasure::spacetime(vec![-2.0], vec![2.0], -1.0, 1.0).unwrap();
        assert_eq!(empty.cylinder_mass(&q6, MassMode::TotalVariation).unwrap(), 0.0);
    }

    #[test]
    fn vertex_time_is_excluded() {
        let mut m = RadonMeasure::spacetime(vec![-2.0], vec![2.0], -1.0, 1.0).unwrap();
        m.push_spacetime_atom(vec![0.0], 0.04, 1.0).unwrap();
        let q = BackwardCylinder::new(vec![0.0], 0.04, 0.5).unwrap();
        assert_eq!(m.cylinder_mass(&q, MassMode::TotalVariation).unwrap(), 0.0);
    }

    #[test]
    fn cylinder_rejects_spatial_measure() {
        let m = delta_at(vec![0.0]);
        let q = BackwardCylinder::new(vec![0.0], 0.0, 1.0).unwrap();
        assert!(matches!(
            m.cylinder_mass(&q, MassMode::TotalVariation),
            Err(Error::SpacetimeRequired)
        ));
    }

    #[test]
    fn restrict_drops_outside_atoms() {
        let m = delta_at(vec![0.0, 0.0]);
        let r = m.restrict(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(r.total_variation(), 1.0);
        let m2 = delta_at(vec![2.0, 0.0]);
        let r2 = m2.restrict(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(r2.total_variation(), 0.0);
    }

    #[test]
    fn restrict_density_mass_matches_ball_mass() {
        let g = Grid::cell_centers_in_box(&[-2.0, -2.0], &[2.0, 2.0], 64).unwrap();
        let den = DensityGrid::from_fn(g, |_| 1.0).unwrap();
        let mut m = RadonMeasure::spatial(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        m.set_density(den).unwrap();
        let bm = m.ball_mass(&[0.0, 0.0], 1.0, MassMode::TotalVariation).unwrap();
        let r = m.restrict(&[0.0, 0.0], 1.0).unwrap();
        assert!((r.total_variation() - bm).abs() < 1e-12);
    }

    #[test]
    fn profile_matches_direct_queries() {
        let mut m = RadonMeasure::spatial(vec![-4.0, -4.0], vec![4.0, 4.0]).unwrap();
        m.push_atom(vec![0.5, 0.0], 1.0).unwrap();
        m.push_atom(vec![0.0, 1.5], -2.0).unwrap();
        let prof = m.mass_profile(&[0.0, 0.0]).unwrap();
        for rho in [0.1, 0.5, 0.500001, 1.0, 1.5001, 3.0] {
            let direct = m.ball_mass(&[0.0, 0.0], rho, MassMode::TotalVariation).unwrap();
            assert_eq!(prof.mass(rho), direct, "rho = {rho}");
        }
        assert_eq!(prof.nearest_atom(), 0.5);
    }

    #[test]
    fn io_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let g = Grid::cell_centers_in_box(&[-1.0, -1.0], &[1.0, 1.0], 8).unwrap();
        let den = DensityGrid::from_fn(g, |p| p[0] + 2.0).unwrap();
        let mut m = RadonMeasure::spatial(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        m.push_atom(vec![0.25, -0.5], 2.5).unwrap();
        m.set_density(den).unwrap();
        m.save(&path).unwrap();
        let back = RadonMeasure::load(&path).unwrap();
        assert_eq!(back.atoms().len(), 1);
        assert!((back.total_variation() - m.total_variation()).abs() < 1e-12);
        let a = m.ball_mass(&[0.1, 0.2], 0.7, MassMode::Signed).unwrap();
        let b = back.ball_mass(&[0.1, 0.2], 0.7, MassMode::Signed).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
