//! Scalar and vector fields on uniform grids: gradients, ball and cylinder
//! integral averages, and norms.
//!
//! Point evaluation uses the nearest grid node, so the left-hand sides of
//! the pointwise estimates are read off without interpolation error. Ball
//! averages normalize by the covered discrete volume, which makes the
//! average of a constant field exactly that constant.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measure::BackwardCylinder;
use crate::util::pairwise_sum;

#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Grid,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: Grid,
    comps: Vec<Vec<f64>>,
}

/// Evaluation region for averages and norms.
#[derive(Debug, Clone)]
pub enum Region {
    All,
    Ball { center: Vec<f64>, radius: f64 },
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Parameter(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("field contains non-finite values".into()));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        ScalarField {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let dim = grid.dim();
        let mut idx = vec![0usize; dim];
        let mut pos = vec![0.0; dim];
        let mut values = Vec::with_capacity(grid.len());
        for flat in 0..grid.space_len() {
            grid.node_position(flat, &mut idx, &mut pos);
            values.push(f(&pos));
        }
        ScalarField::new(grid, values)
    }

    pub fn from_fn_spacetime(grid: Grid, f: impl Fn(&[f64], f64) -> f64) -> Result<Self> {
        let ta = grid
            .time
            .ok_or_else(|| Error::Parameter("grid has no time axis".into()))?;
        let dim = grid.dim();
        let mut idx = vec![0usize; dim];
        let mut pos = vec![0.0; dim];
        let mut values = Vec::with_capacity(grid.len());
        for it in 0..ta.nt {
            let t = grid.time_coord(it);
            for flat in 0..grid.space_len() {
                grid.node_position(flat, &mut idx, &mut pos);
                values.push(f(&pos, t));
            }
        }
        ScalarField::new(grid, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    /// Value at the node nearest to a spatial point.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.values[self.grid.nearest_node(x)]
    }

    /// Value at the spacetime node nearest to (x, t).
    pub fn value_at_spacetime(&self, x: &[f64], t: f64) -> f64 {
        let it = self.grid.nearest_time(t);
        self.values[self.grid.index(it, self.grid.nearest_node(x))]
    }

    /// One time level of a spacetime field as a spatial field.
    pub fn time_slice(&self, it: usize) -> Result<ScalarField> {
        let ta = self
            .grid
            .time
            .ok_or_else(|| Error::Parameter("field has no time axis".into()))?;
        if it >= ta.nt {
            return Err(Error::Parameter(format!("time level {it} out of range")));
        }
        let mut g = self.grid.clone();
        g.time = None;
        let n = g.space_len();
        ScalarField::new(g, self.values[it * n..(it + 1) * n].to_vec())
    }

    /// Discrete spatial gradient: central differences in the interior,
    /// one-sided two-point differences on the box faces. Exact on affine
    /// fields. Spacetime fields are differentiated level by level.
    pub fn gradient(&self) -> VectorField {
        let g = &self.grid;
        let dim = g.dim();
        let nt = g.time.map_or(1, |t| t.nt);
        let sl = g.space_len();
        let mut comps = vec![vec![0.0; g.len()]; dim];
        let mut idx = vec![0usize; dim];
        for it in 0..nt {
            let base = it * sl;
            for flat in 0..sl {
                g.space_unindex(flat, &mut idx);
                for d in 0..dim {
                    let n_d = g.shape[d];
                    let stride: usize = g.shape[d + 1..].iter().product();
                    let i = idx[d];
                    let v = if n_d == 1 {
                        0.0
                    } else if i == 0 {
                        (self.values[base + flat + stride] - self.values[base + flat]) / g.h
                    } else if i == n_d - 1 {
                        (self.values[base + flat] - self.values[base + flat - stride]) / g.h
                    } else {
                        (self.values[base + flat + stride] - self.values[base + flat - stride])
                            / (2.0 * g.h)
                    };
                    comps[d][base + flat] = v;
                }
            }
        }
        VectorField {
            grid: g.clone(),
            comps,
        }
    }

    /// q-power integral average over the open ball B(center, radius),
    /// normalized by the covered cell volume.
    pub fn ball_average(&self, center: &[f64], radius: f64, q: f64) -> Result<f64> {
        ball_power_average(&self.grid, center, radius, q, 0.0, |flat| {
            self.values[flat]
        })
    }

    pub fn cylinder_average(&self, q_cyl: &BackwardCylinder, q: f64) -> Result<f64> {
        cylinder_power_average(&self.grid, q_cyl, q, 0.0, |flat| self.values[flat])
    }

    /// ((1/|Q|) sum (|w| + shift)^q vol)^(1/q) over a backward cylinder.
    pub fn shifted_cylinder_average(
        &self,
        q_cyl: &BackwardCylinder,
        q: f64,
        shift: f64,
    ) -> Result<f64> {
        cylinder_power_average(&self.grid, q_cyl, q, shift, |flat| self.values[flat])
    }

    pub fn linf_norm(&self, region: &Region) -> Result<f64> {
        let vals = self.region_values(region, |flat| self.values[flat].abs())?;
        vals.into_iter()
            .max_by(|a, b| a.total_cmp(b))
            .ok_or(Error::EmptyRegion)
    }

    /// Lq norm (integral, not average) over a region.
    pub fn lq_norm(&self, q: f64, region: &Region) -> Result<f64> {
        let vol = self.grid.cell_volume();
        let vals = self.region_values(region, |flat| self.values[flat].abs().powf(q) * vol)?;
        if vals.is_empty() {
            return Err(Error::EmptyRegion);
        }
        Ok(pairwise_sum(&vals).powf(1.0 / q))
    }

    fn region_values(&self, region: &Region, f: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
        match region {
            Region::All => Ok((0..self.values.len()).map(f).collect()),
            Region::Ball { center, radius } => {
                if !self.grid.ball_inside(center, *radius) {
                    return Err(Error::RegionOutsideGrid);
                }
                if self.grid.is_spacetime() {
                    return Err(Error::Parameter(
                        "ball regions apply to spatial fields".into(),
                    ));
                }
                Ok(self
                    .grid
                    .nodes_in_ball(center, *radius)
                    .into_iter()
                    .map(f)
                    .collect())
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_grid_file(path, &self.grid, &[&self.values])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ScalarField> {
        let (grid, mut blocks) = read_grid_file(path, 1)?;
        ScalarField::new(grid, blocks.pop().unwrap())
    }

    /// Writes `x..., value` CSV rows for one time level (or the whole
    /// spatial field when `it` is `None` on spatial grids).
    pub fn write_csv(&self, path: impl AsRef<Path>, it: Option<usize>) -> Result<()> {
        let g = &self.grid;
        let dim = g.dim();
        let base = match (g.time, it) {
            (Some(_), Some(level)) => level * g.space_len(),
            (None, _) => 0,
            (Some(_), None) => {
                return Err(Error::Parameter(
                    "spacetime fields need a time level for CSV export".into(),
                ))
            }
        };
        let mut s = String::new();
        for d in 0..dim {
            write!(s, "x{d},").unwrap();
        }
        writeln!(s, "value").unwrap();
        let mut idx = vec![0usize; dim];
        let mut pos = vec![0.0; dim];
        for flat in 0..g.space_len() {
            g.node_position(flat, &mut idx, &mut pos);
            for p in &pos {
                write!(s, "{p},").unwrap();
            }
            writeln!(s, "{}", self.values[base + flat]).unwrap();
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

impl VectorField {
    pub fn new(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() {
            return Err(Error::Parameter("component count must equal dimension".into()));
        }
        for c in &comps {
            if c.len() != grid.len() {
                return Err(Error::Parameter("component length mismatch".into()));
            }
        }
        Ok(VectorField { grid, comps })
    }

    pub fn components(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, d: usize) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.comps[d].clone(),
        }
    }

    pub fn comp_slice(&self, d: usize) -> &[f64] {
        &self.comps[d]
    }

    pub fn magnitude_at(&self, flat: usize) -> f64 {
        self.comps
            .iter()
            .map(|c| c[flat] * c[flat])
            .sum::<f64>()
            .sqrt()
    }

    /// Euclidean magnitude as a scalar field.
    pub fn magnitude(&self) -> ScalarField {
        let values = (0..self.grid.len()).map(|i| self.magnitude_at(i)).collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn magnitude_at_point(&self, x: &[f64]) -> f64 {
        self.magnitude_at(self.grid.nearest_node(x))
    }

    pub fn magnitude_at_spacetime(&self, x: &[f64], t: f64) -> f64 {
        let it = self.grid.nearest_time(t);
        self.magnitude_at(self.grid.index(it, self.grid.nearest_node(x)))
    }

    /// ((1/|B|) sum (|v| + shift)^q vol)^(1/q) over the open ball.
    pub fn shifted_ball_average(
        &self,
        center: &[f64],
        radius: f64,
        q: f64,
        shift: f64,
    ) -> Result<f64> {
        ball_power_average(&self.grid, center, radius, q, shift, |flat| {
            self.magnitude_at(flat)
        })
    }

    pub fn ball_average(&self, center: &[f64], radius: f64, q: f64) -> Result<f64> {
        self.shifted_ball_average(center, radius, q, 0.0)
    }

    pub fn shifted_cylinder_average(
        &self,
        q_cyl: &BackwardCylinder,
        q: f64,
        shift: f64,
    ) -> Result<f64> {
        cylinder_power_average(&self.grid, q_cyl, q, shift, |flat| self.magnitude_at(flat))
    }

    pub fn linf_norm(&self, region: &Region) -> Result<f64> {
        self.magnitude().linf_norm(region)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let refs: Vec<&[f64]> = self.comps.iter().map(|c| c.as_slice()).collect();
        write_grid_file(path, &self.grid, &refs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<VectorField> {
        let (grid, blocks) = read_grid_file(&path, 0)?;
        VectorField::new(grid, blocks)
    }
}

fn ball_power_average(
    grid: &Grid,
    center: &[f64],
    radius: f64,
    q: f64,
    shift: f64,
    value: impl Fn(usize) -> f64,
) -> Result<f64> {
    if q < 1.0 {
        return Err(Error::Parameter(format!("average exponent q = {q}")));
    }
    if grid.is_spacetime() {
        return Err(Error::Parameter("ball averages apply to spatial fields".into()));
    }
    if !grid.ball_inside(center, radius) {
        return Err(Error::RegionOutsideGrid);
    }
    let nodes = grid.nodes_in_ball(center, radius);
    if nodes.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let vol = grid.cell_volume();
    let terms: Vec<f64> = nodes
        .iter()
        .map(|&flat| (value(flat).abs() + shift).powf(q) * vol)
        .collect();
    let covered = vol * nodes.len() as f64;
    Ok((pairwise_sum(&terms) / covered).powf(1.0 / q))
}

fn cylinder_power_average(
    grid: &Grid,
    q_cyl: &BackwardCylinder,
    q: f64,
    shift: f64,
    value: impl Fn(usize) -> f64,
) -> Result<f64> {
    if q < 1.0 {
        return Err(Error::Parameter(format!("average exponent q = {q}")));
    }
    let ta = grid
        .time
        .ok_or_else(|| Error::Parameter("cylinder averages need a spacetime field".into()))?;
    if !grid.ball_inside(&q_cyl.x, q_cyl.r) {
        return Err(Error::RegionOutsideGrid);
    }
    let t_lo = q_cyl.t - q_cyl.r * q_cyl.r;
    let t_max = ta.t_min + ta.dt * (ta.nt - 1) as f64;
    if t_lo < ta.t_min - 0.5 * ta.dt || q_cyl.t > t_max + 0.5 * ta.dt {
        return Err(Error::RegionOutsideGrid);
    }
    let spatial = grid.nodes_in_ball(&q_cyl.x, q_cyl.r);
    let vol = grid.cell_volume();
    let mut terms = Vec::new();
    for it in 0..ta.nt {
        let t = grid.time_coord(it);
        if t <= t_lo || t >= q_cyl.t {
            continue;
        }
        let base = it * grid.space_len();
        for &flat in &spatial {
            terms.push((value(base + flat).abs() + shift).powf(q) * vol);
        }
    }
    if terms.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let covered = vol * terms.len() as f64;
    Ok((pairwise_sum(&terms) / covered).powf(1.0 / q))
}

// ---- grid file I/O -----------------------------------------------------

/// Writes a grid-backed file: text header (dim, shape, min, h, optional
/// time axis, component count) followed by flat row-major value blocks.
pub fn write_grid_file(path: impl AsRef<Path>, grid: &Grid, blocks: &[&[f64]]) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "dim {}", grid.dim()).unwrap();
    write!(s, "shape").unwrap();
    for n in &grid.shape {
        write!(s, " {n}").unwrap();
    }
    writeln!(s).unwrap();
    write!(s, "min").unwrap();
    for m in &grid.min {
        write!(s, " {m}").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "h {}", grid.h).unwrap();
    if let Some(t) = grid.time {
        writeln!(s, "time {} {} {}", t.t_min, t.dt, t.nt).unwrap();
    }
    writeln!(s, "components {}", blocks.len()).unwrap();
    writeln!(s, "values").unwrap();
    for block in blocks {
        debug_assert_eq!(block.len(), grid.len());
        for chunk in block.chunks(8) {
            let row: Vec<String> = chunk.iter().map(|v| format!("{v:?}")).collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Reads a grid file. `expect_components == 0` accepts any count.
pub fn read_grid_file(
    path: impl AsRef<Path>,
    expect_components: usize,
) -> Result<(Grid, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };

    let mut dim = 0usize;
    let mut shape: Vec<usize> = Vec::new();
    let mut min: Vec<f64> = Vec::new();
    let mut h = 0.0f64;
    let mut time: Option<(f64, f64, usize)> = None;
    let mut components = 1usize;
    let mut numbers: Vec<f64> = Vec::new();
    let mut in_values = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if in_values {
            for tok in line.split_whitespace() {
                numbers.push(
                    tok.parse::<f64>()
                        .map_err(|e| perr(lineno + 1, format!("bad number {tok:?}: {e}")))?,
                );
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        match key {
            "dim" => dim = rest[0].parse().map_err(|_| perr(lineno + 1, "bad dim".into()))?,
            "shape" => {
                shape = rest
                    .iter()
                    .map(|s| s.parse().map_err(|_| perr(lineno + 1, "bad shape".into())))
                    .collect::<Result<_>>()?;
            }
            "min" => {
                min = rest
                    .iter()
                    .map(|s| s.parse().map_err(|_| perr(lineno + 1, "bad min".into())))
                    .collect::<Result<_>>()?;
            }
            "h" => h = rest[0].parse().map_err(|_| perr(lineno + 1, "bad h".into()))?,
            "time" => {
                if rest.len() != 3 {
                    return Err(perr(lineno + 1, "time needs t_min dt nt".into()));
                }
                time = Some((
                    rest[0].parse().map_err(|_| perr(lineno + 1, "bad t_min".into()))?,
                    rest[1].parse().map_err(|_| perr(lineno + 1, "bad dt".into()))?,
                    rest[2].parse().map_err(|_| perr(lineno + 1, "bad nt".into()))?,
                ));
            }
            "components" => {
                components = rest[0]
                    .parse()
                    .map_err(|_| perr(lineno + 1, "bad components".into()))?;
            }
            "values" => in_values = true,
            other => return Err(perr(lineno + 1, format!("unknown directive {other:?}"))),
        }
    }

    if shape.len() != dim || min.len() != dim {
        return Err(perr(0, "header dim/shape/min mismatch".into()));
    }
    let grid = match time {
        Some((t_min, dt, nt)) => Grid::spacetime(min, h, shape, t_min, dt, nt)?,
        None => Grid::spatial(min, h, shape)?,
    };
    if expect_components != 0 && components != expect_components {
        return Err(perr(
            0,
            format!("expected {expect_components} components, file has {components}"),
        ));
    }
    let n = grid.len();
    if numbers.len() != n * components {
        return Err(perr(
            0,
            format!("expected {} values, found {}", n * components, numbers.len()),
        ));
    }
    let blocks = numbers.chunks(n).map(|c| c.to_vec()).collect();
    Ok((grid, blocks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn unit_grid(n: usize) -> Grid {
        Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], n).unwrap()
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let u = ScalarField::from_fn(unit_grid(16), |_| 4.2).unwrap();
        let g = u.gradient();
        assert!(g.comp_slice(0).iter().all(|&v| v == 0.0));
        assert!(g.comp_slice(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_exact_on_affine() {
        let u = ScalarField::from_fn(unit_grid(16), |p| p[0]).unwrap();
        let g = u.gradient();
        for flat in 0..u.grid.space_len() {
            assert!((g.comp_slice(0)[flat] - 1.0).abs() < 1e-13);
            assert!(g.comp_slice(1)[flat].abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_of_radial_bowl() {
        // u = (1 - r^2)/4 on a fine grid: |Du|(0.5, 0) = 0.25
        let u = ScalarField::from_fn(unit_grid(128), |p| {
            (1.0 - p[0] * p[0] - p[1] * p[1]) / 4.0
        })
        .unwrap();
        let g = u.gradient();
        let v = g.magnitude_at_point(&[0.5, 0.0]);
        assert!((v - 0.25).abs() < 1e-3, "got {v}");
    }

    #[test]
    fn constant_ball_average_is_exact() {
        let u = ScalarField::from_fn(unit_grid(32), |_| 3.0).unwrap();
        let a = u.ball_average(&[0.1, 0.0], 0.5, 1.0).unwrap();
        assert_eq!(a, 3.0);
        let un = ScalarField::from_fn(unit_grid(32), |_| -2.0).unwrap();
        let a2 = un.ball_average(&[0.0, 0.0], 0.5, 2.0).unwrap();
        assert!((a2 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn radial_average_matches_analytic() {
        // avg of |x| over B(0,1) in n=2 is 2/3
        let u = ScalarField::from_fn(unit_grid(256), |p| (p[0] * p[0] + p[1] * p[1]).sqrt())
            .unwrap();
        let a = u.ball_average(&[0.0, 0.0], 1.0, 1.0).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 5e-3, "got {a}");
        // L1 norm over the same ball is 2*pi/3
        let n = u
            .lq_norm(
                1.0,
                &Region::Ball {
                    center: vec![0.0, 0.0],
                    radius: 1.0,
                },
            )
            .unwrap();
        assert!((n - 2.0 * std::f64::consts::PI / 3.0).abs() < 2e-2, "got {n}");
    }

    #[test]
    fn ball_average_rejects_escaping_ball() {
        let u = ScalarField::from_fn(unit_grid(16), |_| 1.0).unwrap();
        assert!(matches!(
            u.ball_average(&[0.9, 0.0], 0.5, 1.0),
            Err(Error::RegionOutsideGrid)
        ));
    }

    #[test]
    fn cylinder_average_of_t() {
        // w(x, t) = t over Q((0; 1); R=1): average of t on (0, 1) is 1/2
        let g = Grid::spacetime(vec![-2.0], 0.05, vec![81], -0.5, 0.0025, 601).unwrap();
        let w = ScalarField::from_fn_spacetime(g, |_, t| t).unwrap();
        let q = BackwardCylinder::new(vec![0.0], 1.0, 1.0).unwrap();
        let a = w.cylinder_average(&q, 1.0).unwrap();
        assert!((a - 0.5).abs() < 3e-3, "got {a}");
    }

    #[test]
    fn cylinder_smaller_than_one_cell_errors() {
        let g = Grid::spacetime(vec![-1.0], 0.1, vec![21], 0.0, 0.01, 50).unwrap();
        let w = ScalarField::zeros(g);
        let q = BackwardCylinder::new(vec![0.05], 0.4, 0.04).unwrap();
        assert!(matches!(
            w.cylinder_average(&q, 1.0),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn linf_of_coordinate() {
        let g = Grid::nodes_on_box(&[0.0], &[1.0], 10).unwrap();
        let u = ScalarField::from_fn(g, |p| p[0]).unwrap();
        assert_eq!(u.linf_norm(&Region::All).unwrap(), 1.0);
    }

    #[test]
    fn field_io_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.dat");
        let u = ScalarField::from_fn(unit_grid(8), |p| p[0] * p[1] + 0.5).unwrap();
        u.save(&path).unwrap();
        let back = ScalarField::load(&path).unwrap();
        assert_eq!(back.grid, u.grid);
        for (a, b) in back.values().iter().zip(u.values()) {
            assert_eq!(a, b);
        }
    }
}
