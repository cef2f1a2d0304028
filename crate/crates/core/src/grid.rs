//! Uniform node lattices over axis-aligned boxes, with an optional time axis.
//!
//! Nodes double as cell centers: every node owns a cell of volume `h^n`
//! (times `dt` on spacetime grids). Flat storage is row-major with the time
//! index slowest and the last spatial axis fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub t_min: f64,
    pub dt: f64,
    pub nt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Coordinate of the first node along each spatial axis.
    pub min: Vec<f64>,
    /// Spatial node spacing, uniform across axes.
    pub h: f64,
    /// Node count per spatial axis.
    pub shape: Vec<usize>,
    /// Present on spacetime grids.
    pub time: Option<TimeAxis>,
}

impl Grid {
    pub fn spatial(min: Vec<f64>, h: f64, shape: Vec<usize>) -> Result<Self> {
        if h <= 0.0 || !h.is_finite() {
            return Err(Error::Parameter(format!("grid spacing h = {h}")));
        }
        if min.len() != shape.len() || shape.is_empty() || shape.len() > 3 {
            return Err(Error::Parameter(
                "grid dimension must be 1, 2 or 3 with matching min/shape".into(),
            ));
        }
        if shape.iter().any(|&n| n == 0) {
            return Err(Error::Parameter("grid shape contains a zero axis".into()));
        }
        Ok(Grid {
            min,
            h,
            shape,
            time: None,
        })
    }

    pub fn spacetime(
        min: Vec<f64>,
        h: f64,
        shape: Vec<usize>,
        t_min: f64,
        dt: f64,
        nt: usize,
    ) -> Result<Self> {
        let mut g = Grid::spatial(min, h, shape)?;
        if dt <= 0.0 || nt == 0 {
            return Err(Error::Parameter(format!("time axis dt = {dt}, nt = {nt}")));
        }
        g.time = Some(TimeAxis { t_min, dt, nt });
        Ok(g)
    }

    /// Nodes on a closed box [min, max]^n including both faces:
    /// `intervals` cells per axis, `intervals + 1` nodes.
    pub fn nodes_on_box(box_min: &[f64], box_max: &[f64], intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::Parameter("intervals must be positive".into()));
        }
        let h = (box_max[0] - box_min[0]) / intervals as f64;
        for d in 1..box_min.len() {
            let hd = (box_max[d] - box_min[d]) / intervals as f64;
            if (hd - h).abs() > 1e-12 * h.abs() {
                return Err(Error::Parameter("box is not a cube for uniform h".into()));
            }
        }
        Grid::spatial(
            box_min.to_vec(),
            h,
            vec![intervals + 1; box_min.len()],
        )
    }

    /// Cell centers of a box split into `cells` cells per axis. The first
    /// center sits half a cell inside the box.
    pub fn cell_centers_in_box(box_min: &[f64], box_max: &[f64], cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::Parameter("cells must be positive".into()));
        }
        let h = (box_max[0] - box_min[0]) / cells as f64;
        let min: Vec<f64> = box_min.iter().map(|&m| m + 0.5 * h).collect();
        Grid::spatial(min, h, vec![cells; box_min.len()])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn is_spacetime(&self) -> bool {
        self.time.is_some()
    }

    /// Number of nodes in one time level.
    pub fn space_len(&self) -> usize {
        self.shape.iter().product()
    }

    /// Total number of nodes (all time levels).
    pub fn len(&self) -> usize {
        self.space_len() * self.time.map_or(1, |t| t.nt)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one node cell (h^n, times dt on spacetime grids).
    pub fn cell_volume(&self) -> f64 {
        let v = self.h.powi(self.dim() as i32);
        match self.time {
            Some(t) => v * t.dt,
            None => v,
        }
    }

    /// Spatial-only cell volume h^n.
    pub fn space_cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn node_coord(&self, axis: usize, i: usize) -> f64 {
        self.min[axis] + self.h * i as f64
    }

    pub fn max_coord(&self, axis: usize) -> f64 {
        self.node_coord(axis, self.shape[axis] - 1)
    }

    pub fn time_coord(&self, it: usize) -> f64 {
        let t = self.time.expect("spatial grid has no time axis");
        t.t_min + t.dt * it as f64
    }

    /// Spatial multi-index -> flat index within one time level.
    pub fn space_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (d, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[d]);
            flat = flat * self.shape[d] + i;
        }
        flat
    }

    /// Flat index (within a time level) -> spatial multi-index.
    pub fn space_unindex(&self, mut flat: usize, idx: &mut [usize]) {
        for d in (0..self.shape.len()).rev() {
            idx[d] = flat % self.shape[d];
            flat /= self.shape[d];
        }
    }

    /// Full flat index for spacetime grids.
    pub fn index(&self, it: usize, space_flat: usize) -> usize {
        it * self.space_len() + space_flat
    }

    /// Writes the spatial coordinates of a (within-level) flat index.
    pub fn node_position(&self, space_flat: usize, out: &mut [usize], pos: &mut [f64]) {
        self.space_unindex(space_flat, out);
        for d in 0..self.dim() {
            pos[d] = self.node_coord(d, out[d]);
        }
    }

    /// Nearest node to a spatial point, clamped to the grid.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut flat = 0;
        for d in 0..self.dim() {
            let raw = (x[d] - self.min[d]) / self.h;
            let i = raw.round().clamp(0.0, (self.shape[d] - 1) as f64) as usize;
            flat = flat * self.shape[d] + i;
        }
        flat
    }

    /// Nearest time level to `t`, clamped.
    pub fn nearest_time(&self, t: f64) -> usize {
        let ta = self.time.expect("spatial grid has no time axis");
        let raw = (t - ta.t_min) / ta.dt;
        raw.round().clamp(0.0, (ta.nt - 1) as f64) as usize
    }

    /// True when the ball B(center, radius) lies inside the closed node box.
    pub fn ball_inside(&self, center: &[f64], radius: f64) -> bool {
        (0..self.dim()).all(|d| {
            center[d] - radius >= self.min[d] - 1e-12 * self.h
                && center[d] + radius <= self.max_coord(d) + 1e-12 * self.h
        })
    }

    /// Iterates spatial flat indices of nodes with |x - center| < radius.
    pub fn nodes_in_ball(&self, center: &[f64], radius: f64) -> Vec<usize> {
        let dim = self.dim();
        let mut lo = vec![0usize; dim];
        let mut hi = vec![0usize; dim];
        for d in 0..dim {
            let a = ((center[d] - radius - self.min[d]) / self.h).floor().max(0.0) as usize;
            let b = ((center[d] + radius - self.min[d]) / self.h).ceil() as usize;
            lo[d] = a.min(self.shape[d] - 1);
            hi[d] = b.min(self.shape[d] - 1);
        }
        let mut out = Vec::new();
        let mut idx = lo.clone();
        let r2 = radius * radius;
        loop {
            let mut d2 = 0.0;
            for d in 0..dim {
                let dx = self.node_coord(d, idx[d]) - center[d];
                d2 += dx * dx;
            }
            if d2 < r2 {
                out.push(self.space_index(&idx));
            }
            // advance the multi-index within [lo, hi]
            let mut d = dim;
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                if idx[d] < hi[d] {
                    idx[d] += 1;
                    for k in d + 1..dim {
                        idx[k] = lo[k];
                    }
                    break;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = Grid::spatial(vec![-1.0, -1.0], 0.5, vec![5, 5]).unwrap();
        let mut idx = [0usize; 2];
        for flat in 0..g.space_len() {
            g.space_unindex(flat, &mut idx);
            assert_eq!(g.space_index(&idx), flat);
        }
    }

    #[test]
    fn nodes_on_box_spacing() {
        let g = Grid::nodes_on_box(&[-1.0, -1.0], &[1.0, 1.0], 4).unwrap();
        assert_eq!(g.shape, vec![5, 5]);
        assert!((g.h - 0.5).abs() < 1e-15);
        assert_eq!(g.max_coord(0), 1.0);
    }

    #[test]
    fn cell_centers_avoid_origin_for_even_counts() {
        let g = Grid::cell_centers_in_box(&[-1.0], &[1.0], 4).unwrap();
        // centers: -0.75, -0.25, 0.25, 0.75
        assert!((g.node_coord(0, 1) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn ball_membership_is_strict() {
        let g = Grid::spatial(vec![0.0], 1.0, vec![3]).unwrap();
        // nodes at 0, 1, 2; ball of radius 1 around 0 excludes the node at 1
        let inside = g.nodes_in_ball(&[0.0], 1.0);
        assert_eq!(inside, vec![0]);
    }

    #[test]
    fn nearest_node_clamps() {
        let g = Grid::spatial(vec![0.0, 0.0], 1.0, vec![3, 3]).unwrap();
        assert_eq!(g.nearest_node(&[-5.0, 0.2]), 0);
        assert_eq!(g.nearest_node(&[2.4, 2.4]), g.space_len() - 1);
    }
}
