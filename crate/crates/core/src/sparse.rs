//! Minimal CSR matrices with conjugate-gradient and BiCGStab solvers.
//!
//! Deterministic by construction: assembly order is fixed by the caller and
//! the iterations are serial dot products.

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

/// Coordinate-format builder; duplicate entries are summed on compression.
pub struct CooBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(n: usize) -> Self {
        CooBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries
            .sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        for (r, c, v) in self.entries {
            if let (Some(&last_c), true) = (col_idx.last(), row_ptr[r + 1] > 0) {
                // same row as the previous entry?
                if row_ptr[r + 1] == col_idx.len() && last_c == c {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            // fill row pointers for any skipped rows
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] = col_idx.len();
        }
        // make row_ptr cumulative over empty rows
        for r in 1..=self.n {
            if row_ptr[r] < row_ptr[r - 1] {
                row_ptr[r] = row_ptr[r - 1];
            }
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl CsrMatrix {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] = self.values[k];
                }
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients for SPD systems. Returns the
/// iteration count or the final residual on failure.
pub fn cg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol_rel: f64,
    max_iter: usize,
) -> Result<usize, f64> {
    let n = a.n;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(0);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for it in 0..max_iter {
        if norm(&r) <= tol_rel * bnorm {
            return Ok(it);
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(norm(&r) / bnorm);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm(&r) / bnorm;
    if res <= tol_rel {
        Ok(max_iter)
    } else {
        Err(res)
    }
}

/// Jacobi-preconditioned BiCGStab for general nonsymmetric systems.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol_rel: f64,
    max_iter: usize,
) -> Result<usize, f64> {
    let n = a.n;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(0);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];

    for it in 0..max_iter {
        if norm(&r) <= tol_rel * bnorm {
            return Ok(it);
        }
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(norm(&r) / bnorm);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            phat[i] = p[i] * inv_diag[i];
        }
        a.matvec(&phat, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= tol_rel * bnorm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(it + 1);
        }
        for i in 0..n {
            shat[i] = s[i] * inv_diag[i];
        }
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(norm(&s) / bnorm);
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega.abs() < 1e-300 {
            return Err(norm(&r) / bnorm);
        }
    }
    let res = norm(&r) / bnorm;
    if res <= tol_rel {
        Ok(max_iter)
    } else {
        Err(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut b = CooBuilder::new(n);
        for i in 0..n {
            b.push(i, i, 2.0);
            if i > 0 {
                b.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let n = 50;
        let a = laplacian_1d(n);
        let xe: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&xe, &mut b);
        let mut x = vec![0.0; n];
        cg(&a, &b, &mut x, 1e-12, 1000).unwrap();
        for (xi, xei) in x.iter().zip(&xe) {
            assert!((xi - xei).abs() < 1e-8);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric() {
        let n = 40;
        let mut bld = CooBuilder::new(n);
        for i in 0..n {
            bld.push(i, i, 3.0);
            if i > 0 {
                bld.push(i, i - 1, -1.3);
            }
            if i + 1 < n {
                bld.push(i, i + 1, -0.7);
            }
        }
        let a = bld.build();
        let xe: Vec<f64> = (0..n).map(|i| (i as f64 * 0.17).cos()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&xe, &mut b);
        let mut x = vec![0.0; n];
        bicgstab(&a, &b, &mut x, 1e-12, 1000).unwrap();
        for (xi, xei) in x.iter().zip(&xe) {
            assert!((xi - xei).abs() < 1e-8);
        }
    }

    #[test]
    fn duplicate_entries_are_summed() {
        let mut b = CooBuilder::new(2);
        b.push(0, 0, 1.0);
        b.push(0, 0, 2.0);
        b.push(1, 1, 1.0);
        let a = b.build();
        let mut y = vec![0.0; 2];
        a.matvec(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![3.0, 1.0]);
    }
}
