//! Minimal CSR sparse matrices and a preconditioned conjugate gradient
//! solver for the SPD Newton systems of the curvature solve.
//!
//! Deterministic by construction: fixed assembly and iteration order, no
//! threading inside a solve.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("conjugate gradient stalled: relative residual {rel:.3e} after {iters} iterations")]
    Stalled { rel: f64, iters: usize },
    #[error("matrix breakdown: non-positive curvature p·Ap = {0:.3e}")]
    Breakdown(f64),
}

/// Compressed sparse row matrix (square, symmetric usage).
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Builds from unsorted (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Csr {
        let mut counts = vec![0usize; n + 1];
        for (r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut cursor = counts.clone();
        for (r, c, v) in triplets {
            let k = cursor[*r];
            cols[k] = *c;
            vals[k] = *v;
            cursor[*r] += 1;
        }
        // sort each row, merge duplicates
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..n {
            row.clear();
            for k in counts[r]..counts[r + 1] {
                row.push((cols[k], vals[k]));
            }
            row.sort_unstable_by_key(|(c, _)| *c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut v = row[i].1;
                let mut j = i + 1;
                while j < row.len() && row[j].0 == c {
                    v += row[j].1;
                    j += 1;
                }
                indices.push(c);
                data.push(v);
                i = j;
            }
            indptr.push(indices.len());
        }
        Csr {
            n,
            indptr,
            indices,
            data,
        }
    }

    /// Same sparsity pattern, all values zeroed (for per-iteration refills).
    pub fn zeroed_like(&self) -> Csr {
        Csr {
            n: self.n,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    /// Adds `v` at (r, c); the entry must exist in the pattern.
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        match self.indices[lo..hi].binary_search(&c) {
            Ok(k) => self.data[lo + k] += v,
            Err(_) => panic!("entry ({r}, {c}) outside sparsity pattern"),
        }
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            y[r] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.indices[k] == r {
                    d[r] = self.data[k];
                }
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned CG for SPD systems, with an optional mask of
/// inactive (Dirichlet) unknowns that are held at zero.
///
/// Returns (solution, iterations).
pub fn pcg_masked(
    a: &Csr,
    b: &[f64],
    free: &[bool],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), LinearError> {
    let n = a.n;
    let mut diag = a.diagonal();
    for (i, d) in diag.iter_mut().enumerate() {
        if !free[i] || *d <= 0.0 {
            *d = 1.0;
        }
    }
    let mut rhs = b.to_vec();
    for i in 0..n {
        if !free[i] {
            rhs[i] = 0.0;
        }
    }
    let b_norm = dot(&rhs, &rhs).sqrt();
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }

    let mut x = vec![0.0; n];
    let mut r = rhs;
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for it in 0..max_iter {
        a.matvec_into(&p, &mut ap);
        for i in 0..n {
            if !free[i] {
                ap[i] = p[i];
            }
        }
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(LinearError::Breakdown(pap));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let r_norm = dot(&r, &r).sqrt();
        if r_norm <= rel_tol * b_norm {
            return Ok((x, it + 1));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = dot(&r, &r).sqrt() / b_norm;
    Err(LinearError::Stalled {
        rel,
        iters: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_assembly_merges_duplicates() {
        let a = Csr::from_triplets(
            3,
            &[
                (0, 0, 1.0),
                (0, 0, 1.0),
                (0, 1, -0.5),
                (1, 0, -0.5),
                (1, 1, 2.0),
                (2, 2, 3.0),
            ],
        );
        assert_eq!(a.indptr, vec![0, 2, 4, 5]);
        let y = a.matvec(&[1.0, 1.0, 1.0]);
        assert_eq!(y, vec![1.5, 1.5, 3.0]);
        assert_eq!(a.diagonal(), vec![2.0, 2.0, 3.0]);
    }

    #[test]
    fn pcg_solves_laplacian_chain() {
        // 1-D Dirichlet Laplacian, n = 50
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = Csr::from_triplets(n, &t);
        let b = vec![1.0; n];
        let free = vec![true; n];
        let (x, iters) = pcg_masked(&a, &b, &free, 1e-12, 1000).unwrap();
        let res = a.matvec(&x);
        let err: f64 = res
            .iter()
            .zip(&b)
            .map(|(r, b)| (r - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "residual {err}, iters {iters}");
    }

    #[test]
    fn pcg_respects_dirichlet_mask() {
        let n = 10;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = Csr::from_triplets(n, &t);
        let mut free = vec![true; n];
        free[0] = false;
        free[n - 1] = false;
        let b = vec![1.0; n];
        let (x, _) = pcg_masked(&a, &b, &free, 1e-12, 1000).unwrap();
        assert_eq!(x[0], 0.0);
        assert_eq!(x[n - 1], 0.0);
    }
}
