//! Small dense helpers. Problem sizes here are tens of variables, so plain
//! `Vec<f64>` rows are enough.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn axpy(y: &mut [f64], k: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += k * b;
    }
}

/// The affine set `{x : a_j . x = b_j}` in coordinates `x = origin + N z`,
/// with orthonormal columns `N`.
#[derive(Debug, Clone)]
pub(crate) struct Subspace {
    pub origin: Vec<f64>,
    basis: Vec<Vec<f64>>,
    identity: bool,
}

impl Subspace {
    pub fn whole(origin: Vec<f64>) -> Self {
        let n = origin.len();
        Subspace {
            origin,
            basis: Vec::with_capacity(n),
            identity: true,
        }
    }

    #[cfg(test)]
    pub fn dim(&self) -> usize {
        if self.identity {
            self.origin.len()
        } else {
            self.basis.len()
        }
    }

    pub fn point(&self, z: &[f64]) -> Vec<f64> {
        if self.identity {
            return self.origin.iter().zip(z).map(|(o, d)| o + d).collect();
        }
        let mut x = self.origin.clone();
        for (col, zk) in self.basis.iter().zip(z) {
            axpy(&mut x, *zk, col);
        }
        x
    }

    /// Gradient with respect to `z` from the gradient with respect to `x`.
    pub fn pull(&self, gx: &[f64]) -> Vec<f64> {
        if self.identity {
            return gx.to_vec();
        }
        self.basis.iter().map(|col| dot(col, gx)).collect()
    }

    /// Coordinates of the point of the subspace nearest to `x`.
    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = x.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        self.pull(&d)
    }
}

fn orthogonalize(v: &mut [f64], rhs: &mut f64, q: &[Vec<f64>], c: &[f64]) {
    // two passes keep Gram-Schmidt stable
    for _ in 0..2 {
        for (qj, cj) in q.iter().zip(c) {
            let d = dot(qj, v);
            axpy(v, -d, qj);
            *rhs -= d * cj;
        }
    }
}

/// Builds the affine set of `rows` (`a . x = b`) with origin at the
/// projection of `x0`. Returns the size of the inconsistency when the rows
/// contradict each other.
pub(crate) fn affine_subspace(rows: &[(Vec<f64>, f64)], x0: &[f64]) -> Result<Subspace, f64> {
    let n = x0.len();
    if rows.is_empty() {
        return Ok(Subspace::whole(x0.to_vec()));
    }
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut c: Vec<f64> = Vec::new();
    for (a, b) in rows {
        let scale = norm(a);
        let mut v = a.clone();
        let mut r = *b;
        orthogonalize(&mut v, &mut r, &q, &c);
        let nv = norm(&v);
        if nv > 1e-10 * scale.max(1e-300) {
            v.iter_mut().for_each(|x| *x /= nv);
            q.push(v);
            c.push(r / nv);
        } else if r.abs() > 1e-9 * (1.0 + b.abs()) {
            return Err(r.abs());
        }
    }
    let mut origin = x0.to_vec();
    for (qj, cj) in q.iter().zip(&c) {
        let d = dot(qj, &origin) - cj;
        axpy(&mut origin, -d, qj);
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        if q.len() + basis.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        for _ in 0..2 {
            for b in q.iter().chain(basis.iter()) {
                let d = dot(b, &v);
                axpy(&mut v, -d, b);
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v);
        }
    }
    Ok(Subspace {
        origin,
        basis,
        identity: false,
    })
}
