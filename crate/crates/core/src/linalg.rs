//! Small dense helpers on slices. Contexts are short (`d` is a handful), so
//! plain loops beat allocating matrix types on the hot path.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// `xᵀ M x` for a row-major square matrix stored in a slice.
pub fn quad_form(m: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for i in 0..d {
        let row = &m[i * d..(i + 1) * d];
        acc += x[i] * dot(row, x);
    }
    acc
}

/// `M x` for a row-major square matrix.
pub fn mat_vec(m: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], x)).collect()
}
