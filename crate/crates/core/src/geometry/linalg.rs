use nalgebra::DMatrix;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|v| v * s).collect()
}

pub(crate) fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Flips the sign so that the first clearly nonzero entry is positive.
pub(crate) fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let s = norm_inf(&v);
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-9 * s.max(1e-300)) {
        if *first < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
    }
    v
}

/// Splits `R^dim` into the null space of `rows` and its orthogonal
/// complement, both as orthonormal bases.
pub(crate) fn null_and_range(rows: &[Vec<f64>], dim: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let nr = rows.len().max(dim);
    let mut a = DMatrix::<f64>::zeros(nr, dim);
    for (i, r) in rows.iter().enumerate() {
        let n = norm2(r);
        if n == 0.0 {
            continue;
        }
        for j in 0..dim {
            a[(i, j)] = r[j] / n;
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    let thresh = 1e-9 * smax.max(1.0);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|x, y| svd.singular_values[*y].total_cmp(&svd.singular_values[*x]));
    let mut null = Vec::new();
    let mut range = Vec::new();
    for k in order {
        let v: Vec<f64> = vt.row(k).iter().copied().collect();
        if svd.singular_values[k] <= thresh {
            null.push(v);
        } else {
            range.push(v);
        }
    }
    (orthonormal_canonical(null), orthonormal_canonical(range))
}

/// Re-expresses a subspace basis in a reproducible form: reduced row
/// echelon form of the basis followed by Gram-Schmidt.
fn orthonormal_canonical(basis: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    if basis.is_empty() {
        return basis;
    }
    let k = basis.len();
    let dim = basis[0].len();
    let mut m: Vec<Vec<f64>> = basis;
    let mut row = 0;
    for col in 0..dim {
        if row == k {
            break;
        }
        let (piv, pv) = (row..k)
            .map(|r| (r, m[r][col].abs()))
            .fold((row, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if pv < 1e-10 {
            continue;
        }
        m.swap(row, piv);
        let p = m[row][col];
        for x in &mut m[row] {
            *x /= p;
        }
        for r in 0..k {
            if r != row {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..dim {
                        let t = m[row][c];
                        m[r][c] -= f * t;
                    }
                }
            }
        }
        row += 1;
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in m {
        let mut w = v.clone();
        for u in &out {
            let d = dot(&w, u);
            for c in 0..dim {
                w[c] -= d * u[c];
            }
        }
        let n = norm2(&w);
        if n > 1e-12 {
            out.push(scale(&w, 1.0 / n));
        }
    }
    out
}

/// Numerical rank of a set of vectors.
pub(crate) fn rank(vectors: &[Vec<f64>], dim: usize) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let (_, range) = null_and_range(vectors, dim);
    range.len()
}

/// Inverse of a small square matrix given by rows.
pub(crate) fn inverse(rows: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = rows.len();
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let inv = m.try_inverse()?;
    Some((0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_single_row() {
        let (null, range) = null_and_range(&[vec![1.0, 1.0, 0.0]], 3);
        assert_eq!(null.len(), 2);
        assert_eq!(range.len(), 1);
        for v in &null {
            assert!(dot(v, &[1.0, 1.0, 0.0]).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_detects_dependence() {
        let v = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert_eq!(rank(&v, 2), 1);
        assert_eq!(rank(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2), 2);
    }
}
