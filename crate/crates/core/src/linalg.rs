//! Small dense kernels.

/// Solves `A x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is `n×n` row-major and is overwritten; the solution replaces `b`.
/// Returns `false` when the matrix is numerically singular.
pub fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let (piv, max) =
            (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -1.0), |acc, e| if e.1 > acc.1 { e } else { acc });
        if max < 1e-300 {
            return false;
        }
        if piv != col {
            for j in 0..n {
                a.swap(piv * n + j, col * n + j);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[r * n + j] -= f * a[col * n + j];
            }
            b[r] -= f * b[col];
        }
    }
    for r in (0..n).rev() {
        let mut s = b[r];
        for j in r + 1..n {
            s -= a[r * n + j] * b[j];
        }
        b[r] = s / a[r * n + r];
    }
    true
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_pivoted_system() {
        let mut a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let mut b = vec![7.0, 3.0, 6.0];
        assert!(solve_in_place(&mut a, &mut b, 3));
        // x = (1, 2, 3) satisfies the original system
        for (got, want) in b.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let mut s = vec![1.0, 2.0, 2.0, 4.0];
        let mut r = vec![1.0, 1.0];
        assert!(!solve_in_place(&mut s, &mut r, 2));
    }
}
