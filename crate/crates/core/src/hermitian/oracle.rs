//! Permutation-sum determinants, used as an independent route to the
//! trace pairing `tr_χ g = n (ω ∧ χ^{n−1}) / χ^n`.

use super::{HermitianMatrix, C64};
use crate::error::{Error, Result};

/// Largest dimension the factorial-cost expansions accept.
pub const MAX_ORACLE_DIM: usize = 4;

/// All permutations of `0..n` with their signs.
fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        let n = used.len();
        if prefix.len() == n {
            out.push((prefix.clone(), sign));
            return;
        }
        // inserting value v after the current prefix adds one inversion for
        // every unused value smaller than v
        let mut smaller_unused = 0;
        for v in 0..n {
            if used[v] {
                continue;
            }
            used[v] = true;
            prefix.push(v);
            let s = if smaller_unused % 2 == 0 { sign } else { -sign };
            rec(prefix, used, s, out);
            prefix.pop();
            used[v] = false;
            smaller_unused += 1;
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], 1.0, &mut out);
    out
}

/// Leibniz expansion of the determinant.
pub fn determinant_leibniz(a: &HermitianMatrix) -> C64 {
    permutations(a.dim())
        .iter()
        .map(|(p, s)| {
            p.iter()
                .enumerate()
                .fold(C64::new(*s, 0.0), |acc, (i, &j)| acc * a.get(i, j))
        })
        .sum()
}

/// Mixed discriminant `D(A₁, …, A_n) = (1/n!) Σ_{σ,τ} sgn σ sgn τ Π_k (A_k)_{σ(k) τ(k)}`,
/// normalized so that `D(A, …, A) = det A`.
pub fn mixed_discriminant(mats: &[&HermitianMatrix]) -> Result<C64> {
    let n = mats.len();
    if n == 0 {
        return Err(Error::InvalidInput("mixed discriminant of zero matrices".into()));
    }
    if n > MAX_ORACLE_DIM {
        return Err(Error::UnsupportedDimension(n));
    }
    for m in mats {
        if m.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.dim(),
            });
        }
    }
    let perms = permutations(n);
    let mut total = C64::new(0.0, 0.0);
    for (sigma, s1) in &perms {
        for (tau, s2) in &perms {
            let mut term = C64::new(s1 * s2, 0.0);
            for k in 0..n {
                term *= mats[k].get(sigma[k], tau[k]);
            }
            total += term;
        }
    }
    let factorial: f64 = (1..=n).map(|k| k as f64).product();
    Ok(total / factorial)
}

/// `n · D(g, χ, …, χ) / det χ`, which equals `n (ω ∧ χ^{n−1}) / χ^n`.
pub fn wedge_trace_ratio_oracle(g: &HermitianMatrix, chi: &HermitianMatrix) -> Result<f64> {
    let n = chi.dim();
    if n > MAX_ORACLE_DIM {
        return Err(Error::UnsupportedDimension(n));
    }
    chi.check_dim(g)?;
    if chi.cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    let mut slots: Vec<&HermitianMatrix> = vec![chi; n];
    slots[0] = g;
    let mixed = mixed_discriminant(&slots)?;
    let det = determinant_leibniz(chi);
    Ok(n as f64 * mixed.re / det.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_signs() {
        let perms = permutations(3);
        assert_eq!(perms.len(), 6);
        let total: f64 = perms.iter().map(|(_, s)| s).sum();
        assert_eq!(total, 0.0);
        assert!(perms.contains(&(vec![1, 0, 2], -1.0)));
        assert!(perms.contains(&(vec![1, 2, 0], 1.0)));
    }

    #[test]
    fn determinant_of_diagonal() {
        let d = determinant_leibniz(&HermitianMatrix::diagonal(&[2.0, 3.0, 5.0, 7.0]));
        assert!((d.re - 210.0).abs() < 1e-12 && d.im.abs() < 1e-12);
    }

    #[test]
    fn mixed_discriminant_reduces_to_determinant() {
        let a = HermitianMatrix::from_real(3, &[2.0, 0.5, 0.1, 0.5, 3.0, 0.2, 0.1, 0.2, 1.0]).unwrap();
        let d = mixed_discriminant(&[&a, &a, &a]).unwrap();
        assert!((d - determinant_leibniz(&a)).norm() < 1e-12);
    }

    #[test]
    fn oracle_simple_cases() {
        let i2 = HermitianMatrix::identity(2);
        assert!((wedge_trace_ratio_oracle(&i2, &i2).unwrap() - 2.0).abs() < 1e-15);
        let chi = HermitianMatrix::diagonal(&[2.0, 4.0]);
        assert!((wedge_trace_ratio_oracle(&i2, &chi).unwrap() - 0.75).abs() < 1e-15);
        let i5 = HermitianMatrix::identity(5);
        assert!(matches!(wedge_trace_ratio_oracle(&i5, &i5), Err(Error::UnsupportedDimension(5))));
    }
}
