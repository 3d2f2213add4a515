//! KL divergence between the per-group data and query shares.

use crate::error::{Error, Result};

/// `u * ln(u / v)` with the `0 * ln 0 = 0` convention. Infinite when `v = 0`
/// and `u > 0`.
#[inline]
pub fn kl_term(u: f64, v: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if v <= 0.0 {
        f64::INFINITY
    } else {
        u * (u / v).ln()
    }
}

/// `sum_g u_g ln(u_g / v_g)` for two distributions over the same groups.
pub fn kl_objective(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid("v", "length differs from u"));
    }
    if u.is_empty() {
        return Err(Error::EmptyInput("groups"));
    }
    for (name, xs) in [("u", u), ("v", v)] {
        if xs.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid(
                name,
                "entries must be finite and non-negative",
            ));
        }
        let s: f64 = xs.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(name, format!("sums to {s}, expected 1")));
        }
    }
    let mut total = 0.0;
    for (g, (&ug, &vg)) in u.iter().zip(v).enumerate() {
        if ug > 0.0 && vg == 0.0 {
            return Err(Error::UnboundedDivergence { group: g, u: ug });
        }
        total += kl_term(ug, vg);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_distributions_have_zero_divergence() {
        let p = [0.1, 0.2, 0.7];
        assert!(kl_objective(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn two_point_reference_value() {
        let kl = kl_objective(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        let expect = 0.5 * (5.0f64 / 9.0).ln() + 0.5 * 5.0f64.ln();
        assert!((kl - expect).abs() < 1e-15);
        assert!((kl - 0.5108).abs() < 1e-4);
    }

    #[test]
    fn zero_query_mass_is_rejected() {
        let err = kl_objective(&[0.5, 0.5], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::UnboundedDivergence { group: 1, .. }));
    }

    #[test]
    fn rejects_unnormalised_inputs() {
        assert!(kl_objective(&[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(kl_objective(&[1.0], &[1.0, 0.0]).is_err());
    }
}
