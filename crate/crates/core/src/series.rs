//! Truncated complex power series and Padé approximants.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Toeplitz blocks with a larger condition estimate are treated as degenerate.
pub const PADE_MAX_CONDITION: f64 = 1e14;

/// `c_0 + c_1 s + ... + c_N s^N`
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexSeries {
    pub coeffs: Vec<Complex64>,
}

impl ComplexSeries {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    /// Highest order held (`len - 1`), or `None` for an empty series.
    pub fn order(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    /// Horner evaluation of the truncated sum.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::default(), |acc, &c| acc * s + c)
    }

    /// Cauchy product truncated at `order`. The result holds
    /// `min(order, available) + 1` coefficients, where `available` is the
    /// lower of the two input orders.
    pub fn convolve(&self, other: &ComplexSeries, order: usize) -> ComplexSeries {
        let avail = self.len().min(other.len());
        if avail == 0 {
            return ComplexSeries::default();
        }
        let n = order.min(avail - 1);
        let coeffs = (0..=n)
            .map(|k| (0..=k).map(|j| self.coeffs[j] * other.coeffs[k - j]).sum())
            .collect();
        ComplexSeries { coeffs }
    }

    /// Series `w` with `self * w = 1` through `order`.
    pub fn reciprocal(&self, order: usize) -> Result<ComplexSeries> {
        let a0 = self.coeff(0);
        if a0 == Complex64::default() {
            return Err(Error::ZeroLeadingCoefficient);
        }
        let inv0 = a0.inv();
        let mut w = Vec::with_capacity(order + 1);
        w.push(inv0);
        for k in 1..=order {
            let acc: Complex64 = (1..=k).map(|j| self.coeff(j) * w[k - j]).sum();
            w.push(-acc * inv0);
        }
        Ok(ComplexSeries { coeffs: w })
    }

    /// Coefficient-wise conjugate. For real `s` the result evaluates to the
    /// conjugate of `self` evaluated at `s`.
    pub fn conjugate_reflect(&self) -> ComplexSeries {
        ComplexSeries {
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
        }
    }

    pub fn scale(&self, factor: Complex64) -> ComplexSeries {
        ComplexSeries {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Rational approximant `num(s) / den(s)` with `den[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadeApproximant {
    pub num: Vec<Complex64>,
    pub den: Vec<Complex64>,
}

fn horner(c: &[Complex64], s: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::default(), |acc, &x| acc * s + x)
}

impl PadeApproximant {
    pub fn numerator_degree(&self) -> usize {
        self.num.len().saturating_sub(1)
    }

    pub fn denominator_degree(&self) -> usize {
        self.den.len().saturating_sub(1)
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        let d = horner(&self.den, s);
        let n = horner(&self.num, s);
        if d == Complex64::default() || !(n / d).is_finite() {
            return Err(Error::PoleAtEvaluationPoint);
        }
        Ok(n / d)
    }

    /// Near-diagonal approximant using every coefficient of `a`: `[m/m]` when
    /// the coefficient count is odd, `[m/m-1]` when even. While the Toeplitz
    /// block is degenerate the denominator degree drops by one and the
    /// numerator absorbs the freed coefficient, ending at the plain truncated
    /// polynomial.
    pub fn robust(a: &ComplexSeries) -> Result<PadeApproximant> {
        let Some(n) = a.order() else {
            return Err(Error::DegeneratePade);
        };
        let mut den_deg = n / 2;
        loop {
            match pade_with_degrees(a, n - den_deg, den_deg) {
                Ok(p) => return Ok(p),
                Err(Error::DegeneratePade) if den_deg > 0 => den_deg -= 1,
                Err(e) => return Err(e),
            }
        }
    }
}

/// Build the `[m/m]` approximant (or `[m/m-1]` when `a` has exactly `2m`
/// coefficients). Fails with [`Error::DegeneratePade`] when the Toeplitz block
/// for the denominator is singular or its condition estimate exceeds
/// [`PADE_MAX_CONDITION`]; callers retry with `m - 1`.
pub fn pade_build(a: &ComplexSeries, m: usize) -> Result<PadeApproximant> {
    if a.len() > 2 * m {
        pade_with_degrees(a, m, m)
    } else if a.len() == 2 * m && m > 0 {
        pade_with_degrees(a, m, m - 1)
    } else {
        Err(Error::DegeneratePade)
    }
}

pub fn pade_eval(p: &PadeApproximant, s: Complex64) -> Result<Complex64> {
    p.eval(s)
}

/// `[L/M]` approximant from coefficients `c_0 ..= c_{L+M}`.
pub fn pade_with_degrees(a: &ComplexSeries, l: usize, m: usize) -> Result<PadeApproximant> {
    if a.len() < l + m + 1 {
        return Err(Error::DegeneratePade);
    }
    let c = |k: isize| -> Complex64 {
        if k < 0 {
            Complex64::default()
        } else {
            a.coeff(k as usize)
        }
    };
    let mut den = vec![Complex64::new(1.0, 0.0)];
    if m > 0 {
        // sum_{j=1..M} b_j c_{k-j} = -c_k for k = L+1 ..= L+M
        let t = DMatrix::from_fn(m, m, |r, col| c((l + 1 + r) as isize - (col + 1) as isize));
        let rhs = DVector::from_fn(m, |r, _| -c((l + 1 + r) as isize));
        if t.iter().all(|z| *z == Complex64::default()) {
            return Err(Error::DegeneratePade);
        }
        let sv = t.clone().svd(false, false).singular_values;
        let (hi, lo) = (sv.max(), sv.min());
        if !(lo > 0.0) || hi / lo > PADE_MAX_CONDITION {
            return Err(Error::DegeneratePade);
        }
        let b = t.lu().solve(&rhs).ok_or(Error::DegeneratePade)?;
        den.extend(b.iter().copied());
    }
    let num = (0..=l)
        .map(|k| (0..=k.min(m)).map(|j| den[j] * c(k as isize - j as isize)).sum())
        .collect();
    Ok(PadeApproximant { num, den })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn geometric(r: f64, n: usize) -> ComplexSeries {
        ComplexSeries::from_real(&(0..=n).map(|k| r.powi(k as i32)).collect::<Vec<_>>())
    }

    /// Taylor coefficients of num/den by long division, independent of the
    /// reciprocal routine.
    fn expand_rational(num: &[f64], den: &[f64], n: usize) -> ComplexSeries {
        let mut out = vec![0.0; n + 1];
        for k in 0..=n {
            let mut v = num.get(k).copied().unwrap_or(0.0);
            for j in 1..=k.min(den.len() - 1) {
                v -= den[j] * out[k - j];
            }
            out[k] = v / den[0];
        }
        ComplexSeries::from_real(&out)
    }

    #[test]
    fn convolve_polynomial_identity() {
        let a = ComplexSeries::from_real(&[1.0, 1.0, 0.0]);
        let b = ComplexSeries::from_real(&[1.0, -1.0, 0.0]);
        assert_eq!(a.convolve(&b, 2).coeffs, vec![c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
    }

    #[test]
    fn convolve_geometric_against_double_loop() {
        let (a, b) = (geometric(0.5, 6), geometric(0.25, 6));
        let p = a.convolve(&b, 6);
        for k in 0..=6 {
            let mut expect = 0.0;
            for j in 0..=k {
                expect += 0.5f64.powi(j as i32) * 0.25f64.powi((k - j) as i32);
            }
            assert!((p.coeffs[k].re - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn convolve_truncates_to_available() {
        let a = geometric(0.5, 3);
        let b = geometric(0.5, 8);
        assert_eq!(a.convolve(&b, 10).len(), 4);
        assert_eq!(a.convolve(&b, 2).len(), 3);
    }

    #[test]
    fn reciprocal_of_one_minus_s_is_geometric() {
        let a = ComplexSeries::from_real(&[1.0, -1.0]);
        let w = a.reciprocal(8).unwrap();
        assert!(w.coeffs.iter().all(|&x| x == c(1.0, 0.0)));
    }

    #[test]
    fn reciprocal_of_constant() {
        let w = ComplexSeries::from_real(&[2.0]).reciprocal(0).unwrap();
        assert_eq!(w.coeffs, vec![c(0.5, 0.0)]);
    }

    #[test]
    fn reciprocal_zero_leading() {
        let a = ComplexSeries::from_real(&[0.0, 1.0]);
        assert_eq!(a.reciprocal(3), Err(Error::ZeroLeadingCoefficient));
    }

    #[test]
    fn conjugate_reflect_examples() {
        let a = ComplexSeries::new(vec![c(0.0, 0.0), c(0.0, 1.0)]);
        assert_eq!(a.conjugate_reflect().coeffs[1], c(0.0, -1.0));
        let r = ComplexSeries::from_real(&[1.0, 2.0, 3.0]);
        assert_eq!(r.conjugate_reflect(), r);
    }

    #[test]
    fn pade_of_geometric_is_exact() {
        let p = pade_build(&geometric(1.0, 2), 1).unwrap();
        assert!((p.num[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(p.num[1].norm() < 1e-15);
        assert!((p.den[1] - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((p.eval(c(0.5, 0.0)).unwrap() - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pade_recovers_rational() {
        let a = expand_rational(&[1.0, 2.0], &[1.0, 1.0, 1.0], 4);
        let p = pade_build(&a, 2).unwrap();
        let expect_num = [1.0, 2.0, 0.0];
        let expect_den = [1.0, 1.0, 1.0];
        for k in 0..3 {
            assert!((p.num[k] - c(expect_num[k], 0.0)).norm() < 1e-12, "{p:?}");
            assert!((p.den[k] - c(expect_den[k], 0.0)).norm() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn pade_of_exponential_at_one() {
        let mut coeffs = vec![1.0];
        for k in 1..=8 {
            coeffs.push(coeffs[k - 1] / k as f64);
        }
        // [3/3] at s = 1 is (120 + 60 + 12 + 1) / (120 - 60 + 12 - 1) = 193/71
        let p3 = pade_build(&ComplexSeries::from_real(&coeffs[..7]), 3).unwrap();
        let v3 = p3.eval(c(1.0, 0.0)).unwrap();
        assert!((v3.re - 193.0 / 71.0).abs() < 1e-14, "{v3}");
        assert!((v3.re - std::f64::consts::E).abs() < 3e-5);
        let p4 = pade_build(&ComplexSeries::from_real(&coeffs), 4).unwrap();
        let v4 = p4.eval(c(1.0, 0.0)).unwrap();
        assert!((v4.re - std::f64::consts::E).abs() < 1e-6, "{v4}");
    }

    #[test]
    fn pade_at_zero_is_leading_coefficient() {
        let a = ComplexSeries::new(vec![c(0.3, -1.0), c(2.0, 1.0), c(-1.0, 0.5), c(0.25, 0.0)]);
        let p = PadeApproximant::robust(&a).unwrap();
        assert_eq!(p.eval(Complex64::default()).unwrap(), a.coeffs[0]);
    }

    #[test]
    fn pole_is_reported() {
        let p = pade_build(&geometric(1.0, 2), 1).unwrap();
        assert_eq!(p.eval(c(1.0, 0.0)), Err(Error::PoleAtEvaluationPoint));
    }

    #[test]
    fn degenerate_block_falls_back() {
        // a polynomial has an all-zero Toeplitz block for [1/1] beyond degree 1
        let a = ComplexSeries::from_real(&[1.0, 2.0, 0.0, 0.0, 0.0]);
        assert_eq!(pade_build(&a, 2), Err(Error::DegeneratePade));
        let p = PadeApproximant::robust(&a).unwrap();
        assert!((p.eval(c(0.7, 0.0)).unwrap() - c(2.4, 0.0)).norm() < 1e-14);
    }

    fn arb_series(len: usize) -> impl Strategy<Value = ComplexSeries> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
            .prop_map(|v| ComplexSeries::new(v.into_iter().map(|(a, b)| c(a, b)).collect()))
    }

    proptest! {
        #[test]
        fn reciprocal_round_trip(tail in arb_series(10)) {
            let mut a = tail;
            a.coeffs.insert(0, c(1.0, 0.3));
            let w = a.reciprocal(10).unwrap();
            let p = a.convolve(&w, 10);
            prop_assert!((p.coeffs[0] - c(1.0, 0.0)).norm() < 1e-12);
            for k in 1..=10 {
                prop_assert!(p.coeffs[k].norm() < 1e-12 * w.coeffs[k].norm().max(1.0));
            }
        }

        #[test]
        fn conjugate_reflect_matches_real_evaluation(a in arb_series(8)) {
            let s = c(0.7, 0.0);
            let lhs = a.eval(s).conj();
            let rhs = a.conjugate_reflect().eval(s);
            prop_assert!((lhs - rhs).norm() <= 1e-15 * (1.0 + lhs.norm()));
        }

        #[test]
        fn convolve_commutes(a in arb_series(7), b in arb_series(7)) {
            let ab = a.convolve(&b, 6);
            let ba = b.convolve(&a, 6);
            for k in 0..=6 {
                prop_assert!((ab.coeffs[k] - ba.coeffs[k]).norm() < 1e-14);
            }
        }

        #[test]
        fn convolve_is_linear_in_first(a in arb_series(6), b in arb_series(6), d in arb_series(6), t in -2.0f64..2.0) {
            let sum = ComplexSeries::new(a.coeffs.iter().zip(&d.coeffs).map(|(x, y)| x + y.scale(t)).collect());
            let lhs = sum.convolve(&b, 5);
            let r1 = a.convolve(&b, 5);
            let r2 = d.convolve(&b, 5);
            for k in 0..=5 {
                prop_assert!((lhs.coeffs[k] - (r1.coeffs[k] + r2.coeffs[k] * t)).norm() < 1e-13);
            }
        }

        #[test]
        fn pade_round_trips_rationals(
            n in proptest::collection::vec(-1.0f64..1.0, 3),
            d in proptest::collection::vec(-0.4f64..0.4, 2),
        ) {
            // den = 1 + d1 s + d2 s^2 with small coefficients stays well conditioned
            let den = [1.0, d[0], d[1]];
            prop_assume!(d[1].abs() > 0.05);
            let num = [n[0], n[1], n[2]];
            // a common root between num and den makes the block singular
            let a = expand_rational(&num, &den, 4);
            if let Ok(p) = pade_build(&a, 2) {
                for k in 0..3 {
                    prop_assert!((p.den[k] - c(den[k], 0.0)).norm() < 1e-9, "{:?}", p);
                    prop_assert!((p.num[k] - c(num[k], 0.0)).norm() < 1e-9, "{:?}", p);
                }
            }
        }

        #[test]
        fn pade_matches_source_through_order(a in arb_series(9)) {
            let mut a = a;
            a.coeffs[0] = c(1.0, 0.0);
            if let Ok(p) = pade_build(&a, 4) {
                // den * a - num vanishes through order 8
                let den = ComplexSeries::new(p.den.clone());
                let prod = den.convolve(&a, 8);
                for k in 0..=8 {
                    let r = prod.coeff(k) - p.num.get(k).copied().unwrap_or_default();
                    prop_assert!(r.norm() < 1e-10, "order {k}: {r}");
                }
            }
        }
    }
}
