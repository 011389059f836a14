//! Order-by-order solution of a quadratic residual along a power series.
//!
//! Both the voltage embeddings and the error embedding reduce to the same
//! problem: find `x(s) = x_0 + x_1 s + x_2 s^2 + ...` such that
//!
//! ```text
//! P(x(s)) + s * P_scaled(x(s)) = forcing(s)
//! ```
//!
//! where `P` is the power-flow residual polynomial (power balance plus PV
//! squared magnitudes) for one admittance matrix and `P_scaled` an optional
//! second power term whose admittance is multiplied by `s`. Equating the
//! coefficient of `s^k` gives `J(x_0) x_k = forcing_k - K_k`, where `K_k`
//! collects products of lower-order coefficients. `J(x_0)` is factored once.

use num_complex::Complex64;

use crate::case_io::AdmittanceMatrix;
use crate::error::Result;
use crate::linalg::{inf_norm, mat_vec, Factorized};
use crate::pf::{Network, StateVector};

pub(crate) struct QuadraticRecursion<'a> {
    net: &'a Network,
    y: &'a AdmittanceMatrix,
    y_scaled: Option<&'a AdmittanceMatrix>,
    jac: Vec<f64>,
    lu: Factorized,
    /// Full-bus voltage coefficient per order.
    pub v: Vec<Vec<Complex64>>,
    /// PV reactive output coefficient per order.
    pub q: Vec<Vec<f64>>,
    current: Vec<Vec<Complex64>>,
    current_scaled: Vec<Vec<Complex64>>,
    /// Infinity norm of `J x_k - (forcing_k - K_k)` per order (order 0 is 0).
    pub linear_residuals: Vec<f64>,
}

impl<'a> QuadraticRecursion<'a> {
    pub fn new(
        net: &'a Network,
        y: &'a AdmittanceMatrix,
        y_scaled: Option<&'a AdmittanceMatrix>,
        anchor: &StateVector,
    ) -> Result<Self> {
        let jac = net.jacobian_with(y, anchor);
        let lu = Factorized::new(net.dim(), &jac)?;
        let v0 = anchor.v.clone();
        Ok(Self {
            net,
            y,
            y_scaled,
            jac,
            lu,
            current: vec![y.mul_vec(&v0)],
            current_scaled: y_scaled.map(|ys| vec![ys.mul_vec(&v0)]).unwrap_or_default(),
            v: vec![v0],
            q: vec![anchor.q_gen.clone()],
            linear_residuals: vec![0.0],
        })
    }

    pub fn solves(&self) -> usize {
        self.lu.solves()
    }

    /// Compute the next coefficient. `forcing` is the real right-hand side
    /// coefficient in residual row order; `slack` is the known slack voltage
    /// coefficient at this order.
    pub fn advance(&mut self, forcing: &[f64], slack: Complex64) {
        let net = self.net;
        let k = self.v.len();
        let n = net.bus_count();
        let slack_bus = net.slack();

        let mut known = vec![Complex64::default(); n];
        known[slack_bus] = slack;
        let known_current = self.y.mul_vec(&known);

        let mut rhs = forcing.to_vec();
        for i in 0..n {
            let Some(r) = net.var_slot(i) else { continue };
            // j = 0 term against the known part of order k, then interior terms
            let mut acc = self.v[0][i] * known_current[i].conj();
            for j in 1..k {
                acc += self.v[j][i] * self.current[k - j][i].conj();
            }
            if self.y_scaled.is_some() {
                for j in 0..k {
                    acc += self.v[j][i] * self.current_scaled[k - 1 - j][i].conj();
                }
            }
            rhs[r] -= acc.re;
            rhs[r + 1] -= acc.im;
            if let Some(p) = net.pv_slot(i) {
                let mut mag = 0.0;
                for j in 1..k {
                    mag += (self.v[j][i] * self.v[k - j][i].conj()).re;
                }
                rhs[net.q_row(p)] -= mag;
            }
        }

        let x = self.lu.solve(&rhs);
        let check = mat_vec(net.dim(), &self.jac, &x);
        let resid = check
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        self.linear_residuals.push(resid / inf_norm(&rhs).max(1.0));

        let state = net.real_to_state(&x, slack);
        self.current.push(self.y.mul_vec(&state.v));
        if let Some(ys) = self.y_scaled {
            self.current_scaled.push(ys.mul_vec(&state.v));
        }
        self.v.push(state.v);
        self.q.push(state.q_gen);
    }
}
