//! Quadrature points, nodal bases, and the weight matrices defining one
//! element update of cG(q)/dG(q), plus local polynomial evaluation.
//!
//! cG(q) uses Gauss-Lobatto points on [0,1]; dG(q) uses right Radau points.
//! The weights integrate the Lagrange interpolant of the right-hand side
//! exactly, so dG(0) reduces to backward Euler and cG(1) to the trapezoidal
//! rule.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::real::Real;

/// Highest supported polynomial order.
pub const MAX_ORDER: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Continuous Galerkin: continuous trial functions, order q >= 1.
    Cg,
    /// Discontinuous Galerkin: jumps allowed at element boundaries, q >= 0.
    Dg,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Cg => "cg",
            Variant::Dg => "dg",
        }
    }
}

/// Nodal/quadrature points and weight matrix for one (variant, q) pair.
/// Immutable after construction; safe for concurrent reads.
#[derive(Clone, Debug)]
pub struct MethodTable<T: Real> {
    pub variant: Variant,
    pub order: usize,
    /// Nodal points s_0 <= ... <= s_q on [0, 1]; quadrature points coincide.
    pub nodes: Vec<T>,
    /// Weights w[m][n]; the element update is
    /// `xi_m = xi0- + k sum_n w[m][n] f(t(s_n))`.
    pub weights: Vec<Vec<T>>,
    /// Monomial coefficients of the Lagrange basis polynomials.
    basis_coeffs: Vec<Vec<T>>,
    /// Monomial coefficients of the basis derivatives.
    deriv_coeffs: Vec<Vec<T>>,
}

struct RawTable {
    nodes: Vec<f64>,
    weights: Vec<Vec<f64>>,
    basis: Vec<Vec<f64>>,
}

fn table_cache() -> &'static Mutex<HashMap<(Variant, usize), &'static RawTable>> {
    static CACHE: OnceLock<Mutex<HashMap<(Variant, usize), &'static RawTable>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl<T: Real> MethodTable<T> {
    /// Builds (or fetches from cache) the table for a variant and order.
    pub fn build(variant: Variant, order: usize) -> Result<Self> {
        match variant {
            Variant::Cg if order < 1 => {
                return Err(Error::Config("cG requires order q >= 1".into()))
            }
            _ => {}
        }
        if order > MAX_ORDER {
            return Err(Error::Config(format!(
                "order {order} above the supported maximum {MAX_ORDER}"
            )));
        }
        let raw = {
            let mut cache = table_cache().lock().unwrap_or_else(|p| p.into_inner());
            *cache
                .entry((variant, order))
                .or_insert_with(|| Box::leak(Box::new(build_raw(variant, order))))
        };
        let nodes: Vec<T> = raw.nodes.iter().map(|&x| T::of(x)).collect();
        let weights: Vec<Vec<T>> = raw
            .weights
            .iter()
            .map(|row| row.iter().map(|&x| T::of(x)).collect())
            .collect();
        let basis_coeffs: Vec<Vec<T>> = raw
            .basis
            .iter()
            .map(|row| row.iter().map(|&x| T::of(x)).collect())
            .collect();
        let deriv_coeffs = basis_coeffs
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, &ck)| T::of(k as f64) * ck)
                    .collect()
            })
            .collect();
        Ok(Self { variant, order, nodes, weights, basis_coeffs, deriv_coeffs })
    }

    /// Number of degrees of freedom per element.
    pub fn dofs_per_element(&self) -> usize {
        self.order + 1
    }

    /// Value of the local polynomial with nodal coefficients `dofs` at
    /// `tau` in [0, 1]. Exact at the nodal points.
    pub fn eval_local(&self, dofs: &[T], tau: T) -> Result<T> {
        if tau < T::zero() || tau > T::one() {
            return Err(Error::OutOfRange(tau.as_f64()));
        }
        debug_assert_eq!(dofs.len(), self.order + 1);
        for (m, &s) in self.nodes.iter().enumerate() {
            if tau == s {
                return Ok(dofs[m]);
            }
        }
        let mut value = T::zero();
        for (m, coeffs) in self.basis_coeffs.iter().enumerate() {
            value = value + dofs[m] * horner(coeffs, tau);
        }
        Ok(value)
    }

    /// Derivative of the local polynomial with respect to `tau`. Divide by
    /// the element step to obtain the time derivative.
    pub fn deriv_local(&self, dofs: &[T], tau: T) -> T {
        let mut value = T::zero();
        for (m, coeffs) in self.deriv_coeffs.iter().enumerate() {
            value = value + dofs[m] * horner(coeffs, tau);
        }
        value
    }

    /// Value of the `m`-th Lagrange basis polynomial at `tau`.
    pub fn basis_value(&self, m: usize, tau: T) -> T {
        horner(&self.basis_coeffs[m], tau)
    }
}

/// One element update: `xi_m = xi0- + k sum_n w[m][n] f_n`. For cG the
/// first row of weights is zero, so `xi_0 = xi0-` exactly.
pub fn update_element<T: Real>(table: &MethodTable<T>, xi0_minus: T, k: T, f_samples: &[T]) -> Vec<T> {
    debug_assert_eq!(f_samples.len(), table.order + 1);
    table
        .weights
        .iter()
        .map(|row| {
            let mut sum = T::zero();
            for (n, &w) in row.iter().enumerate() {
                sum = sum + w * f_samples[n];
            }
            xi0_minus + k * sum
        })
        .collect()
}

fn horner<T: Real>(coeffs: &[T], x: T) -> T {
    let mut value = T::zero();
    for &c in coeffs.iter().rev() {
        value = value * x + c;
    }
    value
}

fn build_raw(variant: Variant, order: usize) -> RawTable {
    let nodes = match variant {
        Variant::Cg => lobatto_nodes(order),
        Variant::Dg => radau_right_nodes(order),
    };
    let basis: Vec<Vec<f64>> = (0..=order).map(|n| lagrange_coeffs(&nodes, n)).collect();
    let mut weights = vec![vec![0.0; order + 1]; order + 1];
    for m in 0..=order {
        if variant == Variant::Cg && m == 0 {
            continue; // xi_0 is fixed by continuity
        }
        for n in 0..=order {
            weights[m][n] = integrate_poly(&basis[n], nodes[m]);
        }
    }
    RawTable { nodes, weights, basis }
}

/// Monomial coefficients of the Lagrange basis polynomial through `nodes`
/// that is 1 at node `n` and 0 at the others.
fn lagrange_coeffs(nodes: &[f64], n: usize) -> Vec<f64> {
    let mut coeffs = vec![1.0];
    let mut denom = 1.0;
    for (j, &xj) in nodes.iter().enumerate() {
        if j == n {
            continue;
        }
        let mut next = vec![0.0; coeffs.len() + 1];
        for (k, &c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= xj * c;
        }
        coeffs = next;
        denom *= nodes[n] - xj;
    }
    for c in &mut coeffs {
        *c /= denom;
    }
    coeffs
}

/// Integral of the polynomial with the given monomial coefficients over
/// [0, upper].
fn integrate_poly(coeffs: &[f64], upper: f64) -> f64 {
    let mut sum = 0.0;
    let mut power = upper;
    for (k, &c) in coeffs.iter().enumerate() {
        sum += c * power / (k + 1) as f64;
        power *= upper;
    }
    sum
}

/// Legendre polynomial value and derivative at `x` via the three-term
/// recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * x * p - k as f64 * p_prev) / (k + 1) as f64;
        p_prev = p;
        p = next;
    }
    let dp = if x.abs() < 1.0 {
        n as f64 * (x * p - p_prev) / (x * x - 1.0)
    } else {
        // P'_n(+-1) = (+-1)^{n-1} n (n + 1) / 2
        let sign = if x > 0.0 { 1.0 } else { (-1.0f64).powi(n as i32 - 1) };
        sign * (n * (n + 1)) as f64 / 2.0
    };
    (p, dp)
}

/// Roots of `f` on (-1, 1) located by sign changes on a fine grid followed
/// by bisection. The target functions here have only simple roots.
fn grid_roots(f: &dyn Fn(f64) -> f64, expected: usize) -> Vec<f64> {
    let samples = 2000 * (expected + 1);
    let lo = -1.0 + 1e-9;
    let hi = 1.0 - 1e-9;
    let mut roots = Vec::with_capacity(expected);
    let mut x_prev = lo;
    let mut f_prev = f(lo);
    for i in 1..=samples {
        let x = lo + (hi - lo) * i as f64 / samples as f64;
        let fx = f(x);
        if fx == 0.0 {
            // A sample hit the root exactly; record it once.
            roots.push(x);
        } else if f_prev != 0.0 && f_prev.signum() != fx.signum() {
            let (mut a, mut b, mut fa) = (x_prev, x, f_prev);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid == a || mid == b {
                    break;
                }
                let fm = f(mid);
                if fm == 0.0 {
                    a = mid;
                    break;
                }
                if fa.signum() != fm.signum() {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        x_prev = x;
        f_prev = fx;
    }
    assert_eq!(roots.len(), expected, "root count mismatch in quadrature setup");
    roots
}

/// Gauss-Lobatto points on [0, 1] for q + 1 nodes: endpoints plus the roots
/// of P'_q.
fn lobatto_nodes(q: usize) -> Vec<f64> {
    let mut nodes = vec![0.0];
    if q >= 2 {
        let interior = grid_roots(&|x| legendre(q, x).1, q - 1);
        nodes.extend(interior.into_iter().map(|x| 0.5 * (x + 1.0)));
    }
    nodes.push(1.0);
    nodes
}

/// Right Radau points on [0, 1] for q + 1 nodes: the roots of
/// `(P_q - P_{q+1}) / (1 - x)` plus the right endpoint.
fn radau_right_nodes(q: usize) -> Vec<f64> {
    let mut nodes = Vec::with_capacity(q + 1);
    if q >= 1 {
        let f = |x: f64| (legendre(q, x).0 - legendre(q + 1, x).0) / (1.0 - x);
        let interior = grid_roots(&f, q);
        nodes.extend(interior.into_iter().map(|x| 0.5 * (x + 1.0)));
    }
    nodes.push(1.0);
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cg1_is_trapezoidal() {
        let t: MethodTable<f64> = MethodTable::build(Variant::Cg, 1).unwrap();
        assert_eq!(t.nodes, vec![0.0, 1.0]);
        assert_eq!(t.weights[0], vec![0.0, 0.0]);
        assert_abs_diff_eq!(t.weights[1][0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(t.weights[1][1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn dg0_is_backward_euler() {
        let t: MethodTable<f64> = MethodTable::build(Variant::Dg, 0).unwrap();
        assert_eq!(t.nodes, vec![1.0]);
        assert_abs_diff_eq!(t.weights[0][0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn dg1_radau_points_and_weights() {
        let t: MethodTable<f64> = MethodTable::build(Variant::Dg, 1).unwrap();
        assert_abs_diff_eq!(t.nodes[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.nodes[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(t.weights[0][0], 5.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.weights[0][1], -1.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.weights[1][0], 3.0 / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.weights[1][1], 1.0 / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn cg_end_row_sums_to_one() {
        for q in 1..=MAX_ORDER {
            let t: MethodTable<f64> = MethodTable::build(Variant::Cg, q).unwrap();
            let sum: f64 = t.weights[q].iter().sum();
            // High orders lose a couple of digits in the monomial basis.
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn update_with_zero_rhs_is_constant() {
        let t: MethodTable<f64> = MethodTable::build(Variant::Cg, 2).unwrap();
        let xi = update_element(&t, 3.5, 0.7, &[0.0, 0.0, 0.0]);
        assert!(xi.iter().all(|&x| x == 3.5));
    }

    #[test]
    fn update_reproduces_quadratic_exactly() {
        // U(t) = t^2 on [0, 1]: feed f = U' at the nodes.
        let t: MethodTable<f64> = MethodTable::build(Variant::Cg, 2).unwrap();
        let f: Vec<f64> = t.nodes.iter().map(|&s| 2.0 * s).collect();
        let xi = update_element(&t, 0.0, 1.0, &f);
        for (m, &s) in t.nodes.iter().enumerate() {
            assert_abs_diff_eq!(xi[m], s * s, epsilon = 1e-14);
        }
    }

    #[test]
    fn eval_local_linear_midpoint() {
        let t: MethodTable<f64> = MethodTable::build(Variant::Cg, 1).unwrap();
        assert_abs_diff_eq!(t.eval_local(&[1.0, 3.0], 0.5).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn eval_local_nodal_exactness() {
        let t: MethodTable<f64> = MethodTable::build(Variant::Dg, 2).unwrap();
        let xi = [1.25, -0.5, 3.0];
        for (m, &s) in t.nodes.iter().enumerate() {
            assert_eq!(t.eval_local(&xi, s).unwrap(), xi[m]);
        }
    }

    #[test]
    fn eval_local_quadratic_value() {
        // Quadratic through (0,0), (1/2,1/4), (1,1) is t^2.
        let t: MethodTable<f64> = MethodTable::build(Variant::Cg, 2).unwrap();
        assert_abs_diff_eq!(
            t.eval_local(&[0.0, 0.25, 1.0], 0.25).unwrap(),
            0.0625,
            epsilon = 1e-14
        );
    }

    #[test]
    fn eval_local_rejects_out_of_range() {
        let t: MethodTable<f64> = MethodTable::build(Variant::Cg, 1).unwrap();
        assert!(t.eval_local(&[0.0, 1.0], 1.5).is_err());
        assert!(t.eval_local(&[0.0, 1.0], -0.1).is_err());
    }

    #[test]
    fn deriv_local_of_quadratic() {
        let t: MethodTable<f64> = MethodTable::build(Variant::Cg, 2).unwrap();
        // U(tau) = tau^2, U'(0.3) = 0.6.
        assert_abs_diff_eq!(t.deriv_local(&[0.0, 0.25, 1.0], 0.3), 0.6, epsilon = 1e-13);
    }

    #[test]
    fn rejects_invalid_orders() {
        assert!(MethodTable::<f64>::build(Variant::Cg, 0).is_err());
        assert!(MethodTable::<f64>::build(Variant::Dg, MAX_ORDER + 1).is_err());
        assert!(MethodTable::<f64>::build(Variant::Dg, 0).is_ok());
    }

    #[test]
    fn high_order_nodes_sorted_in_unit_interval() {
        for q in 1..=MAX_ORDER {
            for variant in [Variant::Cg, Variant::Dg] {
                let t: MethodTable<f64> = MethodTable::build(variant, q).unwrap();
                assert_eq!(t.nodes.len(), q + 1);
                for w in t.nodes.windows(2) {
                    assert!(w[0] < w[1]);
                }
                assert!(t.nodes[0] >= 0.0 && t.nodes[q] == 1.0);
            }
        }
    }
}
