//! The dual problem of an end-time functional, solved forward in time by
//! the same integrator, and the stability factors derived from it.
//!
//! For the primal `u' = f(u, t)` and functional `(psi, e(T))`, the dual
//! variable `phi` satisfies a backward linear problem; substituting
//! `w(t) = phi(T - t)` gives the forward system
//! `w' = J(U(T - t), T - t)^T w`, `w(0) = psi`.

use crate::adapt::mono_config;
use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegratorConfig, RunReport};
use crate::method::MethodTable;
use crate::ode::{OdeSystem, StateView};
use crate::real::Real;
use crate::trace::SolutionTrace;

/// State view backed by a solution trace at a fixed time.
struct TraceState<'a, T: Real> {
    trace: &'a SolutionTrace<T>,
    table: &'a MethodTable<T>,
    t: T,
}

impl<T: Real> StateView<T> for TraceState<'_, T> {
    fn value(&self, i: usize) -> T {
        self.trace
            .value(i, self.t, self.table)
            .unwrap_or_else(|_| T::nan())
    }
}

/// Builds the forward dual system around a computed primal solution. The
/// dual's sparsity is the transpose of the primal's; its Jacobian entries
/// come from the primal's analytic Jacobian when present and finite
/// differences otherwise.
pub fn make_dual_system<T: Real>(
    primal: &SolutionTrace<T>,
    sys: &OdeSystem<T>,
    psi: &[T],
) -> Result<OdeSystem<T>> {
    if psi.len() != sys.n() {
        return Err(Error::Config("functional vector length mismatch".into()));
    }
    let t_end = primal.end_time();
    if !(t_end > T::zero()) || t_end < sys.end_time() {
        return Err(Error::TraceGap(t_end.as_f64()));
    }
    let table = MethodTable::build(primal.variant, primal.order)?;
    let dual_sparsity = sys.sparsity().transpose();
    let rows: Vec<Vec<usize>> = dual_sparsity.rows().to_vec();

    let primal_rhs = primal.clone();
    let sys_rhs = sys.clone();
    let table_rhs = table.clone();
    let rhs = move |i: usize, w: &dyn StateView<T>, t: T| {
        let ts = (t_end - t).max(T::zero());
        let u = TraceState { trace: &primal_rhs, table: &table_rhs, t: ts };
        let mut sum = T::zero();
        for &j in &rows[i] {
            let jac = sys_rhs
                .jacobian_entry(j, i, &u, ts)
                .unwrap_or_else(|_| T::nan());
            sum = sum + jac * w.value(j);
        }
        sum
    };

    let primal_jac = primal.clone();
    let sys_jac = sys.clone();
    let table_jac = table;
    let dual_jac = move |i: usize, ip: usize, _w: &dyn StateView<T>, t: T| {
        let ts = (t_end - t).max(T::zero());
        let u = TraceState { trace: &primal_jac, table: &table_jac, t: ts };
        sys_jac
            .jacobian_entry(ip, i, &u, ts)
            .unwrap_or_else(|_| T::nan())
    };

    Ok(OdeSystem::new(psi.to_vec(), t_end, dual_sparsity, rhs)?.with_jacobian(dual_jac))
}

/// `S_i = integral of |phi_i| over [0, T]` by the composite trapezoid rule
/// over the dual trace's nodal sample points.
pub fn stability_factors<T: Real>(
    dual_trace: &SolutionTrace<T>,
    table: &MethodTable<T>,
) -> Vec<T> {
    let half = T::of(0.5);
    (0..dual_trace.n_components)
        .map(|i| {
            let samples = dual_trace.component_samples(i, table);
            let mut s = T::zero();
            for pair in samples.windows(2) {
                let (t0, v0) = pair[0];
                let (t1, v1) = pair[1];
                s = s + half * (t1 - t0) * (v0.abs() + v1.abs());
            }
            s
        })
        .collect()
}

/// A completed dual solve: the dual trace, its run statistics, and the
/// stability factors.
pub struct DualRun<T: Real> {
    pub psi: Vec<T>,
    pub trace: SolutionTrace<T>,
    pub run: RunReport<T>,
    pub stability: Vec<T>,
}

/// Solves the dual problem of `(psi, e(T))` around the given primal trace,
/// mono-adaptively with the primal's method, order, and tolerance.
pub fn solve_dual<T: Real>(
    primal: &SolutionTrace<T>,
    sys: &OdeSystem<T>,
    psi: &[T],
    cfg: &IntegratorConfig<T>,
) -> Result<DualRun<T>> {
    let dual_sys = make_dual_system(primal, sys, psi)?;
    let dual_cfg = mono_config(cfg);
    let (trace, run) = integrate(&dual_sys, &dual_cfg)?;
    let table = MethodTable::build(trace.variant, trace.order)?;
    let stability = stability_factors(&trace, &table);
    Ok(DualRun { psi: psi.to_vec(), trace, run, stability })
}
