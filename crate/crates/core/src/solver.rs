//! Solvers for the slab system of discrete equations: in-order direct
//! fixed-point iteration, damped variants, and dense Newton, plus the
//! automatic strategy escalation.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::linalg::lu_solve;
use crate::method::{update_element, MethodTable, Variant};
use crate::ode::{OdeSystem, StateView};
use crate::real::Real;
use crate::slab::TimeSlab;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Direct,
    DampedDiagonal,
    DampedScalar,
    Newton,
    Auto,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig<T: Real> {
    pub strategy: Strategy,
    /// Global iterations over the slab.
    pub max_global_sweeps: usize,
    /// Inner refinements per element within one sweep.
    pub max_local_iterations: usize,
    /// Increment tolerance, relative to `1 + |xi|_inf`.
    pub tol: T,
    /// An increment growing by this factor over one sweep signals stiffness.
    pub divergence_factor: T,
    /// Dense Newton is refused above this many degrees of freedom.
    pub newton_dof_guard: usize,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            strategy: Strategy::Auto,
            max_global_sweeps: 100,
            max_local_iterations: 2,
            tol: T::of(1e-12),
            divergence_factor: T::of(10.0),
            newton_dof_guard: 2000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveOutcome {
    Converged,
    /// Direct (or diagonally damped) iteration diverged.
    Stiff,
    /// Iteration count exhausted without meeting the tolerance.
    NoConvergence,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveReport<T: Real> {
    pub outcome: SolveOutcome,
    pub converged: bool,
    /// Global sweeps (or Newton iterations) used.
    pub sweeps: usize,
    /// Total local iterations over all element visits.
    pub local_iterations: usize,
    pub final_increment: T,
    pub strategy_used: Strategy,
}

/// Damped fixed-point step `xi' = (1 - alpha) xi + alpha g(xi)`,
/// componentwise in the damping parameter.
pub fn damped_update<T: Real>(xi: &[T], g: &[T], alpha: &[T]) -> Vec<T> {
    xi.iter()
        .zip(g)
        .zip(alpha)
        .map(|((&x, &gx), &a)| (T::one() - a) * x + a * gx)
        .collect()
}

/// Seeds every degree of freedom by constant extrapolation of the slab's
/// start state.
pub fn seed_from_start<T: Real>(slab: &mut TimeSlab<T>) {
    let d = slab.order + 1;
    for e in 0..slab.n_elements() {
        let value = slab.u_start[slab.ei[e]];
        let dofs = &mut slab.jx[e * d..(e + 1) * d];
        dofs.iter_mut().for_each(|x| *x = value);
    }
}

/// State view during a sweep: the current element supplies its own nodal
/// value directly, everything else goes through slab interpolation.
struct SweepView<'a, T: Real> {
    slab: &'a TimeSlab<T>,
    table: &'a MethodTable<T>,
    current: usize,
    node: usize,
    t: T,
    failed: &'a Cell<bool>,
}

impl<T: Real> StateView<T> for SweepView<'_, T> {
    fn value(&self, i: usize) -> T {
        if i == self.slab.ei[self.current] {
            return self.slab.dofs(self.current)[self.node];
        }
        match self.slab.interpolate(i, self.t, self.table, self.current) {
            Ok(v) => v,
            Err(_) => {
                self.failed.set(true);
                T::nan()
            }
        }
    }
}

/// Full-state view at an arbitrary time inside a solved (or partially
/// solved) slab, resolving every component by covering-element search.
pub struct SlabStateAt<'a, T: Real> {
    pub slab: &'a TimeSlab<T>,
    pub table: &'a MethodTable<T>,
    pub t: T,
}

impl<T: Real> StateView<T> for SlabStateAt<'_, T> {
    fn value(&self, i: usize) -> T {
        if self.t <= self.slab.t_start {
            return self.slab.u_start[i];
        }
        match self.slab.covering_element(i, self.t) {
            Some(e) => self
                .slab
                .eval_element_at(e, self.t, self.table)
                .unwrap_or_else(|_| T::nan()),
            None => T::nan(),
        }
    }
}

enum Damping<T> {
    None,
    Diagonal,
    Scalar(T),
}

struct SweepStats<T> {
    increment: T,
    xi_inf: T,
    local_iterations: usize,
}

fn sweep<T: Real>(
    slab: &mut TimeSlab<T>,
    sys: &OdeSystem<T>,
    table: &MethodTable<T>,
    cfg: &SolverConfig<T>,
    damping: &Damping<T>,
    diag_cache: &mut [Option<T>],
) -> Result<SweepStats<T>> {
    let q = table.order;
    let failed = Cell::new(false);
    let mut increment = T::zero();
    let mut xi_inf = T::zero();
    let mut local_total = 0usize;

    slab.reset_elast();
    for e in 0..slab.n_elements() {
        let i = slab.ei[e];
        let (a, b) = slab.interval(e);
        let k = b - a;
        let xi0 = slab.left_value(e);

        let alpha = match damping {
            Damping::None => T::one(),
            Damping::Scalar(alpha) => *alpha,
            Damping::Diagonal => {
                if diag_cache[e].is_none() {
                    let view = SlabStateAt { slab, table, t: a };
                    let jii = sys.jacobian_entry(i, i, &view, a)?;
                    let denom = T::one() - k * jii;
                    let alpha = if denom > T::one() { T::one() / denom } else { T::one() };
                    diag_cache[e] = Some(alpha.min(T::one()).max(T::of(1e-12)));
                }
                diag_cache[e].unwrap()
            }
        };

        for _ in 0..cfg.max_local_iterations {
            local_total += 1;
            let mut samples = Vec::with_capacity(q + 1);
            for (n, &s) in table.nodes.iter().enumerate() {
                // End-point nodes must hit the interval boundary exactly.
                let t = if s == T::one() { b } else { a + s * k };
                let view = SweepView { slab, table, current: e, node: n, t, failed: &failed };
                samples.push(sys.eval(i, &view, t)?);
            }
            if failed.get() {
                return Err(Error::Lookup { component: i, time: a.as_f64() });
            }
            let target = update_element(table, xi0, k, &samples);
            let dofs = slab.dofs_mut(e);
            for m in 0..=q {
                // The cG continuity constraint is assigned, not damped.
                let new = if table.variant == Variant::Cg && m == 0 {
                    xi0
                } else {
                    (T::one() - alpha) * dofs[m] + alpha * target[m]
                };
                increment = increment.max((new - dofs[m]).abs());
                dofs[m] = new;
                xi_inf = xi_inf.max(new.abs());
            }
        }
        slab.note_visited(e);
    }
    Ok(SweepStats { increment, xi_inf, local_iterations: local_total })
}

fn fixed_point_solve<T: Real>(
    slab: &mut TimeSlab<T>,
    sys: &OdeSystem<T>,
    table: &MethodTable<T>,
    cfg: &SolverConfig<T>,
    strategy: Strategy,
) -> Result<SolveReport<T>> {
    let mut damping = match strategy {
        Strategy::Direct => Damping::None,
        Strategy::DampedDiagonal => Damping::Diagonal,
        Strategy::DampedScalar => Damping::Scalar(T::one()),
        _ => unreachable!("fixed-point strategies only"),
    };
    let mut diag_cache = vec![None; slab.n_elements()];
    let mut prev_inc: Option<T> = None;
    let mut prev_growing = false;
    let mut good_streak = 0usize;
    let mut local_total = 0usize;
    let mut last_inc = T::zero();

    for sweeps in 1..=cfg.max_global_sweeps {
        let stats = sweep(slab, sys, table, cfg, &damping, &mut diag_cache)?;
        local_total += stats.local_iterations;
        last_inc = stats.increment;
        let scale = T::one() + stats.xi_inf;
        if !stats.increment.is_finite() {
            return Ok(SolveReport {
                outcome: SolveOutcome::Stiff,
                converged: false,
                sweeps,
                local_iterations: local_total,
                final_increment: stats.increment,
                strategy_used: strategy,
            });
        }
        if stats.increment <= cfg.tol * scale {
            return Ok(SolveReport {
                outcome: SolveOutcome::Converged,
                converged: true,
                sweeps,
                local_iterations: local_total,
                final_increment: stats.increment,
                strategy_used: strategy,
            });
        }
        // A single growing sweep can be a transient of a non-normal system;
        // two consecutive ones signal real divergence.
        let growing = match prev_inc {
            Some(p) => stats.increment > cfg.divergence_factor * p,
            None => false,
        };
        let diverging = growing && prev_growing;
        prev_growing = growing;
        match &mut damping {
            Damping::Scalar(alpha) => {
                // Adaptive scalar damping: halve after a diverging sweep,
                // double (capped at 1) after three converging ones.
                if prev_inc.map_or(false, |p| stats.increment > p) {
                    *alpha = *alpha * T::of(0.5);
                    good_streak = 0;
                    if *alpha < T::of(1e-8) {
                        break;
                    }
                } else {
                    good_streak += 1;
                    if good_streak >= 3 {
                        *alpha = (*alpha + *alpha).min(T::one());
                        good_streak = 0;
                    }
                }
            }
            _ => {
                if diverging {
                    return Ok(SolveReport {
                        outcome: SolveOutcome::Stiff,
                        converged: false,
                        sweeps,
                        local_iterations: local_total,
                        final_increment: stats.increment,
                        strategy_used: strategy,
                    });
                }
            }
        }
        prev_inc = Some(stats.increment);
    }
    Ok(SolveReport {
        outcome: SolveOutcome::NoConvergence,
        converged: false,
        sweeps: cfg.max_global_sweeps,
        local_iterations: local_total,
        final_increment: last_inc,
        strategy_used: strategy,
    })
}

/// Applies Newton's method to the full slab system with a dense Jacobian.
pub fn newton_solve_slab<T: Real>(
    slab: &mut TimeSlab<T>,
    sys: &OdeSystem<T>,
    table: &MethodTable<T>,
    cfg: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    let q = table.order;
    let d = q + 1;
    let n_dofs = slab.n_elements() * d;
    if n_dofs > cfg.newton_dof_guard {
        return Err(Error::NewtonGuard { dofs: n_dofs, guard: cfg.newton_dof_guard });
    }

    let residual = |slab: &TimeSlab<T>| -> Result<Vec<T>> {
        let mut r = vec![T::zero(); n_dofs];
        for e in 0..slab.n_elements() {
            let i = slab.ei[e];
            let (a, b) = slab.interval(e);
            let k = b - a;
            let xi0 = slab.left_value(e);
            let mut samples = Vec::with_capacity(d);
            for &s in &table.nodes {
                let t = if s == T::one() { b } else { a + s * k };
                let view = SlabStateAt { slab, table, t };
                samples.push(sys.eval(i, &view, t)?);
            }
            let target = update_element(table, xi0, k, &samples);
            let dofs = slab.dofs(e);
            for m in 0..d {
                r[e * d + m] = dofs[m] - target[m];
            }
        }
        Ok(r)
    };

    let mut iterations = 0usize;
    let mut last_inc = T::zero();
    loop {
        let r = residual(slab)?;
        let r_inf = r.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
        let x_inf = slab.jx.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
        if r_inf <= cfg.tol * (T::one() + x_inf) {
            return Ok(SolveReport {
                outcome: SolveOutcome::Converged,
                converged: true,
                sweeps: iterations,
                local_iterations: iterations,
                final_increment: last_inc,
                strategy_used: Strategy::Newton,
            });
        }
        if iterations >= cfg.max_global_sweeps || !r_inf.is_finite() {
            return Ok(SolveReport {
                outcome: SolveOutcome::NoConvergence,
                converged: false,
                sweeps: iterations,
                local_iterations: iterations,
                final_increment: last_inc,
                strategy_used: Strategy::Newton,
            });
        }

        // Assemble the dense Jacobian of the residual.
        let mut jac = vec![T::zero(); n_dofs * n_dofs];
        for e in 0..slab.n_elements() {
            let i = slab.ei[e];
            let (a, b) = slab.interval(e);
            let k = b - a;
            for m in 0..d {
                let row = e * d + m;
                jac[row * n_dofs + row] = jac[row * n_dofs + row] + T::one();
                // Dependence on the predecessor's end value.
                if let Some(prev) = slab.ee[e] {
                    let col = prev * d + (d - 1);
                    jac[row * n_dofs + col] = jac[row * n_dofs + col] - T::one();
                }
                if table.variant == Variant::Cg && m == 0 {
                    continue;
                }
                for (n, &s) in table.nodes.iter().enumerate() {
                    let w = table.weights[m][n];
                    if w == T::zero() {
                        continue;
                    }
                    let t = if s == T::one() { b } else { a + s * k };
                    if t <= slab.t_start {
                        continue; // start values are constants
                    }
                    let view = SlabStateAt { slab, table, t };
                    for &ip in sys.sparsity().row(i) {
                        let jval = sys.jacobian_entry(i, ip, &view, t)?;
                        if jval == T::zero() {
                            continue;
                        }
                        let ep = slab
                            .covering_element(ip, t)
                            .ok_or(Error::Lookup { component: ip, time: t.as_f64() })?;
                        let (ap, bp) = slab.interval(ep);
                        let tau = (t - ap) / (bp - ap);
                        for mp in 0..d {
                            let basis = table.basis_value(mp, tau);
                            if basis == T::zero() {
                                continue;
                            }
                            let col = ep * d + mp;
                            jac[row * n_dofs + col] = jac[row * n_dofs + col] - k * w * jval * basis;
                        }
                    }
                }
            }
        }

        let mut delta = r;
        lu_solve(&mut jac, &mut delta, n_dofs)?;
        last_inc = delta.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
        for (x, dx) in slab.jx.iter_mut().zip(&delta) {
            *x = *x - *dx;
        }
        iterations += 1;
    }
}

/// Solves the slab system with the configured strategy. With `Auto` the
/// solver escalates direct -> damped -> Newton on stiffness or
/// non-convergence signals and never de-escalates within one slab.
pub fn solve_slab<T: Real>(
    slab: &mut TimeSlab<T>,
    sys: &OdeSystem<T>,
    table: &MethodTable<T>,
    cfg: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    match cfg.strategy {
        Strategy::Direct | Strategy::DampedDiagonal | Strategy::DampedScalar => {
            fixed_point_solve(slab, sys, table, cfg, cfg.strategy)
        }
        Strategy::Newton => newton_solve_slab(slab, sys, table, cfg),
        Strategy::Auto => {
            let damped = if sys.has_analytic_jacobian() {
                Strategy::DampedDiagonal
            } else {
                Strategy::DampedScalar
            };
            let seed = slab.jx.clone();
            let mut report = fixed_point_solve(slab, sys, table, cfg, Strategy::Direct)?;
            let mut sweeps = report.sweeps;
            let mut locals = report.local_iterations;
            if !report.converged {
                slab.jx.copy_from_slice(&seed);
                report = fixed_point_solve(slab, sys, table, cfg, damped)?;
                sweeps += report.sweeps;
                locals += report.local_iterations;
            }
            if !report.converged {
                slab.jx.copy_from_slice(&seed);
                report = match newton_solve_slab(slab, sys, table, cfg) {
                    Ok(r) => r,
                    Err(Error::NewtonGuard { .. }) => report,
                    Err(e) => return Err(e),
                };
                sweeps += report.sweeps;
                locals += report.local_iterations;
            }
            report.sweeps = sweeps;
            report.local_iterations = locals;
            Ok(report)
        }
    }
}
