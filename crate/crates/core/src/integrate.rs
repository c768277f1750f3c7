//! Top-level forward integration: repeatedly build a time slab from the
//! current desired steps, solve it, accept or reject, update the steps, and
//! append to the solution trace until the final time is reached exactly.

use std::time::Instant;

use crate::adapt::{accept_or_reject, controller, initial_step, slab_indicators, SlabDecision, StepState};
use crate::error::{Error, Result};
use crate::method::{MethodTable, Variant};
use crate::ode::OdeSystem;
use crate::real::Real;
use crate::slab::{build_dependencies, create_time_slab, SlabConfig};
use crate::solver::{seed_from_start, solve_slab, SolverConfig};
use crate::trace::SolutionTrace;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Individual time steps per component.
    MultiAdaptive,
    /// One shared adaptive step: the minimum over components.
    MonoAdaptive,
    /// Constant per-component steps (clipped at the final time).
    FixedSteps,
}

#[derive(Clone, Debug)]
pub struct IntegratorConfig<T: Real> {
    pub variant: Variant,
    pub order: usize,
    pub mode: Mode,
    pub tol: T,
    pub theta: T,
    /// Controller weight in the harmonic-mean step update.
    pub controller_weight: T,
    pub k_max: T,
    /// Per-component steps for `FixedSteps` mode.
    pub fixed_steps: Option<Vec<T>>,
    /// Interpolation constant in the step law and error indicators.
    pub interp_constant: T,
    /// Stability factors from a dual solve; 1 per component when absent.
    pub stability: Option<Vec<T>>,
    pub solver: SolverConfig<T>,
    pub max_rejects: usize,
    /// Retain the full slab history; with `false` only the final slab is
    /// kept, enough for the end state at flat memory cost.
    pub keep_trace: bool,
}

impl<T: Real> IntegratorConfig<T> {
    pub fn new(variant: Variant, order: usize, mode: Mode, tol: T) -> Self {
        Self {
            variant,
            order,
            mode,
            tol,
            theta: T::of(0.5),
            controller_weight: T::of(5.0),
            k_max: T::infinity(),
            fixed_steps: None,
            interp_constant: T::one(),
            stability: None,
            solver: SolverConfig::default(),
            max_rejects: 16,
            keep_trace: true,
        }
    }
}

/// Run statistics collected over the accepted slabs.
#[derive(Clone, Debug)]
pub struct RunReport<T: Real> {
    /// Accepted time slabs.
    pub slabs: usize,
    pub rejected: usize,
    pub avg_global_iterations: f64,
    pub avg_local_iterations: f64,
    /// Total number of local intervals (elements) over the run.
    pub elements: usize,
    pub k_min: T,
    pub k_max: T,
    /// Element-weighted mean of the per-slab efficiency index.
    pub efficiency_index: T,
    /// Per-component maximum error indicator `C k^p |R|` over accepted slabs.
    pub comp_indicator: Vec<T>,
    pub wall_time_s: f64,
}

/// Order of the local error indicator: q for cG(q), q + 1 for dG(q).
pub fn indicator_order(variant: Variant, order: usize) -> usize {
    match variant {
        Variant::Cg => order.max(1),
        Variant::Dg => order + 1,
    }
}

/// Integrates the system from 0 to its final time, returning the solution
/// trace and run statistics.
pub fn integrate<T: Real>(
    sys: &OdeSystem<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<(SolutionTrace<T>, RunReport<T>)> {
    let clock = Instant::now();
    let table = MethodTable::build(cfg.variant, cfg.order)?;
    let n = sys.n();
    let t_end = sys.end_time();
    let k_cap = cfg.k_max.min(t_end);
    if !(k_cap > T::zero()) {
        return Err(Error::Config("maximum step must be positive".into()));
    }
    let q_eff = indicator_order(cfg.variant, cfg.order);

    let mut state = StepState::new(n, cfg.tol, cfg.controller_weight, k_cap, cfg.theta);
    state.c.iter_mut().for_each(|c| *c = cfg.interp_constant);
    if let Some(s) = &cfg.stability {
        if s.len() != n {
            return Err(Error::Config("stability factor count mismatch".into()));
        }
        state.s.copy_from_slice(s);
    }

    match cfg.mode {
        Mode::FixedSteps => {
            let steps = cfg
                .fixed_steps
                .as_ref()
                .ok_or_else(|| Error::Config("fixed-steps mode needs steps".into()))?;
            if steps.len() != n {
                return Err(Error::Config("fixed step count mismatch".into()));
            }
            for (i, &k) in steps.iter().enumerate() {
                if !(k > T::zero()) {
                    return Err(Error::NonpositiveStep(i));
                }
                state.k_prev[i] = k.min(k_cap);
            }
        }
        _ => {
            let k1 = initial_step(sys, &table, cfg.tol, k_cap, &cfg.solver)?;
            state.k_prev.iter_mut().for_each(|k| *k = k1);
        }
    }

    let components: Vec<usize> = (0..n).collect();
    let slab_cfg = SlabConfig::new(cfg.theta, cfg.order);
    let mut trace = SolutionTrace::new(cfg.variant, cfg.order, sys.u0().to_vec());
    let mut u = sys.u0().to_vec();
    let mut t = T::zero();

    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut rejects_in_row = 0usize;
    let mut sum_global = 0usize;
    let mut sum_local = 0usize;
    let mut elements = 0usize;
    let mut k_min_seen = T::infinity();
    let mut k_max_seen = T::zero();
    let mut mu_weighted = T::zero();
    let mut comp_indicator = vec![T::zero(); n];

    while t < t_end {
        let shared = match cfg.mode {
            Mode::MonoAdaptive => {
                Some(state.k_prev.iter().fold(T::infinity(), |acc, &k| acc.min(k)))
            }
            _ => None,
        };
        let desired = |i: usize| shared.unwrap_or(state.k_prev[i]);
        let (mut slab, t_next) =
            create_time_slab(&components, n, t, t_end, &slab_cfg, &desired)?;
        slab.u_start.copy_from_slice(&u);
        build_dependencies(&mut slab, sys.sparsity(), &table);
        seed_from_start(&mut slab);
        let solve = solve_slab(&mut slab, sys, &table, &cfg.solver)?;

        // Fixed-steps mode rejects only on solver failure.
        let (r_comp, ind_comp) = if solve.converged && cfg.mode != Mode::FixedSteps {
            slab_indicators(&slab, sys, &table, q_eff, &state)?
        } else {
            (vec![T::zero(); n], vec![T::zero(); n])
        };
        let decision = accept_or_reject(&state, &ind_comp, solve.converged);

        sum_global += solve.sweeps;
        sum_local += solve.local_iterations;

        match decision {
            SlabDecision::Reject => {
                if cfg.mode == Mode::FixedSteps {
                    return Err(Error::SlabNotConverged);
                }
                rejected += 1;
                rejects_in_row += 1;
                if rejects_in_row > cfg.max_rejects {
                    return Err(Error::TooManyRejects(cfg.max_rejects));
                }
                if solve.converged {
                    // Indicator overshoot: refit only the offending
                    // components from their measured residuals.
                    let rho = T::of(2.0);
                    let nn = T::of(n as f64);
                    for i in 0..n {
                        if ind_comp[i] > rho * cfg.tol / (nn * state.s[i]) {
                            // The residual was measured with a far too large
                            // step and overestimates; shrink by at most a
                            // factor 10 per reject.
                            state.r[i] = r_comp[i];
                            let k_new = state.step_from_residual(i, q_eff);
                            state.k_prev[i] = k_new
                                .max(state.k_prev[i] * T::of(0.1))
                                .min(state.k_prev[i] * T::of(0.5));
                        }
                    }
                } else {
                    state.k_prev.iter_mut().for_each(|k| *k = *k * T::of(0.5));
                }
                continue;
            }
            SlabDecision::Accept => {
                rejects_in_row = 0;
                accepted += 1;
                let n_elems = slab.n_elements();
                elements += n_elems;
                for e in 0..n_elems {
                    let k = slab.step(e);
                    k_min_seen = k_min_seen.min(k);
                    k_max_seen = k_max_seen.max(k);
                }
                mu_weighted = mu_weighted + slab.efficiency_index() * T::of(n_elems as f64);
                for i in 0..n {
                    comp_indicator[i] = comp_indicator[i].max(ind_comp[i]);
                }
                if cfg.mode != Mode::FixedSteps {
                    for i in 0..n {
                        state.r[i] = r_comp[i];
                        let k_new = state.step_from_residual(i, q_eff);
                        state.k_prev[i] =
                            controller(k_new, state.k_prev[i], k_cap, state.w);
                    }
                }
                u = slab.end_state();
                if cfg.keep_trace {
                    trace.push_slab(&slab)?;
                } else {
                    trace.replace_with_slab(&slab);
                }
                t = t_next;
            }
        }
    }

    let slabs_f = accepted.max(1) as f64;
    let report = RunReport {
        slabs: accepted,
        rejected,
        avg_global_iterations: sum_global as f64 / slabs_f,
        avg_local_iterations: sum_local as f64 / slabs_f,
        elements,
        k_min: k_min_seen,
        k_max: k_max_seen,
        efficiency_index: if elements > 0 {
            mu_weighted / T::of(elements as f64)
        } else {
            T::one()
        },
        comp_indicator,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    Ok((trace, report))
}
