//! Residual evaluation, the residual-based step law, the harmonic-mean step
//! controller, initial step selection, slab accept/reject, and the outer
//! adaptive loop driven by dual-based stability factors.

use crate::dual::solve_dual;
use crate::error::{Error, Result};
use crate::integrate::{indicator_order, integrate, IntegratorConfig, Mode, RunReport};
use crate::method::MethodTable;
use crate::ode::OdeSystem;
use crate::real::Real;
use crate::slab::{build_dependencies, create_time_slab, SlabConfig, TimeSlab};
use crate::solver::{seed_from_start, solve_slab, SlabStateAt, SolverConfig};
use crate::trace::SolutionTrace;

/// Per-component adaptive state: current steps, residuals, and the knobs of
/// the step law.
#[derive(Clone, Debug)]
pub struct StepState<T: Real> {
    /// Previous accepted (= current desired) step per component.
    pub k_prev: Vec<T>,
    /// Latest maximum residual per component.
    pub r: Vec<T>,
    pub tol: T,
    /// Controller weight.
    pub w: T,
    pub k_max: T,
    pub theta: T,
    /// Interpolation constant per component.
    pub c: Vec<T>,
    /// Stability factor per component.
    pub s: Vec<T>,
}

impl<T: Real> StepState<T> {
    pub fn new(n: usize, tol: T, w: T, k_max: T, theta: T) -> Self {
        Self {
            k_prev: vec![k_max; n],
            r: vec![T::zero(); n],
            tol,
            w,
            k_max,
            theta,
            c: vec![T::one(); n],
            s: vec![T::one(); n],
        }
    }

    /// Step implied by the latest residual of component `i`:
    /// `k = (tol / (C N S r))^(1/q)`, capped at `k_max`; zero residual
    /// yields `k_max`.
    pub fn step_from_residual(&self, i: usize, q: usize) -> T {
        step_from_residual_value(self, i, self.r[i], q)
    }
}

fn step_from_residual_value<T: Real>(state: &StepState<T>, i: usize, r: T, q: usize) -> T {
    if !(r > T::zero()) {
        return state.k_max;
    }
    let n = T::of(state.s.len() as f64);
    let base = state.tol / (state.c[i] * n * state.s[i] * r);
    let k = base.powf(T::one() / T::of(q.max(1) as f64));
    if !k.is_finite() || !(k > T::zero()) {
        state.k_max
    } else {
        k.min(state.k_max)
    }
}

/// Maximum of `|U'_i(t) - f_i(U(t), t)|` over the element's quadrature
/// points plus its midpoint.
pub fn residual_on_element<T: Real>(
    slab: &TimeSlab<T>,
    sys: &OdeSystem<T>,
    table: &MethodTable<T>,
    e: usize,
) -> Result<T> {
    let i = slab.ei[e];
    let (a, b) = slab.interval(e);
    let k = b - a;
    let dofs = slab.dofs(e);
    let mut r = T::zero();
    let half = T::of(0.5);
    for &tau in table.nodes.iter().chain(std::iter::once(&half)) {
        let t = if tau == T::one() { b } else { a + tau * k };
        let udot = table.deriv_local(dofs, tau) / k;
        let view = SlabStateAt { slab, table, t };
        let f = sys.eval(i, &view, t)?;
        r = r.max((udot - f).abs());
    }
    Ok(r)
}

/// Per-component maximum residual and error indicator `C k^q r` over a
/// solved slab.
pub fn slab_indicators<T: Real>(
    slab: &TimeSlab<T>,
    sys: &OdeSystem<T>,
    table: &MethodTable<T>,
    q: usize,
    state: &StepState<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = slab.n_components;
    let mut r_max = vec![T::zero(); n];
    let mut ind_max = vec![T::zero(); n];
    for e in 0..slab.n_elements() {
        let i = slab.ei[e];
        let r = residual_on_element(slab, sys, table, e)?;
        let k = slab.step(e);
        let ind = state.c[i] * k.powi(q as i32) * r;
        r_max[i] = r_max[i].max(r);
        ind_max[i] = ind_max[i].max(ind);
    }
    Ok((r_max, ind_max))
}

/// Harmonic-mean step controller:
/// `k = min((1 + w) k_old k_new / (k_old + w k_new), k_max)`.
pub fn controller<T: Real>(k_new: T, k_old: T, k_max: T, w: T) -> T {
    let k = (T::one() + w) * k_old * k_new / (k_old + w * k_new);
    k.min(k_max)
}

/// Chooses the first macro step, shared by all components: start from
/// `min(k_max, T/100)` and halve (at most 16 times) until no component's
/// residual-implied step falls below half of it.
pub fn initial_step<T: Real>(
    sys: &OdeSystem<T>,
    table: &MethodTable<T>,
    tol: T,
    k_max: T,
    solver: &SolverConfig<T>,
) -> Result<T> {
    let n = sys.n();
    let t_end = sys.end_time();
    let mut k1 = k_max.min(t_end / T::of(100.0));
    let q = indicator_order(table.variant, table.order);
    let components: Vec<usize> = (0..n).collect();
    let cfg = SlabConfig::new(T::of(0.5), table.order);
    let state = StepState::new(n, tol, T::of(5.0), k_max, T::of(0.5));

    for _ in 0..=16 {
        let (mut slab, _) =
            create_time_slab(&components, n, T::zero(), k1, &cfg, &|_| k1)?;
        slab.u_start.copy_from_slice(sys.u0());
        build_dependencies(&mut slab, sys.sparsity(), table);
        seed_from_start(&mut slab);
        let report = solve_slab(&mut slab, sys, table, solver)?;
        let mut ok = report.converged;
        if ok {
            for e in 0..slab.n_elements() {
                let r = residual_on_element(&slab, sys, table, e)?;
                let implied = step_from_residual_value(&state, slab.ei[e], r, q);
                if implied < k1 * T::of(0.5) {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(k1);
        }
        k1 = k1 * T::of(0.5);
    }
    Err(Error::InitialStep(16))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlabDecision {
    Accept,
    Reject,
}

/// Accepts the slab unless the solver failed or some component's error
/// indicator exceeds its share of the tolerance by more than the safety
/// factor 2.
pub fn accept_or_reject<T: Real>(
    state: &StepState<T>,
    indicators: &[T],
    solver_ok: bool,
) -> SlabDecision {
    if !solver_ok {
        return SlabDecision::Reject;
    }
    let n = T::of(indicators.len() as f64);
    let rho = T::of(2.0);
    for (i, &ind) in indicators.iter().enumerate() {
        let threshold = rho * state.tol / (n * state.s[i]);
        if ind > threshold {
            return SlabDecision::Reject;
        }
    }
    SlabDecision::Accept
}

/// Result of the outer adaptive loop.
pub struct AdaptiveReport<T: Real> {
    pub trace: SolutionTrace<T>,
    /// A posteriori error bound `E = sum_i S_i max(C k^q |R_i|)`.
    pub error_bound: T,
    pub converged: bool,
    pub rounds: usize,
    pub stability: Vec<T>,
    pub run: RunReport<T>,
}

/// Outer adaptive loop for the end-time functional `(psi, e(T))`: primal
/// solve, dual solve, stability factors, error bound; repeated (at most
/// `max_outer` rounds) until the bound meets the tolerance. The first round
/// uses unit stability factors.
pub fn adaptive_solve<T: Real>(
    sys: &OdeSystem<T>,
    psi: &[T],
    tol: T,
    base_cfg: &IntegratorConfig<T>,
    max_outer: usize,
) -> Result<AdaptiveReport<T>> {
    if psi.len() != sys.n() {
        return Err(Error::Config("functional vector length mismatch".into()));
    }
    let mut stability = vec![T::one(); sys.n()];
    let mut best: Option<AdaptiveReport<T>> = None;
    for round in 1..=max_outer.max(1) {
        let mut cfg = base_cfg.clone();
        cfg.tol = tol;
        cfg.stability = Some(stability.clone());
        let (trace, run) = integrate(sys, &cfg)?;
        let dual = solve_dual(&trace, sys, psi, &cfg)?;
        let e_bound = dual
            .stability
            .iter()
            .zip(&run.comp_indicator)
            .fold(T::zero(), |acc, (&s, &ind)| acc + s * ind);
        let converged = e_bound <= tol;
        stability = dual.stability.clone();
        let report = AdaptiveReport {
            trace,
            error_bound: e_bound,
            converged,
            rounds: round,
            stability: dual.stability,
            run,
        };
        if converged {
            return Ok(report);
        }
        best = Some(report);
    }
    Ok(best.expect("at least one round"))
}

/// Mono-adaptive configuration matching a multi-adaptive one, used for
/// baselines and dual solves.
pub fn mono_config<T: Real>(cfg: &IntegratorConfig<T>) -> IntegratorConfig<T> {
    let mut mono = cfg.clone();
    mono.mode = Mode::MonoAdaptive;
    mono.fixed_steps = None;
    mono.stability = None;
    mono
}
