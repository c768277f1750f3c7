//! Initial value problem abstraction with component-wise right-hand side
//! evaluation, sparsity patterns, and the built-in benchmark problems.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::real::Real;

/// Read-only access to the state vector at some time. Component evaluators
/// receive the state through this trait so that a solver can interpolate
/// values lazily.
pub trait StateView<T> {
    fn value(&self, i: usize) -> T;
}

impl<T: Real> StateView<T> for [T] {
    fn value(&self, i: usize) -> T {
        self[i]
    }
}

impl<T: Real> StateView<T> for &[T] {
    fn value(&self, i: usize) -> T {
        self[i]
    }
}

impl<T: Real> StateView<T> for Vec<T> {
    fn value(&self, i: usize) -> T {
        self[i]
    }
}

/// A state view with one component overridden, used for finite-difference
/// Jacobian probes.
pub(crate) struct Perturbed<'a, T> {
    pub base: &'a dyn StateView<T>,
    pub index: usize,
    pub value: T,
}

impl<T: Real> StateView<T> for Perturbed<'_, T> {
    fn value(&self, i: usize) -> T {
        if i == self.index {
            self.value
        } else {
            self.base.value(i)
        }
    }
}

pub type Rhs<T> = dyn Fn(usize, &dyn StateView<T>, T) -> T + Send + Sync;
pub type JacobianFn<T> = dyn Fn(usize, usize, &dyn StateView<T>, T) -> T + Send + Sync;

/// Which components each right-hand side component reads.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsityPattern {
    rows: Vec<Vec<usize>>,
}

impl SparsityPattern {
    /// Validates that each row is sorted, strictly increasing and in range.
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        for row in &rows {
            for w in row.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Config(
                        "sparsity rows must be sorted and strictly increasing".into(),
                    ));
                }
            }
            if let Some(&last) = row.last() {
                if last >= n {
                    return Err(Error::IndexOutOfRange { index: last, size: n });
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn full(n: usize) -> Self {
        Self {
            rows: vec![(0..n).collect(); n],
        }
    }

    pub fn diagonal(n: usize) -> Self {
        Self {
            rows: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// Three-point stencil pattern, clipped at the boundaries.
    pub fn tridiagonal(n: usize) -> Self {
        Self {
            rows: (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(1);
                    let hi = (i + 1).min(n.saturating_sub(1));
                    (lo..=hi).collect()
                })
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn transpose(&self) -> Self {
        let n = self.rows.len();
        let mut rows = vec![Vec::new(); n];
        for (i, row) in self.rows.iter().enumerate() {
            for &j in row {
                rows[j].push(i);
            }
        }
        Self { rows }
    }
}

/// The initial value problem `u' = f(u, t)`, `u(0) = u0` on `(0, T]`.
///
/// The right-hand side is evaluated one component at a time; component `i`
/// may only read state components listed in row `i` of the sparsity pattern.
/// Immutable after construction and safe to share across threads.
#[derive(Clone)]
pub struct OdeSystem<T: Real> {
    n: usize,
    u0: Vec<T>,
    end_time: T,
    rhs: Arc<Rhs<T>>,
    sparsity: SparsityPattern,
    jacobian: Option<Arc<JacobianFn<T>>>,
}

impl<T: Real> OdeSystem<T> {
    pub fn new<F>(u0: Vec<T>, end_time: T, sparsity: SparsityPattern, rhs: F) -> Result<Self>
    where
        F: Fn(usize, &dyn StateView<T>, T) -> T + Send + Sync + 'static,
    {
        if u0.is_empty() {
            return Err(Error::Config("system must have at least one component".into()));
        }
        if !(end_time > T::zero()) {
            return Err(Error::Config("final time must be positive".into()));
        }
        if sparsity.n() != u0.len() {
            return Err(Error::Config(format!(
                "sparsity pattern has {} rows for {} components",
                sparsity.n(),
                u0.len()
            )));
        }
        Ok(Self {
            n: u0.len(),
            u0,
            end_time,
            rhs: Arc::new(rhs),
            sparsity,
            jacobian: None,
        })
    }

    /// Attaches an analytic Jacobian evaluator for entries `df_i/du_{i'}`.
    pub fn with_jacobian<F>(mut self, jacobian: F) -> Self
    where
        F: Fn(usize, usize, &dyn StateView<T>, T) -> T + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn u0(&self) -> &[T] {
        &self.u0
    }

    pub fn end_time(&self) -> T {
        self.end_time
    }

    pub fn sparsity(&self) -> &SparsityPattern {
        &self.sparsity
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Evaluates `f_i` at the given state and time.
    pub fn eval(&self, i: usize, state: &dyn StateView<T>, t: T) -> Result<T> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, size: self.n });
        }
        Ok((self.rhs)(i, state, t))
    }

    /// Jacobian entry `df_i/du_{i'}`, analytic when available and otherwise
    /// by a central finite difference with step `1e-6 (1 + |u_{i'}|)`.
    pub fn jacobian_entry(&self, i: usize, ip: usize, state: &dyn StateView<T>, t: T) -> Result<T> {
        if i >= self.n || ip >= self.n {
            return Err(Error::IndexOutOfRange { index: i.max(ip), size: self.n });
        }
        if let Some(jac) = &self.jacobian {
            return Ok(jac(i, ip, state, t));
        }
        let u = state.value(ip);
        let delta = T::of(1e-6) * (T::one() + u.abs());
        let plus = Perturbed { base: state, index: ip, value: u + delta };
        let minus = Perturbed { base: state, index: ip, value: u - delta };
        let fp = (self.rhs)(i, &plus, t);
        let fm = (self.rhs)(i, &minus, t);
        Ok((fp - fm) / (delta + delta))
    }
}

/// Evaluates component `i` of the right-hand side; reads only the state
/// components listed in the sparsity row of `i`.
pub fn evaluate_component<T: Real>(
    sys: &OdeSystem<T>,
    i: usize,
    state: &dyn StateView<T>,
    t: T,
) -> Result<T> {
    sys.eval(i, state, t)
}

/// Detects the sparsity pattern by finite-difference probing at the initial
/// value and one additional seeded random state.
///
/// A component `i'` enters row `i` whenever perturbing it by
/// `1e-6 (1 + |u_{i'}|)` changes `f_i` at either probe state.
pub fn detect_sparsity<T: Real>(sys: &OdeSystem<T>, seed: u64) -> SparsityPattern {
    let n = sys.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_state: Vec<T> = (0..n)
        .map(|_| T::of(rng.gen_range(-1.0..1.0)))
        .collect();
    let probes: [(&[T], T); 2] = [
        (sys.u0(), T::zero()),
        (&random_state, T::of(0.5) * sys.end_time()),
    ];

    let mut rows = vec![Vec::new(); n];
    for (state, t) in probes {
        let view: &dyn StateView<T> = &state;
        for ip in 0..n {
            let u = view.value(ip);
            let delta = T::of(1e-6) * (T::one() + u.abs());
            let perturbed = Perturbed { base: view, index: ip, value: u + delta };
            for (i, row) in rows.iter_mut().enumerate() {
                if row.binary_search(&ip).is_ok() {
                    continue;
                }
                let base = (sys.rhs)(i, view, t);
                let shifted = (sys.rhs)(i, &perturbed, t);
                if shifted != base {
                    let pos = row.binary_search(&ip).unwrap_err();
                    row.insert(pos, ip);
                }
            }
        }
    }
    SparsityPattern { rows }
}

/// Built-in benchmark problem kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    ReactionDiffusion1d,
    Wave1dRefined,
    ExponentialDecay,
    HarmonicOscillator,
}

/// A benchmark problem selected by kind plus named real parameters.
/// Missing parameters take their documented defaults.
#[derive(Clone, Debug)]
pub struct BenchmarkProblem<T: Real> {
    pub kind: ProblemKind,
    pub parameters: BTreeMap<String, T>,
}

/// A constructed benchmark system together with the spatial layout needed by
/// the benchmark drivers.
pub struct BuiltProblem<T: Real> {
    pub system: OdeSystem<T>,
    /// Spatial coordinate of each component (for plot emitters).
    pub positions: Vec<T>,
    /// Per-component local mesh size `h(x)`, when the problem has a mesh.
    pub local_mesh_size: Option<Vec<T>>,
    /// Mesh cell sizes (wave problem), for energy evaluation.
    pub cell_sizes: Option<Vec<T>>,
    /// Number of spatial nodes; the wave system stores `u` then `v`.
    pub n_nodes: Option<usize>,
}

impl<T: Real> BenchmarkProblem<T> {
    pub fn new(kind: ProblemKind) -> Self {
        Self { kind, parameters: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: T) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    fn param(&self, key: &str, default: f64) -> T {
        self.parameters.get(key).copied().unwrap_or_else(|| T::of(default))
    }

    pub fn build(&self) -> Result<BuiltProblem<T>> {
        match self.kind {
            ProblemKind::ReactionDiffusion1d => make_reaction_diffusion(
                self.param("epsilon", 0.01),
                self.param("gamma", 1000.0),
                self.param("length", 5.0),
                self.param("mesh_n", 1000.0).as_f64() as usize,
                self.param("lambda", 100.0),
                self.param("end_time", 1.0),
            ),
            ProblemKind::Wave1dRefined => make_wave_1d(
                self.param("base_cells", 16.0).as_f64() as usize,
                self.param("refine_ratio", 16.0).as_f64() as usize,
                self.param("length", 1.0),
                self.param("window_frac", 0.125),
                self.param("end_time", 0.5),
                self.param("pulse_center", 0.2),
                self.param("pulse_width", 0.1),
            ),
            ProblemKind::ExponentialDecay => {
                let n = self.param("n", 1.0).as_f64() as usize;
                let rate = self.param("rate", 1.0);
                let end = self.param("end_time", 1.0);
                exponential_decay(n, rate, end)
            }
            ProblemKind::HarmonicOscillator => {
                harmonic_oscillator(self.param("end_time", std::f64::consts::TAU))
            }
        }
    }
}

/// `u' = -rate * u` componentwise, `u0 = 1`.
pub fn exponential_decay<T: Real>(n: usize, rate: T, end_time: T) -> Result<BuiltProblem<T>> {
    if n == 0 {
        return Err(Error::Config("need at least one component".into()));
    }
    let system = OdeSystem::new(
        vec![T::one(); n],
        end_time,
        SparsityPattern::diagonal(n),
        move |i, state: &dyn StateView<T>, _t| -rate * state.value(i),
    )?
    .with_jacobian(move |i, ip, _state: &dyn StateView<T>, _t| {
        if i == ip {
            -rate
        } else {
            T::zero()
        }
    });
    Ok(BuiltProblem {
        system,
        positions: (0..n).map(|i| T::of(i as f64)).collect(),
        local_mesh_size: None,
        cell_sizes: None,
        n_nodes: None,
    })
}

/// `u1' = u2`, `u2' = -u1`, starting on the unit circle at `(1, 0)`.
pub fn harmonic_oscillator<T: Real>(end_time: T) -> Result<BuiltProblem<T>> {
    let system = OdeSystem::new(
        vec![T::one(), T::zero()],
        end_time,
        SparsityPattern::from_rows(vec![vec![1], vec![0]])?,
        |i, state: &dyn StateView<T>, _t| {
            if i == 0 {
                state.value(1)
            } else {
                -state.value(0)
            }
        },
    )?
    .with_jacobian(|i, ip, _state: &dyn StateView<T>, _t| {
        if i == 0 && ip == 1 {
            T::one()
        } else if i == 1 && ip == 0 {
            -T::one()
        } else {
            T::zero()
        }
    });
    Ok(BuiltProblem {
        system,
        positions: vec![T::zero(), T::one()],
        local_mesh_size: None,
        cell_sizes: None,
        n_nodes: None,
    })
}

/// Lumped-mass cG(1) semidiscretization of the reaction-diffusion equation
/// `u_t - eps u_xx = gamma u^2 (1 - u)` on `(0, L)` with homogeneous Neumann
/// boundaries (ghost reflection) on a uniform mesh of `mesh_n` points.
///
/// Initial data is the front `u0(x) = 1 / (1 + exp(lambda (x - 1)))`.
pub fn make_reaction_diffusion<T: Real>(
    epsilon: T,
    gamma: T,
    length: T,
    mesh_n: usize,
    lambda: T,
    end_time: T,
) -> Result<BuiltProblem<T>> {
    if !(epsilon > T::zero()) || gamma < T::zero() || !(length > T::zero()) {
        return Err(Error::Config("reaction-diffusion parameters must be positive".into()));
    }
    if mesh_n < 3 {
        return Err(Error::Config("reaction-diffusion mesh needs at least 3 points".into()));
    }
    let n = mesh_n;
    let h = length / T::of((n - 1) as f64);
    let positions: Vec<T> = (0..n).map(|i| h * T::of(i as f64)).collect();
    let u0: Vec<T> = positions
        .iter()
        .map(|&x| T::one() / (T::one() + (lambda * (x - T::one())).exp()))
        .collect();

    let inv_h2 = T::one() / (h * h);
    let rhs = move |i: usize, state: &dyn StateView<T>, _t: T| {
        let u = state.value(i);
        // Neumann ends via reflected ghost values: u_{-1} = u_1, u_n = u_{n-2}.
        let diff = if i == 0 {
            let right = state.value(1);
            (right - u) * (T::one() + T::one())
        } else if i == n - 1 {
            let left = state.value(n - 2);
            (left - u) * (T::one() + T::one())
        } else {
            state.value(i - 1) - (u + u) + state.value(i + 1)
        };
        epsilon * diff * inv_h2 + gamma * u * u * (T::one() - u)
    };

    let jac = move |i: usize, ip: usize, state: &dyn StateView<T>, _t: T| {
        let two = T::one() + T::one();
        let three = two + T::one();
        if i == ip {
            let u = state.value(i);
            -two * epsilon * inv_h2 + gamma * (two * u - three * u * u)
        } else if ip + 1 == i || ip == i + 1 {
            if i == 0 || i == n - 1 {
                two * epsilon * inv_h2
            } else {
                epsilon * inv_h2
            }
        } else {
            T::zero()
        }
    };

    let system = OdeSystem::new(u0, end_time, SparsityPattern::tridiagonal(n), rhs)?
        .with_jacobian(jac);
    Ok(BuiltProblem {
        system,
        positions,
        local_mesh_size: Some(vec![h; n]),
        cell_sizes: Some(vec![h; n - 1]),
        n_nodes: Some(n),
    })
}

/// First-order wave system `u' = v`, `v' = Lap_h u` on a 1D mesh over
/// `(0, length)` with a central window of relative width `window_frac`
/// refined by the factor `refine_ratio`. Neumann ends by ghost reflection.
///
/// Components `0..n_nodes` hold `u`, components `n_nodes..2 n_nodes` hold
/// `v`. Both carry the local mesh size `h(x)` of their node, so that a CFL
/// assignment `k(x) = 0.1 h(x)` can be made per component.
pub fn make_wave_1d<T: Real>(
    base_cells: usize,
    refine_ratio: usize,
    length: T,
    window_frac: T,
    end_time: T,
    pulse_center: T,
    pulse_width: T,
) -> Result<BuiltProblem<T>> {
    if base_cells < 2 || refine_ratio < 1 {
        return Err(Error::Config("wave mesh needs >= 2 base cells and ratio >= 1".into()));
    }
    if !(length > T::zero()) || !(pulse_width > T::zero()) {
        return Err(Error::Config("wave mesh parameters must be positive".into()));
    }
    let half = T::of(0.5);
    let base_h = length / T::of(base_cells as f64);
    let win_lo = (half - half * window_frac) * length;
    let win_hi = (half + half * window_frac) * length;

    // Cell sizes: base cells intersecting the window are split into
    // refine_ratio subcells.
    let mut cells: Vec<T> = Vec::new();
    for c in 0..base_cells {
        let lo = base_h * T::of(c as f64);
        let hi = base_h * T::of((c + 1) as f64);
        let refined = lo < win_hi && hi > win_lo && refine_ratio > 1;
        if refined {
            let sub = base_h / T::of(refine_ratio as f64);
            for _ in 0..refine_ratio {
                cells.push(sub);
            }
        } else {
            cells.push(base_h);
        }
    }
    let n_nodes = cells.len() + 1;
    let n = 2 * n_nodes;

    let mut node_x = Vec::with_capacity(n_nodes);
    let mut x = T::zero();
    node_x.push(x);
    for &c in &cells {
        x = x + c;
        node_x.push(x);
    }

    // Local mesh size per node: the smaller adjacent cell.
    let node_h: Vec<T> = (0..n_nodes)
        .map(|i| {
            if i == 0 {
                cells[0]
            } else if i == n_nodes - 1 {
                cells[n_nodes - 2]
            } else {
                cells[i - 1].min(cells[i])
            }
        })
        .collect();

    let mut u0 = vec![T::zero(); n];
    for i in 0..n_nodes {
        let s = (node_x[i] - pulse_center) / pulse_width;
        let g = (-s * s).exp();
        u0[i] = g;
        // Rightward-traveling pulse: v = u_t = -u_x.
        u0[n_nodes + i] = (s + s) / pulse_width * g;
    }

    let cells_rhs = cells.clone();
    let rhs = move |i: usize, state: &dyn StateView<T>, _t: T| {
        if i < n_nodes {
            state.value(n_nodes + i)
        } else {
            let j = i - n_nodes;
            let u = state.value(j);
            let two = T::one() + T::one();
            if j == 0 {
                let hr = cells_rhs[0];
                two * (state.value(1) - u) / (hr * hr)
            } else if j == n_nodes - 1 {
                let hl = cells_rhs[n_nodes - 2];
                two * (state.value(j - 1) - u) / (hl * hl)
            } else {
                let hl = cells_rhs[j - 1];
                let hr = cells_rhs[j];
                two / (hl + hr)
                    * ((state.value(j + 1) - u) / hr - (u - state.value(j - 1)) / hl)
            }
        }
    };

    let cells_jac = cells.clone();
    let jac = move |i: usize, ip: usize, _state: &dyn StateView<T>, _t: T| {
        let two = T::one() + T::one();
        if i < n_nodes {
            if ip == n_nodes + i {
                T::one()
            } else {
                T::zero()
            }
        } else {
            let j = i - n_nodes;
            if ip >= n_nodes {
                return T::zero();
            }
            if j == 0 {
                let hr = cells_jac[0];
                let c = two / (hr * hr);
                if ip == 0 {
                    -c
                } else if ip == 1 {
                    c
                } else {
                    T::zero()
                }
            } else if j == n_nodes - 1 {
                let hl = cells_jac[n_nodes - 2];
                let c = two / (hl * hl);
                if ip == j {
                    -c
                } else if ip == j - 1 {
                    c
                } else {
                    T::zero()
                }
            } else {
                let hl = cells_jac[j - 1];
                let hr = cells_jac[j];
                let w = two / (hl + hr);
                if ip == j - 1 {
                    w / hl
                } else if ip == j {
                    -w * (T::one() / hl + T::one() / hr)
                } else if ip == j + 1 {
                    w / hr
                } else {
                    T::zero()
                }
            }
        }
    };

    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n_nodes {
        rows.push(vec![n_nodes + i]);
    }
    for j in 0..n_nodes {
        let lo = j.saturating_sub(1);
        let hi = (j + 1).min(n_nodes - 1);
        rows.push((lo..=hi).collect());
    }

    let system = OdeSystem::new(u0, end_time, SparsityPattern::from_rows(rows)?, rhs)?
        .with_jacobian(jac);

    let mut positions = node_x.clone();
    positions.extend_from_slice(&node_x);
    let mut local_h = node_h.clone();
    local_h.extend_from_slice(&node_h);

    Ok(BuiltProblem {
        system,
        positions,
        local_mesh_size: Some(local_h),
        cell_sizes: Some(cells),
        n_nodes: Some(n_nodes),
    })
}

/// Discrete wave energy `1/2 sum m_i v_i^2 + 1/2 sum_cells (du/h)^2 h` for a
/// state of the wave system.
pub fn wave_energy<T: Real>(built: &BuiltProblem<T>, state: &[T]) -> T {
    let n_nodes = built.n_nodes.expect("wave problem");
    let cells = built.cell_sizes.as_ref().expect("wave problem");
    let half = T::of(0.5);
    let mut energy = T::zero();
    for i in 0..n_nodes {
        let hl = if i == 0 { T::zero() } else { cells[i - 1] };
        let hr = if i == n_nodes - 1 { T::zero() } else { cells[i] };
        let mass = half * (hl + hr);
        let v = state[n_nodes + i];
        energy = energy + half * mass * v * v;
    }
    for (i, &h) in cells.iter().enumerate() {
        let du = state[i + 1] - state[i];
        energy = energy + half * du * du / h;
    }
    energy
}
