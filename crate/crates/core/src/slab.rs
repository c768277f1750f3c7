//! Recursive construction of time slabs and their flat-array representation
//! with O(1)-amortized interpolation lookup.
//!
//! A slab covers one macro step `[T_{n-1}, T_n]`. Its root sub-slab holds an
//! element group for the components with large time steps; components with
//! smaller steps are handled by recursively nested sub-slabs tiling the same
//! interval. The state lives in eight flat arrays (`sa`, `sb`, `jx`, `ei`,
//! `es`, `ee`, `ed`, `de`) plus the `elast` scratch array.

use crate::error::{Error, Result};
use crate::method::MethodTable;
use crate::ode::SparsityPattern;
use crate::real::Real;

/// Parameters for slab construction.
#[derive(Clone, Copy, Debug)]
pub struct SlabConfig<T: Real> {
    /// Partition threshold in (0, 1); components with step below
    /// `theta * K` are deferred to nested sub-slabs.
    pub theta: T,
    /// Polynomial order q; every element carries q + 1 degrees of freedom.
    pub order: usize,
    /// Recursion depth cap.
    pub max_depth: usize,
}

impl<T: Real> SlabConfig<T> {
    pub fn new(theta: T, order: usize) -> Self {
        Self { theta, order, max_depth: 64 }
    }
}

/// The discretization state of one macro step.
pub struct TimeSlab<T: Real> {
    pub t_start: T,
    pub t_end: T,
    pub order: usize,
    pub n_components: usize,
    /// Left end-points for sub-slabs.
    pub sa: Vec<T>,
    /// Right end-points for sub-slabs.
    pub sb: Vec<T>,
    /// Values for degrees of freedom, q + 1 per element in creation order.
    pub jx: Vec<T>,
    /// Component indices for elements.
    pub ei: Vec<usize>,
    /// Sub-slabs containing elements.
    pub es: Vec<usize>,
    /// Previous element of the same component, if any.
    pub ee: Vec<Option<usize>>,
    /// First dependency offset per element (CSR row pointers, len = E + 1).
    pub ed: Vec<usize>,
    /// Elements for dependencies: smaller-step elements that must be
    /// interpolated at the quadrature points of the depending element.
    pub de: Vec<usize>,
    /// Last visited element per component during a sweep.
    pub elast: Vec<Option<usize>>,
    /// State at `t_start` for all components.
    pub u_start: Vec<T>,
    /// Elements per component in creation (= time) order.
    comp_elems: Vec<Vec<usize>>,
}

/// Partitions components into small (`I0`) and large (`I1`) time step
/// groups against the threshold `theta * K`, and returns the macro step
/// `Kbar`, the smallest step within `I1`.
pub fn partition<T: Real>(
    components: &[(usize, T)],
    theta: T,
) -> Result<(Vec<usize>, Vec<usize>, T)> {
    if components.is_empty() {
        return Err(Error::Config("partition of an empty component set".into()));
    }
    let mut k_max = T::zero();
    for &(c, k) in components {
        if !(k > T::zero()) {
            return Err(Error::NonpositiveStep(c));
        }
        k_max = k_max.max(k);
    }
    let threshold = theta * k_max;
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut k_bar = k_max;
    for &(c, k) in components {
        if k < threshold {
            small.push(c);
        } else {
            large.push(c);
            k_bar = k_bar.min(k);
        }
    }
    Ok((small, large, k_bar))
}

/// Builds the slab for one macro step starting at `t_start`, consulting the
/// step oracle for the current desired step of each component. Returns the
/// slab together with the synchronized level `T_n <= t_max` it reached.
pub fn create_time_slab<T: Real>(
    components: &[usize],
    n_components: usize,
    t_start: T,
    t_max: T,
    cfg: &SlabConfig<T>,
    desired_step: &dyn Fn(usize) -> T,
) -> Result<(TimeSlab<T>, T)> {
    if components.is_empty() || !(t_start < t_max) {
        return Err(Error::Config("slab needs components and t_start < t_max".into()));
    }
    let mut slab = TimeSlab {
        t_start,
        t_end: t_start,
        order: cfg.order,
        n_components,
        sa: Vec::new(),
        sb: Vec::new(),
        jx: Vec::new(),
        ei: Vec::new(),
        es: Vec::new(),
        ee: Vec::new(),
        ed: Vec::new(),
        de: Vec::new(),
        elast: vec![None; n_components],
        u_start: vec![T::zero(); n_components],
        comp_elems: vec![Vec::new(); n_components],
    };
    let mut last = vec![None; n_components];
    let t_end = build(&mut slab, &mut last, components, t_start, t_max, cfg, desired_step, 0)?;
    slab.t_end = t_end;
    Ok((slab, t_end))
}

#[allow(clippy::too_many_arguments)]
fn build<T: Real>(
    slab: &mut TimeSlab<T>,
    last: &mut [Option<usize>],
    components: &[usize],
    t0: T,
    t_max: T,
    cfg: &SlabConfig<T>,
    desired_step: &dyn Fn(usize) -> T,
    depth: usize,
) -> Result<T> {
    if depth > cfg.max_depth {
        return Err(Error::SlabDepth(cfg.max_depth));
    }
    let pairs: Vec<(usize, T)> = components.iter().map(|&c| (c, desired_step(c))).collect();
    let (small, large, k_bar) = partition(&pairs, cfg.theta)?;

    // Clip at the horizon; absorb a remainder shorter than half a step into
    // this group so no sliver elements are created.
    let mut t1 = t0 + k_bar;
    let sliver = (t_max.abs() + T::one()) * T::epsilon() * T::of(1e3);
    if t1 >= t_max || t_max - t1 <= sliver.max(T::of(0.5) * k_bar) {
        t1 = t_max;
    }

    let s = slab.sa.len();
    slab.sa.push(t0);
    slab.sb.push(t1);
    for &c in &large {
        let e = slab.ei.len();
        slab.ei.push(c);
        slab.es.push(s);
        slab.ee.push(last[c]);
        last[c] = Some(e);
        slab.comp_elems[c].push(e);
        slab.jx.extend(std::iter::repeat(T::zero()).take(cfg.order + 1));
    }
    if !small.is_empty() {
        let mut t = t0;
        while t < t1 {
            t = build(slab, last, &small, t, t1, cfg, desired_step, depth + 1)?;
        }
    }
    Ok(t1)
}

/// Fills the `ed`/`de` dependency arrays: for each element and each
/// component in its sparsity row that uses smaller steps inside the element
/// span, lists every such element whose interval intersects a quadrature
/// point.
pub fn build_dependencies<T: Real>(
    slab: &mut TimeSlab<T>,
    sparsity: &SparsityPattern,
    table: &MethodTable<T>,
) {
    let n_elems = slab.ei.len();
    let mut ed = Vec::with_capacity(n_elems + 1);
    let mut de = Vec::new();
    ed.push(0);
    for e in 0..n_elems {
        let (a, b) = slab.interval(e);
        let k = b - a;
        let quad: Vec<T> = table
            .nodes
            .iter()
            .map(|&s| if s == T::one() { b } else { a + s * k })
            .collect();
        for &ip in sparsity.row(slab.ei[e]) {
            if ip == slab.ei[e] {
                continue;
            }
            // Elements of ip contained in (a, b] with strictly smaller
            // intervals are contiguous in its time-ordered element list.
            let elems = &slab.comp_elems[ip];
            let start = elems.partition_point(|&ep| slab.sa[slab.es[ep]] < a);
            for &ep in &elems[start..] {
                let (ap, bp) = slab.interval(ep);
                if ap >= b || bp > b {
                    break;
                }
                if slab.es[ep] == slab.es[e] {
                    continue; // same group, not a smaller step
                }
                if quad.iter().any(|&t| ap < t && t <= bp) {
                    de.push(ep);
                }
            }
        }
        ed.push(de.len());
    }
    slab.ed = ed;
    slab.de = de;
}

impl<T: Real> TimeSlab<T> {
    pub fn n_elements(&self) -> usize {
        self.ei.len()
    }

    pub fn n_subslabs(&self) -> usize {
        self.sa.len()
    }

    /// Interval `(a, b]` of an element.
    pub fn interval(&self, e: usize) -> (T, T) {
        let s = self.es[e];
        (self.sa[s], self.sb[s])
    }

    pub fn step(&self, e: usize) -> T {
        let (a, b) = self.interval(e);
        b - a
    }

    pub fn dofs(&self, e: usize) -> &[T] {
        let d = self.order + 1;
        &self.jx[e * d..(e + 1) * d]
    }

    pub fn dofs_mut(&mut self, e: usize) -> &mut [T] {
        let d = self.order + 1;
        &mut self.jx[e * d..(e + 1) * d]
    }

    /// Value at the left end-point of an element: the end-time value of the
    /// previous element of the same component, or the slab's start state.
    pub fn left_value(&self, e: usize) -> T {
        match self.ee[e] {
            Some(prev) => *self.dofs(prev).last().unwrap(),
            None => self.u_start[self.ei[e]],
        }
    }

    /// Elements of one component in time order.
    pub fn component_elements(&self, i: usize) -> &[usize] {
        &self.comp_elems[i]
    }

    /// Elements belonging to the element group of sub-slab `s`. Elements of
    /// one group are contiguous in creation order and `es` is nondecreasing.
    pub fn group_elements(&self, s: usize) -> std::ops::Range<usize> {
        let start = self.es.partition_point(|&x| x < s);
        let end = self.es.partition_point(|&x| x <= s);
        start..end
    }

    /// End-time value per component.
    pub fn end_state(&self) -> Vec<T> {
        (0..self.n_components)
            .map(|i| {
                let &e = self.comp_elems[i].last().expect("component missing from slab");
                *self.dofs(e).last().unwrap()
            })
            .collect()
    }

    /// Per-slab multi-adaptive efficiency index
    /// `mu = (k_max / k_min) (N / |T_n|)`.
    pub fn efficiency_index(&self) -> T {
        let mut k_min = T::infinity();
        let mut k_max = T::zero();
        for e in 0..self.n_elements() {
            let k = self.step(e);
            k_min = k_min.min(k);
            k_max = k_max.max(k);
        }
        k_max / k_min * T::of(self.n_components as f64) / T::of(self.n_elements() as f64)
    }

    pub fn reset_elast(&mut self) {
        self.elast.iter_mut().for_each(|e| *e = None);
    }

    /// Records that the sweep has visited element `e`.
    pub fn note_visited(&mut self, e: usize) {
        self.elast[self.ei[e]] = Some(e);
    }

    fn covers(&self, e: usize, t: T) -> bool {
        let (a, b) = self.interval(e);
        a < t && t <= b
    }

    /// Evaluates component `comp` of the local polynomial solution on
    /// element `e` at time `t`.
    pub fn eval_element_at(&self, e: usize, t: T, table: &MethodTable<T>) -> Result<T> {
        let (a, b) = self.interval(e);
        let tau = (t - a) / (b - a);
        table.eval_local(self.dofs(e), tau)
    }

    /// Interpolates `U_comp(t)` during an in-order sweep currently updating
    /// element `current`. The covering element is found through `elast`, the
    /// current element group, or the dependency list of `current`; a failed
    /// lookup signals a dependency-construction bug.
    pub fn interpolate(
        &self,
        comp: usize,
        t: T,
        table: &MethodTable<T>,
        current: usize,
    ) -> Result<T> {
        if t <= self.t_start {
            return Ok(self.u_start[comp]);
        }
        if let Some(e) = self.elast[comp] {
            if self.covers(e, t) {
                return self.eval_element_at(e, t, table);
            }
            // Left end-point queries resolve to the predecessor.
            if t <= self.interval(e).0 {
                match self.ee[e] {
                    Some(prev) if self.covers(prev, t) => {
                        return self.eval_element_at(prev, t, table)
                    }
                    None if t <= self.interval(e).0 => return Ok(self.u_start[comp]),
                    _ => {}
                }
            }
        }
        let group = self.group_elements(self.es[current]);
        for e in group {
            if self.ei[e] != comp {
                continue;
            }
            if self.covers(e, t) {
                return self.eval_element_at(e, t, table);
            }
            if t <= self.interval(e).0 {
                return match self.ee[e] {
                    Some(prev) if self.covers(prev, t) => self.eval_element_at(prev, t, table),
                    None => Ok(self.u_start[comp]),
                    _ => Err(Error::Lookup { component: comp, time: t.as_f64() }),
                };
            }
        }
        for &e in &self.de[self.ed[current]..self.ed[current + 1]] {
            if self.ei[e] == comp && self.covers(e, t) {
                return self.eval_element_at(e, t, table);
            }
        }
        Err(Error::Lookup { component: comp, time: t.as_f64() })
    }

    /// Reference lookup: linear scan over all elements of the component.
    /// Used as the oracle for `interpolate` and for post-solve sampling.
    pub fn value_brute(&self, comp: usize, t: T, table: &MethodTable<T>) -> Result<T> {
        if t <= self.t_start {
            return Ok(self.u_start[comp]);
        }
        for e in 0..self.n_elements() {
            if self.ei[e] == comp && self.covers(e, t) {
                return self.eval_element_at(e, t, table);
            }
        }
        Err(Error::Lookup { component: comp, time: t.as_f64() })
    }

    /// Covering element of `comp` at `t` by binary search over its
    /// time-ordered element list.
    pub fn covering_element(&self, comp: usize, t: T) -> Option<usize> {
        let elems = &self.comp_elems[comp];
        let idx = elems.partition_point(|&e| self.interval(e).1 < t);
        let &e = elems.get(idx)?;
        self.covers(e, t).then_some(e)
    }

    /// Debug dump of the sub-slab tree with element intervals, as JSON.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        out.push_str(&format!(
            "  \"t_start\": {}, \"t_end\": {}, \"order\": {},\n",
            self.t_start, self.t_end, self.order
        ));
        out.push_str("  \"subslabs\": [\n");
        for s in 0..self.n_subslabs() {
            let elems: Vec<String> = self
                .group_elements(s)
                .map(|e| format!("{{\"element\": {}, \"component\": {}}}", e, self.ei[e]))
                .collect();
            out.push_str(&format!(
                "    {{\"index\": {}, \"a\": {}, \"b\": {}, \"elements\": [{}]}}{}\n",
                s,
                self.sa[s],
                self.sb[s],
                elems.join(", "),
                if s + 1 < self.n_subslabs() { "," } else { "" }
            ));
        }
        out.push_str("  ]\n}\n");
        out
    }
}
