//! Storage of completed time slabs as a piecewise-polynomial solution on
//! [0, T], with evaluation, nodal sampling, and a binary checkpoint format.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::method::{MethodTable, Variant};
use crate::real::Real;

/// Compacted arrays of one accepted slab.
#[derive(Clone, Debug)]
pub struct SlabRecord<T: Real> {
    pub t_start: T,
    pub t_end: T,
    pub sa: Vec<T>,
    pub sb: Vec<T>,
    pub jx: Vec<T>,
    pub ei: Vec<usize>,
    pub es: Vec<usize>,
    pub ee: Vec<Option<usize>>,
    pub u_start: Vec<T>,
    /// Elements per component in time order.
    pub comp_elems: Vec<Vec<usize>>,
}

impl<T: Real> SlabRecord<T> {
    fn interval(&self, e: usize) -> (T, T) {
        let s = self.es[e];
        (self.sa[s], self.sb[s])
    }

    fn dofs(&self, e: usize, order: usize) -> &[T] {
        let d = order + 1;
        &self.jx[e * d..(e + 1) * d]
    }

    fn covering_element(&self, comp: usize, t: T) -> Option<usize> {
        let elems = &self.comp_elems[comp];
        let idx = elems.partition_point(|&e| self.interval(e).1 < t);
        let &e = elems.get(idx)?;
        let (a, b) = self.interval(e);
        (a < t && t <= b).then_some(e)
    }
}

/// Ordered slabs covering [0, T] with per-component evaluation. Slab
/// intervals are half-open `(t_start, t_end]`; `t = 0` yields the initial
/// data.
#[derive(Clone, Debug)]
pub struct SolutionTrace<T: Real> {
    pub variant: Variant,
    pub order: usize,
    pub n_components: usize,
    pub u0: Vec<T>,
    pub slabs: Vec<SlabRecord<T>>,
}

impl<T: Real> SolutionTrace<T> {
    pub fn new(variant: Variant, order: usize, u0: Vec<T>) -> Self {
        Self { variant, order, n_components: u0.len(), u0, slabs: Vec::new() }
    }

    /// Appends a solved slab; it must continue exactly where the trace ends.
    pub fn push_slab(&mut self, slab: &crate::slab::TimeSlab<T>) -> Result<()> {
        let t_prev = self.end_time();
        if slab.t_start != t_prev {
            return Err(Error::TraceGap(slab.t_start.as_f64()));
        }
        self.push_slab_unchecked(slab)
    }

    /// Replaces the stored history with this single slab. Used by runs that
    /// only need the end state, to keep memory flat.
    pub fn replace_with_slab(&mut self, slab: &crate::slab::TimeSlab<T>) {
        self.slabs.clear();
        let _ = self.push_slab_unchecked(slab);
    }

    fn push_slab_unchecked(&mut self, slab: &crate::slab::TimeSlab<T>) -> Result<()> {
        self.slabs.push(SlabRecord {
            t_start: slab.t_start,
            t_end: slab.t_end,
            sa: slab.sa.clone(),
            sb: slab.sb.clone(),
            jx: slab.jx.clone(),
            ei: slab.ei.clone(),
            es: slab.es.clone(),
            ee: slab.ee.clone(),
            u_start: slab.u_start.clone(),
            comp_elems: (0..slab.n_components)
                .map(|i| slab.component_elements(i).to_vec())
                .collect(),
        });
        Ok(())
    }

    pub fn start_time(&self) -> T {
        T::zero()
    }

    pub fn end_time(&self) -> T {
        self.slabs.last().map_or(T::zero(), |s| s.t_end)
    }

    pub fn end_state(&self) -> Vec<T> {
        match self.slabs.last() {
            None => self.u0.clone(),
            Some(rec) => (0..self.n_components)
                .map(|i| {
                    let &e = rec.comp_elems[i].last().expect("component missing from slab");
                    *rec.dofs(e, self.order).last().unwrap()
                })
                .collect(),
        }
    }

    fn slab_at(&self, t: T) -> Option<&SlabRecord<T>> {
        let idx = self.slabs.partition_point(|s| s.t_end < t);
        self.slabs.get(idx)
    }

    /// Evaluates `U_i(t)` for `t` in [0, T].
    pub fn value(&self, i: usize, t: T, table: &MethodTable<T>) -> Result<T> {
        if t < T::zero() || t > self.end_time() {
            return Err(Error::SampleTime(t.as_f64()));
        }
        if t <= T::zero() {
            return Ok(self.u0[i]);
        }
        let rec = self.slab_at(t).ok_or(Error::SampleTime(t.as_f64()))?;
        if t <= rec.t_start {
            return Ok(rec.u_start[i]);
        }
        let e = rec
            .covering_element(i, t)
            .ok_or(Error::Lookup { component: i, time: t.as_f64() })?;
        let (a, b) = rec.interval(e);
        let tau = (t - a) / (b - a);
        table.eval_local(rec.dofs(e, self.order), tau)
    }

    /// All nodal sample pairs `(t, U_i(t))` of one component in time order,
    /// starting with `(0, u0_i)`.
    pub fn component_samples(&self, i: usize, table: &MethodTable<T>) -> Vec<(T, T)> {
        let mut out = vec![(T::zero(), self.u0[i])];
        for rec in &self.slabs {
            for &e in &rec.comp_elems[i] {
                let (a, b) = rec.interval(e);
                let k = b - a;
                let dofs = rec.dofs(e, self.order);
                for (n, &s) in table.nodes.iter().enumerate() {
                    let t = if s == T::one() { b } else { a + s * k };
                    if t > out.last().unwrap().0 {
                        out.push((t, dofs[n]));
                    }
                }
                // Always include the element end-point.
                if b > out.last().unwrap().0 {
                    out.push((b, *dofs.last().unwrap()));
                }
            }
        }
        out
    }

    /// Per-component time step of the slab containing `t` (the local element
    /// length), for step-field snapshots.
    pub fn local_steps_at(&self, t: T) -> Result<Vec<T>> {
        if t <= T::zero() || t > self.end_time() {
            return Err(Error::SampleTime(t.as_f64()));
        }
        let rec = self.slab_at(t).ok_or(Error::SampleTime(t.as_f64()))?;
        Ok((0..self.n_components)
            .map(|i| {
                let e = rec.covering_element(i, t).expect("component covers slab");
                let (a, b) = rec.interval(e);
                b - a
            })
            .collect())
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"MADTRC01";

fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, x: f64) {
    out.extend_from_slice(&x.to_le_bytes());
}

/// Writes the trace as a sequence of little-endian slab records behind a
/// versioned magic header. Values are stored as f64.
pub fn write_checkpoint<T: Real>(trace: &SolutionTrace<T>, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u64(
        &mut out,
        match trace.variant {
            Variant::Cg => 0,
            Variant::Dg => 1,
        },
    );
    put_u64(&mut out, trace.order as u64);
    put_u64(&mut out, trace.n_components as u64);
    put_u64(&mut out, trace.slabs.len() as u64);
    for &v in &trace.u0 {
        put_f64(&mut out, v.as_f64());
    }
    for rec in &trace.slabs {
        put_f64(&mut out, rec.t_start.as_f64());
        put_f64(&mut out, rec.t_end.as_f64());
        put_u64(&mut out, rec.sa.len() as u64);
        put_u64(&mut out, rec.ei.len() as u64);
        for &v in &rec.sa {
            put_f64(&mut out, v.as_f64());
        }
        for &v in &rec.sb {
            put_f64(&mut out, v.as_f64());
        }
        for &v in &rec.jx {
            put_f64(&mut out, v.as_f64());
        }
        for &v in &rec.ei {
            put_u64(&mut out, v as u64);
        }
        for &v in &rec.es {
            put_u64(&mut out, v as u64);
        }
        for &v in &rec.ee {
            let coded: i64 = v.map_or(-1, |x| x as i64);
            out.extend_from_slice(&coded.to_le_bytes());
        }
        for &v in &rec.u_start {
            put_f64(&mut out, v.as_f64());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

struct Reader {
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Reads a checkpoint written by [`write_checkpoint`].
pub fn read_checkpoint<T: Real>(path: &Path) -> Result<SolutionTrace<T>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic header".into()));
    }
    let variant = match r.u64()? {
        0 => Variant::Cg,
        1 => Variant::Dg,
        v => return Err(Error::Checkpoint(format!("unknown variant code {v}"))),
    };
    let order = r.u64()? as usize;
    let n_components = r.u64()? as usize;
    let n_slabs = r.u64()? as usize;
    let mut u0 = Vec::with_capacity(n_components);
    for _ in 0..n_components {
        u0.push(T::of(r.f64()?));
    }
    let mut trace = SolutionTrace::new(variant, order, u0);
    for _ in 0..n_slabs {
        let t_start = T::of(r.f64()?);
        let t_end = T::of(r.f64()?);
        let n_sub = r.u64()? as usize;
        let n_elems = r.u64()? as usize;
        let reals = |n: usize, r: &mut Reader| -> Result<Vec<T>> {
            (0..n).map(|_| Ok(T::of(r.f64()?))).collect()
        };
        let sa = reals(n_sub, &mut r)?;
        let sb = reals(n_sub, &mut r)?;
        let jx = reals(n_elems * (order + 1), &mut r)?;
        let ei: Vec<usize> = (0..n_elems)
            .map(|_| Ok(r.u64()? as usize))
            .collect::<Result<_>>()?;
        let es: Vec<usize> = (0..n_elems)
            .map(|_| Ok(r.u64()? as usize))
            .collect::<Result<_>>()?;
        let ee: Vec<Option<usize>> = (0..n_elems)
            .map(|_| {
                let v = r.i64()?;
                Ok(if v < 0 { None } else { Some(v as usize) })
            })
            .collect::<Result<_>>()?;
        let u_start = reals(n_components, &mut r)?;
        let mut comp_elems = vec![Vec::new(); n_components];
        for (e, &i) in ei.iter().enumerate() {
            if i >= n_components {
                return Err(Error::Checkpoint("component index out of range".into()));
            }
            comp_elems[i].push(e);
        }
        trace.slabs.push(SlabRecord {
            t_start,
            t_end,
            sa,
            sb,
            jx,
            ei,
            es,
            ee,
            u_start,
            comp_elems,
        });
    }
    Ok(trace)
}
