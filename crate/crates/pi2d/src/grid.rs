//! Quadrature oracle: numeric application of PI operators to polynomial
//! states on Gauss-Legendre grids.
//!
//! The numeric path only evaluates kernels and states pointwise; it never
//! touches the symbolic composition/adjoint machinery, which makes it the
//! independent ground truth for the algebra tests. For polynomial data and
//! quadrature order above the integrand degree every integral here is exact
//! up to rounding.

use crate::op::{Comp, Dims, DirType, PiOp};
use crate::poly::{q_to_f64, Interval, Poly, PolyF64, PolyMat, Q, Var};
use crate::{PiError, Result};
use nalgebra::{DMatrix, DVector};

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_pair(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_pair(n, x);
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped to [lo, hi].
    pub fn mapped(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| (mid + half * t, half * w))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Symbolic `Z2` state with polynomial components: a finite vector, 1D
/// components in x and y, and a 2D component in (x, y).
#[derive(Debug, Clone, PartialEq)]
pub struct Z2Poly {
    pub dims: Dims,
    pub fin: Vec<Q>,
    pub ux: PolyMat<Q>,
    pub uy: PolyMat<Q>,
    pub u2: PolyMat<Q>,
}

impl Z2Poly {
    pub fn zero(dims: Dims) -> Self {
        Z2Poly {
            dims,
            fin: vec![Q::from_integer(0.into()); dims.n0],
            ux: PolyMat::zeros(dims.n1, 1),
            uy: PolyMat::zeros(dims.n1, 1),
            u2: PolyMat::zeros(dims.n2, 1),
        }
    }

    pub fn new(dims: Dims, fin: Vec<Q>, ux: PolyMat<Q>, uy: PolyMat<Q>, u2: PolyMat<Q>) -> Self {
        assert_eq!(fin.len(), dims.n0);
        assert_eq!((ux.rows, ux.cols), (dims.n1, 1));
        assert_eq!((uy.rows, uy.cols), (dims.n1, 1));
        assert_eq!((u2.rows, u2.cols), (dims.n2, 1));
        assert!(!ux.depends_on(Var::Y) && !ux.depends_on(Var::Theta) && !ux.depends_on(Var::Nu));
        assert!(!uy.depends_on(Var::X) && !uy.depends_on(Var::Theta) && !uy.depends_on(Var::Nu));
        assert!(!u2.depends_on(Var::Theta) && !u2.depends_on(Var::Nu));
        Z2Poly { dims, fin, ux, uy, u2 }
    }

    /// Pure 2D state.
    pub fn from_l2(u2: PolyMat<Q>) -> Self {
        Z2Poly::new(Dims::l2(u2.rows), vec![], PolyMat::zeros(0, 1), PolyMat::zeros(0, 1), u2)
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.dims, o.dims);
        Z2Poly {
            dims: self.dims,
            fin: self.fin.iter().zip(&o.fin).map(|(a, b)| a + b).collect(),
            ux: self.ux.add(&o.ux),
            uy: self.uy.add(&o.uy),
            u2: self.u2.add(&o.u2),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        assert_eq!(self.dims, o.dims);
        Z2Poly {
            dims: self.dims,
            fin: self.fin.iter().zip(&o.fin).map(|(a, b)| a - b).collect(),
            ux: self.ux.sub(&o.ux),
            uy: self.uy.sub(&o.uy),
            u2: self.u2.sub(&o.u2),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.fin.iter().all(|q| q == &Q::from_integer(0.into()))
            && self.ux.is_zero()
            && self.uy.is_zero()
            && self.u2.is_zero()
    }

    /// Maximum polynomial degree across components.
    pub fn degree(&self) -> u32 {
        self.ux
            .total_degree()
            .max(self.uy.total_degree())
            .max(self.u2.total_degree())
    }
}

/// Exact `Z2` inner product of two polynomial states.
pub fn inner_sym(u: &Z2Poly, v: &Z2Poly, dom: &Interval) -> Result<Q> {
    if u.dims != v.dims {
        return Err(PiError::SigMismatch("inner product dims".into()));
    }
    use crate::poly::IntBound::Const;
    let mut acc: Q = u.fin.iter().zip(&v.fin).map(|(a, b)| a * b).sum();
    let ax = Const(dom.a.clone());
    let bx = Const(dom.b.clone());
    let cy = Const(dom.c.clone());
    let dy = Const(dom.d.clone());
    for i in 0..u.dims.n1 {
        let px = u.ux.at(i, 0).mul(v.ux.at(i, 0));
        acc += px.integrate(Var::X, &ax, &bx)?.eval_q(&Default::default())?;
        let py = u.uy.at(i, 0).mul(v.uy.at(i, 0));
        acc += py.integrate(Var::Y, &cy, &dy)?.eval_q(&Default::default())?;
    }
    for i in 0..u.dims.n2 {
        let p = u.u2.at(i, 0).mul(v.u2.at(i, 0));
        acc += p
            .integrate(Var::X, &ax, &bx)?
            .integrate(Var::Y, &cy, &dy)?
            .eval_q(&Default::default())?;
    }
    Ok(acc)
}

/// Symbolic application of a PI operator to a polynomial state; exact.
pub fn apply_sym(op: &PiOp<Q>, u: &Z2Poly) -> Result<Z2Poly> {
    if op.din != u.dims {
        return Err(PiError::SigMismatch(format!(
            "apply: operator expects {}, state is {}",
            op.din, u.dims
        )));
    }
    use crate::poly::IntBound;
    let dom = &op.dom;
    let mut out = Z2Poly::zero(op.dout);
    for ((r, c), blk) in op.blocks() {
        let vin: PolyMat<Q> = match c {
            Comp::Fin => PolyMat::from_fn(op.din.n0, 1, |i, _| Poly::qconst(u.fin[i].clone())),
            Comp::Lx => u.ux.clone(),
            Comp::Ly => u.uy.clone(),
            Comp::L2 => u.u2.clone(),
        };
        for sx in 0..blk.nx {
            for sy in 0..blk.ny {
                let k = blk.at(sx, sy);
                if k.is_zero() {
                    continue;
                }
                let tx = dir_type_of(r.has_x(), c.has_x(), sx);
                let ty = dir_type_of(r.has_y(), c.has_y(), sy);
                let mut v = vin.clone();
                if matches!(tx, DirType::L | DirType::U) {
                    v = v.rename(Var::X, Var::Theta);
                }
                if matches!(ty, DirType::L | DirType::U) {
                    v = v.rename(Var::Y, Var::Nu);
                }
                let mut t = k.try_matmul(&v, u32::MAX)?;
                t = match tx {
                    DirType::I => t.integrate(
                        Var::X,
                        &IntBound::Const(dom.a.clone()),
                        &IntBound::Const(dom.b.clone()),
                    )?,
                    DirType::L => t.integrate(
                        Var::Theta,
                        &IntBound::Const(dom.a.clone()),
                        &IntBound::Var(Var::X),
                    )?,
                    DirType::U => t.integrate(
                        Var::Theta,
                        &IntBound::Var(Var::X),
                        &IntBound::Const(dom.b.clone()),
                    )?,
                    _ => t,
                };
                t = match ty {
                    DirType::I => t.integrate(
                        Var::Y,
                        &IntBound::Const(dom.c.clone()),
                        &IntBound::Const(dom.d.clone()),
                    )?,
                    DirType::L => t.integrate(
                        Var::Nu,
                        &IntBound::Const(dom.c.clone()),
                        &IntBound::Var(Var::Y),
                    )?,
                    DirType::U => t.integrate(
                        Var::Nu,
                        &IntBound::Var(Var::Y),
                        &IntBound::Const(dom.d.clone()),
                    )?,
                    _ => t,
                };
                match r {
                    Comp::Fin => {
                        for i in 0..t.rows {
                            let val = t.at(i, 0).eval_q(&Default::default())?;
                            out.fin[i] += val;
                        }
                    }
                    Comp::Lx => out.ux = out.ux.add(&t),
                    Comp::Ly => out.uy = out.uy.add(&t),
                    Comp::L2 => out.u2 = out.u2.add(&t),
                }
            }
        }
    }
    Ok(out)
}

fn dir_type_of(out_has: bool, in_has: bool, slot: usize) -> DirType {
    match (out_has, in_has) {
        (false, false) => DirType::S,
        (true, false) => DirType::E,
        (false, true) => DirType::I,
        (true, true) => [DirType::M, DirType::L, DirType::U][slot],
    }
}

/// Values of a `Z2` element on a tensor Gauss-Legendre grid, plus the
/// quadrature weights needed for inner products.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub dims: Dims,
    pub fin: DVector<f64>,
    /// `n1 x P` values at x-nodes.
    pub ux: DMatrix<f64>,
    pub uy: DMatrix<f64>,
    /// `n2 x P^2` values, node index `ix * P + iy`.
    pub u2: DMatrix<f64>,
    pub xw: Vec<(f64, f64)>,
    pub yw: Vec<(f64, f64)>,
}

impl GridFunction {
    /// Weighted `Z2` inner product of two grid functions on the same grid.
    pub fn inner(&self, o: &GridFunction) -> f64 {
        assert_eq!(self.dims, o.dims);
        let mut acc = self.fin.dot(&o.fin);
        for (k, &(_, w)) in self.xw.iter().enumerate() {
            for i in 0..self.dims.n1 {
                acc += w * self.ux[(i, k)] * o.ux[(i, k)];
            }
        }
        for (k, &(_, w)) in self.yw.iter().enumerate() {
            for i in 0..self.dims.n1 {
                acc += w * self.uy[(i, k)] * o.uy[(i, k)];
            }
        }
        let p = self.yw.len();
        for (kx, &(_, wx)) in self.xw.iter().enumerate() {
            for (ky, &(_, wy)) in self.yw.iter().enumerate() {
                for i in 0..self.dims.n2 {
                    acc += wx * wy * self.u2[(i, kx * p + ky)] * o.u2[(i, kx * p + ky)];
                }
            }
        }
        acc
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn sub(&self, o: &GridFunction) -> GridFunction {
        GridFunction {
            dims: self.dims,
            fin: &self.fin - &o.fin,
            ux: &self.ux - &o.ux,
            uy: &self.uy - &o.uy,
            u2: &self.u2 - &o.u2,
            xw: self.xw.clone(),
            yw: self.yw.clone(),
        }
    }
}

/// Compiled (f64) form of a polynomial state, evaluable anywhere.
#[derive(Debug, Clone)]
pub struct CompiledState {
    dims: Dims,
    fin: DVector<f64>,
    ux: Vec<PolyF64>,
    uy: Vec<PolyF64>,
    u2: Vec<PolyF64>,
}

impl CompiledState {
    pub fn new(u: &Z2Poly) -> Self {
        CompiledState {
            dims: u.dims,
            fin: DVector::from_iterator(u.dims.n0, u.fin.iter().map(q_to_f64)),
            ux: (0..u.dims.n1).map(|i| u.ux.at(i, 0).compile()).collect(),
            uy: (0..u.dims.n1).map(|i| u.uy.at(i, 0).compile()).collect(),
            u2: (0..u.dims.n2).map(|i| u.u2.at(i, 0).compile()).collect(),
        }
    }

    fn eval(&self, c: Comp, x: f64, y: f64) -> DVector<f64> {
        match c {
            Comp::Fin => self.fin.clone(),
            Comp::Lx => DVector::from_iterator(
                self.dims.n1,
                self.ux.iter().map(|p| p.eval([x, 0.0, 0.0, 0.0])),
            ),
            Comp::Ly => DVector::from_iterator(
                self.dims.n1,
                self.uy.iter().map(|p| p.eval([0.0, y, 0.0, 0.0])),
            ),
            Comp::L2 => DVector::from_iterator(
                self.dims.n2,
                self.u2.iter().map(|p| p.eval([x, y, 0.0, 0.0])),
            ),
        }
    }

    pub fn sample(&self, dom: &Interval, rule: &GaussLegendre) -> GridFunction {
        let (a, b, c, d) = dom_f64(dom);
        let xw = rule.mapped(a, b);
        let yw = rule.mapped(c, d);
        let p = rule.len();
        let mut ux = DMatrix::zeros(self.dims.n1, p);
        let mut uy = DMatrix::zeros(self.dims.n1, p);
        let mut u2 = DMatrix::zeros(self.dims.n2, p * p);
        for (k, &(x, _)) in xw.iter().enumerate() {
            for i in 0..self.dims.n1 {
                ux[(i, k)] = self.ux[i].eval([x, 0.0, 0.0, 0.0]);
            }
        }
        for (k, &(y, _)) in yw.iter().enumerate() {
            for i in 0..self.dims.n1 {
                uy[(i, k)] = self.uy[i].eval([0.0, y, 0.0, 0.0]);
            }
        }
        for (kx, &(x, _)) in xw.iter().enumerate() {
            for (ky, &(y, _)) in yw.iter().enumerate() {
                for i in 0..self.dims.n2 {
                    u2[(i, kx * p + ky)] = self.u2[i].eval([x, y, 0.0, 0.0]);
                }
            }
        }
        GridFunction { dims: self.dims, fin: self.fin.clone(), ux, uy, u2, xw, yw }
    }
}

fn dom_f64(dom: &Interval) -> (f64, f64, f64, f64) {
    (q_to_f64(&dom.a), q_to_f64(&dom.b), q_to_f64(&dom.c), q_to_f64(&dom.d))
}

struct CompiledKernel {
    r: Comp,
    c: Comp,
    tx: DirType,
    ty: DirType,
    rows: usize,
    cols: usize,
    polys: Vec<PolyF64>,
}

impl CompiledKernel {
    fn eval(&self, pt: [f64; 4]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.polys[i * self.cols + j].eval(pt))
    }
}

/// A PI operator compiled for repeated numeric application.
pub struct CompiledOp {
    pub dout: Dims,
    pub din: Dims,
    dom: Interval,
    kernels: Vec<CompiledKernel>,
}

impl CompiledOp {
    pub fn new(op: &PiOp<Q>) -> Self {
        let mut kernels = Vec::new();
        for ((r, c), blk) in op.blocks() {
            for sx in 0..blk.nx {
                for sy in 0..blk.ny {
                    let k = blk.at(sx, sy);
                    if k.is_zero() {
                        continue;
                    }
                    let mut polys = Vec::with_capacity(k.rows * k.cols);
                    for i in 0..k.rows {
                        for j in 0..k.cols {
                            polys.push(k.at(i, j).compile());
                        }
                    }
                    kernels.push(CompiledKernel {
                        r: *r,
                        c: *c,
                        tx: dir_type_of(r.has_x(), c.has_x(), sx),
                        ty: dir_type_of(r.has_y(), c.has_y(), sy),
                        rows: k.rows,
                        cols: k.cols,
                        polys,
                    });
                }
            }
        }
        CompiledOp { dout: op.dout, din: op.din, dom: op.dom.clone(), kernels }
    }

    /// Numerically evaluate the operator action on a polynomial state at the
    /// nodes of the given rule. Rule order must exceed the integrand degree
    /// for the result to be exact.
    pub fn apply(&self, u: &CompiledState, rule: &GaussLegendre) -> Result<GridFunction> {
        if self.din != u.dims {
            return Err(PiError::SigMismatch("compiled apply dims".into()));
        }
        let (a, b, c, d) = dom_f64(&self.dom);
        let xw = rule.mapped(a, b);
        let yw = rule.mapped(c, d);
        let p = rule.len();
        let mut out = GridFunction {
            dims: self.dout,
            fin: DVector::zeros(self.dout.n0),
            ux: DMatrix::zeros(self.dout.n1, p),
            uy: DMatrix::zeros(self.dout.n1, p),
            u2: DMatrix::zeros(self.dout.n2, p * p),
            xw: xw.clone(),
            yw: yw.clone(),
        };
        for ker in &self.kernels {
            match ker.r {
                Comp::Fin => {
                    let v = slot_value(ker, u, None, None, rule, a, b, c, d);
                    out.fin += v;
                }
                Comp::Lx => {
                    for (kx, &(x, _)) in xw.iter().enumerate() {
                        let v = slot_value(ker, u, Some(x), None, rule, a, b, c, d);
                        for i in 0..self.dout.n1 {
                            out.ux[(i, kx)] += v[i];
                        }
                    }
                }
                Comp::Ly => {
                    for (ky, &(y, _)) in yw.iter().enumerate() {
                        let v = slot_value(ker, u, None, Some(y), rule, a, b, c, d);
                        for i in 0..self.dout.n1 {
                            out.uy[(i, ky)] += v[i];
                        }
                    }
                }
                Comp::L2 => {
                    for (kx, &(x, _)) in xw.iter().enumerate() {
                        for (ky, &(y, _)) in yw.iter().enumerate() {
                            let v = slot_value(ker, u, Some(x), Some(y), rule, a, b, c, d);
                            for i in 0..self.dout.n2 {
                                out.u2[(i, kx * p + ky)] += v[i];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One axis sample: kernel coordinates (free, dummy), input coordinate, weight.
type AxisSample = (f64, f64, f64, f64);

fn axis_samples(
    t: DirType,
    o: Option<f64>,
    lo: f64,
    hi: f64,
    rule: &GaussLegendre,
) -> Vec<AxisSample> {
    match t {
        DirType::S => vec![(0.0, 0.0, 0.0, 1.0)],
        DirType::E => vec![(o.unwrap(), 0.0, 0.0, 1.0)],
        DirType::M => {
            let x = o.unwrap();
            vec![(x, 0.0, x, 1.0)]
        }
        DirType::I => rule.mapped(lo, hi).into_iter().map(|(t, w)| (t, 0.0, t, w)).collect(),
        DirType::L => {
            let x = o.unwrap();
            rule.mapped(lo, x).into_iter().map(|(t, w)| (x, t, t, w)).collect()
        }
        DirType::U => {
            let x = o.unwrap();
            rule.mapped(x, hi).into_iter().map(|(t, w)| (x, t, t, w)).collect()
        }
    }
}

fn slot_value(
    ker: &CompiledKernel,
    u: &CompiledState,
    ox: Option<f64>,
    oy: Option<f64>,
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
) -> DVector<f64> {
    let xs = axis_samples(ker.tx, ox, a, b, rule);
    let ys = axis_samples(ker.ty, oy, c, d, rule);
    let mut acc = DVector::zeros(ker.rows);
    for &(kx, ktheta, ix, wx) in &xs {
        for &(ky, knu, iy, wy) in &ys {
            let km = ker.eval([kx, ky, ktheta, knu]);
            let v = u.eval(ker.c, ix, iy);
            acc += km * v * (wx * wy);
        }
    }
    acc
}

/// Quadrature order sufficient for integrands of the given total degree.
pub fn order_for_degree(deg: u32) -> usize {
    (deg as usize / 2 + 2).max(4)
}

/// Convenience: numeric application of an operator to a symbolic state.
pub fn apply_num(op: &PiOp<Q>, u: &Z2Poly, rule: &GaussLegendre) -> Result<GridFunction> {
    CompiledOp::new(op).apply(&CompiledState::new(u), rule)
}

/// Numeric inner product `<v, op u>` by quadrature only.
pub fn inner_apply_num(op: &PiOp<Q>, v: &Z2Poly, u: &Z2Poly, rule: &GaussLegendre) -> Result<f64> {
    let ou = apply_num(op, u, rule)?;
    let vs = CompiledState::new(v).sample(&op.dom, rule);
    Ok(vs.inner(&ou))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{qi, qr};

    #[test]
    fn gl_exactness() {
        // order-n rule integrates degree 2n-1 exactly
        let rule = GaussLegendre::new(6);
        let mut acc = 0.0;
        for (x, w) in rule.mapped(0.0, 1.0) {
            acc += w * x.powi(11);
        }
        assert!((acc - 1.0 / 12.0).abs() < 1e-14, "got {acc}");
    }

    #[test]
    fn quadrature_matches_exact_integration() {
        // poly_eval(poly_int(...)) equals Gauss-Legendre quadrature of the
        // integrand to machine precision.
        let k = Poly::var(Var::X)
            .mul(&Poly::var(Var::X))
            .add(&Poly::var(Var::X).scale(&qr(3, 7)))
            .add(&Poly::iconst(2));
        use crate::poly::IntBound::Const;
        let exact = k
            .integrate(Var::X, &Const(qi(0)), &Const(qi(1)))
            .unwrap()
            .eval_q(&Default::default())
            .unwrap();
        let exact = q_to_f64(&exact);
        let rule = GaussLegendre::new(8);
        let ck = k.compile();
        let num: f64 = rule.mapped(0.0, 1.0).into_iter().map(|(x, w)| w * ck.eval([x, 0.0, 0.0, 0.0])).sum();
        assert!((num - exact).abs() < 1e-14);
    }
}
