//! Parameter bundles for 2D partial integral operators and their *-algebra.
//!
//! An operator acts on `Z2 = R^{n0} x L2^{n1}[a,b] x L2^{n1}[c,d] x
//! L2^{n2}[a,b]x[c,d]` and is stored blockwise over the four components.
//! Every block factors along the two axes: per axis the action is one of
//!
//! - `S`: no dependence on the axis (scalar to scalar),
//! - `E`: embedding, kernel `f(x)` times a value constant along the axis,
//! - `I`: integrate the axis out over the whole interval,
//! - `M`/`L`/`U`: multiplier, lower (`int_a^x`) and upper (`int_x^b`)
//!   Volterra kernels between functions of the axis.
//!
//! The 3x3 grids of the 011/2D parameter bundles and all their cross blocks
//! are exactly the possible (x-type, y-type) pairs, so addition, adjoint,
//! composition, derivative composition and inversion are implemented once on
//! this uniform form. Composition works per axis by a case table; iterated
//! integrals are split at the free variable, which is where lower/upper
//! kernels mix.

use crate::poly::{qi, qr, Coeff, IntBound, Interval, Mono, Poly, PolyMat, Q, Var};
use crate::{PiError, Result};
use num_traits::{ToPrimitive, Zero};
use std::collections::BTreeMap;

/// Dimension signature of a `Z2` space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub n0: usize,
    pub n1: usize,
    pub n2: usize,
}

impl Dims {
    pub fn new(n0: usize, n1: usize, n2: usize) -> Self {
        Dims { n0, n1, n2 }
    }

    pub fn fin(n0: usize) -> Self {
        Dims { n0, n1: 0, n2: 0 }
    }

    pub fn l2(n2: usize) -> Self {
        Dims { n0: 0, n1: 0, n2 }
    }

    pub fn comp(&self, c: Comp) -> usize {
        match c {
            Comp::Fin => self.n0,
            Comp::Lx | Comp::Ly => self.n1,
            Comp::L2 => self.n2,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.n0 == 0 && self.n1 == 0 && self.n2 == 0
    }

    pub fn add(&self, o: &Dims) -> Dims {
        Dims { n0: self.n0 + o.n0, n1: self.n1 + o.n1, n2: self.n2 + o.n2 }
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{{},{},{}}}", self.n0, self.n1, self.n2)
    }
}

/// Component of a `Z2` space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Comp {
    Fin,
    Lx,
    Ly,
    L2,
}

impl Comp {
    pub const ALL: [Comp; 4] = [Comp::Fin, Comp::Lx, Comp::Ly, Comp::L2];

    pub fn has_x(self) -> bool {
        matches!(self, Comp::Lx | Comp::L2)
    }

    pub fn has_y(self) -> bool {
        matches!(self, Comp::Ly | Comp::L2)
    }
}

/// Per-axis elementary operator type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirType {
    S,
    E,
    I,
    M,
    L,
    U,
}

impl DirType {
    pub fn of(out_has: bool, in_has: bool, slot: usize) -> DirType {
        match (out_has, in_has) {
            (false, false) => DirType::S,
            (true, false) => DirType::E,
            (false, true) => DirType::I,
            (true, true) => [DirType::M, DirType::L, DirType::U][slot],
        }
    }
}

/// Number of kernel slots a block has along one axis.
fn n_slots(out_has: bool, in_has: bool) -> usize {
    if out_has && in_has {
        3
    } else {
        1
    }
}

/// Kernels of one component block, indexed `[x_slot][y_slot]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<C: Coeff> {
    pub nx: usize,
    pub ny: usize,
    pub k: Vec<PolyMat<C>>,
}

impl<C: Coeff> Block<C> {
    fn zero(nx: usize, ny: usize, rows: usize, cols: usize) -> Self {
        Block { nx, ny, k: vec![PolyMat::zeros(rows, cols); nx * ny] }
    }

    pub fn at(&self, sx: usize, sy: usize) -> &PolyMat<C> {
        &self.k[sx * self.ny + sy]
    }

    fn at_mut(&mut self, sx: usize, sy: usize) -> &mut PolyMat<C> {
        &mut self.k[sx * self.ny + sy]
    }

    fn is_zero(&self) -> bool {
        self.k.iter().all(|m| m.is_zero())
    }
}

/// A 0112-PI operator parameter bundle: `Z2^{din} -> Z2^{dout}`.
///
/// Blocks absent from the map are zero. Kernel variable conventions: the
/// output point is `(x, y)`, integration dummies are `theta` (x-axis) and
/// `nu` (y-axis); `I`-type axes write their kernel in the integrated
/// variable (`x` resp. `y`).
#[derive(Debug, Clone, PartialEq)]
pub struct PiOp<C: Coeff = Q> {
    pub dout: Dims,
    pub din: Dims,
    pub dom: Interval,
    blocks: BTreeMap<(Comp, Comp), Block<C>>,
}

/// Variables a kernel in the given block/slot may depend on.
pub fn allowed_vars(r: Comp, c: Comp, sx: usize, sy: usize) -> [bool; 4] {
    let tx = DirType::of(r.has_x(), c.has_x(), sx);
    let ty = DirType::of(r.has_y(), c.has_y(), sy);
    let mut ok = [false; 4];
    match tx {
        DirType::S => {}
        DirType::E | DirType::I | DirType::M => ok[Var::X.index()] = true,
        DirType::L | DirType::U => {
            ok[Var::X.index()] = true;
            ok[Var::Theta.index()] = true;
        }
    }
    match ty {
        DirType::S => {}
        DirType::E | DirType::I | DirType::M => ok[Var::Y.index()] = true,
        DirType::L | DirType::U => {
            ok[Var::Y.index()] = true;
            ok[Var::Nu.index()] = true;
        }
    }
    ok
}

impl<C: Coeff> PiOp<C> {
    pub fn zero(dout: Dims, din: Dims, dom: Interval) -> Self {
        PiOp { dout, din, dom, blocks: BTreeMap::new() }
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&(Comp, Comp), &Block<C>)> {
        self.blocks.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.values().all(|b| b.is_zero())
    }

    /// Kernel of a block slot; `None` if the whole block is zero.
    pub fn kernel(&self, r: Comp, c: Comp, sx: usize, sy: usize) -> Option<&PolyMat<C>> {
        self.blocks.get(&(r, c)).map(|b| b.at(sx, sy))
    }

    fn block_shape(&self, r: Comp, c: Comp) -> (usize, usize, usize, usize) {
        let nx = n_slots(r.has_x(), c.has_x());
        let ny = n_slots(r.has_y(), c.has_y());
        (nx, ny, self.dout.comp(r), self.din.comp(c))
    }

    fn block_mut(&mut self, r: Comp, c: Comp) -> &mut Block<C> {
        let (nx, ny, rows, cols) = self.block_shape(r, c);
        self.blocks.entry((r, c)).or_insert_with(|| Block::zero(nx, ny, rows, cols))
    }

    /// Install (add into) a kernel. Panics on shape or variable misuse.
    pub fn add_kernel(&mut self, r: Comp, c: Comp, sx: usize, sy: usize, k: &PolyMat<C>) {
        if k.is_zero() {
            return;
        }
        let (nx, ny, rows, cols) = self.block_shape(r, c);
        assert!(sx < nx && sy < ny, "slot out of range for block {r:?},{c:?}");
        assert_eq!((k.rows, k.cols), (rows, cols), "kernel shape for block {r:?},{c:?}");
        let ok = allowed_vars(r, c, sx, sy);
        for v in Var::ALL {
            if !ok[v.index()] {
                assert!(
                    !k.depends_on(v),
                    "kernel in block {r:?},{c:?} slot ({sx},{sy}) must not depend on {v:?}"
                );
            }
        }
        let tgt = self.block_mut(r, c).at_mut(sx, sy);
        *tgt = tgt.add(k);
    }

    pub fn set_kernel(&mut self, r: Comp, c: Comp, sx: usize, sy: usize, k: PolyMat<C>) {
        let (nx, ny, rows, cols) = self.block_shape(r, c);
        assert!(sx < nx && sy < ny);
        assert_eq!((k.rows, k.cols), (rows, cols), "kernel shape for block {r:?},{c:?}");
        *self.block_mut(r, c).at_mut(sx, sy) = PolyMat::zeros(rows, cols);
        self.add_kernel(r, c, sx, sy, &k);
    }

    fn sig_eq(a: &Dims, b: &Dims) -> bool {
        a == b
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !Self::sig_eq(&self.dout, &other.dout) || !Self::sig_eq(&self.din, &other.din) {
            return Err(PiError::SigMismatch(format!(
                "add: {}x{} vs {}x{}",
                self.dout, self.din, other.dout, other.din
            )));
        }
        let mut out = self.clone();
        for ((r, c), blk) in &other.blocks {
            for sx in 0..blk.nx {
                for sy in 0..blk.ny {
                    out.add_kernel(*r, *c, sx, sy, blk.at(sx, sy));
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.map_kernels(|m| m.neg())
    }

    pub fn scale(&self, k: &Q) -> Self {
        self.map_kernels(|m| m.scale(k))
    }

    pub fn map_kernels(&self, f: impl Fn(&PolyMat<C>) -> PolyMat<C>) -> Self {
        let mut out = PiOp::zero(self.dout, self.din, self.dom.clone());
        for ((r, c), blk) in &self.blocks {
            for sx in 0..blk.nx {
                for sy in 0..blk.ny {
                    let m = f(blk.at(sx, sy));
                    if !m.is_zero() {
                        out.add_kernel(*r, *c, sx, sy, &m);
                    }
                }
            }
        }
        out
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D + Copy) -> PiOp<D> {
        let mut out = PiOp::<D>::zero(self.dout, self.din, self.dom.clone());
        for ((r, c), blk) in &self.blocks {
            for sx in 0..blk.nx {
                for sy in 0..blk.ny {
                    let m = blk.at(sx, sy).map_coeffs(f);
                    if !m.is_zero() {
                        out.add_kernel(*r, *c, sx, sy, &m);
                    }
                }
            }
        }
        out
    }

    /// Adjoint with respect to the unweighted `Z2` inner product.
    pub fn adjoint(&self) -> Self {
        let mut out = PiOp::zero(self.din, self.dout, self.dom.clone());
        for ((r, c), blk) in &self.blocks {
            for sx in 0..blk.nx {
                for sy in 0..blk.ny {
                    let k = blk.at(sx, sy);
                    if k.is_zero() {
                        continue;
                    }
                    let tx = DirType::of(r.has_x(), c.has_x(), sx);
                    let ty = DirType::of(r.has_y(), c.has_y(), sy);
                    let (sx2, swap_x) = match tx {
                        DirType::L => (2, true),
                        DirType::U => (1, true),
                        DirType::M => (0, false),
                        _ => (0, false),
                    };
                    let (sy2, swap_y) = match ty {
                        DirType::L => (2, true),
                        DirType::U => (1, true),
                        DirType::M => (0, false),
                        _ => (0, false),
                    };
                    let mut m = k.transpose();
                    if swap_x {
                        m = m.swap(Var::X, Var::Theta);
                    }
                    if swap_y {
                        m = m.swap(Var::Y, Var::Nu);
                    }
                    out.add_kernel(*c, *r, sx2, sy2, &m);
                }
            }
        }
        out
    }
}

/// Axis selector for the composition machinery.
#[derive(Debug, Clone, Copy)]
enum Axis {
    X,
    Y,
}

impl Axis {
    fn free(self) -> Var {
        match self {
            Axis::X => Var::X,
            Axis::Y => Var::Y,
        }
    }
    fn dummy(self) -> Var {
        match self {
            Axis::X => Var::Theta,
            Axis::Y => Var::Nu,
        }
    }
    fn lo(self, dom: &Interval) -> Q {
        match self {
            Axis::X => dom.a.clone(),
            Axis::Y => dom.c.clone(),
        }
    }
    fn hi(self, dom: &Interval) -> Q {
        match self {
            Axis::X => dom.b.clone(),
            Axis::Y => dom.d.clone(),
        }
    }
}

/// Integration bound roles in the per-axis composition table.
#[derive(Debug, Clone, Copy)]
enum Bnd {
    Lo,
    Hi,
    Free,
    Dummy,
}

impl Bnd {
    fn poly<C: Coeff>(self, axis: Axis, dom: &Interval) -> Poly<C> {
        match self {
            Bnd::Lo => Poly::constant(C::from_q(axis.lo(dom))),
            Bnd::Hi => Poly::constant(C::from_q(axis.hi(dom))),
            Bnd::Free => Poly::term(C::from_q(qi(1)), Mono::var(axis.free())),
            Bnd::Dummy => Poly::term(C::from_q(qi(1)), Mono::var(axis.dummy())),
        }
    }
}

/// Which variable of the left kernel carries the convolution dummy.
#[derive(Debug, Clone, Copy)]
enum FSep {
    Free,
    Dummy,
}

/// One per-axis contribution of a composition case.
#[derive(Debug, Clone, Copy)]
enum DirContrib {
    /// Plain kernel product; optionally rename the right kernel's free
    /// variable to the dummy first (right factor evaluated at the dummy).
    Prod { rename_g: bool },
    /// Convolution over a fresh dummy between `lo` and `hi`; optionally
    /// rename the surviving dummy back to the free variable afterwards.
    Conv { f_sep: FSep, lo: Bnd, hi: Bnd, rename: bool },
}

/// Per-axis composition table: contributions of `left ∘ right` with their
/// output slots (slot indices only meaningful when the output axis has the
/// 3-slot M/L/U structure; otherwise the single slot 0 is used).
fn dir_table(lt: DirType, rt: DirType) -> Vec<(usize, DirContrib)> {
    use DirContrib::*;
    use DirType::*;
    match (lt, rt) {
        (S, S) | (S, I) | (E, S) => vec![(0, Prod { rename_g: false })],
        (E, I) => vec![
            (1, Prod { rename_g: true }),
            (2, Prod { rename_g: true }),
        ],
        (I, E) => vec![(0, Conv { f_sep: FSep::Free, lo: Bnd::Lo, hi: Bnd::Hi, rename: false })],
        (I, M) => vec![(0, Prod { rename_g: false })],
        (I, L) => vec![(0, Conv { f_sep: FSep::Free, lo: Bnd::Dummy, hi: Bnd::Hi, rename: true })],
        (I, U) => vec![(0, Conv { f_sep: FSep::Free, lo: Bnd::Lo, hi: Bnd::Dummy, rename: true })],
        (M, E) => vec![(0, Prod { rename_g: false })],
        (L, E) => vec![(0, Conv { f_sep: FSep::Dummy, lo: Bnd::Lo, hi: Bnd::Free, rename: false })],
        (U, E) => vec![(0, Conv { f_sep: FSep::Dummy, lo: Bnd::Free, hi: Bnd::Hi, rename: false })],
        (M, M) => vec![(0, Prod { rename_g: false })],
        (M, L) => vec![(1, Prod { rename_g: false })],
        (M, U) => vec![(2, Prod { rename_g: false })],
        (L, M) => vec![(1, Prod { rename_g: true })],
        (U, M) => vec![(2, Prod { rename_g: true })],
        (L, L) => vec![(1, Conv { f_sep: FSep::Dummy, lo: Bnd::Dummy, hi: Bnd::Free, rename: false })],
        (L, U) => vec![
            (1, Conv { f_sep: FSep::Dummy, lo: Bnd::Lo, hi: Bnd::Dummy, rename: false }),
            (2, Conv { f_sep: FSep::Dummy, lo: Bnd::Lo, hi: Bnd::Free, rename: false }),
        ],
        (U, L) => vec![
            (1, Conv { f_sep: FSep::Dummy, lo: Bnd::Free, hi: Bnd::Hi, rename: false }),
            (2, Conv { f_sep: FSep::Dummy, lo: Bnd::Dummy, hi: Bnd::Hi, rename: false }),
        ],
        (U, U) => vec![(2, Conv { f_sep: FSep::Dummy, lo: Bnd::Free, hi: Bnd::Dummy, rename: false })],
        _ => panic!("invalid directional composition {lt:?} ∘ {rt:?}"),
    }
}

/// A kernel pair awaiting its final matrix product; weights from already
/// processed axes are folded into the left factor.
struct Pair<C: Coeff> {
    l: PolyMat<C>,
    r: PolyMat<C>,
}

fn stage<C: Coeff>(
    pairs: Vec<Pair<C>>,
    contrib: DirContrib,
    axis: Axis,
    dom: &Interval,
) -> Vec<Pair<C>> {
    let free = axis.free();
    let dummy = axis.dummy();
    let mut out = Vec::new();
    for p in pairs {
        match contrib {
            DirContrib::Prod { rename_g } => {
                let r = if rename_g { p.r.rename(free, dummy) } else { p.r };
                out.push(Pair { l: p.l, r });
            }
            DirContrib::Conv { f_sep, lo, hi, rename } => {
                let f_var = match f_sep {
                    FSep::Free => free,
                    FSep::Dummy => dummy,
                };
                // left = sum_k L_k * f_var^k, right = sum_p free^p * R_p
                let lparts = separate(&p.l, f_var);
                let rparts = separate(&p.r, free);
                let lo_p: Poly<C> = lo.poly(axis, dom);
                let hi_p: Poly<C> = hi.poly(axis, dom);
                for (k, lk) in lparts.iter() {
                    for (q, rq) in rparts.iter() {
                        let e = (k + q + 1) as u32;
                        let mut w = pow(&hi_p, e).sub(&pow(&lo_p, e)).scale(&qr(1, e as i64));
                        let mut r = rq.clone();
                        if rename {
                            w = w.rename(dummy, free);
                            r = r.rename(dummy, free);
                        }
                        out.push(Pair { l: lk.scale_poly(&w), r });
                    }
                }
            }
        }
    }
    out
}

fn separate<C: Coeff>(m: &PolyMat<C>, v: Var) -> Vec<(usize, PolyMat<C>)> {
    let deg = (0..m.rows)
        .flat_map(|i| (0..m.cols).map(move |j| (i, j)))
        .map(|(i, j)| m.at(i, j).degree_in(v))
        .max()
        .unwrap_or(0) as usize;
    let mut parts: Vec<PolyMat<C>> = vec![PolyMat::zeros(m.rows, m.cols); deg + 1];
    for i in 0..m.rows {
        for j in 0..m.cols {
            for (k, pk) in m.at(i, j).coeffs_of(v).into_iter().enumerate() {
                if !pk.is_zero() {
                    *parts[k].at_mut(i, j) = pk;
                }
            }
        }
    }
    parts.into_iter().enumerate().filter(|(_, p)| !p.is_zero()).collect()
}

fn pow<C: Coeff>(p: &Poly<C>, e: u32) -> Poly<C> {
    let mut out = Poly::term(C::from_q(qi(1)), Mono::ONE);
    for _ in 0..e {
        out = out.try_mul(p, u32::MAX).expect("no cap");
    }
    out
}

impl<C: Coeff> PiOp<C> {
    /// Parameters of the operator product `self ∘ rhs`.
    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        if self.din != rhs.dout {
            return Err(PiError::SigMismatch(format!(
                "compose: inner dims {} vs {}",
                self.din, rhs.dout
            )));
        }
        if self.dom != rhs.dom {
            return Err(PiError::SigMismatch("compose: different domains".into()));
        }
        let mut out = PiOp::zero(self.dout, rhs.din, self.dom.clone());
        for ((r, m), lblk) in &self.blocks {
            for ((m2, c), rblk) in &rhs.blocks {
                if m2 != m {
                    continue;
                }
                for sxl in 0..lblk.nx {
                    for syl in 0..lblk.ny {
                        let f = lblk.at(sxl, syl);
                        if f.is_zero() {
                            continue;
                        }
                        let ltx = DirType::of(r.has_x(), m.has_x(), sxl);
                        let lty = DirType::of(r.has_y(), m.has_y(), syl);
                        for sxr in 0..rblk.nx {
                            for syr in 0..rblk.ny {
                                let g = rblk.at(sxr, syr);
                                if g.is_zero() {
                                    continue;
                                }
                                let rtx = DirType::of(m.has_x(), c.has_x(), sxr);
                                let rty = DirType::of(m.has_y(), c.has_y(), syr);
                                for (ox, cx) in dir_table(ltx, rtx) {
                                    for (oy, cy) in dir_table(lty, rty) {
                                        let pairs =
                                            vec![Pair { l: f.clone(), r: g.clone() }];
                                        let pairs = stage(pairs, cx, Axis::X, &self.dom);
                                        let pairs = stage(pairs, cy, Axis::Y, &self.dom);
                                        let mut acc =
                                            PolyMat::zeros(f.rows, g.cols);
                                        for p in pairs {
                                            acc = acc.add(&p.l.try_matmul(&p.r, u32::MAX)?);
                                        }
                                        if acc.is_zero() {
                                            continue;
                                        }
                                        let osx = if n_slots(r.has_x(), c.has_x()) == 3 { ox } else { 0 };
                                        let osy = if n_slots(r.has_y(), c.has_y()) == 3 { oy } else { 0 };
                                        // degree-cap guard on composition output
                                        let deg = acc.total_degree();
                                        if deg > crate::poly::DEGREE_CAP {
                                            return Err(PiError::DegreeCap {
                                                deg,
                                                cap: crate::poly::DEGREE_CAP,
                                            });
                                        }
                                        out.add_kernel(*r, *c, osx, osy, &acc);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Parameters of `∂x ∘ self`, valid when the operator maps into pure
    /// `L2` (no finite or 1D output components). Kernels that would require
    /// differentiating the input state (x-multiplier slots) must be zero.
    pub fn diff_x(&self) -> Result<Self> {
        if self.dout.n0 != 0 || self.dout.n1 != 0 {
            return Err(PiError::DiffHypothesis(
                "x-derivative composition needs a pure L2 output space".into(),
            ));
        }
        let mut out = PiOp::zero(self.dout, self.din, self.dom.clone());
        for ((r, c), blk) in &self.blocks {
            debug_assert_eq!(*r, Comp::L2);
            if c.has_x() {
                for sy in 0..blk.ny {
                    let m0 = blk.at(0, sy);
                    if !m0.is_zero() {
                        return Err(PiError::DiffHypothesis(format!(
                            "x-multiplier kernel of block {r:?},{c:?} is nonzero"
                        )));
                    }
                    let kl = blk.at(1, sy);
                    let ku = blk.at(2, sy);
                    // trace terms: K_L(x,y,x,.) - K_U(x,y,x,.)
                    let trace = kl.rename(Var::Theta, Var::X).sub(&ku.rename(Var::Theta, Var::X));
                    out.add_kernel(*r, *c, 0, sy, &trace);
                    out.add_kernel(*r, *c, 1, sy, &kl.diff(Var::X));
                    out.add_kernel(*r, *c, 2, sy, &ku.diff(Var::X));
                }
            } else {
                for sy in 0..blk.ny {
                    out.add_kernel(*r, *c, 0, sy, &blk.at(0, sy).diff(Var::X));
                }
            }
        }
        Ok(out)
    }

    /// Parameters of `∂y ∘ self`; mirror of [`PiOp::diff_x`].
    pub fn diff_y(&self) -> Result<Self> {
        if self.dout.n0 != 0 || self.dout.n1 != 0 {
            return Err(PiError::DiffHypothesis(
                "y-derivative composition needs a pure L2 output space".into(),
            ));
        }
        let mut out = PiOp::zero(self.dout, self.din, self.dom.clone());
        for ((r, c), blk) in &self.blocks {
            if c.has_y() {
                for sx in 0..blk.nx {
                    let m0 = blk.at(sx, 0);
                    if !m0.is_zero() {
                        return Err(PiError::DiffHypothesis(format!(
                            "y-multiplier kernel of block {r:?},{c:?} is nonzero"
                        )));
                    }
                    let kl = blk.at(sx, 1);
                    let ku = blk.at(sx, 2);
                    let trace = kl.rename(Var::Nu, Var::Y).sub(&ku.rename(Var::Nu, Var::Y));
                    out.add_kernel(*r, *c, sx, 0, &trace);
                    out.add_kernel(*r, *c, sx, 1, &kl.diff(Var::Y));
                    out.add_kernel(*r, *c, sx, 2, &ku.diff(Var::Y));
                }
            } else {
                for sx in 0..blk.nx {
                    out.add_kernel(*r, *c, sx, 0, &blk.at(sx, 0).diff(Var::Y));
                }
            }
        }
        Ok(out)
    }

    /// Restrict to a row range of the `L2` output component.
    pub fn slice_l2_rows(&self, r0: usize, r1: usize) -> Result<Self> {
        if self.dout.n0 != 0 || self.dout.n1 != 0 {
            return Err(PiError::SigMismatch("slice_l2_rows needs pure L2 output".into()));
        }
        let mut out = PiOp::zero(Dims::l2(r1 - r0), self.din, self.dom.clone());
        for ((r, c), blk) in &self.blocks {
            for sx in 0..blk.nx {
                for sy in 0..blk.ny {
                    let k = blk.at(sx, sy);
                    if k.is_zero() {
                        continue;
                    }
                    out.add_kernel(*r, *c, sx, sy, &k.slice_rows(r0, r1));
                }
            }
        }
        Ok(out)
    }

    /// Concatenated operator acting on the concatenated `Z2` space.
    pub fn block_grid(grid: &[Vec<&PiOp<C>>]) -> Result<Self> {
        assert!(!grid.is_empty() && !grid[0].is_empty());
        let nrows = grid.len();
        let ncols = grid[0].len();
        let dom = grid[0][0].dom.clone();
        // consistency of row output dims and column input dims
        let mut dout = Dims::new(0, 0, 0);
        let mut din = Dims::new(0, 0, 0);
        for row in grid {
            assert_eq!(row.len(), ncols, "ragged block grid");
            dout = dout.add(&row[0].dout);
        }
        for j in 0..ncols {
            din = din.add(&grid[0][j].din);
        }
        for (i, row) in grid.iter().enumerate() {
            for (j, op) in row.iter().enumerate() {
                if op.dout != grid[i][0].dout || op.din != grid[0][j].din {
                    return Err(PiError::SigMismatch(format!(
                        "block ({i},{j}) has dims {}x{}, expected {}x{}",
                        op.dout, op.din, grid[i][0].dout, grid[0][j].din
                    )));
                }
                if op.dom != dom {
                    return Err(PiError::SigMismatch("block grid domain mismatch".into()));
                }
            }
        }
        let mut out = PiOp::zero(dout, din, dom);
        // per-component offsets
        let mut row_off = vec![[0usize; 4]; nrows];
        for i in 1..nrows {
            for (ci, c) in Comp::ALL.iter().enumerate() {
                row_off[i][ci] = row_off[i - 1][ci] + grid[i - 1][0].dout.comp(*c);
            }
        }
        let mut col_off = vec![[0usize; 4]; ncols];
        for j in 1..ncols {
            for (ci, c) in Comp::ALL.iter().enumerate() {
                col_off[j][ci] = col_off[j - 1][ci] + grid[0][j - 1].din.comp(*c);
            }
        }
        let comp_idx = |c: Comp| Comp::ALL.iter().position(|&x| x == c).unwrap();
        for (i, row) in grid.iter().enumerate() {
            for (j, op) in row.iter().enumerate() {
                for ((r, c), blk) in &op.blocks {
                    let ro = row_off[i][comp_idx(*r)];
                    let co = col_off[j][comp_idx(*c)];
                    for sx in 0..blk.nx {
                        for sy in 0..blk.ny {
                            let k = blk.at(sx, sy);
                            if k.is_zero() {
                                continue;
                            }
                            let (_, _, rows, cols) = out.block_shape(*r, *c);
                            let mut big = PolyMat::zeros(rows, cols);
                            for ii in 0..k.rows {
                                for jj in 0..k.cols {
                                    *big.at_mut(ro + ii, co + jj) = k.at(ii, jj).clone();
                                }
                            }
                            out.add_kernel(*r, *c, sx, sy, &big);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

impl PiOp<Q> {
    /// Identity on `Z2^{d}`.
    pub fn identity(d: Dims, dom: Interval) -> Self {
        let mut out = PiOp::zero(d, d, dom);
        if d.n0 > 0 {
            out.set_kernel(Comp::Fin, Comp::Fin, 0, 0, PolyMat::identity(d.n0));
        }
        if d.n1 > 0 {
            out.set_kernel(Comp::Lx, Comp::Lx, 0, 0, PolyMat::identity(d.n1));
            out.set_kernel(Comp::Ly, Comp::Ly, 0, 0, PolyMat::identity(d.n1));
        }
        if d.n2 > 0 {
            out.set_kernel(Comp::L2, Comp::L2, 0, 0, PolyMat::identity(d.n2));
        }
        out
    }

    /// Multiplication operator `v(x,y) -> K(x,y) v(x,y)` on `L2`.
    pub fn multiplier_2d(k: PolyMat<Q>, dom: Interval) -> Self {
        let mut out = PiOp::zero(Dims::l2(k.rows), Dims::l2(k.cols), dom);
        out.set_kernel(Comp::L2, Comp::L2, 0, 0, k);
        out
    }

    /// Multiplier embedding `R^{nw} -> L2`: `w -> K(x,y) w`.
    pub fn mult_from_fin(k: PolyMat<Q>, dom: Interval) -> Self {
        let mut out = PiOp::zero(Dims::l2(k.rows), Dims::fin(k.cols), dom);
        out.set_kernel(Comp::L2, Comp::Fin, 0, 0, k);
        out
    }

    /// Full-domain integration against a kernel: `v -> int int K(x,y) v(x,y)`.
    pub fn int_all(k: PolyMat<Q>, dom: Interval) -> Self {
        let mut out = PiOp::zero(Dims::fin(k.rows), Dims::l2(k.cols), dom);
        out.set_kernel(Comp::Fin, Comp::L2, 0, 0, k);
        out
    }

    /// Constant matrix on the finite component.
    pub fn const_fin(k: PolyMat<Q>, dom: Interval) -> Self {
        let mut out = PiOp::zero(Dims::fin(k.rows), Dims::fin(k.cols), dom);
        out.set_kernel(Comp::Fin, Comp::Fin, 0, 0, k);
        out
    }

    /// Lift to affine-form coefficients.
    pub fn lift(&self) -> PiOp<crate::lin::Lin> {
        self.map_coeffs(|q| crate::lin::Lin::from_const(q.clone()))
    }
}

impl PiOp<crate::lin::Lin> {
    /// Substitute numeric values for every unknown.
    pub fn subst(&self, values: &dyn Fn(crate::lin::UnknownId) -> Q) -> PiOp<Q> {
        self.map_coeffs(|l| l.eval(&|id| values(id)))
    }
}

// ---------------------------------------------------------------------------
// Inversion of multiplier-plus-finite-rank operators on Z1 (n2 = 0).
// ---------------------------------------------------------------------------

/// Exact inverse of a dense rational matrix by Gauss-Jordan elimination.
pub fn invert_q_matrix(m: &[Vec<Q>]) -> Option<Vec<Vec<Q>>> {
    let n = m.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let mut a: Vec<Vec<Q>> = m.iter().map(|row| {
        assert_eq!(row.len(), n, "square matrix");
        row.clone()
    }).collect();
    let mut inv: Vec<Vec<Q>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { qi(1) } else { qi(0) }).collect()).collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] /= &p;
            inv[col][j] /= &p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in 0..n {
                    let t = &a[col][j] * &f;
                    a[r][j] -= t;
                    let t = &inv[col][j] * &f;
                    inv[r][j] -= t;
                }
            }
        }
    }
    Some(inv)
}

fn mat_to_rows(m: &PolyMat<Q>) -> Option<Vec<Vec<Q>>> {
    let mut out = Vec::with_capacity(m.rows);
    for i in 0..m.rows {
        let mut row = Vec::with_capacity(m.cols);
        for j in 0..m.cols {
            let p = m.at(i, j);
            if p.is_zero() {
                row.push(qi(0));
            } else if p.n_terms() == 1 && !p.depends_on(Var::X) && !p.depends_on(Var::Y)
                && !p.depends_on(Var::Theta) && !p.depends_on(Var::Nu)
            {
                row.push(p.terms().next().unwrap().1.clone());
            } else {
                return None;
            }
        }
        out.push(row);
    }
    Some(out)
}

fn rows_to_mat(rows: &[Vec<Q>]) -> PolyMat<Q> {
    PolyMat::from_const(rows)
}

/// Diagnostics from the Woodbury inversion.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InverseDiagnostics {
    /// Rank of the finite-rank correction (columns of the factor).
    pub rank: usize,
    /// Condition number of the Woodbury core, estimated in floats.
    pub core_cond: f64,
}

impl PiOp<Q> {
    /// Inverse of a 011-PI operator (`n2 = 0`) in multiplier-plus-finite-rank
    /// form: the diagonal multiplier blocks must be constant and invertible,
    /// and the 1D L/U kernel pairs must agree (full-range integrals), which
    /// makes the integral part separable through monomials. The inverse is
    /// computed with the Woodbury identity, exactly in rational arithmetic.
    pub fn inverse_011(&self) -> Result<(PiOp<Q>, InverseDiagnostics)> {
        if self.dout != self.din || self.dout.n2 != 0 {
            return Err(PiError::SigMismatch("inverse_011 needs a square Z1 operator".into()));
        }
        let d = self.dout;
        let dom = self.dom.clone();
        let get = |r: Comp, c: Comp, sx: usize, sy: usize| -> PolyMat<Q> {
            match self.kernel(r, c, sx, sy) {
                Some(k) => k.clone(),
                None => {
                    let (_, _, rows, cols) = self.block_shape(r, c);
                    PolyMat::zeros(rows, cols)
                }
            }
        };

        // multiplier part
        let m00 = get(Comp::Fin, Comp::Fin, 0, 0);
        let m11 = get(Comp::Lx, Comp::Lx, 0, 0);
        let m22 = get(Comp::Ly, Comp::Ly, 0, 0);
        let m00r = mat_to_rows(&m00).ok_or(PiError::NotFiniteRank(
            "finite-part multiplier must be constant".into(),
        ))?;
        let m11r = mat_to_rows(&m11)
            .ok_or(PiError::NotFiniteRank("x multiplier block must be constant".into()))?;
        let m22r = mat_to_rows(&m22)
            .ok_or(PiError::NotFiniteRank("y multiplier block must be constant".into()))?;
        let m00i = invert_q_matrix(&m00r).ok_or(PiError::SingularMultiplier)?;
        let m11i = invert_q_matrix(&m11r).ok_or(PiError::SingularMultiplier)?;
        let m22i = invert_q_matrix(&m22r).ok_or(PiError::SingularMultiplier)?;
        let mut minv = PiOp::zero(d, d, dom.clone());
        if d.n0 > 0 {
            minv.set_kernel(Comp::Fin, Comp::Fin, 0, 0, rows_to_mat(&m00i));
        }
        if d.n1 > 0 {
            minv.set_kernel(Comp::Lx, Comp::Lx, 0, 0, rows_to_mat(&m11i));
            minv.set_kernel(Comp::Ly, Comp::Ly, 0, 0, rows_to_mat(&m22i));
        }

        // integral (finite-rank) kernels
        let b01 = get(Comp::Fin, Comp::Lx, 0, 0); // f(x), integrate out
        let b02 = get(Comp::Fin, Comp::Ly, 0, 0);
        let b10 = get(Comp::Lx, Comp::Fin, 0, 0); // embedding f(x)
        let b20 = get(Comp::Ly, Comp::Fin, 0, 0);
        let b12 = get(Comp::Lx, Comp::Ly, 0, 0); // f(x,y)
        let b21 = get(Comp::Ly, Comp::Lx, 0, 0);
        let b11l = get(Comp::Lx, Comp::Lx, 1, 0);
        let b11u = get(Comp::Lx, Comp::Lx, 2, 0);
        let b22l = get(Comp::Ly, Comp::Ly, 0, 1);
        let b22u = get(Comp::Ly, Comp::Ly, 0, 2);
        if b11l != b11u || b22l != b22u {
            return Err(PiError::NotFiniteRank(
                "triangular kernel parts differ; only full-range integral parts invert".into(),
            ));
        }
        // kernel of b11 in (x, theta); express full-range kernel K(x,theta)
        let b11k = b11l.rename(Var::Theta, Var::Y); // treat moment variable as y for bookkeeping
        let b22k = b22l.swap(Var::Y, Var::X).swap(Var::Nu, Var::Y); // K(y,nu) -> vars (x=y-out, y=nu-in)

        // moment degrees
        let ideg = |m: &PolyMat<Q>, v: Var| m.data_degree(v);
        let ix = [ideg(&b10, Var::X), ideg(&b11k, Var::X), ideg(&b12, Var::X)]
            .into_iter()
            .max()
            .unwrap_or(0) as usize;
        let iy = [ideg(&b20, Var::Y), ideg(&b22k, Var::X), ideg(&b21, Var::Y)]
            .into_iter()
            .max()
            .unwrap_or(0) as usize;
        let jx = [ideg(&b01, Var::X), ideg(&b11k, Var::Y), ideg(&b21, Var::X)]
            .into_iter()
            .max()
            .unwrap_or(0) as usize;
        let jy = [ideg(&b02, Var::Y), ideg(&b22k, Var::Y), ideg(&b12, Var::Y)]
            .into_iter()
            .max()
            .unwrap_or(0) as usize;

        // Phi: R^r -> Z1, columns [const | x^0..x^ix | y^0..y^iy]
        let r_cols = d.n0 + (ix + 1) * d.n1 + (iy + 1) * d.n1;
        let r_rows = d.n0 + (jx + 1) * d.n1 + (jy + 1) * d.n1;
        let mut phi = PiOp::zero(d, Dims::fin(r_cols), dom.clone());
        let mut psi = PiOp::zero(Dims::fin(r_rows), d, dom.clone());
        if d.n0 > 0 {
            let mut sel = PolyMat::zeros(d.n0, r_cols);
            for i in 0..d.n0 {
                *sel.at_mut(i, i) = Poly::iconst(1);
            }
            phi.set_kernel(Comp::Fin, Comp::Fin, 0, 0, sel);
            let mut selr = PolyMat::zeros(r_rows, d.n0);
            for i in 0..d.n0 {
                *selr.at_mut(i, i) = Poly::iconst(1);
            }
            psi.set_kernel(Comp::Fin, Comp::Fin, 0, 0, selr);
        }
        if d.n1 > 0 {
            let mut kx = PolyMat::zeros(d.n1, r_cols);
            for e in 0..=ix {
                for i in 0..d.n1 {
                    *kx.at_mut(i, d.n0 + e * d.n1 + i) =
                        Poly::term(qi(1), Mono([e as u16, 0, 0, 0]));
                }
            }
            phi.set_kernel(Comp::Lx, Comp::Fin, 0, 0, kx);
            let mut ky = PolyMat::zeros(d.n1, r_cols);
            for e in 0..=iy {
                for i in 0..d.n1 {
                    *ky.at_mut(i, d.n0 + (ix + 1) * d.n1 + e * d.n1 + i) =
                        Poly::term(qi(1), Mono([0, e as u16, 0, 0]));
                }
            }
            phi.set_kernel(Comp::Ly, Comp::Fin, 0, 0, ky);
            let mut mx = PolyMat::zeros(r_rows, d.n1);
            for e in 0..=jx {
                for i in 0..d.n1 {
                    *mx.at_mut(d.n0 + e * d.n1 + i, i) =
                        Poly::term(qi(1), Mono([e as u16, 0, 0, 0]));
                }
            }
            psi.set_kernel(Comp::Fin, Comp::Lx, 0, 0, mx);
            let mut my = PolyMat::zeros(r_rows, d.n1);
            for e in 0..=jy {
                for i in 0..d.n1 {
                    *my.at_mut(d.n0 + (jx + 1) * d.n1 + e * d.n1 + i, i) =
                        Poly::term(qi(1), Mono([0, e as u16, 0, 0]));
                }
            }
            psi.set_kernel(Comp::Fin, Comp::Ly, 0, 0, my);
        }

        // W: r_cols x r_rows coefficient matrix with F = Phi W Psi
        let mut w = vec![vec![qi(0); r_rows]; r_cols];
        let col_c = |i: usize| i;
        let col_x = |e: usize, i: usize| d.n0 + e * d.n1 + i;
        let col_y = |e: usize, i: usize| d.n0 + (ix + 1) * d.n1 + e * d.n1 + i;
        let row_c = |j: usize| j;
        let row_x = |e: usize, j: usize| d.n0 + e * d.n1 + j;
        let row_y = |e: usize, j: usize| d.n0 + (jx + 1) * d.n1 + e * d.n1 + j;
        let mut put = |ci: usize, rj: usize, q: &Q| {
            w[ci][rj] += q;
        };
        // B01(x): const out, x moment in
        scatter(&b01, Var::X, None, &mut |i, j, ex, _, q| put(col_c(i), row_x(ex, j), q));
        scatter(&b02, Var::Y, None, &mut |i, j, ey, _, q| put(col_c(i), row_y(ey, j), q));
        scatter(&b10, Var::X, None, &mut |i, j, ex, _, q| put(col_x(ex, i), row_c(j), q));
        scatter(&b20, Var::Y, None, &mut |i, j, ey, _, q| put(col_y(ey, i), row_c(j), q));
        scatter(&b12, Var::X, Some(Var::Y), &mut |i, j, ex, ey, q| {
            put(col_x(ex, i), row_y(ey, j), q)
        });
        scatter(&b21, Var::Y, Some(Var::X), &mut |i, j, ey, ex, q| {
            put(col_y(ey, i), row_x(ex, j), q)
        });
        scatter(&b11k, Var::X, Some(Var::Y), &mut |i, j, ex, et, q| {
            put(col_x(ex, i), row_x(et, j), q)
        });
        scatter(&b22k, Var::X, Some(Var::Y), &mut |i, j, ey, en, q| {
            put(col_y(ey, i), row_y(en, j), q)
        });

        let rank = r_cols;
        // core = I + (Psi Minv Phi) W  (r_rows x r_rows)
        let pmp = psi.compose(&minv)?.compose(&phi)?;
        let pmp_mat = mat_to_rows(&pmp.kernel(Comp::Fin, Comp::Fin, 0, 0).cloned().unwrap_or_else(
            || PolyMat::zeros(r_rows, r_cols),
        ))
        .expect("moment matrix is constant");
        let mut core = vec![vec![qi(0); r_rows]; r_rows];
        for i in 0..r_rows {
            core[i][i] = qi(1);
            for k in 0..r_cols {
                if pmp_mat[i][k].is_zero() {
                    continue;
                }
                for j in 0..r_rows {
                    if w[k][j].is_zero() {
                        continue;
                    }
                    let t = &pmp_mat[i][k] * &w[k][j];
                    core[i][j] += t;
                }
            }
        }
        let core_cond = cond_estimate(&core);
        let core_inv = invert_q_matrix(&core).ok_or(PiError::SingularCore { cond: core_cond })?;
        // correction = Minv Phi (W core_inv) Psi Minv
        let mut wci = vec![vec![qi(0); r_rows]; r_cols];
        for i in 0..r_cols {
            for k in 0..r_rows {
                if w[i][k].is_zero() {
                    continue;
                }
                for j in 0..r_rows {
                    let t = &w[i][k] * &core_inv[k][j];
                    wci[i][j] += t;
                }
            }
        }
        let wci_op = PiOp::const_fin(rows_to_mat(&wci), dom.clone());
        let corr = minv
            .compose(&phi)?
            .compose(&wci_op)?
            .compose(&psi)?
            .compose(&minv)?;
        let inv = minv.sub(&corr)?;
        Ok((inv, InverseDiagnostics { rank, core_cond }))
    }
}

/// Scatter a kernel's monomial coefficients into the Woodbury coefficient
/// matrix; `v1` indexes the output-side monomials, `v2` (if any) the
/// input-side ones.
fn scatter(
    m: &PolyMat<Q>,
    v1: Var,
    v2: Option<Var>,
    put: &mut dyn FnMut(usize, usize, usize, usize, &Q),
) {
    for i in 0..m.rows {
        for j in 0..m.cols {
            for (mono, c) in m.at(i, j).terms() {
                let e1 = mono.exp(v1) as usize;
                let e2 = v2.map(|v| mono.exp(v) as usize).unwrap_or(0);
                put(i, j, e1, e2, c);
            }
        }
    }
}

fn cond_estimate(m: &[Vec<Q>]) -> f64 {
    let n = m.len();
    if n == 0 {
        return 1.0;
    }
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j].to_f64().unwrap_or(f64::NAN));
    let svd = a.svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

impl PolyMat<Q> {
    fn data_degree(&self, v: Var) -> u16 {
        let mut d = 0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                d = d.max(self.at(i, j).degree_in(v));
            }
        }
        d
    }
}

impl<C: Coeff> PiOp<C> {
    /// Check self-adjointness by exact parameter comparison.
    pub fn is_self_adjoint(&self) -> bool {
        self.adjoint() == self.normalized()
    }

    /// Drop zero blocks so structural comparison is canonical.
    pub fn normalized(&self) -> Self {
        let mut out = PiOp::zero(self.dout, self.din, self.dom.clone());
        for ((r, c), blk) in &self.blocks {
            for sx in 0..blk.nx {
                for sy in 0..blk.ny {
                    out.add_kernel(*r, *c, sx, sy, blk.at(sx, sy));
                }
            }
        }
        out
    }
}

/// 1D PI parameter triple (multiplier, lower kernel, upper kernel) along one
/// axis; a convenience view used when building 011 bundles.
#[derive(Debug, Clone)]
pub struct Params1D {
    pub mult: PolyMat<Q>,
    pub lower: PolyMat<Q>,
    pub upper: PolyMat<Q>,
}

impl Params1D {
    pub fn multiplier(m: PolyMat<Q>) -> Self {
        let (r, c) = (m.rows, m.cols);
        Params1D { mult: m, lower: PolyMat::zeros(r, c), upper: PolyMat::zeros(r, c) }
    }
}

impl IntBound {
    pub fn lo_x(dom: &Interval) -> IntBound {
        IntBound::Const(dom.a.clone())
    }
    pub fn hi_x(dom: &Interval) -> IntBound {
        IntBound::Const(dom.b.clone())
    }
    pub fn lo_y(dom: &Interval) -> IntBound {
        IntBound::Const(dom.c.clone())
    }
    pub fn hi_y(dom: &Interval) -> IntBound {
        IntBound::Const(dom.d.clone())
    }
}

// Convenience: check that an operator's kernels all respect the variable
// conventions (used by tests on composed results).
impl<C: Coeff> PiOp<C> {
    pub fn validate_vars(&self) -> Result<()> {
        for ((r, c), blk) in &self.blocks {
            for sx in 0..blk.nx {
                for sy in 0..blk.ny {
                    let ok = allowed_vars(*r, *c, sx, sy);
                    for v in Var::ALL {
                        if !ok[v.index()] && blk.at(sx, sy).depends_on(v) {
                            return Err(PiError::SigMismatch(format!(
                                "kernel {r:?},{c:?}[{sx},{sy}] depends on {v:?}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{apply_num, apply_sym, inner_sym, GaussLegendre, Z2Poly};
    use crate::poly::qr;
    use crate::testgen;

    fn dom() -> Interval {
        Interval::unit()
    }

    fn dom_off() -> Interval {
        // non-unit rectangle to catch hardcoded bounds
        Interval::new(qr(-1, 2), qi(1), qi(0), qr(3, 2)).unwrap()
    }

    #[test]
    fn identity_composes_neutrally() {
        let mut rng = testgen::rng(11);
        let d = Dims::new(1, 1, 1);
        let r = testgen::rand_op(&mut rng, d, d, &dom(), 2, 0.7);
        let id = PiOp::identity(d, dom());
        assert_eq!(id.compose(&r).unwrap().normalized(), r.normalized());
        assert_eq!(r.compose(&id).unwrap().normalized(), r.normalized());
    }

    #[test]
    fn cauchy_iterated_lower_kernel() {
        // composing two unit lower Volterra kernels gives (x - theta)
        let d = Dims::new(0, 1, 0);
        let mut v = PiOp::zero(d, d, dom());
        v.set_kernel(Comp::Lx, Comp::Lx, 1, 0, PolyMat::from_fn(1, 1, |_, _| Poly::iconst(1)));
        let vv = v.compose(&v).unwrap();
        let k = vv.kernel(Comp::Lx, Comp::Lx, 1, 0).unwrap();
        let expect = Poly::var(Var::X).sub(&Poly::var(Var::Theta));
        assert_eq!(k.at(0, 0), &expect);
        assert!(vv.kernel(Comp::Lx, Comp::Lx, 0, 0).map(|m| m.is_zero()).unwrap_or(true));
    }

    #[test]
    fn pure_double_integral_area() {
        // kernel N11 = 1 applied to v = 1 gives x*y on the unit square
        let mut t = PiOp::zero(Dims::l2(1), Dims::l2(1), dom());
        t.set_kernel(Comp::L2, Comp::L2, 1, 1, PolyMat::from_fn(1, 1, |_, _| Poly::iconst(1)));
        let one = Z2Poly::from_l2(PolyMat::from_fn(1, 1, |_, _| Poly::iconst(1)));
        let out = apply_sym(&t, &one).unwrap();
        assert_eq!(out.u2.at(0, 0), &Poly::var(Var::X).mul(&Poly::var(Var::Y)));
    }

    #[test]
    fn compose_matches_nested_apply_symbolically() {
        let mut rng = testgen::rng(23);
        for dm in [dom(), dom_off()] {
            for _ in 0..8 {
                let dq = Dims::new(1, 1, 1);
                let dp = Dims::new(1, 2, 1);
                let dr = Dims::new(2, 1, 1);
                let q = testgen::rand_op(&mut rng, dq, dp, &dm, 2, 0.6);
                let r = testgen::rand_op(&mut rng, dp, dr, &dm, 2, 0.6);
                let u = testgen::rand_state(&mut rng, dr, 2);
                let qr_ = q.compose(&r).unwrap();
                qr_.validate_vars().unwrap();
                let lhs = apply_sym(&qr_, &u).unwrap();
                let rhs = apply_sym(&q, &apply_sym(&r, &u).unwrap()).unwrap();
                assert_eq!(lhs, rhs, "compose mismatch");
            }
        }
    }

    #[test]
    fn compose_matches_quadrature_oracle() {
        // fully numeric check, independent of symbolic integration
        let mut rng = testgen::rng(37);
        let d = Dims::new(1, 1, 1);
        for _ in 0..4 {
            let q = testgen::rand_op(&mut rng, d, d, &dom(), 2, 0.6);
            let r = testgen::rand_op(&mut rng, d, d, &dom(), 2, 0.6);
            let u = testgen::rand_state(&mut rng, d, 2);
            let rule = GaussLegendre::new(14);
            let lhs = apply_num(&q.compose(&r).unwrap(), &u, &rule).unwrap();
            let mid = apply_sym(&r, &u).unwrap();
            let rhs = apply_num(&q, &mid, &rule).unwrap();
            let err = lhs.sub(&rhs).norm_sq().sqrt();
            let scale = rhs.norm_sq().sqrt().max(1.0);
            assert!(err / scale < 1e-10, "rel err {}", err / scale);
        }
    }

    #[test]
    fn add_is_pointwise() {
        let mut rng = testgen::rng(5);
        let d = Dims::new(1, 1, 1);
        let q = testgen::rand_op(&mut rng, d, d, &dom_off(), 2, 0.6);
        let r = testgen::rand_op(&mut rng, d, d, &dom_off(), 2, 0.6);
        let u = testgen::rand_state(&mut rng, d, 2);
        let s = q.add(&r).unwrap();
        let lhs = apply_sym(&s, &u).unwrap();
        let rhs = apply_sym(&q, &u).unwrap().add(&apply_sym(&r, &u).unwrap());
        assert_eq!(lhs, rhs);
        // q + (-q) = 0
        assert!(q.add(&q.neg()).unwrap().is_zero());
    }

    #[test]
    fn adjoint_inner_product_identity() {
        let mut rng = testgen::rng(41);
        for dm in [dom(), dom_off()] {
            for _ in 0..6 {
                let dv = Dims::new(1, 1, 1);
                let du = Dims::new(2, 1, 1);
                let g = testgen::rand_op(&mut rng, dv, du, &dm, 2, 0.6);
                let u = testgen::rand_state(&mut rng, du, 2);
                let v = testgen::rand_state(&mut rng, dv, 2);
                let lhs = inner_sym(&v, &apply_sym(&g, &u).unwrap(), &dm).unwrap();
                let rhs = inner_sym(&apply_sym(&g.adjoint(), &v).unwrap(), &u, &dm).unwrap();
                assert_eq!(lhs, rhs, "adjoint identity");
            }
        }
    }

    #[test]
    fn adjoint_involution_and_antihomomorphism() {
        let mut rng = testgen::rng(43);
        let d = Dims::new(1, 1, 1);
        let q = testgen::rand_op(&mut rng, d, d, &dom(), 2, 0.6);
        let r = testgen::rand_op(&mut rng, d, d, &dom(), 2, 0.6);
        assert_eq!(q.adjoint().adjoint().normalized(), q.normalized());
        let lhs = q.compose(&r).unwrap().adjoint().normalized();
        let rhs = r.adjoint().compose(&q.adjoint()).unwrap().normalized();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn adjoint_kernel_table_entry() {
        // an operator with only the (M, L)-slot 2D kernel set: the adjoint
        // holds only the (M, U) slot with arguments y and nu swapped
        let mut g = PiOp::zero(Dims::l2(1), Dims::l2(1), dom());
        let k = Poly::var(Var::X).mul(&Poly::var(Var::Nu)).add(&Poly::var(Var::Y));
        g.set_kernel(Comp::L2, Comp::L2, 0, 1, PolyMat::from_fn(1, 1, |_, _| k.clone()));
        let ga = g.adjoint();
        let expect = k.swap(Var::Y, Var::Nu);
        assert_eq!(ga.kernel(Comp::L2, Comp::L2, 0, 2).unwrap().at(0, 0), &expect);
        assert!(ga.kernel(Comp::L2, Comp::L2, 0, 1).map(|m| m.is_zero()).unwrap_or(true));
    }

    #[test]
    fn symmetric_constant_multiplier_self_adjoint() {
        let m = PolyMat::from_const(&[
            vec![qi(2), qi(1)],
            vec![qi(1), qi(3)],
        ]);
        let op = PiOp::multiplier_2d(m, dom());
        assert!(op.is_self_adjoint());
    }

    #[test]
    fn diff_x_lemma_exact() {
        let mut rng = testgen::rng(53);
        for dm in [dom(), dom_off()] {
            for _ in 0..8 {
                let din = Dims::new(1, 1, 1);
                let g = testgen::rand_dx_admissible(&mut rng, 1, din, &dm, 2);
                let h = g.diff_x().unwrap();
                let u = testgen::rand_state(&mut rng, din, 3);
                let lhs = apply_sym(&g, &u).unwrap().u2.diff(Var::X);
                let rhs = apply_sym(&h, &u).unwrap().u2;
                assert_eq!(lhs, rhs, "x-derivative composition");
            }
        }
    }

    #[test]
    fn diff_y_lemma_exact() {
        let mut rng = testgen::rng(59);
        for _ in 0..8 {
            let din = Dims::new(1, 1, 1);
            let g = testgen::rand_dy_admissible(&mut rng, 1, din, &dom_off(), 2);
            let h = g.diff_y().unwrap();
            let u = testgen::rand_state(&mut rng, din, 3);
            let lhs = apply_sym(&g, &u).unwrap().u2.diff(Var::Y);
            let rhs = apply_sym(&h, &u).unwrap().u2;
            assert_eq!(lhs, rhs, "y-derivative composition");
        }
    }

    #[test]
    fn diff_hypothesis_violation_rejected() {
        let mut op = PiOp::zero(Dims::l2(1), Dims::l2(1), dom());
        op.set_kernel(Comp::L2, Comp::L2, 0, 0, PolyMat::from_fn(1, 1, |_, _| Poly::iconst(1)));
        assert!(matches!(op.diff_x(), Err(PiError::DiffHypothesis(_))));
        // constant multiplier from the finite component is fine: derivative 0
        let b = PiOp::mult_from_fin(PolyMat::from_fn(1, 1, |_, _| Poly::iconst(3)), dom());
        assert!(b.diff_x().unwrap().is_zero());
    }

    #[test]
    fn block_grid_concatenates() {
        let d = Dims::l2(1);
        let id = PiOp::identity(d, dom());
        let z = PiOp::zero(d, d, dom());
        // off-diagonal block operator swaps components
        let swap = PiOp::block_grid(&[vec![&z, &id], vec![&id, &z]]).unwrap();
        let mut rng = testgen::rng(61);
        let u = testgen::rand_state(&mut rng, Dims::l2(2), 2);
        let out = apply_sym(&swap, &u).unwrap();
        assert_eq!(out.u2.at(0, 0), u.u2.at(1, 0));
        assert_eq!(out.u2.at(1, 0), u.u2.at(0, 0));
        // diagonal identity preserves both
        let idid = PiOp::block_grid(&[vec![&id, &z], vec![&z, &id]]).unwrap();
        assert_eq!(apply_sym(&idid, &u).unwrap(), u);
    }

    #[test]
    fn woodbury_rank_one_inverse() {
        // R = I + f(x) g(theta) full-range: inverse is I - f g / (1 + <g, f>)
        let d = Dims::new(0, 1, 0);
        let mut r = PiOp::identity(d, dom());
        let f = Poly::var(Var::X);
        let g = Poly::var(Var::Theta);
        let k = PolyMat::from_fn(1, 1, |_, _| f.mul(&g));
        r.add_kernel(Comp::Lx, Comp::Lx, 1, 0, &k);
        r.add_kernel(Comp::Lx, Comp::Lx, 2, 0, &k);
        let (rinv, diag) = r.inverse_011().unwrap();
        assert!(diag.core_cond.is_finite());
        // 1 + int_0^1 x*x dx = 4/3; correction kernel = -(3/4) x theta
        let corr = rinv.kernel(Comp::Lx, Comp::Lx, 1, 0).unwrap().at(0, 0).clone();
        assert_eq!(corr, f.mul(&g).scale(&qr(-3, 4)));
        let check = rinv.compose(&r).unwrap().normalized();
        assert_eq!(check, PiOp::identity(d, dom()).normalized());
    }

    #[test]
    fn random_inverse_round_trips() {
        let mut rng = testgen::rng(67);
        for i in 0..6 {
            let d = if i % 2 == 0 { Dims::new(2, 1, 0) } else { Dims::new(1, 2, 0) };
            let r = testgen::rand_invertible_011(&mut rng, d, &dom(), 1);
            let (rinv, _) = r.inverse_011().unwrap();
            let lhs = rinv.compose(&r).unwrap().normalized();
            let rhs = PiOp::identity(d, dom()).normalized();
            assert_eq!(lhs, rhs, "inverse round trip (left)");
            let lhs2 = r.compose(&rinv).unwrap().normalized();
            assert_eq!(lhs2, rhs, "inverse round trip (right)");
        }
    }

    #[test]
    fn identity_inverse_is_identity() {
        let d = Dims::new(1, 1, 0);
        let id = PiOp::identity(d, dom_off());
        let (inv, _) = id.inverse_011().unwrap();
        assert_eq!(inv.normalized(), id.normalized());
    }

    #[test]
    fn singular_multiplier_rejected() {
        let d = Dims::new(1, 0, 0);
        let z = PiOp::const_fin(PolyMat::zeros(1, 1), dom());
        let mut zz = z;
        zz.set_kernel(Comp::Fin, Comp::Fin, 0, 0, PolyMat::zeros(1, 1));
        assert!(matches!(zz.inverse_011(), Err(PiError::SingularMultiplier)));
        let _ = d;
    }
}
