//! Standardized 2nd-order 2D PDE representation and its conversion to an
//! equivalent PIE.
//!
//! The PDE state splits as `(v0, v1, v2)` with `v0` in `L2` (no smoothness),
//! `v1` in `W1` (mixed derivatives up to order 1 per variable) and `v2` in
//! `W2`. The fundamental state is `v = D vbar` with
//! `D = diag(I, dx dy, dx^2 dy^2)`, and the conversion produces operators
//! `T0, T1` with `vbar = T0 v + T1 w` on the constrained set, plus the PIE
//! operators `A, B, C, D`.
//!
//! # Boundary trace orderings (normative for spec files and raw `E0` input)
//!
//! `Lambda_bf` (the full trace stack the boundary operator `E0` acts on):
//!
//! - finite rows (`4 n1 + 16 n2`): `v1` at the four corners in the order
//!   `(a,c), (b,c), (a,d), (b,d)` (n1 each); then for `v2` the groups
//!   `value`, `dx`, `dy`, `dx dy`, each over the same four corners (n2 each);
//! - x-function rows (`2 n1 + 4 n2`, functions on `[a,b]`): `dx v1` at
//!   `y=c` then `y=d`; `dx^2 v2` at `y=c`, `y=d`; `dx^2 dy v2` at `y=c`, `y=d`;
//! - y-function rows (`2 n1 + 4 n2`): `dy v1` at `x=a`, `x=b`;
//!   `dy^2 v2` at `x=a`, `x=b`; `dx dy^2 v2` at `x=a`, `x=b`.
//!
//! `Lambda_bc` (the core traces used in state reconstruction): finite rows
//! `v1(a,c)`, then `v2, dx v2, dy v2, dx dy v2` at `(a,c)`; x-function rows
//! `dx v1(.,c)`, `dx^2 v2(.,c)`, `dx^2 dy v2(.,c)`; y-function rows
//! `dy v1(a,.)`, `dy^2 v2(a,.)`, `dx dy^2 v2(a,.)`.

use crate::grid::Z2Poly;
use crate::op::{Comp, Dims, InverseDiagnostics, PiOp};
use crate::poly::{qi, Interval, Poly, PolyMat, Q, Var};
use crate::{PiError, Result};

/// Boundary condition type on one edge for a `W2` state component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcType {
    Dirichlet,
    Neumann,
}

/// Per-edge conditions for one `W2` component.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EdgeConds {
    pub x_lo: BcType,
    pub x_hi: BcType,
    pub y_lo: BcType,
    pub y_hi: BcType,
}

impl EdgeConds {
    pub fn dirichlet() -> Self {
        EdgeConds {
            x_lo: BcType::Dirichlet,
            x_hi: BcType::Dirichlet,
            y_lo: BcType::Dirichlet,
            y_hi: BcType::Dirichlet,
        }
    }
}

/// Which edge carries the (Dirichlet) condition of a `W1` component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XEdge {
    Lo,
    Hi,
}

pub type YEdge = XEdge;

/// Boundary conditions: the pattern vocabulary, or raw parameter bundles
/// against the `Lambda_bf` ordering documented above.
#[derive(Debug, Clone)]
pub enum BcSpec {
    Pattern {
        /// one entry per `W1` component: the x-edge and y-edge with the
        /// Dirichlet value condition
        w1: Vec<(XEdge, YEdge)>,
        /// one entry per `W2` component
        w2: Vec<EdgeConds>,
    },
    Raw {
        e0: PiOp<Q>,
        e1: Option<PiOp<Q>>,
    },
}

/// The standardized PDE: coefficients of
/// `dot(vbar) = sum A_ij dx^i dy^j S_ij vbar + B w`,
/// `z = int int (sum C_ij dx^i dy^j S_ij vbar) + D w`.
#[derive(Debug, Clone)]
pub struct PDESpec {
    pub dom: Interval,
    pub dims: Dims,
    pub nw: usize,
    pub nz: usize,
    pub a_ij: Vec<Vec<Option<PolyMat<Q>>>>,
    pub b: Option<PolyMat<Q>>,
    pub c_ij: Vec<Vec<Option<PolyMat<Q>>>>,
    pub d: Option<PolyMat<Q>>,
    pub bc: BcSpec,
    /// E1 bundle when boundary conditions are disturbed (pattern BCs only
    /// support E1 = 0; use raw E0/E1 otherwise).
    pub e1: Option<PiOp<Q>>,
}

/// Number of state components with differentiability at least `(i, j)`.
pub fn m_ij(dims: &Dims, i: usize, j: usize) -> usize {
    match i.max(j) {
        0 => dims.n0 + dims.n1 + dims.n2,
        1 => dims.n1 + dims.n2,
        _ => dims.n2,
    }
}

/// Selector `S_ij` extracting the components differentiable to order (i,j).
pub fn selector(dims: &Dims, i: usize, j: usize) -> PolyMat<Q> {
    let nv = dims.n0 + dims.n1 + dims.n2;
    let m = m_ij(dims, i, j);
    PolyMat::from_fn(m, nv, |r, c| if c == nv - m + r { Poly::iconst(1) } else { Poly::zero() })
}

/// Signature of the boundary-condition row space: `{n1 + 4 n2, n1 + 2 n2}`.
pub fn dims_nb(d: &Dims) -> Dims {
    Dims::new(d.n1 + 4 * d.n2, d.n1 + 2 * d.n2, 0)
}

/// Signature of the full trace stack: `{4 n1 + 16 n2, 2 n1 + 4 n2}`.
pub fn dims_nf(d: &Dims) -> Dims {
    Dims::new(4 * d.n1 + 16 * d.n2, 2 * d.n1 + 4 * d.n2, 0)
}

/// The fixed trace-map parameter bundles.
#[derive(Debug, Clone)]
pub struct BoundaryMaps {
    /// `Lambda_bf vbar = H1 Lambda_bc vbar + H2 v`
    pub h1: PiOp<Q>,
    pub h2: PiOp<Q>,
    /// `vbar = K1 Lambda_bc vbar + K2 v`
    pub k1: PiOp<Q>,
    pub k2: PiOp<Q>,
}

// corner order used throughout: (a,c), (b,c), (a,d), (b,d)
const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

fn corner_xy(dom: &Interval, k: usize) -> (Q, Q) {
    let (ix, iy) = CORNERS[k];
    let x = if ix == 0 { dom.a.clone() } else { dom.b.clone() };
    let y = if iy == 0 { dom.c.clone() } else { dom.d.clone() };
    (x, y)
}

/// Row indices into the `Lambda_bf` finite part.
fn lbf_fin_v1(d: &Dims, corner: usize, i: usize) -> usize {
    corner * d.n1 + i
}
/// `group`: 0 value, 1 dx, 2 dy, 3 dxdy.
fn lbf_fin_v2(d: &Dims, group: usize, corner: usize, j: usize) -> usize {
    4 * d.n1 + group * 4 * d.n2 + corner * d.n2 + j
}
/// x-function rows: `which`: 0 dx v1, 1 dx^2 v2, 2 dx^2 dy v2; `edge`: 0 y=c, 1 y=d.
fn lbf_x(d: &Dims, which: usize, edge: usize, i: usize) -> usize {
    match which {
        0 => edge * d.n1 + i,
        1 => 2 * d.n1 + edge * d.n2 + i,
        _ => 2 * d.n1 + 2 * d.n2 + edge * d.n2 + i,
    }
}
fn lbf_y(d: &Dims, which: usize, edge: usize, i: usize) -> usize {
    lbf_x(d, which, edge, i)
}

/// Column indices into the `Lambda_bc` stack.
fn lbc_fin_v1(_d: &Dims, i: usize) -> usize {
    i
}
fn lbc_fin_v2(d: &Dims, group: usize, j: usize) -> usize {
    d.n1 + group * d.n2 + j
}
fn lbc_x(d: &Dims, which: usize, i: usize) -> usize {
    match which {
        0 => i,
        1 => d.n1 + i,
        _ => d.n1 + d.n2 + i,
    }
}
fn lbc_y(d: &Dims, which: usize, i: usize) -> usize {
    lbc_x(d, which, i)
}

/// Exact instantiation of the `H1, H2, K1, K2` trace-map parameters.
pub fn build_boundary_maps(dims: &Dims, dom: &Interval) -> BoundaryMaps {
    let nb = dims_nb(dims);
    let nf = dims_nf(dims);
    let nv = dims.n0 + dims.n1 + dims.n2;
    let ba = Poly::qconst(&dom.b - &dom.a);
    let dc = Poly::qconst(&dom.d - &dom.c);
    let bx = Poly::qconst(dom.b.clone()).sub(&Poly::var(Var::X));
    let dy_ = Poly::qconst(dom.d.clone()).sub(&Poly::var(Var::Y));
    let xa = Poly::var(Var::X).sub(&Poly::qconst(dom.a.clone()));
    let yc = Poly::var(Var::Y).sub(&Poly::qconst(dom.c.clone()));
    let xt = Poly::var(Var::X).sub(&Poly::var(Var::Theta));
    let yn = Poly::var(Var::Y).sub(&Poly::var(Var::Nu));

    // ---- H1 ----
    let mut h00 = PolyMat::zeros(nf.n0, nb.n0);
    let mut h01 = PolyMat::zeros(nf.n0, nb.n1);
    let mut h02 = PolyMat::zeros(nf.n0, nb.n1);
    // v1 corner rows: v1(x*,y*) = v1(a,c) + int_a^{x*} dx v1(.,c) + int_c^{y*} dy v1(a,.)
    //   + a double integral of the fundamental state (the 2D part sits in H2)
    for k in 0..4 {
        let (ix, iy) = CORNERS[k];
        for i in 0..dims.n1 {
            *h00.at_mut(lbf_fin_v1(dims, k, i), lbc_fin_v1(dims, i)) = Poly::iconst(1);
            if ix == 1 {
                *h01.at_mut(lbf_fin_v1(dims, k, i), lbc_x(dims, 0, i)) = Poly::iconst(1);
            }
            if iy == 1 {
                *h02.at_mut(lbf_fin_v1(dims, k, i), lbc_y(dims, 0, i)) = Poly::iconst(1);
            }
        }
        // v2 groups; iterated-Taylor traces at each corner
        for j in 0..dims.n2 {
            // group 0: value
            let r = lbf_fin_v2(dims, 0, k, j);
            *h00.at_mut(r, lbc_fin_v2(dims, 0, j)) = Poly::iconst(1);
            if ix == 1 {
                *h00.at_mut(r, lbc_fin_v2(dims, 1, j)) = ba.clone();
                *h01.at_mut(r, lbc_x(dims, 1, j)) = bx.clone();
            }
            if iy == 1 {
                *h00.at_mut(r, lbc_fin_v2(dims, 2, j)) = dc.clone();
                *h02.at_mut(r, lbc_y(dims, 1, j)) = dy_.clone();
            }
            if ix == 1 && iy == 1 {
                *h00.at_mut(r, lbc_fin_v2(dims, 3, j)) = dc.mul(&ba);
                *h01.at_mut(r, lbc_x(dims, 2, j)) = dc.mul(&bx);
                *h02.at_mut(r, lbc_y(dims, 2, j)) = ba.mul(&dy_);
            }
            // group 1: dx
            let r = lbf_fin_v2(dims, 1, k, j);
            *h00.at_mut(r, lbc_fin_v2(dims, 1, j)) = Poly::iconst(1);
            if ix == 1 {
                *h01.at_mut(r, lbc_x(dims, 1, j)) = Poly::iconst(1);
            }
            if iy == 1 {
                *h00.at_mut(r, lbc_fin_v2(dims, 3, j)) = dc.clone();
                *h02.at_mut(r, lbc_y(dims, 2, j)) = dy_.clone();
            }
            if ix == 1 && iy == 1 {
                *h01.at_mut(r, lbc_x(dims, 2, j)) = dc.clone();
            }
            // group 2: dy
            let r = lbf_fin_v2(dims, 2, k, j);
            *h00.at_mut(r, lbc_fin_v2(dims, 2, j)) = Poly::iconst(1);
            if iy == 1 {
                *h02.at_mut(r, lbc_y(dims, 1, j)) = Poly::iconst(1);
            }
            if ix == 1 {
                *h00.at_mut(r, lbc_fin_v2(dims, 3, j)) = ba.clone();
                *h01.at_mut(r, lbc_x(dims, 2, j)) = bx.clone();
            }
            if ix == 1 && iy == 1 {
                *h02.at_mut(r, lbc_y(dims, 2, j)) = ba.clone();
            }
            // group 3: dxdy
            let r = lbf_fin_v2(dims, 3, k, j);
            *h00.at_mut(r, lbc_fin_v2(dims, 3, j)) = Poly::iconst(1);
            if ix == 1 {
                *h01.at_mut(r, lbc_x(dims, 2, j)) = Poly::iconst(1);
            }
            if iy == 1 {
                *h02.at_mut(r, lbc_y(dims, 2, j)) = Poly::iconst(1);
            }
        }
    }
    // x-function rows of H1
    let mut h11 = PolyMat::zeros(nf.n1, nb.n1);
    for e in 0..2 {
        for i in 0..dims.n1 {
            *h11.at_mut(lbf_x(dims, 0, e, i), lbc_x(dims, 0, i)) = Poly::iconst(1);
        }
        for j in 0..dims.n2 {
            *h11.at_mut(lbf_x(dims, 1, e, j), lbc_x(dims, 1, j)) = Poly::iconst(1);
            if e == 1 {
                *h11.at_mut(lbf_x(dims, 1, e, j), lbc_x(dims, 2, j)) = dc.clone();
            }
            *h11.at_mut(lbf_x(dims, 2, e, j), lbc_x(dims, 2, j)) = Poly::iconst(1);
        }
    }
    let mut h22 = PolyMat::zeros(nf.n1, nb.n1);
    for e in 0..2 {
        for i in 0..dims.n1 {
            *h22.at_mut(lbf_y(dims, 0, e, i), lbc_y(dims, 0, i)) = Poly::iconst(1);
        }
        for j in 0..dims.n2 {
            *h22.at_mut(lbf_y(dims, 1, e, j), lbc_y(dims, 1, j)) = Poly::iconst(1);
            if e == 1 {
                *h22.at_mut(lbf_y(dims, 1, e, j), lbc_y(dims, 2, j)) = ba.clone();
            }
            *h22.at_mut(lbf_y(dims, 2, e, j), lbc_y(dims, 2, j)) = Poly::iconst(1);
        }
    }
    let mut h1 = PiOp::zero(nf, nb, dom.clone());
    if nf.n0 > 0 && nb.n0 > 0 {
        h1.set_kernel(Comp::Fin, Comp::Fin, 0, 0, h00);
    }
    if nf.n0 > 0 && nb.n1 > 0 {
        h1.set_kernel(Comp::Fin, Comp::Lx, 0, 0, h01);
        h1.set_kernel(Comp::Fin, Comp::Ly, 0, 0, h02);
    }
    if nf.n1 > 0 && nb.n1 > 0 {
        h1.set_kernel(Comp::Lx, Comp::Lx, 0, 0, h11);
        h1.set_kernel(Comp::Ly, Comp::Ly, 0, 0, h22);
    }

    // ---- H2 ----
    // columns ordered [v0 | v1 | v2]
    let c1 = dims.n0;
    let c2 = dims.n0 + dims.n1;
    let mut h03 = PolyMat::zeros(nf.n0, nv);
    for i in 0..dims.n1 {
        *h03.at_mut(lbf_fin_v1(dims, 3, i), c1 + i) = Poly::iconst(1);
    }
    for j in 0..dims.n2 {
        *h03.at_mut(lbf_fin_v2(dims, 0, 3, j), c2 + j) = dy_.mul(&bx);
        *h03.at_mut(lbf_fin_v2(dims, 1, 3, j), c2 + j) = dy_.clone();
        *h03.at_mut(lbf_fin_v2(dims, 2, 3, j), c2 + j) = bx.clone();
        *h03.at_mut(lbf_fin_v2(dims, 3, 3, j), c2 + j) = Poly::iconst(1);
    }
    let mut h13 = PolyMat::zeros(nf.n1, nv);
    for i in 0..dims.n1 {
        *h13.at_mut(lbf_x(dims, 0, 1, i), c1 + i) = Poly::iconst(1);
    }
    for j in 0..dims.n2 {
        *h13.at_mut(lbf_x(dims, 1, 1, j), c2 + j) = dy_.clone();
        *h13.at_mut(lbf_x(dims, 2, 1, j), c2 + j) = Poly::iconst(1);
    }
    let mut h23 = PolyMat::zeros(nf.n1, nv);
    for i in 0..dims.n1 {
        *h23.at_mut(lbf_y(dims, 0, 1, i), c1 + i) = Poly::iconst(1);
    }
    for j in 0..dims.n2 {
        *h23.at_mut(lbf_y(dims, 1, 1, j), c2 + j) = bx.clone();
        *h23.at_mut(lbf_y(dims, 2, 1, j), c2 + j) = Poly::iconst(1);
    }
    let mut h2 = PiOp::zero(nf, Dims::l2(nv), dom.clone());
    if nf.n0 > 0 {
        h2.set_kernel(Comp::Fin, Comp::L2, 0, 0, h03);
    }
    if nf.n1 > 0 {
        h2.set_kernel(Comp::Lx, Comp::L2, 0, 0, h13);
        h2.set_kernel(Comp::Ly, Comp::L2, 0, 0, h23);
    }

    // ---- K1 ----
    let r1 = dims.n0;
    let r2 = dims.n0 + dims.n1;
    let mut k30 = PolyMat::zeros(nv, nb.n0);
    for i in 0..dims.n1 {
        *k30.at_mut(r1 + i, lbc_fin_v1(dims, i)) = Poly::iconst(1);
    }
    for j in 0..dims.n2 {
        *k30.at_mut(r2 + j, lbc_fin_v2(dims, 0, j)) = Poly::iconst(1);
        *k30.at_mut(r2 + j, lbc_fin_v2(dims, 1, j)) = xa.clone();
        *k30.at_mut(r2 + j, lbc_fin_v2(dims, 2, j)) = yc.clone();
        *k30.at_mut(r2 + j, lbc_fin_v2(dims, 3, j)) = yc.mul(&xa);
    }
    let mut k31 = PolyMat::zeros(nv, nb.n1);
    for i in 0..dims.n1 {
        *k31.at_mut(r1 + i, lbc_x(dims, 0, i)) = Poly::iconst(1);
    }
    for j in 0..dims.n2 {
        *k31.at_mut(r2 + j, lbc_x(dims, 1, j)) = xt.clone();
        *k31.at_mut(r2 + j, lbc_x(dims, 2, j)) = yc.mul(&xt);
    }
    let mut k32 = PolyMat::zeros(nv, nb.n1);
    for i in 0..dims.n1 {
        *k32.at_mut(r1 + i, lbc_y(dims, 0, i)) = Poly::iconst(1);
    }
    for j in 0..dims.n2 {
        *k32.at_mut(r2 + j, lbc_y(dims, 1, j)) = yn.clone();
        *k32.at_mut(r2 + j, lbc_y(dims, 2, j)) = xa.mul(&yn);
    }
    let mut k1 = PiOp::zero(Dims::l2(nv), nb, dom.clone());
    if nb.n0 > 0 {
        k1.set_kernel(Comp::L2, Comp::Fin, 0, 0, k30);
    }
    if nb.n1 > 0 {
        k1.set_kernel(Comp::L2, Comp::Lx, 1, 0, k31);
        k1.set_kernel(Comp::L2, Comp::Ly, 0, 1, k32);
    }

    // ---- K2 ----
    let mut t00 = PolyMat::zeros(nv, nv);
    for i in 0..dims.n0 {
        *t00.at_mut(i, i) = Poly::iconst(1);
    }
    let mut k33 = PolyMat::zeros(nv, nv);
    for i in 0..dims.n1 {
        *k33.at_mut(r1 + i, r1 + i) = Poly::iconst(1);
    }
    for j in 0..dims.n2 {
        *k33.at_mut(r2 + j, r2 + j) = xt.mul(&yn);
    }
    let mut k2 = PiOp::zero(Dims::l2(nv), Dims::l2(nv), dom.clone());
    k2.set_kernel(Comp::L2, Comp::L2, 0, 0, t00);
    k2.set_kernel(Comp::L2, Comp::L2, 1, 1, k33);

    BoundaryMaps { h1, h2, k1, k2 }
}

/// Symbolic boundary traces of a polynomial state: `(Lambda_bf, Lambda_bc)`.
pub fn eval_boundary_rows(vbar: &PolyMat<Q>, dims: &Dims, dom: &Interval) -> (Z2Poly, Z2Poly) {
    let nb = dims_nb(dims);
    let nf = dims_nf(dims);
    let r1 = dims.n0;
    let r2 = dims.n0 + dims.n1;
    let at_corner = |p: &Poly<Q>, k: usize| {
        let (x, y) = corner_xy(dom, k);
        p.subs(Var::X, &Poly::qconst(x)).subs(Var::Y, &Poly::qconst(y))
    };
    let as_q = |p: Poly<Q>| p.eval_q(&Default::default()).expect("constant");

    let mut bf = Z2Poly::zero(nf);
    let mut bc = Z2Poly::zero(nb);
    for i in 0..dims.n1 {
        let v = vbar.at(r1 + i, 0);
        for k in 0..4 {
            bf.fin[lbf_fin_v1(dims, k, i)] = as_q(at_corner(v, k));
        }
        bc.fin[lbc_fin_v1(dims, i)] = as_q(at_corner(v, 0));
        for e in 0..2 {
            let yv = if e == 0 { dom.c.clone() } else { dom.d.clone() };
            *bf.ux.at_mut(lbf_x(dims, 0, e, i), 0) =
                v.diff(Var::X).subs(Var::Y, &Poly::qconst(yv));
            let xv = if e == 0 { dom.a.clone() } else { dom.b.clone() };
            *bf.uy.at_mut(lbf_y(dims, 0, e, i), 0) =
                v.diff(Var::Y).subs(Var::X, &Poly::qconst(xv));
        }
        *bc.ux.at_mut(lbc_x(dims, 0, i), 0) =
            v.diff(Var::X).subs(Var::Y, &Poly::qconst(dom.c.clone()));
        *bc.uy.at_mut(lbc_y(dims, 0, i), 0) =
            v.diff(Var::Y).subs(Var::X, &Poly::qconst(dom.a.clone()));
    }
    for j in 0..dims.n2 {
        let v = vbar.at(r2 + j, 0);
        let grads = [
            v.clone(),
            v.diff(Var::X),
            v.diff(Var::Y),
            v.diff(Var::X).diff(Var::Y),
        ];
        for (g, gv) in grads.iter().enumerate() {
            for k in 0..4 {
                bf.fin[lbf_fin_v2(dims, g, k, j)] = as_q(at_corner(gv, k));
            }
            bc.fin[lbc_fin_v2(dims, g, j)] = as_q(at_corner(gv, 0));
        }
        let dxx = v.diff(Var::X).diff(Var::X);
        let dxxy = dxx.diff(Var::Y);
        for e in 0..2 {
            let yv = if e == 0 { dom.c.clone() } else { dom.d.clone() };
            *bf.ux.at_mut(lbf_x(dims, 1, e, j), 0) = dxx.subs(Var::Y, &Poly::qconst(yv.clone()));
            *bf.ux.at_mut(lbf_x(dims, 2, e, j), 0) = dxxy.subs(Var::Y, &Poly::qconst(yv));
        }
        *bc.ux.at_mut(lbc_x(dims, 1, j), 0) = dxx.subs(Var::Y, &Poly::qconst(dom.c.clone()));
        *bc.ux.at_mut(lbc_x(dims, 2, j), 0) = dxxy.subs(Var::Y, &Poly::qconst(dom.c.clone()));
        let dyy = v.diff(Var::Y).diff(Var::Y);
        let dxyy = dyy.diff(Var::X);
        for e in 0..2 {
            let xv = if e == 0 { dom.a.clone() } else { dom.b.clone() };
            *bf.uy.at_mut(lbf_y(dims, 1, e, j), 0) = dyy.subs(Var::X, &Poly::qconst(xv.clone()));
            *bf.uy.at_mut(lbf_y(dims, 2, e, j), 0) = dxyy.subs(Var::X, &Poly::qconst(xv));
        }
        *bc.uy.at_mut(lbc_y(dims, 1, j), 0) = dyy.subs(Var::X, &Poly::qconst(dom.a.clone()));
        *bc.uy.at_mut(lbc_y(dims, 2, j), 0) = dxyy.subs(Var::X, &Poly::qconst(dom.a.clone()));
    }
    (bf, bc)
}

/// Apply the fundamental-state map `D = diag(I, dx dy, dx^2 dy^2)` to a
/// polynomial PDE state.
pub fn apply_d_state(vbar: &PolyMat<Q>, dims: &Dims) -> PolyMat<Q> {
    let r1 = dims.n0;
    let r2 = dims.n0 + dims.n1;
    PolyMat::from_fn(vbar.rows, 1, |i, _| {
        let p = vbar.at(i, 0);
        if i < r1 {
            p.clone()
        } else if i < r2 {
            p.diff(Var::X).diff(Var::Y)
        } else {
            p.diff(Var::X).diff(Var::X).diff(Var::Y).diff(Var::Y)
        }
    })
}

/// Compose the differential operator `D` with an operator into `L2^{nv}`.
pub fn compose_d(op: &PiOp<Q>, dims: &Dims) -> Result<PiOp<Q>> {
    let nv = dims.n0 + dims.n1 + dims.n2;
    if op.dout != Dims::l2(nv) {
        return Err(PiError::SigMismatch("compose_d expects an L2^{nv} output".into()));
    }
    let p0 = op.slice_l2_rows(0, dims.n0)?;
    let mut p1 = op.slice_l2_rows(dims.n0, dims.n0 + dims.n1)?;
    if dims.n1 > 0 {
        p1 = p1.diff_x()?.diff_y()?;
    }
    let mut p2 = op.slice_l2_rows(dims.n0 + dims.n1, nv)?;
    if dims.n2 > 0 {
        p2 = p2.diff_x()?.diff_x()?.diff_y()?.diff_y()?;
    }
    PiOp::block_grid(&[vec![&p0], vec![&p1], vec![&p2]])
}

/// Build the boundary operator `E0` from the pattern vocabulary. Rows are
/// direct selectors into the `Lambda_bf` stack.
pub fn build_e0(
    dims: &Dims,
    dom: &Interval,
    w1: &[(XEdge, YEdge)],
    w2: &[EdgeConds],
) -> Result<PiOp<Q>> {
    if w1.len() != dims.n1 || w2.len() != dims.n2 {
        return Err(PiError::SpecFile(format!(
            "boundary pattern needs {} W1 and {} W2 entries, got {} and {}",
            dims.n1,
            dims.n2,
            w1.len(),
            w2.len()
        )));
    }
    let nb = dims_nb(dims);
    let nf = dims_nf(dims);
    let mut e00 = PolyMat::zeros(nb.n0, nf.n0);
    let mut e11 = PolyMat::zeros(nb.n1, nf.n1);
    let mut e22 = PolyMat::zeros(nb.n1, nf.n1);
    // W1 components: one value condition per axis
    for (i, (xe, ye)) in w1.iter().enumerate() {
        let corner = match (xe, ye) {
            (XEdge::Lo, XEdge::Lo) => 0,
            (XEdge::Hi, XEdge::Lo) => 1,
            (XEdge::Lo, XEdge::Hi) => 2,
            (XEdge::Hi, XEdge::Hi) => 3,
        };
        *e00.at_mut(i, lbf_fin_v1(dims, corner, i)) = Poly::iconst(1);
        let ey = if *ye == XEdge::Lo { 0 } else { 1 };
        *e11.at_mut(i, lbf_x(dims, 0, ey, i)) = Poly::iconst(1);
        let ex = if *xe == XEdge::Lo { 0 } else { 1 };
        *e22.at_mut(i, lbf_y(dims, 0, ex, i)) = Poly::iconst(1);
    }
    // W2 components
    for (j, ec) in w2.iter().enumerate() {
        // function rows: one per edge (second-trace row for Dirichlet, mixed
        // third-trace row for Neumann)
        let xw = |t: BcType| if t == BcType::Dirichlet { 1 } else { 2 };
        *e11.at_mut(dims.n1 + 2 * j, lbf_x(dims, xw(ec.y_lo), 0, j)) = Poly::iconst(1);
        *e11.at_mut(dims.n1 + 2 * j + 1, lbf_x(dims, xw(ec.y_hi), 1, j)) = Poly::iconst(1);
        *e22.at_mut(dims.n1 + 2 * j, lbf_y(dims, xw(ec.x_lo), 0, j)) = Poly::iconst(1);
        *e22.at_mut(dims.n1 + 2 * j + 1, lbf_y(dims, xw(ec.x_hi), 1, j)) = Poly::iconst(1);
        // corner rows: candidates in priority order, first four distinct;
        // groups 0 value, 1 dx, 2 dy, 3 dxdy; corners 0 (a,c), 1 (b,c)
        let pair_y = |t: BcType| match t {
            BcType::Dirichlet => [(0usize, 0usize), (1, 0)],
            BcType::Neumann => [(2, 0), (3, 0)],
        };
        let pair_xa = |t: BcType| match t {
            BcType::Dirichlet => [(0usize, 0usize), (2, 0)],
            BcType::Neumann => [(1, 0), (3, 0)],
        };
        let pair_xb = |t: BcType| match t {
            BcType::Dirichlet => [(0usize, 1usize), (2, 1)],
            BcType::Neumann => [(1, 1), (3, 1)],
        };
        let yc = pair_y(ec.y_lo);
        let xa = pair_xa(ec.x_lo);
        let xb = pair_xb(ec.x_hi);
        let candidates = [yc[0], yc[1], xa[1], xa[0], xb[1], xb[0]];
        let mut chosen: Vec<(usize, usize)> = Vec::new();
        for cand in candidates {
            if !chosen.contains(&cand) {
                chosen.push(cand);
            }
            if chosen.len() == 4 {
                break;
            }
        }
        if chosen.len() < 4 {
            return Err(PiError::SpecFile("degenerate boundary pattern".into()));
        }
        for (r, (group, corner)) in chosen.iter().enumerate() {
            *e00.at_mut(dims.n1 + 4 * j + r, lbf_fin_v2(dims, *group, *corner, j)) =
                Poly::iconst(1);
        }
    }
    let mut e0 = PiOp::zero(nb, nf, dom.clone());
    if nb.n0 > 0 {
        e0.set_kernel(Comp::Fin, Comp::Fin, 0, 0, e00);
    }
    if nb.n1 > 0 {
        e0.set_kernel(Comp::Lx, Comp::Lx, 0, 0, e11);
        e0.set_kernel(Comp::Ly, Comp::Ly, 0, 0, e22);
    }
    Ok(e0)
}

/// The converted PIE `T1 w' + T0 v' = A v + B w`, `z = C v + D w`.
#[derive(Debug, Clone)]
pub struct PIESystem {
    pub nv: usize,
    pub nw: usize,
    pub nz: usize,
    pub dom: Interval,
    pub dims: Dims,
    pub t0: PiOp<Q>,
    pub t1: PiOp<Q>,
    pub a: PiOp<Q>,
    pub b: PiOp<Q>,
    pub c: PiOp<Q>,
    pub d: PiOp<Q>,
    pub diagnostics: InverseDiagnostics,
}

fn resolve_e0(spec: &PDESpec) -> Result<(PiOp<Q>, Option<PiOp<Q>>)> {
    match &spec.bc {
        BcSpec::Pattern { w1, w2 } => {
            let e0 = build_e0(&spec.dims, &spec.dom, w1, w2)?;
            Ok((e0, spec.e1.clone()))
        }
        BcSpec::Raw { e0, e1 } => Ok((e0.clone(), e1.clone().or_else(|| spec.e1.clone()))),
    }
}

/// The fundamental-state map: `T0`, `T1` and inversion diagnostics.
pub fn build_t(spec: &PDESpec) -> Result<(PiOp<Q>, PiOp<Q>, InverseDiagnostics)> {
    let dims = &spec.dims;
    let nv = dims.n0 + dims.n1 + dims.n2;
    let maps = build_boundary_maps(dims, &spec.dom);
    let (e0, e1) = resolve_e0(spec)?;
    let nb = dims_nb(dims);
    let nf = dims_nf(dims);
    if e0.dout != nb || e0.din != nf {
        return Err(PiError::SigMismatch(format!(
            "E0 must map Z1^{nf} -> Z1^{nb}, got {} -> {}",
            e0.din, e0.dout
        )));
    }
    let r = e0.compose(&maps.h1)?;
    let (rinv, diag) = r.inverse_011()?;
    if !diag.core_cond.is_finite() || diag.core_cond > 1e10 {
        return Err(PiError::SingularCore { cond: diag.core_cond });
    }
    let f = e0.compose(&maps.h2)?;
    let g = rinv.compose(&f)?;
    let t0 = maps.k2.sub(&maps.k1.compose(&g)?)?;
    let t1 = match e1 {
        Some(e1op) => {
            if e1op.dout != nb || e1op.din != Dims::fin(spec.nw) {
                return Err(PiError::SigMismatch("E1 must map R^{nw} -> Z1^{nb}".into()));
            }
            maps.k1.compose(&rinv.compose(&e1op)?)?.neg()
        }
        None => PiOp::zero(Dims::l2(nv), Dims::fin(spec.nw), spec.dom.clone()),
    };
    Ok((t0, t1, diag))
}

/// Assemble a PDE right-hand operator composed with a fundamental-state map:
/// the chain `sum_ij OUTER[coeff_ij] dx^i dy^j M[S_ij] T`.
fn coeff_chain(
    coeffs: &[Vec<Option<PolyMat<Q>>>],
    out_rows: usize,
    as_output: bool,
    dims: &Dims,
    dom: &Interval,
    t: &PiOp<Q>,
) -> Result<PiOp<Q>> {
    let mut acc: Option<PiOp<Q>> = None;
    for (i, row) in coeffs.iter().enumerate() {
        for (j, entry) in row.iter().enumerate() {
            let Some(cij) = entry else { continue };
            let m = m_ij(dims, i, j);
            if cij.rows != out_rows || cij.cols != m {
                return Err(PiError::DimMismatch(format!(
                    "coefficient ({i},{j}) must be {out_rows} x {m}, got {} x {}",
                    cij.rows, cij.cols
                )));
            }
            let mut op = PiOp::multiplier_2d(selector(dims, i, j), dom.clone()).compose(t)?;
            for _ in 0..i {
                op = op.diff_x()?;
            }
            for _ in 0..j {
                op = op.diff_y()?;
            }
            let outer = if as_output {
                PiOp::int_all(cij.clone(), dom.clone())
            } else {
                PiOp::multiplier_2d(cij.clone(), dom.clone())
            };
            let term = outer.compose(&op)?;
            acc = Some(match acc {
                None => term,
                Some(accum) => accum.add(&term)?,
            });
        }
    }
    Ok(acc.unwrap_or_else(|| {
        let dout = if as_output { Dims::fin(out_rows) } else { Dims::l2(out_rows) };
        PiOp::zero(dout, t.din, dom.clone())
    }))
}

/// PDE-to-PIE conversion.
pub fn build_pie(spec: &PDESpec) -> Result<PIESystem> {
    let dims = spec.dims;
    let nv = dims.n0 + dims.n1 + dims.n2;
    let (t0, t1, diagnostics) = build_t(spec)?;
    let a = coeff_chain(&spec.a_ij, nv, false, &dims, &spec.dom, &t0)?;
    let c = coeff_chain(&spec.c_ij, spec.nz, true, &dims, &spec.dom, &t0)?;
    let mut b = match &spec.b {
        Some(bm) => {
            if bm.rows != nv || bm.cols != spec.nw {
                return Err(PiError::DimMismatch("B must be nv x nw".into()));
            }
            PiOp::mult_from_fin(bm.clone(), spec.dom.clone())
        }
        None => PiOp::zero(Dims::l2(nv), Dims::fin(spec.nw), spec.dom.clone()),
    };
    let mut d = match &spec.d {
        Some(dm) => PiOp::const_fin(dm.clone(), spec.dom.clone()),
        None => PiOp::zero(Dims::fin(spec.nz), Dims::fin(spec.nw), spec.dom.clone()),
    };
    if !t1.is_zero() {
        b = b.add(&coeff_chain(&spec.a_ij, nv, false, &dims, &spec.dom, &t1)?)?;
        d = d.add(&coeff_chain(&spec.c_ij, spec.nz, true, &dims, &spec.dom, &t1)?)?;
    }
    Ok(PIESystem {
        nv,
        nw: spec.nw,
        nz: spec.nz,
        dom: spec.dom.clone(),
        dims,
        t0,
        t1,
        a,
        b,
        c,
        d,
        diagnostics,
    })
}

/// `vbar = T0 v + T1 w` on the polynomial level.
pub fn reconstruct_state(pie: &PIESystem, v: &Z2Poly, w: &[Q]) -> Result<Z2Poly> {
    if w.len() != pie.nw {
        return Err(PiError::SigMismatch("reconstruct: w length".into()));
    }
    let tv = crate::grid::apply_sym(&pie.t0, v)?;
    let wstate = Z2Poly::new(
        Dims::fin(pie.nw),
        w.to_vec(),
        PolyMat::zeros(0, 1),
        PolyMat::zeros(0, 1),
        PolyMat::zeros(0, 1),
    );
    let tw = crate::grid::apply_sym(&pie.t1, &wstate)?;
    Ok(tv.add(&tw))
}

/// Manufactured member of the constrained state set for a boundary pattern:
/// a sum of separable products, each factor satisfying its 1D conditions.
pub fn manufactured_state(
    rng: &mut impl rand::Rng,
    dims: &Dims,
    dom: &Interval,
    w1: &[(XEdge, YEdge)],
    w2: &[EdgeConds],
    deg: u16,
) -> PolyMat<Q> {
    use crate::testgen::rand_poly;
    let nv = dims.n0 + dims.n1 + dims.n2;
    let only_x = [true, false, false, false];
    let only_y = [false, true, false, false];
    let mut out = PolyMat::zeros(nv, 1);
    for i in 0..dims.n0 {
        *out.at_mut(i, 0) = rand_poly(rng, [true, true, false, false], deg);
    }
    for (i, (xe, ye)) in w1.iter().enumerate() {
        let xf = match xe {
            XEdge::Lo => Poly::var(Var::X).sub(&Poly::qconst(dom.a.clone())),
            XEdge::Hi => Poly::var(Var::X).sub(&Poly::qconst(dom.b.clone())),
        };
        let yf = match ye {
            XEdge::Lo => Poly::var(Var::Y).sub(&Poly::qconst(dom.c.clone())),
            XEdge::Hi => Poly::var(Var::Y).sub(&Poly::qconst(dom.d.clone())),
        };
        *out.at_mut(dims.n0 + i, 0) =
            xf.mul(&yf).mul(&rand_poly(rng, [true, true, false, false], deg));
    }
    for (j, ec) in w2.iter().enumerate() {
        let mut p = Poly::zero();
        for _ in 0..2 {
            let fx = project_1d(&rand_poly(rng, only_x, deg + 2), Var::X, ec.x_lo, ec.x_hi, dom);
            let fy = project_1d(&rand_poly(rng, only_y, deg + 2), Var::Y, ec.y_lo, ec.y_hi, dom);
            p = p.add(&fx.mul(&fy));
        }
        *out.at_mut(dims.n0 + dims.n1 + j, 0) = p;
    }
    out
}

/// Project a 1D polynomial onto the subspace meeting the two endpoint
/// conditions (Dirichlet: value zero; Neumann: derivative zero) by
/// subtracting a low-order corrector.
fn project_1d(h: &Poly<Q>, v: Var, lo: BcType, hi: BcType, dom: &Interval) -> Poly<Q> {
    let (a, b) = dom.bounds_of(v);
    let pa = Poly::qconst(a.clone());
    let pb = Poly::qconst(b.clone());
    let x = Poly::var(v);
    let val = |p: &Poly<Q>, at: &Poly<Q>| p.subs(v, at);
    match (lo, hi) {
        (BcType::Dirichlet, BcType::Dirichlet) => {
            let ha = val(h, &pa);
            let hb = val(h, &pb);
            let slope = hb.sub(&ha).scale(&(qi(1) / (&b - &a)));
            h.sub(&ha).sub(&slope.mul(&x.sub(&pa)))
        }
        (BcType::Dirichlet, BcType::Neumann) => {
            let ha = val(h, &pa);
            let dhb = val(&h.diff(v), &pb);
            h.sub(&ha).sub(&dhb.mul(&x.sub(&pa)))
        }
        (BcType::Neumann, BcType::Dirichlet) => {
            let hb = val(h, &pb);
            let dha = val(&h.diff(v), &pa);
            h.sub(&hb).sub(&dha.mul(&x.sub(&pb)))
        }
        (BcType::Neumann, BcType::Neumann) => {
            // kill both endpoint slopes with a quadratic corrector
            let dha = val(&h.diff(v), &pa);
            let dhb = val(&h.diff(v), &pb);
            let span = &b - &a;
            let quad = x.sub(&pa).mul(&x.sub(&pa)).scale(&(qi(1) / (span * qi(2))));
            h.sub(&dhb.sub(&dha).mul(&quad)).sub(&dha.mul(&x))
        }
    }
}
