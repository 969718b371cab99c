//! Randomized polynomial states and PI operators with small rational
//! coefficients; used by the verification suites and by certificate
//! spot-checks at runtime. Deterministic given the seed.

use crate::op::{allowed_vars, Comp, Dims, PiOp};
use crate::poly::{qr, Interval, Mono, Poly, PolyMat, Q, Var};
use crate::grid::Z2Poly;
use rand::Rng;

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_q(rng: &mut impl Rng) -> Q {
    qr(rng.gen_range(-4..5), rng.gen_range(1..4))
}

/// Random polynomial using only the allowed variables, degree <= `deg` per
/// variable and two to four terms.
pub fn rand_poly(rng: &mut impl Rng, allowed: [bool; 4], deg: u16) -> Poly<Q> {
    let mut p = Poly::zero();
    let n_terms = rng.gen_range(1..4);
    for _ in 0..n_terms {
        let mut e = [0u16; 4];
        for (k, item) in e.iter_mut().enumerate() {
            if allowed[k] {
                *item = rng.gen_range(0..=deg);
            }
        }
        p.add_term(Mono(e), &rand_q(rng));
    }
    p
}

pub fn rand_polymat(rng: &mut impl Rng, rows: usize, cols: usize, allowed: [bool; 4], deg: u16) -> PolyMat<Q> {
    PolyMat::from_fn(rows, cols, |_, _| rand_poly(rng, allowed, deg))
}

/// Random operator with every admissible block and slot populated (with
/// probability `fill`), kernels of per-variable degree <= `deg`.
pub fn rand_op(
    rng: &mut impl Rng,
    dout: Dims,
    din: Dims,
    dom: &Interval,
    deg: u16,
    fill: f64,
) -> PiOp<Q> {
    let mut op = PiOp::zero(dout, din, dom.clone());
    for r in Comp::ALL {
        if dout.comp(r) == 0 {
            continue;
        }
        for c in Comp::ALL {
            if din.comp(c) == 0 {
                continue;
            }
            let nx = if r.has_x() && c.has_x() { 3 } else { 1 };
            let ny = if r.has_y() && c.has_y() { 3 } else { 1 };
            for sx in 0..nx {
                for sy in 0..ny {
                    if rng.gen_bool(fill) {
                        let k = rand_polymat(
                            rng,
                            dout.comp(r),
                            din.comp(c),
                            allowed_vars(r, c, sx, sy),
                            deg,
                        );
                        op.add_kernel(r, c, sx, sy, &k);
                    }
                }
            }
        }
    }
    op
}

/// Random polynomial `Z2` state of per-variable degree <= `deg`.
pub fn rand_state(rng: &mut impl Rng, dims: Dims, deg: u16) -> Z2Poly {
    let fin = (0..dims.n0).map(|_| rand_q(rng)).collect();
    let only = |v: Var| {
        let mut a = [false; 4];
        a[v.index()] = true;
        a
    };
    let ux = rand_polymat(rng, dims.n1, 1, only(Var::X), deg);
    let uy = rand_polymat(rng, dims.n1, 1, only(Var::Y), deg);
    let u2 = rand_polymat(rng, dims.n2, 1, [true, true, false, false], deg);
    Z2Poly::new(dims, fin, ux, uy, u2)
}

/// Random operator into pure `L2` satisfying the x-derivative composition
/// hypothesis (zero x-multiplier kernels on x-bearing input components).
pub fn rand_dx_admissible(rng: &mut impl Rng, n2: usize, din: Dims, dom: &Interval, deg: u16) -> PiOp<Q> {
    let mut op = rand_op(rng, Dims::l2(n2), din, dom, deg, 0.8);
    op = op.map_kernels(|k| k.clone()); // normalize
    let mut clean = PiOp::zero(op.dout, op.din, dom.clone());
    for ((r, c), blk) in op.blocks() {
        for sx in 0..blk.nx {
            for sy in 0..blk.ny {
                if c.has_x() && sx == 0 {
                    continue; // drop x-multiplier slots
                }
                clean.add_kernel(*r, *c, sx, sy, blk.at(sx, sy));
            }
        }
    }
    clean
}

/// Mirror of [`rand_dx_admissible`] for the y-derivative.
pub fn rand_dy_admissible(rng: &mut impl Rng, n2: usize, din: Dims, dom: &Interval, deg: u16) -> PiOp<Q> {
    let op = rand_op(rng, Dims::l2(n2), din, dom, deg, 0.8);
    let mut clean = PiOp::zero(op.dout, op.din, dom.clone());
    for ((r, c), blk) in op.blocks() {
        for sx in 0..blk.nx {
            for sy in 0..blk.ny {
                if c.has_y() && sy == 0 {
                    continue;
                }
                clean.add_kernel(*r, *c, sx, sy, blk.at(sx, sy));
            }
        }
    }
    clean
}

/// Random multiplier-plus-finite-rank 011 operator with invertible constant
/// multiplier blocks (diagonally dominant) and full-range integral kernels.
pub fn rand_invertible_011(rng: &mut impl Rng, d: Dims, dom: &Interval, deg: u16) -> PiOp<Q> {
    assert_eq!(d.n2, 0);
    let mut op = PiOp::zero(d, d, dom.clone());
    let diag_dom = |rng: &mut dyn rand::RngCore, n: usize| -> PolyMat<Q> {
        PolyMat::from_fn(n, n, |i, j| {
            if i == j {
                Poly::qconst(qr(rng.gen_range(3..7), 1))
            } else {
                Poly::qconst(qr(rng.gen_range(-1..2), 2))
            }
        })
    };
    if d.n0 > 0 {
        op.set_kernel(Comp::Fin, Comp::Fin, 0, 0, diag_dom(rng, d.n0));
        if d.n1 > 0 {
            op.set_kernel(
                Comp::Fin,
                Comp::Lx,
                0,
                0,
                rand_polymat(rng, d.n0, d.n1, [true, false, false, false], deg),
            );
            op.set_kernel(
                Comp::Fin,
                Comp::Ly,
                0,
                0,
                rand_polymat(rng, d.n0, d.n1, [false, true, false, false], deg),
            );
            op.set_kernel(
                Comp::Lx,
                Comp::Fin,
                0,
                0,
                rand_polymat(rng, d.n1, d.n0, [true, false, false, false], deg),
            );
            op.set_kernel(
                Comp::Ly,
                Comp::Fin,
                0,
                0,
                rand_polymat(rng, d.n1, d.n0, [false, true, false, false], deg),
            );
        }
    }
    if d.n1 > 0 {
        op.set_kernel(Comp::Lx, Comp::Lx, 0, 0, diag_dom(rng, d.n1));
        op.set_kernel(Comp::Ly, Comp::Ly, 0, 0, diag_dom(rng, d.n1));
        // full-range kernels: identical L and U parts
        let kx = rand_polymat(rng, d.n1, d.n1, [true, false, true, false], deg).scale(&qr(1, 4));
        op.add_kernel(Comp::Lx, Comp::Lx, 1, 0, &kx);
        op.add_kernel(Comp::Lx, Comp::Lx, 2, 0, &kx);
        let ky = rand_polymat(rng, d.n1, d.n1, [false, true, false, true], deg).scale(&qr(1, 4));
        op.add_kernel(Comp::Ly, Comp::Ly, 0, 1, &ky);
        op.add_kernel(Comp::Ly, Comp::Ly, 0, 2, &ky);
        op.add_kernel(
            Comp::Lx,
            Comp::Ly,
            0,
            0,
            &rand_polymat(rng, d.n1, d.n1, [true, true, false, false], deg).scale(&qr(1, 4)),
        );
        op.add_kernel(
            Comp::Ly,
            Comp::Lx,
            0,
            0,
            &rand_polymat(rng, d.n1, d.n1, [true, true, false, false], deg).scale(&qr(1, 4)),
        );
    }
    op
}
