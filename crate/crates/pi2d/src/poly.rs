//! Exact multivariate polynomials over the variables x, y and their
//! integration dummies theta, nu.
//!
//! Coefficients are exact rationals by default ([`Q`]); every operator kernel
//! in the crate is stored in this form. The coefficient type is generic so
//! the same arithmetic can run over affine forms in SDP unknowns (see
//! [`crate::lin`]) during inequality assembly.
//!
//! Polynomials are canonical: zero coefficients are never stored, and two
//! values are equal iff their term maps are equal. Term order is graded
//! lexicographic, which makes printing and golden files deterministic.

use crate::{PiError, Result};
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;

/// Exact rational scalar used throughout the symbolic pipeline.
pub type Q = num_rational::BigRational;

/// Rational from an integer.
pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Rational from numerator/denominator.
pub fn qr(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Exact rational from an `f64` (every finite float is a rational).
pub fn q_from_f64(x: f64) -> Q {
    Q::from_float(x).expect("finite float")
}

pub fn q_to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// The four kernel variables. `Theta` is the integration dummy paired with
/// `X`, and `Nu` the dummy paired with `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Var {
    X,
    Y,
    Theta,
    Nu,
}

impl Var {
    pub const ALL: [Var; 4] = [Var::X, Var::Y, Var::Theta, Var::Nu];

    pub fn index(self) -> usize {
        match self {
            Var::X => 0,
            Var::Y => 1,
            Var::Theta => 2,
            Var::Nu => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Theta => "theta",
            Var::Nu => "nu",
        }
    }

    /// The integration dummy paired with a free variable (and vice versa).
    pub fn partner(self) -> Var {
        match self {
            Var::X => Var::Theta,
            Var::Theta => Var::X,
            Var::Y => Var::Nu,
            Var::Nu => Var::Y,
        }
    }
}

/// A closed rectangle `[a,b] x [c,d]` with rational endpoints.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub a: Q,
    pub b: Q,
    pub c: Q,
    pub d: Q,
}

impl Interval {
    pub fn new(a: Q, b: Q, c: Q, d: Q) -> Result<Self> {
        if a >= b || c >= d {
            return Err(PiError::DimMismatch(format!(
                "interval bounds must satisfy a < b and c < d, got [{a},{b}]x[{c},{d}]"
            )));
        }
        Ok(Interval { a, b, c, d })
    }

    /// The unit square `[0,1]^2`.
    pub fn unit() -> Self {
        Interval { a: qi(0), b: qi(1), c: qi(0), d: qi(1) }
    }

    /// Lower/upper endpoints of the axis a variable lives on.
    pub fn bounds_of(&self, v: Var) -> (Q, Q) {
        match v {
            Var::X | Var::Theta => (self.a.clone(), self.b.clone()),
            Var::Y | Var::Nu => (self.c.clone(), self.d.clone()),
        }
    }

    pub fn area(&self) -> Q {
        (&self.b - &self.a) * (&self.d - &self.c)
    }
}

/// Monomial exponents `(e_x, e_y, e_theta, e_nu)`, ordered graded-lex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mono(pub [u16; 4]);

impl Mono {
    pub const ONE: Mono = Mono([0; 4]);

    pub fn var(v: Var) -> Self {
        let mut e = [0u16; 4];
        e[v.index()] = 1;
        Mono(e)
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn exp(&self, v: Var) -> u16 {
        self.0[v.index()]
    }

    fn mul(&self, other: &Mono) -> Mono {
        let mut e = [0u16; 4];
        for k in 0..4 {
            e[k] = self.0[k] + other.0[k];
        }
        Mono(e)
    }
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.total_degree(), self.0).cmp(&(other.total_degree(), other.0))
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Coefficient ring interface shared by exact rationals and affine forms.
/// `zero`/`is_zero` come from [`num_traits::Zero`].
pub trait Coeff: Clone + PartialEq + fmt::Debug + Send + Sync + 'static + Zero {
    fn add_assign(&mut self, other: &Self);
    fn neg(&self) -> Self;
    /// Product. For affine forms this panics unless one factor is constant;
    /// the operator algebra never multiplies two unknown-bearing factors.
    fn mul(&self, other: &Self) -> Self;
    fn scale(&self, k: &Q) -> Self;
    fn from_q(q: Q) -> Self;
    /// Constant part as a rational, if the value is constant.
    fn as_q(&self) -> Option<&Q>;
}

impl Coeff for Q {
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn neg(&self) -> Self {
        -self.clone()
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn scale(&self, k: &Q) -> Self {
        self * k
    }
    fn from_q(q: Q) -> Self {
        q
    }
    fn as_q(&self) -> Option<&Q> {
        Some(self)
    }
}

/// Default cap on total degree; far above anything the conversion chains
/// produce, so hitting it flags a runaway composition.
pub const DEGREE_CAP: u32 = 24;

/// Sparse scalar polynomial in (x, y, theta, nu) with coefficients in `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<C: Coeff = Q> {
    terms: BTreeMap<Mono, C>,
}

impl<C: Coeff> Default for Poly<C> {
    fn default() -> Self {
        Poly { terms: BTreeMap::new() }
    }
}

impl<C: Coeff> Poly<C> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: C) -> Self {
        let mut p = Self::zero();
        if !c.is_zero() {
            p.terms.insert(Mono::ONE, c);
        }
        p
    }

    pub fn term(c: C, m: Mono) -> Self {
        let mut p = Self::zero();
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &C)> {
        self.terms.iter()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|m| m.total_degree()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, v: Var) -> u16 {
        self.terms.keys().map(|m| m.exp(v)).max().unwrap_or(0)
    }

    pub fn depends_on(&self, v: Var) -> bool {
        self.terms.keys().any(|m| m.exp(v) > 0)
    }

    pub fn add_term(&mut self, m: Mono, c: &C) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(e) => {
                e.add_assign(c);
                if e.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c.clone());
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(*m, c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(*m, &c.neg());
        }
        out
    }

    pub fn neg(&self) -> Self {
        Poly { terms: self.terms.iter().map(|(m, c)| (*m, c.neg())).collect() }
    }

    pub fn scale(&self, k: &Q) -> Self {
        if k.is_zero() {
            return Self::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, c)| (*m, c.scale(k))).collect() }
    }

    /// Exact product with degree-cap check.
    pub fn try_mul(&self, other: &Self, cap: u32) -> Result<Self> {
        let deg = self.total_degree() + other.total_degree();
        if !self.is_zero() && !other.is_zero() && deg > cap {
            return Err(PiError::DegreeCap { deg, cap });
        }
        let mut out = Self::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), &ca.mul(cb));
            }
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.try_mul(other, DEGREE_CAP).expect("degree cap exceeded")
    }

    /// Formal partial derivative.
    pub fn diff(&self, v: Var) -> Self {
        let i = v.index();
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            let e = m.0[i];
            if e == 0 {
                continue;
            }
            let mut me = *m;
            me.0[i] = e - 1;
            out.add_term(me, &c.scale(&qi(e as i64)));
        }
        out
    }

    /// Substitute `v := q` exactly (re-canonicalizing).
    pub fn subs(&self, v: Var, q: &Self) -> Self {
        let i = v.index();
        let max_e = self.degree_in(v) as usize;
        // powers of q, computed once
        let mut pows: Vec<Poly<C>> = Vec::with_capacity(max_e + 1);
        pows.push(Poly::term(C::from_q(qi(1)), Mono::ONE));
        for k in 1..=max_e {
            pows.push(pows[k - 1].try_mul(q, u32::MAX).expect("no cap"));
        }
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            let e = m.0[i] as usize;
            let mut base = *m;
            base.0[i] = 0;
            for (mq, cq) in &pows[e].terms {
                out.add_term(base.mul(mq), &c.mul(cq));
            }
        }
        out
    }

    /// Rename a variable (substitute `v := w`).
    pub fn rename(&self, v: Var, w: Var) -> Self {
        if v == w {
            return self.clone();
        }
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            let mut e = m.0;
            let ev = e[v.index()];
            e[v.index()] = 0;
            e[w.index()] += ev;
            out.add_term(Mono(e), c);
        }
        out
    }

    /// Swap two variables.
    pub fn swap(&self, v: Var, w: Var) -> Self {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            let mut e = m.0;
            e.swap(v.index(), w.index());
            out.add_term(Mono(e), c);
        }
        out
    }

    /// Collect by powers of `v`: returns `[p_0, p_1, ...]` with
    /// `self = sum_k p_k v^k` and no `v` inside the `p_k`.
    pub fn coeffs_of(&self, v: Var) -> Vec<Self> {
        let i = v.index();
        let max_e = self.degree_in(v) as usize;
        let mut out = vec![Self::zero(); max_e + 1];
        for (m, c) in &self.terms {
            let e = m.0[i] as usize;
            let mut base = *m;
            base.0[i] = 0;
            out[e].add_term(base, c);
        }
        out
    }

    /// Map coefficients to a different ring.
    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Poly<D> {
        let mut out = Poly::<D>::zero();
        for (m, c) in &self.terms {
            out.add_term(*m, &f(c));
        }
        out
    }
}

/// Integration bound: a rational constant or a bare variable.
#[derive(Debug, Clone, PartialEq)]
pub enum IntBound {
    Const(Q),
    Var(Var),
}

impl IntBound {
    fn as_poly<C: Coeff>(&self) -> Poly<C> {
        match self {
            IntBound::Const(q) => Poly::constant(C::from_q(q.clone())),
            IntBound::Var(v) => Poly::term(C::from_q(qi(1)), Mono::var(*v)),
        }
    }
}

impl<C: Coeff> Poly<C> {
    /// Exact definite integral over the dummy `v` from `lo` to `hi`; the
    /// result is free of `v`. Errors if a bound is the dummy itself.
    pub fn integrate(&self, v: Var, lo: &IntBound, hi: &IntBound) -> Result<Self> {
        for b in [lo, hi] {
            if matches!(b, IntBound::Var(w) if *w == v) {
                return Err(PiError::BadBound);
            }
        }
        let lo_p = lo.as_poly::<C>();
        let hi_p = hi.as_poly::<C>();
        let mut out = Self::zero();
        for (k, pk) in self.coeffs_of(v).into_iter().enumerate() {
            if pk.is_zero() {
                continue;
            }
            // integral of v^k dv = v^{k+1}/(k+1), evaluated hi minus lo
            let e = (k + 1) as u32;
            let hi_pow = pow_poly(&hi_p, e);
            let lo_pow = pow_poly(&lo_p, e);
            let diff = hi_pow.sub(&lo_pow).scale(&qr(1, e as i64));
            out = out.add(&pk.try_mul(&diff, u32::MAX)?);
        }
        Ok(out)
    }
}

fn pow_poly<C: Coeff>(p: &Poly<C>, e: u32) -> Poly<C> {
    let mut out = Poly::term(C::from_q(qi(1)), Mono::ONE);
    for _ in 0..e {
        out = out.try_mul(p, u32::MAX).expect("no cap");
    }
    out
}

impl Poly<Q> {
    pub fn var(v: Var) -> Self {
        Poly::term(qi(1), Mono::var(v))
    }

    pub fn qconst(q: Q) -> Self {
        Poly::constant(q)
    }

    pub fn iconst(n: i64) -> Self {
        Poly::constant(qi(n))
    }

    /// Exact evaluation; every variable must be assigned.
    pub fn eval_q(&self, point: &BTreeMap<Var, Q>) -> Result<Q> {
        for v in Var::ALL {
            if self.depends_on(v) && !point.contains_key(&v) {
                return Err(PiError::Unassigned(v));
            }
        }
        let mut acc = Q::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for v in Var::ALL {
                let e = m.exp(v);
                for _ in 0..e {
                    t *= point.get(&v).unwrap();
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Compile to an `f64` term list for fast repeated evaluation.
    pub fn compile(&self) -> PolyF64 {
        PolyF64 {
            terms: self.terms.iter().map(|(m, c)| (m.0, q_to_f64(c))).collect(),
        }
    }
}

/// Flat `f64` view of a polynomial, for quadrature inner loops.
#[derive(Debug, Clone, Default)]
pub struct PolyF64 {
    terms: Vec<([u16; 4], f64)>,
}

impl PolyF64 {
    pub fn eval(&self, p: [f64; 4]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut t = *c;
            for k in 0..4 {
                for _ in 0..e[k] {
                    t *= p[k];
                }
            }
            acc += t;
        }
        acc
    }
}

/// Dense matrix of scalar polynomials (matrix-valued polynomial).
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMat<C: Coeff = Q> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<Poly<C>>,
}

impl<C: Coeff> PolyMat<C> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PolyMat { rows, cols, data: vec![Poly::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Poly<C>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        PolyMat { rows, cols, data }
    }

    pub fn at(&self, i: usize, j: usize) -> &Poly<C> {
        &self.data[i * self.cols + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut Poly<C> {
        &mut self.data[i * self.cols + j]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|p| p.is_zero())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix dims");
        PolyMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.map(|p| p.neg())
    }

    pub fn scale(&self, k: &Q) -> Self {
        self.map(|p| p.scale(k))
    }

    pub fn scale_poly(&self, s: &Poly<C>) -> Self {
        self.map(|p| p.try_mul(s, u32::MAX).expect("no cap"))
    }

    pub fn map(&self, f: impl Fn(&Poly<C>) -> Poly<C>) -> Self {
        PolyMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn transpose(&self) -> Self {
        PolyMat::from_fn(self.cols, self.rows, |i, j| self.at(j, i).clone())
    }

    /// Matrix product with degree-cap check.
    pub fn try_matmul(&self, other: &Self, cap: u32) -> Result<Self> {
        if self.cols != other.rows {
            return Err(PiError::DimMismatch(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = PolyMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Poly::zero();
                for k in 0..self.cols {
                    acc = acc.add(&self.at(i, k).try_mul(other.at(k, j), cap)?);
                }
                *out.at_mut(i, j) = acc;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        self.try_matmul(other, DEGREE_CAP).expect("matmul")
    }

    pub fn diff(&self, v: Var) -> Self {
        self.map(|p| p.diff(v))
    }

    pub fn subs(&self, v: Var, q: &Poly<C>) -> Self {
        self.map(|p| p.subs(v, q))
    }

    pub fn rename(&self, v: Var, w: Var) -> Self {
        self.map(|p| p.rename(v, w))
    }

    pub fn swap(&self, v: Var, w: Var) -> Self {
        self.map(|p| p.swap(v, w))
    }

    pub fn integrate(&self, v: Var, lo: &IntBound, hi: &IntBound) -> Result<Self> {
        let mut out = PolyMat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.at_mut(i, j) = self.at(i, j).integrate(v, lo, hi)?;
            }
        }
        Ok(out)
    }

    pub fn depends_on(&self, v: Var) -> bool {
        self.data.iter().any(|p| p.depends_on(v))
    }

    pub fn total_degree(&self) -> u32 {
        self.data.iter().map(|p| p.total_degree()).max().unwrap_or(0)
    }

    /// Stack vertically.
    pub fn vstack(blocks: &[&Self]) -> Self {
        assert!(!blocks.is_empty());
        let cols = blocks[0].cols;
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut out = PolyMat::zeros(rows, cols);
        let mut r0 = 0;
        for b in blocks {
            assert_eq!(b.cols, cols, "vstack cols");
            for i in 0..b.rows {
                for j in 0..cols {
                    *out.at_mut(r0 + i, j) = b.at(i, j).clone();
                }
            }
            r0 += b.rows;
        }
        out
    }

    /// Stack horizontally.
    pub fn hstack(blocks: &[&Self]) -> Self {
        assert!(!blocks.is_empty());
        let rows = blocks[0].rows;
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = PolyMat::zeros(rows, cols);
        let mut c0 = 0;
        for b in blocks {
            assert_eq!(b.rows, rows, "hstack rows");
            for i in 0..rows {
                for j in 0..b.cols {
                    *out.at_mut(i, c0 + j) = b.at(i, j).clone();
                }
            }
            c0 += b.cols;
        }
        out
    }

    pub fn slice_rows(&self, r0: usize, r1: usize) -> Self {
        PolyMat::from_fn(r1 - r0, self.cols, |i, j| self.at(r0 + i, j).clone())
    }

    pub fn slice_cols(&self, c0: usize, c1: usize) -> Self {
        PolyMat::from_fn(self.rows, c1 - c0, |i, j| self.at(i, c0 + j).clone())
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D + Copy) -> PolyMat<D> {
        PolyMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|p| p.map_coeffs(f)).collect(),
        }
    }
}

impl PolyMat<Q> {
    pub fn identity(n: usize) -> Self {
        PolyMat::from_fn(n, n, |i, j| if i == j { Poly::iconst(1) } else { Poly::zero() })
    }

    pub fn from_const(m: &[Vec<Q>]) -> Self {
        let rows = m.len();
        let cols = if rows > 0 { m[0].len() } else { 0 };
        PolyMat::from_fn(rows, cols, |i, j| Poly::qconst(m[i][j].clone()))
    }

    /// 1x1 matrix from a scalar polynomial.
    pub fn scalar(p: Poly<Q>) -> Self {
        let mut out = PolyMat::zeros(1, 1);
        *out.at_mut(0, 0) = p;
        out
    }
}

fn fmt_q(q: &Q) -> String {
    if q.denom().is_one() {
        format!("{}", q.numer())
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

impl fmt::Display for Poly<Q> {
    /// Renders as a sum of `coeff * x^i y^j theta^k nu^l` terms.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut factors: Vec<String> = Vec::new();
            for v in Var::ALL {
                let e = m.exp(v);
                if e == 1 {
                    factors.push(v.name().to_string());
                } else if e > 1 {
                    factors.push(format!("{}^{}", v.name(), e));
                }
            }
            if factors.is_empty() {
                write!(f, "{}", fmt_q(&mag))?;
            } else if mag.is_one() {
                write!(f, "{}", factors.join(" "))?;
            } else {
                write!(f, "{} {}", fmt_q(&mag), factors.join(" "))?;
            }
        }
        Ok(())
    }
}

/// Exact term-list form `[e_x, e_y, e_theta, e_nu, "num/den"]` used in dumps.
pub type TermList = Vec<(u16, u16, u16, u16, String)>;

impl Poly<Q> {
    pub fn to_terms(&self) -> TermList {
        self.terms
            .iter()
            .map(|(m, c)| (m.0[0], m.0[1], m.0[2], m.0[3], fmt_q(c)))
            .collect()
    }

    pub fn from_terms(terms: &TermList) -> Result<Self> {
        let mut p = Poly::zero();
        for (ex, ey, et, en, c) in terms {
            let q = parse_q(c)?;
            p.add_term(Mono([*ex, *ey, *et, *en]), &q);
        }
        Ok(p)
    }
}

/// Parse a rational written as `num`, `num/den`, or a decimal literal.
pub fn parse_q(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = |_| PiError::SpecFile(format!("cannot parse rational '{s}'"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(bad)?;
        let d: BigInt = d.trim().parse().map_err(bad)?;
        if d.is_zero() {
            return Err(PiError::SpecFile(format!("zero denominator in '{s}'")));
        }
        return Ok(Q::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let int_part: BigInt = if int.trim() == "-" || int.trim().is_empty() {
            BigInt::zero()
        } else {
            int.trim().parse().map_err(bad)?
        };
        let frac_digits: BigInt = if frac.is_empty() { BigInt::zero() } else { frac.parse().map_err(bad)? };
        let den = BigInt::from(10u32).pow(frac.len() as u32);
        let mag = int_part.abs() * &den + frac_digits;
        let signed = if neg { -mag } else { mag };
        return Ok(Q::new(signed, den));
    }
    let n: BigInt = s.parse().map_err(bad)?;
    Ok(Q::from_integer(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn px() -> Poly<Q> {
        Poly::var(Var::X)
    }
    fn py() -> Poly<Q> {
        Poly::var(Var::Y)
    }
    fn pt() -> Poly<Q> {
        Poly::var(Var::Theta)
    }

    #[test]
    fn add_cancellation_and_identity() {
        // (x + theta) + (-theta) = x
        let p = px().add(&pt());
        assert_eq!(p.add(&pt().neg()), px());
        // p + 0 = p
        assert_eq!(p.add(&Poly::zero()), p);
        // 2xy + 3xy = 5xy
        let xy = px().mul(&py());
        assert_eq!(xy.scale(&qi(2)).add(&xy.scale(&qi(3))), xy.scale(&qi(5)));
    }

    #[test]
    fn mul_expansion() {
        // (x - theta)(y - nu) = xy - x nu - theta y + theta nu
        let p = px().sub(&pt());
        let q = py().sub(&Poly::var(Var::Nu));
        let prod = p.mul(&q);
        assert_eq!(prod.n_terms(), 4);
        assert_eq!(prod.to_terms().len(), 4);
        // identity matrix times diag(x, y)
        let i2 = PolyMat::identity(2);
        let mut d = PolyMat::zeros(2, 2);
        *d.at_mut(0, 0) = px();
        *d.at_mut(1, 1) = py();
        assert_eq!(i2.matmul(&d), d);
    }

    #[test]
    fn degree_cap_flags() {
        let p = pow_poly(&px(), 13);
        assert!(matches!(p.try_mul(&p, 24), Err(PiError::DegreeCap { .. })));
    }

    #[test]
    fn diff_examples() {
        // d/dx (x^2 y) = 2xy
        let p = px().mul(&px()).mul(&py());
        assert_eq!(p.diff(Var::X), px().mul(&py()).scale(&qi(2)));
        // d/dx (y - nu) = 0
        assert!(py().sub(&Poly::var(Var::Nu)).diff(Var::X).is_zero());
        // d/dy ((y-c)(x-theta)) = (x-theta) with c = 1/3
        let c = Poly::qconst(qr(1, 3));
        let p = py().sub(&c).mul(&px().sub(&pt()));
        assert_eq!(p.diff(Var::Y), px().sub(&pt()));
    }

    #[test]
    fn integrate_examples() {
        // int_a^x theta dtheta = (x^2 - a^2)/2 with a = 0
        let r = pt()
            .integrate(Var::Theta, &IntBound::Const(qi(0)), &IntBound::Var(Var::X))
            .unwrap();
        assert_eq!(r, px().mul(&px()).scale(&qr(1, 2)));
        // int_0^1 1 dtheta = 1
        let one = Poly::iconst(1);
        let r = one
            .integrate(Var::Theta, &IntBound::Const(qi(0)), &IntBound::Const(qi(1)))
            .unwrap();
        assert_eq!(r, Poly::iconst(1));
        // int_x^b (theta - x) dtheta = (b-x)^2/2 with b = 1
        let p = pt().sub(&px());
        let r = p
            .integrate(Var::Theta, &IntBound::Var(Var::X), &IntBound::Const(qi(1)))
            .unwrap();
        let bmx = Poly::iconst(1).sub(&px());
        assert_eq!(r, bmx.mul(&bmx).scale(&qr(1, 2)));
        // bound containing the dummy is rejected
        assert!(pt()
            .integrate(Var::Theta, &IntBound::Const(qi(0)), &IntBound::Var(Var::Theta))
            .is_err());
    }

    #[test]
    fn subs_examples() {
        // (x - theta)|_{theta=x} = 0
        assert!(px().sub(&pt()).subs(Var::Theta, &px()).is_zero());
        // (theta nu)|_{theta=x} = x nu
        let tn = pt().mul(&Poly::var(Var::Nu));
        assert_eq!(tn.subs(Var::Theta, &px()), px().mul(&Poly::var(Var::Nu)));
        // ((y-c)(x-theta))|_{theta=a}, a=0, c=1/2
        let p = py().sub(&Poly::qconst(qr(1, 2))).mul(&px().sub(&pt()));
        let r = p.subs(Var::Theta, &Poly::iconst(0));
        assert_eq!(r, py().sub(&Poly::qconst(qr(1, 2))).mul(&px()));
    }

    #[test]
    fn eval_examples() {
        let mut pointt = BTreeMap::new();
        pointt.insert(Var::X, qr(1, 2));
        pointt.insert(Var::Y, qr(1, 3));
        let xy = px().mul(&py());
        assert_eq!(xy.eval_q(&pointt).unwrap(), qr(1, 6));
        assert_eq!(Poly::<Q>::zero().eval_q(&BTreeMap::new()).unwrap(), qi(0));
        // ((1-x)(1-y)) at (0,0) = 1
        let p = Poly::iconst(1).sub(&px()).mul(&Poly::iconst(1).sub(&py()));
        let mut origin = BTreeMap::new();
        origin.insert(Var::X, qi(0));
        origin.insert(Var::Y, qi(0));
        assert_eq!(p.eval_q(&origin).unwrap(), qi(1));
        // unassigned variable errors
        assert!(xy.eval_q(&origin.clone().into_iter().take(1).collect()).is_err());
    }

    #[test]
    fn leibniz_rule_exact() {
        // d/dx int_a^x K(x,theta) dtheta = K(x,x) + int_a^x dK/dx dtheta
        // for a handful of polynomial kernels, exactly.
        let kernels = [
            px().mul(&pt()),
            px().mul(&px()).add(&pt().mul(&pt()).scale(&qi(3))),
            px().sub(&pt()).mul(&px().add(&pt())),
        ];
        let a = IntBound::Const(qr(-1, 3));
        for k in &kernels {
            let lhs = k.integrate(Var::Theta, &a, &IntBound::Var(Var::X)).unwrap().diff(Var::X);
            let trace = k.subs(Var::Theta, &px());
            let rhs = trace.add(&k.diff(Var::X).integrate(Var::Theta, &a, &IntBound::Var(Var::X)).unwrap());
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn display_and_terms_roundtrip() {
        let p = px().mul(&px()).scale(&qr(-3, 2)).add(&py().mul(&pt())).add(&Poly::iconst(1));
        let s = format!("{p}");
        assert!(s.contains("x^2"));
        let back = Poly::from_terms(&p.to_terms()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn parse_rationals() {
        assert_eq!(parse_q("3/4").unwrap(), qr(3, 4));
        assert_eq!(parse_q("-2").unwrap(), qi(-2));
        assert_eq!(parse_q("0.25").unwrap(), qr(1, 4));
        assert_eq!(parse_q("-1.5").unwrap(), qr(-3, 2));
        assert!(parse_q("x").is_err());
    }

    fn arb_poly() -> impl Strategy<Value = Poly<Q>> {
        prop::collection::vec(
            ((0u16..3, 0u16..3, 0u16..3, 0u16..3), -6i64..7, 1i64..5),
            0..6,
        )
        .prop_map(|terms| {
            let mut p = Poly::zero();
            for ((ex, ey, et, en), n, d) in terms {
                p.add_term(Mono([ex, ey, et, en]), &qr(n, d));
            }
            p
        })
    }

    proptest! {
        #[test]
        fn ring_laws(a in arb_poly(), b in arb_poly(), c in arb_poly()) {
            // commutativity
            prop_assert_eq!(a.add(&b), b.add(&a));
            prop_assert_eq!(a.mul(&b), b.mul(&a));
            // associativity
            prop_assert_eq!(a.add(&b).add(&c), a.add(&b.add(&c)));
            prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
            // distributivity
            prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        }

        #[test]
        fn leibniz_property(k in arb_poly()) {
            let a = IntBound::Const(qi(0));
            let lhs = k.integrate(Var::Theta, &a, &IntBound::Var(Var::X)).unwrap().diff(Var::X);
            let rhs = k.subs(Var::Theta, &Poly::var(Var::X))
                .add(&k.diff(Var::X).integrate(Var::Theta, &a, &IntBound::Var(Var::X)).unwrap());
            prop_assert_eq!(lhs, rhs);
        }
    }
}
