//! Affine forms `c0 + sum_k c_k u_k` over scalar problem unknowns.
//!
//! Used as the polynomial coefficient ring while assembling operator
//! inequalities: the PSD-matrix entries and the gain variable stay symbolic
//! through every kernel composition, and coefficient matching then reads the
//! linear constraints straight off the kernels. Multiplying two forms that
//! both carry unknowns is a modeling error (the inequality would no longer be
//! linear), so it panics.

use crate::poly::{qi, Coeff, Q};
use num_traits::Zero;
use std::collections::BTreeMap;

/// Identifier of a scalar unknown (an entry of some PSD matrix, or gamma).
pub type UnknownId = u32;

/// Affine form over unknowns with exact rational coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Lin {
    pub constant: Q,
    pub terms: BTreeMap<UnknownId, Q>,
}

impl Lin {
    pub fn from_const(q: Q) -> Self {
        Lin { constant: q, terms: BTreeMap::new() }
    }

    pub fn unknown(id: UnknownId) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(id, qi(1));
        Lin { constant: Q::zero(), terms }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Substitute numeric values for the unknowns.
    pub fn eval(&self, values: &dyn Fn(UnknownId) -> Q) -> Q {
        let mut acc = self.constant.clone();
        for (id, c) in &self.terms {
            acc += c * values(*id);
        }
        acc
    }
}

impl std::ops::Add for Lin {
    type Output = Lin;
    fn add(mut self, rhs: Lin) -> Lin {
        Coeff::add_assign(&mut self, &rhs);
        self
    }
}

impl num_traits::Zero for Lin {
    fn zero() -> Self {
        Lin::from_const(Q::zero())
    }
    fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.terms.is_empty()
    }
}

impl Coeff for Lin {
    fn add_assign(&mut self, other: &Self) {
        self.constant += &other.constant;
        for (id, c) in &other.terms {
            let e = self.terms.entry(*id).or_insert_with(Q::zero);
            *e += c;
            if e.is_zero() {
                self.terms.remove(id);
            }
        }
    }

    fn neg(&self) -> Self {
        Lin {
            constant: -self.constant.clone(),
            terms: self.terms.iter().map(|(k, v)| (*k, -v.clone())).collect(),
        }
    }

    fn mul(&self, other: &Self) -> Self {
        if other.is_constant() {
            self.scale(&other.constant)
        } else if self.is_constant() {
            other.scale(&self.constant)
        } else {
            panic!("product of two unknown-bearing affine forms; inequality must stay linear in the unknowns")
        }
    }

    fn scale(&self, k: &Q) -> Self {
        if k.is_zero() {
            return <Lin as num_traits::Zero>::zero();
        }
        Lin {
            constant: &self.constant * k,
            terms: self.terms.iter().map(|(id, c)| (*id, c * k)).collect(),
        }
    }

    fn from_q(q: Q) -> Self {
        Lin::from_const(q)
    }

    fn as_q(&self) -> Option<&Q> {
        if self.is_constant() {
            Some(&self.constant)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::qr;

    #[test]
    fn affine_arithmetic() {
        let mut a = Lin::unknown(3).scale(&qi(2));
        a.add_assign(&Lin::from_const(qi(5)));
        let b = a.mul(&Lin::from_const(qr(1, 2)));
        assert_eq!(b.constant, qr(5, 2));
        assert_eq!(b.terms.get(&3), Some(&qi(1)));
        let z = b.add_cancel();
        assert!(z.is_zero());
    }

    impl Lin {
        fn add_cancel(&self) -> Lin {
            let mut out = self.clone();
            out.add_assign(&self.neg());
            out
        }
    }

    #[test]
    #[should_panic]
    fn nonlinear_product_panics() {
        let a = Lin::unknown(0);
        let b = Lin::unknown(1);
        let _ = a.mul(&b);
    }
}
