//! Quantum affine sl2 at small level, realized on twisted tensor powers of
//! the level-1 lattice realization, plus Cartan data for the scalar layer.

use crate::exactnum::{rat_int, HSeries};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum CartanError {
    #[error("unknown Cartan label {0:?}")]
    UnknownLabel(String),
    #[error("cartan matrix is not a valid GCM of supported rank")]
    Invalid,
}

/// Cartan datum: index set, Cartan matrix, lacing number and the r_i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CartanData {
    pub label: String,
    a: Vec<Vec<i64>>,
    pub r: i64,
    r_i: Vec<i64>,
}

impl CartanData {
    pub fn new(label: &str, a: Vec<Vec<i64>>, r: i64, r_i: Vec<i64>) -> Result<Self, CartanError> {
        let n = a.len();
        if n == 0 || n > 4 || a.iter().any(|row| row.len() != n) || r_i.len() != n {
            return Err(CartanError::Invalid);
        }
        if !(1..=3).contains(&r) {
            return Err(CartanError::Invalid);
        }
        for i in 0..n {
            if a[i][i] != 2 {
                return Err(CartanError::Invalid);
            }
            for j in 0..n {
                if i != j && a[i][j] > 0 {
                    return Err(CartanError::Invalid);
                }
                // r_i a_ij = r_j a_ji
                if r_i[i] * a[i][j] != r_i[j] * a[j][i] {
                    return Err(CartanError::Invalid);
                }
            }
            if r_i[i] != 1 && r_i[i] != r {
                return Err(CartanError::Invalid);
            }
        }
        Ok(CartanData {
            label: label.to_string(),
            a,
            r,
            r_i,
        })
    }

    pub fn a1() -> Self {
        Self::new("A1", vec![vec![2]], 1, vec![1]).unwrap()
    }

    pub fn a2() -> Self {
        Self::new("A2", vec![vec![2, -1], vec![-1, 2]], 1, vec![1, 1]).unwrap()
    }

    pub fn b2() -> Self {
        // alpha_1 long, alpha_2 short: a_12 = -1, a_21 = -2
        Self::new("B2", vec![vec![2, -1], vec![-2, 2]], 2, vec![2, 1]).unwrap()
    }

    pub fn g2() -> Self {
        // alpha_1 long, alpha_2 short: a_12 = -1, a_21 = -3
        Self::new("G2", vec![vec![2, -1], vec![-3, 2]], 3, vec![3, 1]).unwrap()
    }

    pub fn by_label(label: &str) -> Result<Self, CartanError> {
        match label.to_ascii_uppercase().as_str() {
            "A1" => Ok(Self::a1()),
            "A2" => Ok(Self::a2()),
            "B2" => Ok(Self::b2()),
            "G2" => Ok(Self::g2()),
            other => Err(CartanError::UnknownLabel(other.to_string())),
        }
    }

    pub fn rank(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self, i: usize, j: usize) -> i64 {
        self.a[i][j]
    }

    pub fn r_i(&self, i: usize) -> i64 {
        self.r_i[i]
    }

    /// m_{ij} = 1 - a_{ij} (Serre exponent).
    pub fn m(&self, i: usize, j: usize) -> i64 {
        1 - self.a[i][j]
    }

    /// Gram matrix of sqrt(ell) Q_L: <beta_i, beta_j> = ell r a_ij / r_j.
    pub fn scaled_long_root_gram(&self, ell: i64) -> Vec<Vec<i64>> {
        let n = self.rank();
        let mut g = vec![vec![0i64; n]; n];
        for i in 0..n {
            for j in 0..n {
                let num = ell * self.r * self.a[i][j];
                assert!(num % self.r_i[j] == 0);
                g[i][j] = num / self.r_i[j];
            }
        }
        g
    }
}

/// 2 h f0(2 h d) [r_i]_{q^d} as a symbol in t = h d (shared by E_ell and the
/// deformed Cartan fields).
pub fn e_ell_symbol(c: &CartanData, i: usize, ell: i64, order: usize) -> HSeries {
    use crate::qcalc::{sym_exp, sym_f0, sym_sinh_ratio};
    let two_h = HSeries::monomial(rat_int(2), 1, order);
    sym_exp(-c.r * ell, order)
        .mul(&sym_f0(2, order))
        .mul(&sym_sinh_ratio(c.r_i(i), 1, order))
        .mul(&two_h)
        .neg()
}

mod realization;
mod suites;
pub use realization::*;
pub use suites::*;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartan_data_validates() {
        for c in [CartanData::a1(), CartanData::a2(), CartanData::b2(), CartanData::g2()] {
            for i in 0..c.rank() {
                for j in 0..c.rank() {
                    assert_eq!(c.r_i(i) * c.a(i, j), c.r_i(j) * c.a(j, i));
                }
            }
        }
        assert!(CartanData::new("bad", vec![vec![2, 1], vec![1, 2]], 1, vec![1, 1]).is_err());
    }

    #[test]
    fn scaled_gram_is_even_and_symmetric() {
        for c in [CartanData::a1(), CartanData::a2(), CartanData::b2(), CartanData::g2()] {
            for ell in 1..=3 {
                let g = c.scaled_long_root_gram(ell);
                for i in 0..c.rank() {
                    assert_eq!(g[i][i].rem_euclid(2), 0);
                    for j in 0..c.rank() {
                        assert_eq!(g[i][j], g[j][i]);
                    }
                }
            }
        }
        // sl2: <beta, beta> = 2 ell
        let g = CartanData::a1().scaled_long_root_gram(3);
        assert_eq!(g[0][0], 6);
    }
}
