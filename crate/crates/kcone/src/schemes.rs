//! Triangular d/c coefficient schemes, their diagonal matrices, the Γ
//! diagonal and the Hurwitz coefficients γ.

use std::sync::OnceLock;

use num_traits::{One, Zero};

use crate::coeffsys::IdentityCheck;
use crate::error::KconeError;
use crate::linalg::{binomial, qf, QMatrix, Q};

/// Rows kept in the shared table.
const STANDARD_ROWS: usize = 96;

/// Memoized d- and c-schemes, indexed by `(m, l)` with `l ≥ 1`, `m ≥ 2l − 2`.
#[derive(Clone, Debug)]
pub struct SchemeTable {
    max_m: usize,
    d: Vec<Vec<Q>>,
    c: Vec<Vec<Q>>,
}

fn d_closed(m: usize, l: usize) -> Q {
    let (m, l) = (m as i64, l as i64);
    if m == 2 * l - 2 {
        qf(2 * l - 1, l)
    } else if m % 2 == 1 {
        let n = (m + 1) / 2;
        qf(2 * n, 2 * n + 1 - l)
    } else {
        let n = m / 2;
        qf(2 * n + 1, 2 * n + 2 - l)
    }
}

impl SchemeTable {
    /// Table for all rows `m ≤ max_m`.
    pub fn new(max_m: usize) -> Self {
        let mut d = Vec::with_capacity(max_m + 1);
        for m in 0..=max_m {
            let lmax = m / 2 + 1;
            let mut row = vec![Q::zero(); lmax + 1];
            for (l, slot) in row.iter_mut().enumerate().skip(1) {
                *slot = d_closed(m, l);
            }
            d.push(row);
        }
        let mut table = SchemeTable { max_m, d, c: Vec::new() };
        table.rebuild_c();
        table
    }

    /// Shared table with rows up to a generous fixed bound.
    pub fn standard() -> &'static SchemeTable {
        static TABLE: OnceLock<SchemeTable> = OnceLock::new();
        TABLE.get_or_init(|| SchemeTable::new(STANDARD_ROWS))
    }

    fn rebuild_c(&mut self) {
        let mut c: Vec<Vec<Q>> = Vec::with_capacity(self.max_m + 1);
        for m in 0..=self.max_m {
            let lmax = m / 2 + 1;
            let mut row = vec![Q::zero(); lmax + 1];
            for (l, slot) in row.iter_mut().enumerate().skip(1) {
                *slot = if m == 2 * l - 2 {
                    Q::one()
                } else {
                    &c[m - 1][l] * &self.d[m - 1][l]
                };
            }
            c.push(row);
        }
        self.c = c;
    }

    /// Copy of this table with one d-entry replaced; the c-scheme is rebuilt
    /// from the modified d-scheme. Used by mutation tests.
    pub fn with_d_override(&self, m: usize, l: usize, value: Q) -> Result<Self, KconeError> {
        self.check(m, l)?;
        let mut t = self.clone();
        t.d[m][l] = value;
        t.rebuild_c();
        Ok(t)
    }

    pub fn max_m(&self) -> usize {
        self.max_m
    }

    fn check(&self, m: usize, l: usize) -> Result<(), KconeError> {
        if l == 0 || m + 2 < 2 * l || m > self.max_m {
            return Err(KconeError::SchemeIndex { m, l });
        }
        Ok(())
    }

    pub fn d_coeff(&self, m: usize, l: usize) -> Result<Q, KconeError> {
        self.check(m, l)?;
        Ok(self.d[m][l].clone())
    }

    pub fn c_coeff(&self, m: usize, l: usize) -> Result<Q, KconeError> {
        self.check(m, l)?;
        Ok(self.c[m][l].clone())
    }

    /// Scalar diagonal `[d_{order,1} … d_{order,⌈order/2⌉}]`.
    pub fn d_diag(&self, order: usize) -> Result<Vec<Q>, KconeError> {
        if order == 0 {
            return Err(KconeError::SchemeIndex { m: 0, l: 0 });
        }
        (1..=order.div_ceil(2)).map(|l| self.d_coeff(order, l)).collect()
    }

    /// Scalar diagonal `[c_{order,1} … c_{order,⌈order/2⌉}]`.
    pub fn c_diag(&self, order: usize) -> Result<Vec<Q>, KconeError> {
        if order == 0 {
            return Err(KconeError::SchemeIndex { m: 0, l: 0 });
        }
        (1..=order.div_ceil(2)).map(|l| self.c_coeff(order, l)).collect()
    }

    /// `D^order` as a diagonal matrix of scalars.
    pub fn d_matrix(&self, order: usize) -> Result<QMatrix, KconeError> {
        Ok(diag(&self.d_diag(order)?))
    }

    /// `C^order` as a diagonal matrix of scalars.
    pub fn c_matrix(&self, order: usize) -> Result<QMatrix, KconeError> {
        Ok(diag(&self.c_diag(order)?))
    }
}

/// Exact column-ratio and product identities of the schemes for rows up to `2·max_half + 1`.
pub fn scheme_identity_check(table: &SchemeTable, max_half: usize) -> Result<IdentityCheck, KconeError> {
    let mut check = IdentityCheck::pass();
    let mut expect = |label: String, lhs: Q, rhs: Q| {
        check = std::mem::replace(&mut check, IdentityCheck::pass()).and(IdentityCheck::vectors(&label, &[lhs], &[rhs]));
    };
    for m in 1..=max_half {
        for j in 0..m {
            let r = table.d_coeff(2 * m, 2 + j)? / table.d_coeff(2 * m - 1, 1 + j)?;
            expect(format!("d({},{})/d({},{})", 2 * m, 2 + j, 2 * m - 1, 1 + j), r, table.d_coeff(2 * m, 2)?);
            let r = table.d_coeff(2 * m + 1, 2 + j)? / table.d_coeff(2 * m, 1 + j)?;
            expect(format!("d({},{})/d({},{})", 2 * m + 1, 2 + j, 2 * m, 1 + j), r, table.d_coeff(2 * m + 1, 2)?);
        }
        for j in 0..m.saturating_sub(1) {
            let r = table.d_coeff(2 * m + 1, 3 + j)? / table.d_coeff(2 * m - 1, 1 + j)?;
            let prod = table.d_coeff(2 * m, 2)? * table.d_coeff(2 * m + 1, 2)?;
            expect(format!("d({},{})/d({},{})", 2 * m + 1, 3 + j, 2 * m - 1, 1 + j), r, prod);
        }
    }
    for m in 0..=(2 * max_half + 1) {
        for l in 1..=(m / 2 + 1) {
            let rhs = if m == 2 * l - 2 { Q::one() } else { table.c_coeff(m - 1, l)? * table.d_coeff(m - 1, l)? };
            expect(format!("c({m},{l})"), table.c_coeff(m, l)?, rhs);
        }
    }
    Ok(check)
}

/// Shorthand for the shared table.
pub fn d_coeff(m: usize, l: usize) -> Result<Q, KconeError> {
    SchemeTable::standard().d_coeff(m, l)
}

/// Shorthand for the shared table.
pub fn c_coeff(m: usize, l: usize) -> Result<Q, KconeError> {
    SchemeTable::standard().c_coeff(m, l)
}

/// Diagonal matrix with the given scalar entries.
pub fn diag(entries: &[Q]) -> QMatrix {
    let mut m = QMatrix::zeros(entries.len(), entries.len());
    for (i, e) in entries.iter().enumerate() {
        m[(i, i)] = e.clone();
    }
    m
}

/// Expand a scalar diagonal into the block diagonal `Diag[s_i · I_n]`.
pub fn block_expand(entries: &[Q], n: usize) -> QMatrix {
    let mut m = QMatrix::zeros(entries.len() * n, entries.len() * n);
    for (i, e) in entries.iter().enumerate() {
        for j in 0..n {
            m[(i * n + j, i * n + j)] = e.clone();
        }
    }
    m
}

/// `Γ^k = Diag[Γ_k^k, …, Γ_1^k]` with `Γ_i^k = C(k+i, i−1)`.
pub fn gamma_diag(k: usize) -> Result<Vec<Q>, KconeError> {
    if k == 0 {
        return Err(KconeError::SchemeIndex { m: 0, l: 0 });
    }
    Ok((1..=k).rev().map(|i| binomial((k + i) as i64, i as i64 - 1)).collect())
}

/// `γ_t^{2k+l} = C(2k+1+l, t) / C(2t, t)`.
pub fn hurwitz_gamma(t: usize, k: usize, l: usize) -> Result<Q, KconeError> {
    if t > k {
        return Err(KconeError::SchemeIndex { m: 2 * k + l, l: t });
    }
    Ok(binomial((2 * k + 1 + l) as i64, t as i64) / binomial(2 * t as i64, t as i64))
}
