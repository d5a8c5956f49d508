//! Exact dense linear algebra over the rationals.
//!
//! Everything in the resolution layer makes discrete decisions (ranks,
//! kernels, membership), so all routines here are exact: no tolerances,
//! no pivoting heuristics beyond "first nonzero entry".

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational scalar.
pub type Q = BigRational;

/// Build a rational from an integer.
pub fn qi(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

/// Build a rational `num/den`.
pub fn qf(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

/// `n!` as a rational.
pub fn factorial(n: usize) -> Q {
    let mut acc = BigInt::one();
    for i in 2..=n {
        acc *= BigInt::from(i);
    }
    Q::from_integer(acc)
}

/// Binomial coefficient as a rational (zero outside the triangle).
pub fn binomial(n: i64, k: i64) -> Q {
    if k < 0 || n < 0 || k > n {
        return Q::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc *= BigInt::from(n - i);
        acc /= BigInt::from(i + 1);
    }
    Q::from_integer(acc)
}

/// Lossy conversion to `f64`.
pub fn to_f64(v: &Q) -> f64 {
    v.to_f64().unwrap_or_else(|| {
        // numerator or denominator overflows f64 individually
        let n = v.numer().bits() as i64;
        let d = v.denom().bits() as i64;
        let shift = n - d;
        let scaled = if shift > 0 {
            v / Q::from_integer(BigInt::one() << (shift as usize))
        } else {
            v * Q::from_integer(BigInt::one() << ((-shift) as usize))
        };
        scaled.to_f64().unwrap_or(0.0) * 2f64.powi(shift as i32)
    })
}

/// Exact conversion of a finite `f64` to a rational.
pub fn from_f64(v: f64) -> Q {
    Q::from_float(v).unwrap_or_else(Q::zero)
}

/// Dense row-major matrix of exact rationals.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct QMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Q>,
}

impl fmt::Debug for QMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "QMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self[(r, c)].to_string()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl std::ops::Index<(usize, usize)> for QMatrix {
    type Output = Q;
    fn index(&self, (r, c): (usize, usize)) -> &Q {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for QMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Q {
        &mut self.data[r * self.cols + c]
    }
}

/// Result of a row reduction: the reduced matrix and its pivot columns.
#[derive(Clone, Debug)]
pub struct Rref {
    pub matrix: QMatrix,
    pub pivots: Vec<usize>,
}

impl QMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMatrix { rows, cols, data: vec![Q::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Q::one();
        }
        m
    }

    /// Scalar multiple of the identity.
    pub fn scalar(n: usize, s: &Q) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = s.clone();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Q>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row.iter().cloned());
        }
        QMatrix { rows: r, cols: c, data }
    }

    /// Matrix whose columns are the given vectors (all of length `rows`).
    pub fn from_cols(rows: usize, cols: &[Vec<Q>]) -> Self {
        let mut m = Self::zeros(rows, cols.len());
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), rows, "column length mismatch");
            for (i, v) in col.iter().enumerate() {
                m[(i, j)] = v.clone();
            }
        }
        m
    }

    pub fn from_i64(rows: usize, cols: usize, vals: &[i64]) -> Self {
        assert_eq!(vals.len(), rows * cols);
        QMatrix { rows, cols, data: vals.iter().map(|&v| qi(v)).collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn col(&self, j: usize) -> Vec<Q> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn row(&self, i: usize) -> Vec<Q> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn columns(&self) -> Vec<Vec<Q>> {
        (0..self.cols).map(|j| self.col(j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, other: &QMatrix) -> QMatrix {
        assert_eq!(self.cols, other.rows, "shape mismatch in product");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = &self[(i, l)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(l, j)];
                    if !b.is_zero() {
                        out[(i, j)] += a * b;
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Q]) -> Vec<Q> {
        assert_eq!(self.cols, v.len(), "shape mismatch in matrix-vector product");
        (0..self.rows)
            .map(|i| {
                let mut acc = Q::zero();
                for (j, x) in v.iter().enumerate() {
                    let a = &self[(i, j)];
                    if !a.is_zero() && !x.is_zero() {
                        acc += a * x;
                    }
                }
                acc
            })
            .collect()
    }

    pub fn add(&self, other: &QMatrix) -> QMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        QMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &QMatrix) -> QMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        QMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: &Q) -> QMatrix {
        QMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn neg(&self) -> QMatrix {
        QMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| -a).collect() }
    }

    pub fn add_assign(&mut self, other: &QMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            if !b.is_zero() {
                *a += b;
            }
        }
    }

    /// Copy of the sub-matrix starting at `(r0, c0)` with the given shape.
    pub fn sub_matrix(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> QMatrix {
        let mut out = Self::zeros(nr, nc);
        for i in 0..nr {
            for j in 0..nc {
                out[(i, j)] = self[(r0 + i, c0 + j)].clone();
            }
        }
        out
    }

    pub fn set_sub_matrix(&mut self, r0: usize, c0: usize, src: &QMatrix) {
        for i in 0..src.rows {
            for j in 0..src.cols {
                self[(r0 + i, c0 + j)] = src[(i, j)].clone();
            }
        }
    }

    /// Select columns by index.
    pub fn select_cols(&self, idx: &[usize]) -> QMatrix {
        let mut out = Self::zeros(self.rows, idx.len());
        for (jj, &j) in idx.iter().enumerate() {
            for i in 0..self.rows {
                out[(i, jj)] = self[(i, j)].clone();
            }
        }
        out
    }

    /// Select rows by index.
    pub fn select_rows(&self, idx: &[usize]) -> QMatrix {
        let mut out = Self::zeros(idx.len(), self.cols);
        for (ii, &i) in idx.iter().enumerate() {
            for j in 0..self.cols {
                out[(ii, j)] = self[(i, j)].clone();
            }
        }
        out
    }

    pub fn hstack(parts: &[&QMatrix]) -> QMatrix {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut c0 = 0;
        for p in parts {
            assert_eq!(p.rows, rows, "hstack row mismatch");
            out.set_sub_matrix(0, c0, p);
            c0 += p.cols;
        }
        out
    }

    pub fn vstack(parts: &[&QMatrix]) -> QMatrix {
        let cols = parts.first().map_or(0, |p| p.cols);
        let rows: usize = parts.iter().map(|p| p.rows).sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for p in parts {
            assert_eq!(p.cols, cols, "vstack column mismatch");
            out.set_sub_matrix(r0, 0, p);
            r0 += p.rows;
        }
        out
    }

    pub fn block_diag(parts: &[&QMatrix]) -> QMatrix {
        let rows: usize = parts.iter().map(|p| p.rows).sum();
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for p in parts {
            out.set_sub_matrix(r0, c0, p);
            r0 += p.rows;
            c0 += p.cols;
        }
        out
    }

    /// Reduced row echelon form.
    pub fn rref(&self) -> Rref {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| !m[(i, c)].is_zero()) else {
                continue;
            };
            if p != r {
                for j in 0..m.cols {
                    m.data.swap(p * m.cols + j, r * m.cols + j);
                }
            }
            let inv = m[(r, c)].recip();
            for j in c..m.cols {
                let v = &m[(r, j)] * &inv;
                m[(r, j)] = v;
            }
            for i in 0..m.rows {
                if i == r || m[(i, c)].is_zero() {
                    continue;
                }
                let f = m[(i, c)].clone();
                for j in c..m.cols {
                    if m[(r, j)].is_zero() {
                        continue;
                    }
                    let v = &f * &m[(r, j)];
                    m[(i, j)] -= v;
                }
            }
            pivots.push(c);
            r += 1;
        }
        Rref { matrix: m, pivots }
    }

    pub fn rank(&self) -> usize {
        self.rref().pivots.len()
    }

    /// Basis of the null space, as the columns of the returned matrix.
    pub fn kernel(&self) -> QMatrix {
        let Rref { matrix, pivots } = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut out = Self::zeros(self.cols, free.len());
        for (k, &f) in free.iter().enumerate() {
            out[(f, k)] = Q::one();
            for (r, &p) in pivots.iter().enumerate() {
                out[(p, k)] = -matrix[(r, f)].clone();
            }
        }
        out
    }

    /// Basis of the column space: the pivot columns of `self`.
    pub fn column_space(&self) -> QMatrix {
        let pivots = self.rref().pivots;
        self.select_cols(&pivots)
    }

    /// One solution of `self · x = b`, or `None` if the system is inconsistent.
    pub fn solve(&self, b: &[Q]) -> Option<Vec<Q>> {
        assert_eq!(b.len(), self.rows);
        let bm = QMatrix::from_cols(self.rows, &[b.to_vec()]);
        let aug = QMatrix::hstack(&[self, &bm]);
        let Rref { matrix, pivots } = aug.rref();
        if pivots.last() == Some(&self.cols) {
            return None;
        }
        let mut x = vec![Q::zero(); self.cols];
        for (r, &p) in pivots.iter().enumerate() {
            x[p] = matrix[(r, self.cols)].clone();
        }
        Some(x)
    }

    /// Solve `self · X = B` column by column.
    pub fn solve_matrix(&self, b: &QMatrix) -> Option<QMatrix> {
        assert_eq!(b.rows, self.rows);
        let aug = QMatrix::hstack(&[self, b]);
        let Rref { matrix, pivots } = aug.rref();
        if pivots.iter().any(|&p| p >= self.cols) {
            return None;
        }
        let mut x = Self::zeros(self.cols, b.cols);
        for (r, &p) in pivots.iter().enumerate() {
            for j in 0..b.cols {
                x[(p, j)] = matrix[(r, self.cols + j)].clone();
            }
        }
        Some(x)
    }

    pub fn inverse(&self) -> Option<QMatrix> {
        if self.rows != self.cols {
            return None;
        }
        let x = self.solve_matrix(&QMatrix::identity(self.rows))?;
        if self.rank() == self.rows {
            Some(x)
        } else {
            None
        }
    }

    /// Largest absolute entry, used for deviation reports.
    pub fn max_abs(&self) -> Q {
        self.data.iter().map(|v| v.abs()).max().unwrap_or_else(Q::zero)
    }

    pub fn to_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| to_f64(&self[(i, j)]))
    }
}

/// Largest absolute entry of a vector.
pub fn vec_max_abs(v: &[Q]) -> Q {
    v.iter().map(|x| x.abs()).max().unwrap_or_else(Q::zero)
}

pub fn vec_is_zero(v: &[Q]) -> bool {
    v.iter().all(|x| x.is_zero())
}

pub fn vec_sub(a: &[Q], b: &[Q]) -> Vec<Q> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vec_add(a: &[Q], b: &[Q]) -> Vec<Q> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vec_scale(a: &[Q], s: &Q) -> Vec<Q> {
    a.iter().map(|x| x * s).collect()
}

/// A linear subspace of `K^ambient`, held by an independent basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subspace {
    basis: QMatrix,
}

impl Subspace {
    pub fn zero(ambient: usize) -> Self {
        Subspace { basis: QMatrix::zeros(ambient, 0) }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace { basis: QMatrix::identity(ambient) }
    }

    /// Span of arbitrary vectors (the columns of `gens`); dependent columns are dropped.
    pub fn span(gens: &QMatrix) -> Self {
        Subspace { basis: gens.column_space() }
    }

    /// Wrap columns already known to be independent.
    pub fn from_independent(basis: QMatrix) -> Self {
        debug_assert_eq!(basis.rank(), basis.cols());
        Subspace { basis }
    }

    pub fn ambient(&self) -> usize {
        self.basis.rows()
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn basis(&self) -> &QMatrix {
        &self.basis
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn contains(&self, v: &[Q]) -> bool {
        if vec_is_zero(v) {
            return true;
        }
        self.basis.solve(v).is_some()
    }

    /// Coordinates of a member vector in this basis.
    pub fn coords(&self, v: &[Q]) -> Option<Vec<Q>> {
        if self.dim() == 0 {
            return if vec_is_zero(v) { Some(Vec::new()) } else { None };
        }
        self.basis.solve(v)
    }

    pub fn contains_subspace(&self, other: &Subspace) -> bool {
        other.basis.columns().iter().all(|c| self.contains(c))
    }

    pub fn equals(&self, other: &Subspace) -> bool {
        self.dim() == other.dim() && self.contains_subspace(other)
    }
}

/// A direct-sum decomposition `K^n = U_1 ⊕ … ⊕ U_r` with its projectors.
#[derive(Clone, Debug)]
pub struct Decomposition {
    parts: Vec<Subspace>,
    offsets: Vec<usize>,
    inverse: QMatrix,
}

impl Decomposition {
    /// Fails when the parts are not a direct sum filling the ambient space.
    pub fn new(parts: Vec<Subspace>) -> Option<Self> {
        let ambient = parts.first()?.ambient();
        let refs: Vec<&QMatrix> = parts.iter().map(|p| p.basis()).collect();
        let all = QMatrix::hstack(&refs);
        if all.cols() != ambient {
            return None;
        }
        let inverse = all.inverse()?;
        let mut offsets = Vec::with_capacity(parts.len() + 1);
        let mut acc = 0;
        for p in &parts {
            offsets.push(acc);
            acc += p.dim();
        }
        offsets.push(acc);
        Some(Decomposition { parts, offsets, inverse })
    }

    pub fn parts(&self) -> &[Subspace] {
        &self.parts
    }

    /// Rows of the coordinate map belonging to part `j`.
    pub fn coordinate_rows(&self, j: usize) -> QMatrix {
        let (a, b) = (self.offsets[j], self.offsets[j + 1]);
        self.inverse.sub_matrix(a, 0, b - a, self.inverse.cols())
    }

    /// Projector onto part `j` along all other parts.
    pub fn projector(&self, j: usize) -> QMatrix {
        self.parts[j].basis().mul(&self.coordinate_rows(j))
    }

    pub fn project(&self, j: usize, v: &[Q]) -> Vec<Q> {
        self.projector(j).mul_vec(v)
    }
}

/// Complement of `sub` inside `within`, chosen from pivot columns, optionally
/// tilted so that `avoid` does not lie in it.
///
/// Returns `Err(())` when `avoid` is nonzero and `sub` is trivial, since the
/// complement is then all of `within`.
#[allow(clippy::result_unit_err)]
pub fn complement(sub: &Subspace, within: &Subspace, avoid: Option<&[Q]>) -> Result<Subspace, ()> {
    let d = within.dim();
    let ambient = within.ambient();
    if d == 0 {
        return Ok(Subspace::zero(ambient));
    }
    // coordinates of sub inside the within-basis
    let sub_coords: Vec<Vec<Q>> = sub
        .basis()
        .columns()
        .iter()
        .map(|c| within.coords(c).expect("sub must lie inside within"))
        .collect();
    let k = QMatrix::from_cols(d, &sub_coords);
    let aug = QMatrix::hstack(&[&k, &QMatrix::identity(d)]);
    let pivots = aug.rref().pivots;
    let picked: Vec<usize> = pivots.iter().filter(|&&p| p >= k.cols()).map(|&p| p - k.cols()).collect();
    let mut comp_coords = QMatrix::identity(d).select_cols(&picked);

    if let Some(w) = avoid {
        if !vec_is_zero(w) {
            let wc = within.coords(w).expect("avoid vector must lie inside within");
            // w lies in span(comp) iff it has no component along sub
            let full = QMatrix::hstack(&[&comp_coords, &k]);
            let a = full.solve(&wc).expect("comp ⊕ sub spans within");
            let in_comp = a[comp_coords.cols()..].iter().all(|x| x.is_zero());
            if in_comp {
                if k.cols() == 0 {
                    return Err(());
                }
                let j = (0..comp_coords.cols()).find(|&j| !a[j].is_zero()).expect("w is nonzero");
                let u = k.col(0);
                for (i, ui) in u.iter().enumerate() {
                    let v = &comp_coords[(i, j)] + ui / &a[j];
                    comp_coords[(i, j)] = v;
                }
            }
        }
    }
    Ok(Subspace::from_independent(within.basis().mul(&comp_coords)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_of_zero_map_is_everything() {
        let z = QMatrix::zeros(1, 2);
        let k = z.kernel();
        assert_eq!(k.cols(), 2);
        assert!(Subspace::from_independent(k).equals(&Subspace::full(2)));
    }

    #[test]
    fn rank_and_kernel_are_consistent() {
        let a = QMatrix::from_i64(3, 4, &[1, 2, 3, 4, 2, 4, 6, 8, 0, 1, 0, 1]);
        assert_eq!(a.rank(), 2);
        let k = a.kernel();
        assert_eq!(k.cols(), 2);
        assert!(a.mul(&k).is_zero());
    }

    #[test]
    fn inverse_roundtrip() {
        let a = QMatrix::from_i64(3, 3, &[2, 1, 0, 1, 3, 1, 0, 1, 4]);
        let inv = a.inverse().unwrap();
        assert_eq!(a.mul(&inv), QMatrix::identity(3));
        assert!(QMatrix::from_i64(2, 2, &[1, 2, 2, 4]).inverse().is_none());
    }

    #[test]
    fn solve_detects_inconsistency() {
        let a = QMatrix::from_i64(2, 2, &[1, 1, 1, 1]);
        assert!(a.solve(&[qi(1), qi(2)]).is_none());
        assert_eq!(a.solve(&[qi(3), qi(3)]).unwrap(), vec![qi(3), qi(0)]);
    }

    #[test]
    fn complement_of_trivial_sub_in_full_space() {
        let c = complement(&Subspace::zero(3), &Subspace::full(3), None).unwrap();
        assert!(c.equals(&Subspace::full(3)));
    }

    #[test]
    fn complement_tilts_away_from_avoid_vector() {
        // sub = span{(0,1)}, pivot complement = span{(1,0)} which contains the avoid vector
        let sub = Subspace::from_independent(QMatrix::from_i64(2, 1, &[0, 1]));
        let w = vec![qi(3), qi(0)];
        let c = complement(&sub, &Subspace::full(2), Some(&w)).unwrap();
        assert!(!c.contains(&w));
        assert!(Decomposition::new(vec![c, sub]).is_some());
    }

    #[test]
    fn complement_exhausted_when_sub_is_trivial() {
        let w = vec![qi(1), qi(0)];
        assert!(complement(&Subspace::zero(2), &Subspace::full(2), Some(&w)).is_err());
    }

    #[test]
    fn projectors_sum_to_identity() {
        let u = Subspace::from_independent(QMatrix::from_i64(3, 1, &[1, 1, 0]));
        let v = Subspace::from_independent(QMatrix::from_i64(3, 2, &[0, 0, 1, 0, 0, 1]));
        let d = Decomposition::new(vec![u, v]).unwrap();
        let s = d.projector(0).add(&d.projector(1));
        assert_eq!(s, QMatrix::identity(3));
        let p0 = d.projector(0);
        assert_eq!(p0.mul(&p0), p0);
    }

    #[test]
    fn float_conversion_handles_huge_values() {
        let big = factorial(200) / factorial(198);
        assert!((to_f64(&big) - 39800.0).abs() < 1e-9);
        let tiny = qi(1) / factorial(170);
        assert!(to_f64(&tiny) > 0.0);
        assert_eq!(from_f64(0.5), qf(1, 2));
    }
}
