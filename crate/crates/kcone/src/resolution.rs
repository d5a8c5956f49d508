//! The fine resolution: kernels `N_i`, ranges `R_i`, their complements, the
//! operators `S_i`, `S̄_i`, the E/α/A/M matrices and the cone operators.
//!
//! Everything is exact. Levels are built one at a time by
//! [`ResolutionBuilder`]; a level never depends on the target order `k`, so
//! a search over `k` reuses the chain.

use num_traits::{One, Zero};

use crate::coeffsys::{delta_matrix, even_square_partial, w_operator, w_row, IdentityCheck};
use crate::error::KconeError;
use crate::linalg::{complement, factorial, vec_is_zero, Decomposition, QMatrix, Subspace, Q};
use crate::multijet::{compose_curve, CurveJet, MapJet};
use crate::schemes::{block_expand, SchemeTable};

/// Kernel of `op` restricted to `within`.
pub fn kernel_within(op: &QMatrix, within: &Subspace) -> Subspace {
    let coords = op.mul(within.basis()).kernel();
    Subspace::from_independent(within.basis().mul(&coords))
}

/// Range of `op` restricted to `on`.
pub fn range_on(op: &QMatrix, on: &Subspace) -> Subspace {
    Subspace::span(&op.mul(on.basis()))
}

/// One step `i` of the resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub index: usize,
    /// `S̄_i`, an m×n matrix on all of `B`.
    pub s_bar: QMatrix,
    /// `P_{R_{i−1}^c}·S̄_i`; restricted to `N_{i−1}` this is `S_i`.
    pub s_proj: QMatrix,
    /// `N_i`.
    pub kernel: Subspace,
    /// `N_i^c` inside `N_{i−1}`.
    pub kernel_complement: Subspace,
    /// `R_i = S_i(N_i^c)`.
    pub range: Subspace,
    /// `R_i^c` inside `R_{i−1}^c`.
    pub range_complement: Subspace,
    /// `S_i^{-1}·P_{R_i}`, an n×m matrix.
    pub pinv: QMatrix,
    /// Projection of the curve direction onto `N_i` along `N_1^c ⊕ … ⊕ N_i^c`.
    pub curve_part: Vec<Q>,
    /// The curve direction could not be kept out of `N_i^c`.
    pub absorbed: bool,
}

/// Construction switches.
#[derive(Clone, Debug)]
pub struct ResolutionOptions {
    /// Keep the curve direction out of every `N_i^c`.
    pub enforce_avoid: bool,
    /// Replacement coefficient table (mutation tests).
    pub table: Option<SchemeTable>,
}

impl Default for ResolutionOptions {
    fn default() -> Self {
        ResolutionOptions { enforce_avoid: true, table: None }
    }
}

impl ResolutionOptions {
    /// Options for identity suites on arbitrary coefficient lists.
    pub fn identities() -> Self {
        ResolutionOptions { enforce_avoid: false, table: None }
    }

    fn table(&self) -> &SchemeTable {
        self.table.as_ref().unwrap_or_else(|| SchemeTable::standard())
    }
}

/// Incremental level-by-level construction.
pub struct ResolutionBuilder<'a> {
    g: &'a MapJet,
    zbar: Vec<Vec<Q>>,
    l: usize,
    options: ResolutionOptions,
    levels: Vec<Level>,
    decomps: Vec<Decomposition>,
    /// `e_cols[j−1][i−1] = E_{i,j}`.
    e_cols: Vec<Vec<QMatrix>>,
    /// `m_odd[j−1] = M^{2j+1}`.
    m_odd: Vec<QMatrix>,
}

fn block(mat: &QMatrix, n: usize, i: usize, j: usize) -> QMatrix {
    mat.sub_matrix(i * n, j * n, n, n)
}

impl<'a> ResolutionBuilder<'a> {
    pub fn new(g: &'a MapJet, curve: &CurveJet, options: ResolutionOptions) -> Result<Self, KconeError> {
        if curve.n() != g.n() {
            return Err(KconeError::Dimension { what: "curve", expected: g.n(), got: curve.n() });
        }
        g.ensure_order(1)?;
        Ok(ResolutionBuilder {
            g,
            zbar: curve.coeffs().to_vec(),
            l: curve.leading_index(),
            options,
            levels: Vec::new(),
            decomps: Vec::new(),
            e_cols: Vec::new(),
            m_odd: Vec::new(),
        })
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    fn n(&self) -> usize {
        self.g.n()
    }

    fn zbar(&self, i: usize) -> Vec<Q> {
        self.zbar.get(i - 1).cloned().unwrap_or_else(|| vec![Q::zero(); self.n()])
    }

    fn table(&self) -> &SchemeTable {
        self.options.table()
    }

    /// Sum of `dim R_1 … dim R_j` over the levels built so far.
    pub fn range_dim(&self) -> usize {
        self.levels.iter().map(|lv| lv.range.dim()).sum()
    }

    fn e_col(&mut self, j: usize) -> &[QMatrix] {
        while self.e_cols.len() < j {
            let col = self.e_cols.len() + 1;
            let n = self.n();
            let mut blocks = vec![QMatrix::zeros(n, n); col];
            blocks[col - 1] = QMatrix::identity(n);
            for i in (1..col).rev() {
                let mut acc = QMatrix::zeros(self.g.m(), n);
                for v in (i + 1)..=col {
                    acc.add_assign(&self.levels[v - 1].s_bar.mul(&blocks[v - 1]));
                }
                blocks[i - 1] = self.levels[i - 1].pinv.mul(&acc).neg();
            }
            self.e_cols.push(blocks);
        }
        &self.e_cols[j - 1]
    }

    /// `E^j` as a `j×j` block matrix; needs levels `1 … j` minus the top one.
    fn e_matrix(&mut self, j: usize) -> QMatrix {
        let n = self.n();
        let mut e = QMatrix::zeros(n * j, n * j);
        for col in 1..=j {
            let blocks = self.e_col(col).to_vec();
            for (i, b) in blocks.iter().enumerate() {
                e.set_sub_matrix(i * n, (col - 1) * n, b);
            }
        }
        e
    }

    /// `X^{order} = (C^{order})^{-1}·E^{⌈order/2⌉}·C^{order}`.
    fn x_matrix(&mut self, order: usize) -> Result<QMatrix, KconeError> {
        let size = order.div_ceil(2);
        let e = self.e_matrix(size);
        let c = self.table().c_diag(order)?;
        let n = self.n();
        let mut x = QMatrix::zeros(n * size, n * size);
        for i in 0..size {
            for j in i..size {
                let f = &c[j] / &c[i];
                x.set_sub_matrix(i * n, j * n, &block(&e, n, i, j).scale(&f));
            }
        }
        Ok(x)
    }

    /// `M^{2j+1}`.
    fn m_matrix(&mut self, j: usize) -> Result<QMatrix, KconeError> {
        while self.m_odd.len() < j {
            let jj = self.m_odd.len() + 1;
            let n = self.n();
            let next = if jj == 1 {
                QMatrix::identity(n)
            } else {
                let x_prev = self.x_matrix(2 * jj - 1)?;
                let x_even = self.x_matrix(2 * jj)?;
                let m_prev = self.m_odd[jj - 2].clone();
                let alpha = x_prev.sub_matrix(0, 0, n, n * (jj - 1));
                let a = x_prev.sub_matrix(n, 0, n * (jj - 1), n * (jj - 1));
                let y = QMatrix::vstack(&[&alpha, &m_prev.mul(&a)]);
                let y_trunc = y.sub_matrix(0, 0, n * (jj - 1), n * (jj - 1));
                QMatrix::block_diag(&[&QMatrix::identity(n), &y_trunc]).mul(&x_even)
            };
            self.m_odd.push(next);
        }
        Ok(self.m_odd[j - 1].clone())
    }

    fn s_bar(&mut self, j: usize) -> Result<QMatrix, KconeError> {
        let g = self.g;
        match j {
            1 => Ok(g.linear_part()),
            2 => {
                g.ensure_order(2)?;
                Ok(g.apply_partial(2, &[&self.zbar(1)])?.scale(&Q::from_integer(2.into())))
            }
            _ => {
                let kk = j - 1;
                let n = self.n();
                let zs: Vec<Vec<Q>> = (1..kk).map(|i| self.zbar(i)).collect();
                let blocks: Vec<QMatrix> =
                    (kk..2 * kk).rev().map(|mu| w_operator(g, &zs, 2 * kk, mu)).collect::<Result<_, _>>()?;
                let w = QMatrix::hstack(&blocks.iter().collect::<Vec<_>>());
                let x = self.x_matrix(2 * kk - 1)?;
                let alpha_bar = x.sub_matrix(0, n * (kk - 1), n, n);
                let a_bar = x.sub_matrix(n, n * (kk - 1), n * (kk - 1), n);
                let m_prev = self.m_matrix(kk - 1)?;
                let v = QMatrix::vstack(&[&alpha_bar, &m_prev.mul(&a_bar)]);
                Ok(w.mul(&v).add(&even_square_partial(g, &self.zbar(kk), kk)?))
            }
        }
    }

    /// Build the next level `i = levels().len() + 1`.
    pub fn push_level(&mut self) -> Result<&Level, KconeError> {
        let j = self.levels.len() + 1;
        let (n, m) = (self.n(), self.g.m());
        let s_bar = self.s_bar(j)?;
        let (prev_n, prev_rc, proj, prev_w) = match self.levels.last() {
            None => (Subspace::full(n), Subspace::full(m), QMatrix::identity(m), self.zbar(self.l)),
            Some(lv) => (
                lv.kernel.clone(),
                lv.range_complement.clone(),
                self.decomps.last().expect("decomposition per level").projector(j - 1),
                lv.curve_part.clone(),
            ),
        };
        let s_proj = proj.mul(&s_bar);
        let kernel = kernel_within(&s_proj, &prev_n);
        let avoid = (self.options.enforce_avoid && !vec_is_zero(&prev_w)).then_some(&prev_w[..]);
        let (kernel_complement, absorbed) = match complement(&kernel, &prev_n, avoid) {
            Ok(c) => (c, false),
            Err(()) => (complement(&kernel, &prev_n, None).expect("unconstrained complement"), true),
        };
        let range = Subspace::from_independent(s_proj.mul(kernel_complement.basis()));
        let range_complement = complement(&range, &prev_rc, None).expect("unconstrained complement");
        let mut parts: Vec<Subspace> = self.levels.iter().map(|lv| lv.range.clone()).collect();
        parts.push(range.clone());
        parts.push(range_complement.clone());
        let decomp = Decomposition::new(parts).expect("ranges form a direct sum");
        let pinv = kernel_complement.basis().mul(&decomp.coordinate_rows(j - 1));
        let curve_part = if absorbed || vec_is_zero(&prev_w) {
            vec![Q::zero(); n]
        } else {
            let both = QMatrix::hstack(&[kernel_complement.basis(), kernel.basis()]);
            let coords = both.solve(&prev_w).expect("N_i^c ⊕ N_i = N_{i−1}");
            let kc = kernel_complement.dim();
            kernel.basis().mul_vec(&coords[kc..])
        };
        if absorbed && self.range_dim() + range.dim() < m {
            return Err(KconeError::CurveDirectionExhausted { level: j });
        }
        self.levels.push(Level {
            index: j,
            s_bar,
            s_proj,
            kernel,
            kernel_complement,
            range,
            range_complement,
            pinv,
            curve_part,
            absorbed,
        });
        self.decomps.push(decomp);
        Ok(self.levels.last().expect("just pushed"))
    }

    /// Build levels through `k+1` and assemble the result for order `k`.
    pub fn finish(&mut self, k: usize) -> Result<ResolutionResult, KconeError> {
        if k == 0 {
            return Err(KconeError::Precondition("k must be at least 1".into()));
        }
        if self.options.enforce_avoid && self.l > k {
            return Err(KconeError::Precondition(format!("leading index l={} exceeds k={k}", self.l)));
        }
        self.g.ensure_order(k + 1)?;
        while self.levels.len() < k + 1 {
            self.push_level()?;
        }
        let n = self.n();
        let m = self.g.m();
        let levels: Vec<Level> = self.levels[..=k].to_vec();
        let e = self.e_matrix(k + 1);
        let x_odd = self.x_matrix(2 * k + 1)?;
        let m_odd = self.m_matrix(k)?;
        let m_hat = QMatrix::block_diag(&[&QMatrix::identity(n), &m_odd]);
        let c = self.table().c_diag(2 * k + 1)?;
        let s_row = QMatrix::hstack(&levels.iter().map(|lv| &lv.s_bar).collect::<Vec<_>>());
        let l_hat = s_row.mul(&block_expand(&c, n)).scale(&(Q::one() / factorial(2 * k + 1)));
        let range_dims: Vec<usize> = levels.iter().map(|lv| lv.range.dim()).collect();
        let transversal = range_dims.iter().sum::<usize>() == m;
        let top = levels.last().expect("k+1 levels");
        let zbar_l_proj = top.curve_part.clone();
        let p_space = if vec_is_zero(&zbar_l_proj) {
            top.kernel.clone()
        } else {
            let line = Subspace::from_independent(QMatrix::from_cols(n, std::slice::from_ref(&zbar_l_proj)));
            complement(&line, &top.kernel, None).expect("unconstrained complement")
        };
        let absorbed_level = levels.iter().find(|lv| lv.absorbed).map(|lv| lv.index);
        let zbar: Vec<Vec<Q>> = (1..=k).map(|i| self.zbar(i)).collect();
        Ok(ResolutionResult {
            k,
            n,
            m,
            l: self.l,
            zbar,
            levels,
            e,
            x_odd,
            m_odd,
            m_hat,
            l_hat,
            c_odd: c,
            zbar_l_proj,
            p_space,
            transversal,
            absorbed_level,
            range_dims,
        })
    }
}

/// The complete resolution of order `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionResult {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    /// `z̄_1 … z̄_k`, the only curve data the construction reads.
    pub zbar: Vec<Vec<Q>>,
    /// Levels `1 … k+1`.
    pub levels: Vec<Level>,
    /// `E^{k+1}`.
    pub e: QMatrix,
    /// `(C^{2k+1})^{-1}·E^{k+1}·C^{2k+1}`, holding α, ᾱ, A, Ā.
    pub x_odd: QMatrix,
    /// `M^{2k+1}`.
    pub m_odd: QMatrix,
    /// `M̂_{k+1} = Diag(I_B, M^{2k+1})`.
    pub m_hat: QMatrix,
    /// `L̂_{k+1} = [S̄_1 … S̄_{k+1}]·C^{2k+1}/(2k+1)!`.
    pub l_hat: QMatrix,
    /// Diagonal of `C^{2k+1}`.
    pub c_odd: Vec<Q>,
    /// `z̄_{l,k+1}`.
    pub zbar_l_proj: Vec<Q>,
    /// `P_{k+1}`, complement of `z̄_{l,k+1}` inside `N_{k+1}`.
    pub p_space: Subspace,
    pub transversal: bool,
    /// First level at which the curve direction was absorbed into `N_i^c`.
    pub absorbed_level: Option<usize>,
    /// `dim R_1 … dim R_{k+1}`.
    pub range_dims: Vec<usize>,
}

/// Build the order-`k` resolution with default options.
pub fn build_resolution(g: &MapJet, curve: &CurveJet, k: usize) -> Result<ResolutionResult, KconeError> {
    ResolutionBuilder::new(g, curve, ResolutionOptions::default())?.finish(k)
}

/// Build with explicit options.
pub fn build_resolution_with(
    g: &MapJet,
    curve: &CurveJet,
    k: usize,
    options: ResolutionOptions,
) -> Result<ResolutionResult, KconeError> {
    ResolutionBuilder::new(g, curve, options)?.finish(k)
}

/// Structural operators of the cone.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeOperators {
    pub m_hat: QMatrix,
    pub l_hat: QMatrix,
    /// Block-diagonal basis of `N_1^c × … × N_{k+1}^c` inside `B^{k+1}`.
    pub nc_basis: QMatrix,
    /// `L̂_{k+1}` in those coordinates.
    pub l_hat_nc: QMatrix,
    /// `L̂_{k+1}` maps `N^c` bijectively onto `R_1 ⊕ … ⊕ R_{k+1}`.
    pub bijective: bool,
}

impl ResolutionResult {
    pub fn level(&self, i: usize) -> &Level {
        &self.levels[i - 1]
    }

    /// `N_{k+1}`.
    pub fn top_kernel(&self) -> &Subspace {
        &self.levels[self.k].kernel
    }

    /// `dim N^c = Σ dim N_i^c`.
    pub fn nc_dim(&self) -> usize {
        self.levels.iter().map(|lv| lv.kernel_complement.dim()).sum()
    }

    /// `χ = Σ_{i=1}^{k} i·dim N_{i+1}^c`.
    pub fn chi(&self) -> usize {
        (1..=self.k).map(|i| i * self.levels[i].kernel_complement.dim()).sum()
    }

    /// `[S̄_1 | … | S̄_{k+1}]`.
    pub fn s_bar_row(&self) -> QMatrix {
        QMatrix::hstack(&self.levels.iter().map(|lv| &lv.s_bar).collect::<Vec<_>>())
    }

    /// Block `E_{i,j}` (1-based).
    pub fn e_block(&self, i: usize, j: usize) -> QMatrix {
        block(&self.e, self.n, i - 1, j - 1)
    }

    /// Basis of `N_1^c × … × N_{k+1}^c` as block-diagonal columns in `B^{k+1}`.
    pub fn nc_stack_basis(&self) -> QMatrix {
        let parts: Vec<&QMatrix> = self.levels.iter().map(|lv| lv.kernel_complement.basis()).collect();
        QMatrix::block_diag(&parts)
    }

    /// Basis of `N^c = N_1^c ⊕ … ⊕ N_{k+1}^c` inside `B`.
    pub fn nc_basis(&self) -> QMatrix {
        QMatrix::hstack(&self.levels.iter().map(|lv| lv.kernel_complement.basis()).collect::<Vec<_>>())
    }

    /// Embed `p ∈ P_{k+1}` into the last slot of `B^{k+1}`.
    pub fn p_stack_basis(&self) -> QMatrix {
        let n = self.n;
        let mut out = QMatrix::zeros(n * (self.k + 1), self.p_space.dim());
        out.set_sub_matrix(n * self.k, 0, self.p_space.basis());
        out
    }

    /// `[ε^{2k+1}/(2k+1)! … ε^{k+1}/(k+1)!]·M̂_{k+1}`, an n×n(k+1) matrix.
    pub fn a_eps(&self, eps: &Q) -> QMatrix {
        let n = self.n;
        let k = self.k;
        let mut row = QMatrix::zeros(n, n * (k + 1));
        for i in 0..=k {
            let p = 2 * k + 1 - i;
            let mut s = Q::one();
            for _ in 0..p {
                s *= eps;
            }
            s /= factorial(p);
            row.set_sub_matrix(0, i * n, &QMatrix::scalar(n, &s));
        }
        row.mul(&self.m_hat)
    }

    /// Column block `i` (1-based) of [`Self::a_eps`].
    pub fn a_eps_block(&self, eps: &Q, i: usize) -> QMatrix {
        self.a_eps(eps).sub_matrix(0, (i - 1) * self.n, self.n, self.n)
    }

    pub fn cone_operators(&self) -> ConeOperators {
        let nc_basis = self.nc_stack_basis();
        let l_hat_nc = self.l_hat.mul(&nc_basis);
        let bijective = l_hat_nc.rank() == nc_basis.cols() && nc_basis.cols() == self.range_dims.iter().sum::<usize>();
        ConeOperators { m_hat: self.m_hat.clone(), l_hat: self.l_hat.clone(), nc_basis, l_hat_nc, bijective }
    }

    /// Upper block triangularity with identity diagonal, and invertibility, of `M^{2k+1}`.
    pub fn check_m_structure(&self) -> IdentityCheck {
        let n = self.n;
        let mut check = IdentityCheck::pass();
        for i in 0..self.k {
            let d = block(&self.m_odd, n, i, i);
            check = check.and(IdentityCheck::matrices(&format!("M diagonal block {}", i + 1), &d, &QMatrix::identity(n)));
            for j in 0..i {
                let b = block(&self.m_odd, n, i, j);
                check = check.and(IdentityCheck::matrices(
                    &format!("M lower block ({},{})", i + 1, j + 1),
                    &b,
                    &QMatrix::zeros(n, n),
                ));
            }
        }
        if self.m_odd.inverse().is_none() {
            check = check.and(IdentityCheck::fail("M is singular"));
        }
        check
    }

    /// `S_i^{-1}P_{R_i}·S_i = I` on `N_i^c` for every level.
    pub fn check_bijectivity(&self) -> IdentityCheck {
        let mut check = IdentityCheck::pass();
        for lv in &self.levels {
            let b = lv.kernel_complement.basis();
            let back = lv.pinv.mul(&lv.s_proj.mul(b));
            check = check.and(IdentityCheck::matrices(&format!("S_{} inverse", lv.index), &back, b));
        }
        check
    }

    /// Both direct sums `B = ⊕N_i^c ⊕ N_{k+1}` and `B̄ = ⊕R_i ⊕ R_{k+1}^c`.
    pub fn check_direct_sums(&self) -> IdentityCheck {
        let mut bparts: Vec<Subspace> = self.levels.iter().map(|lv| lv.kernel_complement.clone()).collect();
        bparts.push(self.top_kernel().clone());
        let mut rparts: Vec<Subspace> = self.levels.iter().map(|lv| lv.range.clone()).collect();
        rparts.push(self.levels[self.k].range_complement.clone());
        let mut check = IdentityCheck::pass();
        if Decomposition::new(bparts).is_none() {
            check = check.and(IdentityCheck::fail("kernel chain is not a direct sum of B"));
        }
        if Decomposition::new(rparts).is_none() {
            check = check.and(IdentityCheck::fail("range chain is not a direct sum of the target"));
        }
        check
    }

    /// Column `k+1` of `E` from the closed product expansion.
    pub fn explicit_e_column(&self) -> Vec<QMatrix> {
        let (n, k) = (self.n, self.k);
        let s_top = &self.levels[k].s_bar;
        let mut col = vec![QMatrix::zeros(n, n); k + 1];
        col[k] = QMatrix::identity(n);
        for i in (1..=k).rev() {
            let idx: Vec<usize> = ((i + 1)..=k).collect();
            let mut sum = QMatrix::identity(self.m);
            for mask in 1u64..(1u64 << idx.len()) {
                let mut prod = QMatrix::identity(self.m);
                let mut count = 0;
                for (b, &nt) in idx.iter().enumerate() {
                    if mask & (1 << b) != 0 {
                        let lv = &self.levels[nt - 1];
                        prod = prod.mul(&lv.s_bar.mul(&lv.pinv));
                        count += 1;
                    }
                }
                if count % 2 == 1 {
                    sum = sum.sub(&prod);
                } else {
                    sum = sum.add(&prod);
                }
            }
            col[i - 1] = self.levels[i - 1].pinv.mul(&sum).mul(s_top).neg();
        }
        col
    }

    pub fn check_explicit_e(&self) -> IdentityCheck {
        let col = self.explicit_e_column();
        let mut check = IdentityCheck::pass();
        for (i, b) in col.iter().enumerate() {
            check = check.and(IdentityCheck::matrices(
                &format!("E_({},{}) closed form", i + 1, self.k + 1),
                b,
                &self.e_block(i + 1, self.k + 1),
            ));
        }
        check
    }

    /// `N[Δ^k(z̄_{k−1} … z̄_1)] = M^{2k+1}(N_1 × … × N_k)`.
    pub fn check_delta_kernel(&self, g: &MapJet) -> Result<IdentityCheck, KconeError> {
        let delta = delta_matrix(g, &self.zbar, self.k)?;
        let ker = Subspace::from_independent(delta.kernel());
        let parts: Vec<&QMatrix> = self.levels[..self.k].iter().map(|lv| lv.kernel.basis()).collect();
        let image = Subspace::span(&self.m_odd.mul(&QMatrix::block_diag(&parts)));
        Ok(if ker.equals(&image) {
            IdentityCheck::pass()
        } else {
            IdentityCheck::fail(format!("kernel dim {} vs image dim {}", ker.dim(), image.dim()))
        })
    }

    /// `W^{2k+1}(z̄_k … z̄_1)·M̂_{k+1} = [S̄_1 … S̄_{k+1}]·C^{2k+1}`.
    pub fn check_w_factorization(&self, g: &MapJet) -> Result<IdentityCheck, KconeError> {
        let w = w_row(g, &self.zbar, 2 * self.k + 1)?;
        let lhs = w.mul(&self.m_hat);
        let rhs = self.s_bar_row().mul(&block_expand(&self.c_odd, self.n));
        Ok(IdentityCheck::matrices("W·M̂ = S̄·C", &lhs, &rhs))
    }

    /// Kernel of `[S̄_1 … S̄_{k+1}]` on `N_0 × … × N_k` equals `E^{k+1}(N_1 × … × N_{k+1})`.
    pub fn check_s_kernel(&self) -> IdentityCheck {
        let n = self.n;
        let mut dom: Vec<&QMatrix> = Vec::with_capacity(self.k + 1);
        let full = QMatrix::identity(n);
        dom.push(&full);
        for lv in &self.levels[..self.k] {
            dom.push(lv.kernel.basis());
        }
        let dom_basis = QMatrix::block_diag(&dom);
        let ker = Subspace::span(&dom_basis.mul(&self.s_bar_row().mul(&dom_basis).kernel()));
        let targets: Vec<&QMatrix> = self.levels.iter().map(|lv| lv.kernel.basis()).collect();
        let image = Subspace::span(&self.e.mul(&QMatrix::block_diag(&targets)));
        if ker.equals(&image) {
            IdentityCheck::pass()
        } else {
            IdentityCheck::fail(format!("kernel dim {} vs E-image dim {}", ker.dim(), image.dim()))
        }
    }

    /// `M^{2k+1}·D̄ = D̄·(α^{2k+1}; M^{2k+1}·A^{2k+1})` without its last row.
    pub fn check_d_intertwining(&self, table: &SchemeTable) -> Result<IdentityCheck, KconeError> {
        let (n, k) = (self.n, self.k);
        let d: Vec<Q> = (2..=k + 1).map(|l| table.d_coeff(2 * k + 1, l)).collect::<Result<_, _>>()?;
        let dbar = block_expand(&d, n);
        let alpha = self.x_odd.sub_matrix(0, 0, n, n * k);
        let a = self.x_odd.sub_matrix(n, 0, n * k, n * k);
        let stacked = QMatrix::vstack(&[&alpha, &self.m_odd.mul(&a)]);
        let cut = stacked.sub_matrix(0, 0, n * k, n * k);
        let lhs = self.m_odd.mul(&dbar);
        let rhs = dbar.mul(&cut);
        let check = IdentityCheck::matrices("M·D̄ = D̄·(α; M·A)", &lhs, &rhs);
        if check.holds {
            return Ok(check);
        }
        for i in 0..k {
            for j in 0..k {
                if block(&lhs, n, i, j) != block(&rhs, n, i, j) {
                    return Ok(IdentityCheck {
                        detail: format!("M·D̄ = D̄·(α; M·A): first differing block ({}, {})", i + 1, j + 1),
                        ..check
                    });
                }
            }
        }
        Ok(check)
    }

    /// `T^1 = … = T^{2k} = 0` along the curve implies `z̄_l ∈ N_{k+1}`.
    pub fn check_curve_in_kernel(&self, g: &MapJet, curve: &CurveJet) -> Result<IdentityCheck, KconeError> {
        let t = compose_curve(g, curve, 2 * self.k)?;
        if t.iter().any(|v| !vec_is_zero(v)) {
            return Ok(IdentityCheck::pass());
        }
        let zl = curve.zbar(curve.leading_index());
        Ok(if self.top_kernel().contains(&zl) {
            IdentityCheck::pass()
        } else {
            IdentityCheck::fail("approximating curve direction outside N_{k+1}")
        })
    }
}
