//! Seeded random rational instances shared by the identity suites, the
//! integration tests and `kcone verify`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use num_traits::Zero;

use crate::linalg::{qf, qi, QMatrix, Q};
use crate::multijet::{CurveJet, MapJet, Monomial};

/// Deterministic generator used everywhere a seed is accepted.
pub type InstanceRng = ChaCha8Rng;

pub fn rng(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small nonzero-biased rational `a/b` with `|a| ≤ 5`, `1 ≤ b ≤ 3`.
pub fn small_rational(rng: &mut InstanceRng) -> Q {
    qf(rng.gen_range(-5..=5), rng.gen_range(1..=3))
}

fn nonzero_rational(rng: &mut InstanceRng) -> Q {
    loop {
        let q = small_rational(rng);
        if !q.is_zero() {
            return q;
        }
    }
}

/// All exponent vectors of total degree `d` in `n` variables.
pub fn exponents_of_degree(n: usize, d: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![d]];
    }
    let mut out = Vec::new();
    for first in (0..=d).rev() {
        for mut rest in exponents_of_degree(n - 1, d - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Random `m×n` matrix of rank at most `rank`, built as a product `U·V`.
pub fn low_rank_matrix(rng: &mut InstanceRng, m: usize, n: usize, rank: usize) -> QMatrix {
    let mut u = QMatrix::zeros(m, rank);
    let mut v = QMatrix::zeros(rank, n);
    for i in 0..m {
        for j in 0..rank {
            u[(i, j)] = qi(rng.gen_range(-2..=2));
        }
    }
    for i in 0..rank {
        for j in 0..n {
            v[(i, j)] = qi(rng.gen_range(-2..=2));
        }
    }
    u.mul(&v)
}

/// Shape parameters for a random polynomial map.
#[derive(Clone, Copy, Debug)]
pub struct MapShape {
    pub n: usize,
    pub m: usize,
    pub degree: u32,
    pub linear_rank: usize,
    pub terms_per_degree: usize,
}

/// Random polynomial map: low-rank linear part plus sparse higher terms.
pub fn random_map(rng: &mut InstanceRng, shape: MapShape) -> MapJet {
    let MapShape { n, m, degree, linear_rank, terms_per_degree } = shape;
    let mut terms: Vec<Vec<Monomial>> = vec![Vec::new(); m];
    let lin = low_rank_matrix(rng, m, n, linear_rank);
    for (i, comp) in terms.iter_mut().enumerate() {
        for j in 0..n {
            if !lin[(i, j)].is_zero() {
                let mut e = vec![0u32; n];
                e[j] = 1;
                comp.push(Monomial::new(lin[(i, j)].clone(), e));
            }
        }
    }
    for d in 2..=degree {
        let exps = exponents_of_degree(n, d);
        for _ in 0..terms_per_degree {
            let e = exps.choose(rng).expect("nonempty").clone();
            let i = rng.gen_range(0..m);
            terms[i].push(Monomial::new(nonzero_rational(rng), e));
        }
    }
    MapJet::from_polynomial(n, m, terms).expect("well-formed random map")
}

/// Random list of coefficient vectors `z_1 … z_len` (1-based by position).
pub fn random_coeffs(rng: &mut InstanceRng, n: usize, len: usize) -> Vec<Vec<Q>> {
    (0..len).map(|_| (0..n).map(|_| small_rational(rng)).collect()).collect()
}

/// Random curve with leading index `l` and `len` stored coefficients.
pub fn random_curve(rng: &mut InstanceRng, n: usize, len: usize, l: usize) -> CurveJet {
    let mut coeffs = random_coeffs(rng, n, len);
    for c in coeffs.iter_mut().take(l - 1) {
        c.iter_mut().for_each(|x| *x = Q::zero());
    }
    let lead = &mut coeffs[l - 1];
    if lead.iter().all(|x| x.is_zero()) {
        lead[rng.gen_range(0..n)] = nonzero_rational(rng);
    }
    CurveJet::new(n, coeffs).expect("well-formed random curve")
}
