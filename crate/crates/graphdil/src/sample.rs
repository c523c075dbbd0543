//! Seeded random inputs for property checks: matrices of various classes,
//! CPTP channels and words over an edge alphabet.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linops::{hermitian_eigen, spectral_norm, CMatrix, C64};
use crate::rewrite::{EdgeContext, GroupElement, Letter, Word};

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    })
}

pub fn hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    gaussian(rng, n, n).hermitian_part()
}

/// Unit vector drawn uniformly from the sphere.
pub fn unit_vector(rng: &mut impl Rng, n: usize) -> CMatrix {
    let v = gaussian(rng, n, 1);
    v.scale_real(1.0 / v.vector_norm())
}

/// Haar-distributed unitary (Gram–Schmidt on a Gaussian matrix).
pub fn unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
    let (q, r) = gaussian(rng, n, n).into_dmatrix().qr().unpack();
    // Fix column phases so the distribution does not depend on the QR sign convention.
    let phases: Vec<C64> = (0..n)
        .map(|i| {
            let z = r[(i, i)];
            if z.norm() > 0.0 {
                z / z.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect();
    let q = CMatrix::from_dmatrix(q);
    &q * &CMatrix::diag(&phases)
}

/// `iH − B*B` scaled by `scale`: anti-Hermitian part plus a negative
/// semidefinite Hermitian part.
pub fn dissipative(rng: &mut impl Rng, n: usize, scale: f64) -> CMatrix {
    let h = hermitian(rng, n).scale(C64::new(0.0, 1.0));
    let b = gaussian(rng, n, n).scale_real(0.5);
    (&h - &(&b.adjoint() * &b)).scale_real(scale)
}

/// Matrix with spectral norm at most `bound`.
pub fn contraction(rng: &mut impl Rng, n: usize, bound: f64) -> CMatrix {
    let g = gaussian(rng, n, n);
    let norm = spectral_norm(&g);
    g.scale_real(bound * rng.gen_range(0.2..1.0) / norm)
}

/// `k` Kraus operators on `ℂ^d` with `Σ Kᵢ* Kᵢ = I`.
pub fn kraus(rng: &mut impl Rng, d: usize, k: usize) -> Vec<CMatrix> {
    let g = gaussian(rng, d * k, d);
    let s = &g.adjoint() * &g;
    let (vals, vecs) = hermitian_eigen(&s).expect("square");
    let inv_sqrt: Vec<C64> = vals.iter().map(|&x| C64::new(1.0 / x.sqrt(), 0.0)).collect();
    let s_inv_sqrt = &(&vecs * &CMatrix::diag(&inv_sqrt)) * &vecs.adjoint();
    let stacked = &g * &s_inv_sqrt;
    (0..k).map(|i| stacked.block(i * d, 0, d, d)).collect()
}

/// Random word of exactly `len` valid letters.
pub fn word(rng: &mut impl Rng, ctx: &EdgeContext, len: usize) -> Word {
    let alphabet = ctx.alphabet();
    Word((0..len).map(|_| *alphabet.choose(rng).expect("non-empty alphabet")).collect())
}

/// Random group element: the normal form of a word of length up to `max_len`.
pub fn element(rng: &mut impl Rng, ctx: &EdgeContext, max_len: usize) -> GroupElement {
    let len = rng.gen_range(0..=max_len);
    crate::rewrite::normalize(ctx, &word(rng, ctx, len)).expect("sampled letters are valid")
}

/// Random letter joining two related nodes.
pub fn letter(rng: &mut impl Rng, ctx: &EdgeContext) -> Letter {
    *ctx.alphabet().choose(rng).expect("non-empty alphabet")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::is_unitary;

    #[test]
    fn kraus_operators_are_normalized() {
        let mut r = rng(3);
        let ks = kraus(&mut r, 3, 4);
        let mut sum = CMatrix::zeros(3, 3);
        for k in &ks {
            sum = &sum + &(&k.adjoint() * k);
        }
        assert!(sum.max_abs_diff(&CMatrix::identity(3)) < 1e-12);
    }

    #[test]
    fn unitary_and_dissipative_classes() {
        let mut r = rng(4);
        assert!(is_unitary(&unitary(&mut r, 4), 1e-12));
        assert!(crate::linops::is_dissipative_hilbert(&dissipative(&mut r, 4, 2.0), 1e-12));
        assert!(spectral_norm(&contraction(&mut r, 3, 1.0)) <= 1.0 + 1e-12);
    }

    #[test]
    fn seeding_is_deterministic() {
        let a = gaussian(&mut rng(9), 2, 2);
        let b = gaussian(&mut rng(9), 2, 2);
        assert_eq!(a, b);
    }
}
