//! Dense complex-matrix primitives and spectral solvers used by every other
//! module: Kronecker products, adjoints, commutators, full eigendecomposition
//! and null-space extraction.

use std::sync::Once;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Eigh, UPLO};
use num_complex::Complex64 as C64;
use thiserror::Error;

extern "C" {
    fn openblas_set_num_threads(num: i32);
}

static BLAS_THREADS: Once = Once::new();

/// Pin the linked OpenBLAS to one thread. Outer-level parallelism (gradient
/// components, restarts, sweep points) already saturates the cores, the
/// solves here are far too small to profit from threaded BLAS, and the
/// threaded kernels need more stack than test threads provide.
pub(crate) fn ensure_single_threaded_blas() {
    BLAS_THREADS.call_once(|| unsafe { openblas_set_num_threads(1) });
}

/// Dense complex matrix, row-major.
pub type CMat = Array2<C64>;
/// Dense complex vector.
pub type CVec = Array1<C64>;

/// Default relative tolerance for null-space detection, scaled by the matrix
/// 1-norm (floored at 1) before use.
pub const DEFAULT_NULL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("eigensolver failed: {0}")]
    SolverFailure(String),
    #[error("no null vector: smallest |eigenvalue| {min_abs:.3e} >= threshold {threshold:.3e}")]
    NoNullVector { min_abs: f64, threshold: f64 },
    #[error("degenerate null space: {count} eigenvalues below threshold {threshold:.3e}")]
    DegenerateNullSpace { count: usize, threshold: f64 },
}

/// One eigenpair of a general complex matrix. The right vector is normalized
/// to unit 2-norm; a left vector is attached only when a caller computes it.
#[derive(Debug, Clone)]
pub struct EigPair {
    pub value: C64,
    pub right: CVec,
    pub left: Option<CVec>,
}

/// Null vector of a (nearly) singular matrix, together with the eigenvalue
/// that was actually treated as zero.
#[derive(Debug, Clone)]
pub struct NullVector {
    pub vector: CVec,
    pub eigenvalue: C64,
}

/// Kronecker product, shape (a_r·b_r) × (a_c·b_c).
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    ndarray::linalg::kron(a, b)
}

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// Commutator ab − ba of two square matrices of equal shape.
pub fn commutator(a: &CMat, b: &CMat) -> Result<CMat, KernelError> {
    if a.nrows() != a.ncols() || a.dim() != b.dim() {
        return Err(KernelError::ShapeMismatch {
            expected: format!("square matrices of equal shape, lhs {:?}", a.dim()),
            got: format!("{:?}", b.dim()),
        });
    }
    Ok(a.dot(b) - b.dot(a))
}

/// Hermitian part (a + a†)/2.
pub fn hermitize(a: &CMat) -> CMat {
    (a + &adjoint(a)).mapv(|z| 0.5 * z)
}

/// Matrix 1-norm (maximum absolute column sum).
pub fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Frobenius norm.
pub fn fro_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute entry.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace(a: &CMat) -> C64 {
    a.diag().sum()
}

/// True when every entry is finite (no NaN/Inf in either component).
pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn require_square(a: &CMat) -> Result<(), KernelError> {
    if a.nrows() != a.ncols() {
        return Err(KernelError::ShapeMismatch {
            expected: "square matrix".into(),
            got: format!("{:?}", a.dim()),
        });
    }
    Ok(())
}

/// Full eigendecomposition of a general complex square matrix. Pairs are
/// sorted by descending real part of the eigenvalue (ties: descending
/// imaginary part), with each right vector normalized to unit 2-norm.
pub fn eig_full(a: &CMat) -> Result<Vec<EigPair>, KernelError> {
    require_square(a)?;
    ensure_single_threaded_blas();
    let (values, vectors) = a
        .eig()
        .map_err(|e| KernelError::SolverFailure(e.to_string()))?;
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (vi, vj) = (values[i], values[j]);
        vj.re
            .partial_cmp(&vi.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(vj.im.partial_cmp(&vi.im).unwrap_or(std::cmp::Ordering::Equal))
            .then(i.cmp(&j))
    });
    Ok(order
        .into_iter()
        .map(|k| {
            let mut v = vectors.column(k).to_owned();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.mapv_inplace(|z| z / norm);
            }
            EigPair { value: values[k], right: v, left: None }
        })
        .collect())
}

/// Right eigenvector for the eigenvalue of smallest modulus, provided that
/// eigenvalue lies below `tol` scaled by the matrix 1-norm (floored at 1).
///
/// Exactly one eigenvalue may sit below the threshold: none is
/// `NoNullVector`, two or more is `DegenerateNullSpace` — the steady state
/// of the transfer operator must be unique for the observable rules to hold.
pub fn null_right(a: &CMat, tol: f64) -> Result<NullVector, KernelError> {
    require_square(a)?;
    let threshold = tol * one_norm(a).max(1.0);
    let pairs = eig_full(a)?;
    let mut below: Vec<&EigPair> = pairs.iter().filter(|p| p.value.norm() < threshold).collect();
    if below.is_empty() {
        let min_abs = pairs.iter().map(|p| p.value.norm()).fold(f64::INFINITY, f64::min);
        return Err(KernelError::NoNullVector { min_abs, threshold });
    }
    if below.len() > 1 {
        return Err(KernelError::DegenerateNullSpace { count: below.len(), threshold });
    }
    below.sort_by(|p, q| {
        p.value
            .norm()
            .partial_cmp(&q.value.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let chosen = below[0];
    Ok(NullVector { vector: chosen.right.clone(), eigenvalue: chosen.value })
}

/// Null vector plus spectral gap from a single eigendecomposition: the
/// threshold logic of [`null_right`] and the gap −Re λ₂ (second-largest
/// real part), which callers on the steady-state path always need together.
pub fn null_and_gap(a: &CMat, tol: f64) -> Result<(NullVector, f64), KernelError> {
    require_square(a)?;
    let threshold = tol * one_norm(a).max(1.0);
    let pairs = eig_full(a)?;
    let below: Vec<&EigPair> = pairs.iter().filter(|p| p.value.norm() < threshold).collect();
    if below.is_empty() {
        let min_abs = pairs.iter().map(|p| p.value.norm()).fold(f64::INFINITY, f64::min);
        return Err(KernelError::NoNullVector { min_abs, threshold });
    }
    if below.len() > 1 {
        return Err(KernelError::DegenerateNullSpace { count: below.len(), threshold });
    }
    let gap = if pairs.len() > 1 { -pairs[1].value.re } else { f64::INFINITY };
    Ok((NullVector { vector: below[0].right.clone(), eigenvalue: below[0].value }, gap))
}

/// Eigenvalue-only scan: validates that exactly one eigenvalue sits below
/// the null threshold and returns it together with the spectral gap.
/// Computing no eigenvectors makes this roughly half the cost of
/// [`null_and_gap`]; pair it with [`inverse_null`] for the vector.
pub fn eigvals_scan(a: &CMat, tol: f64) -> Result<(C64, f64), KernelError> {
    use ndarray_linalg::EigVals;
    require_square(a)?;
    ensure_single_threaded_blas();
    let values = a
        .eigvals()
        .map_err(|e| KernelError::SolverFailure(e.to_string()))?;
    let threshold = tol * one_norm(a).max(1.0);
    let mut null_value: Option<C64> = None;
    let mut below = 0usize;
    let mut min_abs = f64::INFINITY;
    for &v in values.iter() {
        min_abs = min_abs.min(v.norm());
        if v.norm() < threshold {
            below += 1;
            if null_value.map_or(true, |cur| v.norm() < cur.norm()) {
                null_value = Some(v);
            }
        }
    }
    if below == 0 {
        return Err(KernelError::NoNullVector { min_abs, threshold });
    }
    if below > 1 {
        return Err(KernelError::DegenerateNullSpace { count: below, threshold });
    }
    let mut res: Vec<f64> = values.iter().map(|v| v.re).collect();
    res.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    let gap = if res.len() > 1 { -res[1] } else { f64::INFINITY };
    Ok((null_value.unwrap(), gap))
}

/// One step of shifted inverse iteration for the null vector of a (nearly)
/// singular matrix, starting from `start`. The start vector must overlap
/// the null space; the caller is responsible for checking the residual of
/// the returned unit vector.
pub fn inverse_null(a: &CMat, start: &CVec) -> Result<CVec, KernelError> {
    use ndarray_linalg::Solve;
    require_square(a)?;
    ensure_single_threaded_blas();
    let n = a.nrows();
    if start.len() != n {
        return Err(KernelError::ShapeMismatch {
            expected: format!("start vector of length {n}"),
            got: format!("{}", start.len()),
        });
    }
    // tiny shift keeps the factorization away from an exactly zero pivot
    let shift = C64::new(1e-13 * one_norm(a).max(1.0), 0.0);
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[[i, i]] -= shift;
    }
    let mut x = start.clone();
    for _ in 0..3 {
        let y = shifted
            .solve(&x)
            .map_err(|e| KernelError::SolverFailure(e.to_string()))?;
        let norm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(KernelError::SolverFailure("inverse iteration collapsed".into()));
        }
        x = y.mapv(|z| z / norm);
        let resid = a.dot(&x);
        let rn = resid.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if rn <= 1e-12 * one_norm(a).max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// Real eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(a: &CMat) -> Result<Vec<f64>, KernelError> {
    require_square(a)?;
    ensure_single_threaded_blas();
    let (vals, _) = a
        .eigh(UPLO::Lower)
        .map_err(|e| KernelError::SolverFailure(e.to_string()))?;
    Ok(vals.to_vec())
}

/// D×D identity.
pub fn eye(d: usize) -> CMat {
    Array2::eye(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use num_complex::Complex64 as C64;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_cmat(n: usize, rng: &mut impl Rng) -> CMat {
        Array2::from_shape_fn((n, n), |_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    /// Entrywise Kronecker product by nested loops, independent of `kron`.
    fn kron_loop(a: &CMat, b: &CMat) -> CMat {
        let (ar, ac) = a.dim();
        let (br, bc) = b.dim();
        let mut out = Array2::zeros((ar * br, ac * bc));
        for i in 0..ar {
            for j in 0..ac {
                for k in 0..br {
                    for l in 0..bc {
                        out[[i * br + k, j * bc + l]] = a[[i, j]] * b[[k, l]];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn kron_identities() {
        let i2 = eye(2);
        assert_eq!(kron(&i2, &i2), eye(4));
        let a = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let b = array![[c(2.0, 0.0)]];
        let expect = array![[c(0.0, 0.0), c(2.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        assert_eq!(kron(&a, &b), expect);
    }

    #[test]
    fn adjoint_cases() {
        assert_eq!(adjoint(&eye(3)), eye(3));
        let a = array![[c(0.0, 1.0)]];
        assert_eq!(adjoint(&a), array![[c(0.0, -1.0)]]);
    }

    #[test]
    fn commutator_cases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = random_cmat(3, &mut rng);
        let zero = commutator(&a, &a).unwrap();
        assert!(max_abs(&zero) < 1e-14);
        let b = random_cmat(3, &mut rng);
        let with_id = commutator(&eye(3), &b).unwrap();
        assert!(max_abs(&with_id) < 1e-14);
        // ladder operators: [σ⁺, σ⁻] = diag(1, −1)
        let raise = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let lower = array![[c(0.0, 0.0), c(0.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
        let comm = commutator(&raise, &lower).unwrap();
        let expect = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]];
        assert!(max_abs(&(&comm - &expect)) < 1e-15);
        assert!(commutator(&eye(2), &eye(3)).is_err());
    }

    #[test]
    fn eig_sorted_and_identity() {
        let d = array![[c(3.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        let pairs = eig_full(&d).unwrap();
        assert_abs_diff_eq!(pairs[0].value.re, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pairs[1].value.re, 1.0, epsilon = 1e-12);
        let pairs = eig_full(&eye(4)).unwrap();
        assert_eq!(pairs.len(), 4);
        for p in &pairs {
            assert_abs_diff_eq!(p.value.re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.value.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eig_hermitian_real_and_residual() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = random_cmat(8, &mut rng);
        let h = hermitize(&a);
        for p in eig_full(&h).unwrap() {
            assert!(p.value.im.abs() < 1e-10);
            let resid = &h.dot(&p.right) - &p.right.mapv(|z| z * p.value);
            let rn = resid.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(rn < 1e-9 * one_norm(&h).max(1.0));
        }
    }

    #[test]
    fn eig_residual_random_20x20() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let a = random_cmat(20, &mut rng);
        let scale = fro_norm(&a);
        for p in eig_full(&a).unwrap() {
            let resid = &a.dot(&p.right) - &p.right.mapv(|z| z * p.value);
            let rn = resid.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(rn < 1e-9 * scale, "residual {rn:e} vs scale {scale:e}");
        }
    }

    #[test]
    fn null_right_cases() {
        let a = array![[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]];
        let nv = null_right(&a, 1e-8).unwrap();
        assert!(nv.vector[0].norm() > 1.0 - 1e-12);
        assert!(nv.vector[1].norm() < 1e-12);
        assert!(nv.eigenvalue.norm() < 1e-12);

        let b = array![[c(-1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-2.0, 0.0)]];
        assert!(matches!(null_right(&b, 1e-8), Err(KernelError::NoNullVector { .. })));

        let z: CMat = Array2::zeros((2, 2));
        assert!(matches!(null_right(&z, 1e-8), Err(KernelError::DegenerateNullSpace { .. })));
    }

    #[test]
    fn hermitize_cases() {
        let h = array![[c(1.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(2.0, 0.0)]];
        assert!(max_abs(&(&hermitize(&h) - &h)) < 1e-15);
        let a = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let expect = array![[c(0.0, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.0, 0.0)]];
        assert!(max_abs(&(&hermitize(&a) - &expect)) < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn kron_matches_loop_oracle(seed in 0u64..1_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_cmat(3, &mut rng);
            let b = random_cmat(3, &mut rng);
            let diff = &kron(&a, &b) - &kron_loop(&a, &b);
            prop_assert!(max_abs(&diff) < 1e-14);
        }

        #[test]
        fn kron_associative_and_trace(seed in 0u64..1_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_cmat(2, &mut rng);
            let b = random_cmat(3, &mut rng);
            let cm = random_cmat(2, &mut rng);
            let lhs = kron(&kron(&a, &b), &cm);
            let rhs = kron(&a, &kron(&b, &cm));
            prop_assert!(max_abs(&(&lhs - &rhs)) < 1e-12);
            let t1 = trace(&kron(&a, &b));
            let t2 = trace(&a) * trace(&b);
            prop_assert!((t1 - t2).norm() <= 1e-12 * t2.norm().max(1.0));
        }

        #[test]
        fn adjoint_involution(seed in 0u64..1_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_cmat(4, &mut rng);
            prop_assert!(max_abs(&(&adjoint(&adjoint(&a)) - &a)) == 0.0);
        }

        #[test]
        fn hermitize_is_hermitian(seed in 0u64..1_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_cmat(4, &mut rng);
            let h = hermitize(&a);
            prop_assert!(max_abs(&(&h - &adjoint(&h))) < 1e-15);
        }
    }
}
