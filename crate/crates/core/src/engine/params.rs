//! Flat real parameterization of the ansatz classes.
//!
//! Hermitian matrices pack as D diagonal reals followed by (re, im) of the
//! strict upper triangle in row-major order (D² reals); general complex
//! matrices pack as row-major (re, im) pairs (2D² reals). The resulting
//! layouts are
//!
//! ```text
//! single:  [K][R]                              → 3D² reals
//! coupled: [K₁][K₂][R₁][R₂][Z₁⁽⁰⁾][Z₂⁽⁰⁾]…    → (6+2P)D² reals
//! ```
//!
//! Packing reads only the stored upper triangle, so `pack(unpack(v)) == v`
//! holds bitwise.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::coupled::CoupledAnsatz;
use crate::kernel::CMat;
use crate::single::CmpsAnsatz;

use super::EngineError;

/// Block structure of a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Single { d: usize },
    Coupled { d: usize, pairs: usize },
}

impl Layout {
    /// Total number of real parameters.
    pub fn param_count(&self) -> usize {
        match *self {
            Layout::Single { d } => 3 * d * d,
            Layout::Coupled { d, pairs } => (6 + 2 * pairs) * d * d,
        }
    }

    pub fn bond_dim(&self) -> usize {
        match *self {
            Layout::Single { d } | Layout::Coupled { d, .. } => d,
        }
    }

    /// Half-open ranges of the R blocks (the parameters that scale the
    /// particle densities).
    pub(crate) fn r_block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let dd = self.bond_dim() * self.bond_dim();
        match *self {
            Layout::Single { .. } => vec![dd..3 * dd],
            Layout::Coupled { .. } => vec![2 * dd..4 * dd, 4 * dd..6 * dd],
        }
    }
}

/// Flat real parameter vector plus its block descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self, EngineError> {
        if values.len() != layout.param_count() {
            return Err(EngineError::LayoutMismatch {
                expected: layout.param_count(),
                got: values.len(),
            });
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        Self { values: vec![0.0; layout.param_count()], layout }
    }
}

/// Either ansatz class, as produced by [`unpack`].
#[derive(Debug, Clone, PartialEq)]
pub enum AnyAnsatz {
    Single(CmpsAnsatz),
    Coupled(CoupledAnsatz),
}

fn hermitian_len(d: usize) -> usize {
    d * d
}

fn pack_hermitian(m: &CMat, out: &mut Vec<f64>) {
    let d = m.nrows();
    for i in 0..d {
        out.push(m[[i, i]].re);
    }
    for i in 0..d {
        for j in i + 1..d {
            out.push(m[[i, j]].re);
            out.push(m[[i, j]].im);
        }
    }
}

fn unpack_hermitian(slice: &[f64], d: usize) -> CMat {
    let mut m: CMat = Array2::zeros((d, d));
    for i in 0..d {
        m[[i, i]] = C64::new(slice[i], 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in i + 1..d {
            let z = C64::new(slice[k], slice[k + 1]);
            m[[i, j]] = z;
            m[[j, i]] = z.conj();
            k += 2;
        }
    }
    m
}

fn pack_complex(m: &CMat, out: &mut Vec<f64>) {
    for z in m.iter() {
        out.push(z.re);
        out.push(z.im);
    }
}

fn unpack_complex(slice: &[f64], d: usize) -> CMat {
    Array2::from_shape_fn((d, d), |(i, j)| {
        let k = 2 * (i * d + j);
        C64::new(slice[k], slice[k + 1])
    })
}

/// Flatten an ansatz into its real parameter vector.
pub fn pack(ansatz: &AnyAnsatz) -> ParamVector {
    match ansatz {
        AnyAnsatz::Single(a) => {
            let d = a.bond_dim();
            let layout = Layout::Single { d };
            let mut values = Vec::with_capacity(layout.param_count());
            pack_hermitian(a.k(), &mut values);
            pack_complex(a.r(), &mut values);
            ParamVector { values, layout }
        }
        AnyAnsatz::Coupled(a) => {
            let d = a.bond_dim();
            let layout = Layout::Coupled { d, pairs: a.pairs() };
            let mut values = Vec::with_capacity(layout.param_count());
            pack_hermitian(a.k1(), &mut values);
            pack_hermitian(a.k2(), &mut values);
            pack_complex(a.r1(), &mut values);
            pack_complex(a.r2(), &mut values);
            for (z1, z2) in a.z() {
                pack_hermitian(z1, &mut values);
                pack_hermitian(z2, &mut values);
            }
            ParamVector { values, layout }
        }
    }
}

/// Rebuild the ansatz matrices from a flat vector. The Hermitian blocks are
/// reconstructed exactly Hermitian, so the ansatz invariants hold by
/// construction.
pub fn unpack(v: &ParamVector) -> Result<AnyAnsatz, EngineError> {
    if v.values.len() != v.layout.param_count() {
        return Err(EngineError::LayoutMismatch {
            expected: v.layout.param_count(),
            got: v.values.len(),
        });
    }
    match v.layout {
        Layout::Single { d } => {
            let hl = hermitian_len(d);
            let k = unpack_hermitian(&v.values[..hl], d);
            let r = unpack_complex(&v.values[hl..], d);
            Ok(AnyAnsatz::Single(
                CmpsAnsatz::new(k, r).expect("packed layout yields a valid ansatz"),
            ))
        }
        Layout::Coupled { d, pairs } => {
            let hl = hermitian_len(d);
            let cl = 2 * d * d;
            let mut at = 0;
            let mut take = |len: usize| {
                let s = &v.values[at..at + len];
                at += len;
                s
            };
            let k1 = unpack_hermitian(take(hl), d);
            let k2 = unpack_hermitian(take(hl), d);
            let r1 = unpack_complex(take(cl), d);
            let r2 = unpack_complex(take(cl), d);
            let z = (0..pairs)
                .map(|_| (unpack_hermitian(take(hl), d), unpack_hermitian(take(hl), d)))
                .collect();
            Ok(AnyAnsatz::Coupled(
                CoupledAnsatz::new(k1, k2, r1, r2, z)
                    .expect("packed layout yields a valid ansatz"),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn layout_counts() {
        assert_eq!(Layout::Single { d: 2 }.param_count(), 12);
        assert_eq!(Layout::Single { d: 4 }.param_count(), 48);
        assert_eq!(Layout::Coupled { d: 3, pairs: 2 }.param_count(), 90);
        assert_eq!(Layout::Coupled { d: 1, pairs: 0 }.param_count(), 6);
    }

    #[test]
    fn zero_vector_gives_zero_matrices() {
        let v = ParamVector::zeros(Layout::Coupled { d: 2, pairs: 1 });
        match unpack(&v).unwrap() {
            AnyAnsatz::Coupled(a) => {
                assert!(a.k1().iter().chain(a.r2().iter()).all(|z| z.norm() == 0.0));
                assert!(a.z()[0].0.iter().all(|z| z.norm() == 0.0));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let v = ParamVector { values: vec![0.0; 11], layout: Layout::Single { d: 2 } };
        assert!(matches!(unpack(&v), Err(EngineError::LayoutMismatch { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn round_trip_is_bitwise_exact(seed in 0u64..100_000, coupled in proptest::bool::ANY) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let layout = if coupled {
                Layout::Coupled { d: 2, pairs: 2 }
            } else {
                Layout::Single { d: 3 }
            };
            let values: Vec<f64> =
                (0..layout.param_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v = ParamVector::new(values.clone(), layout).unwrap();
            let back = pack(&unpack(&v).unwrap());
            prop_assert_eq!(back.layout, layout);
            prop_assert!(back.values.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
