//! Data-parallel dispatch helpers and the reproducibility allocator.
//!
//! With the default `parallel` feature the map helpers fan out over rayon's
//! global pool; without it they degrade to plain sequential iteration.
//! Results are always collected in input order, so numerical output is
//! identical either way.

use std::alloc::{GlobalAlloc, Layout, System};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Global allocator that rounds every allocation up to 64-byte alignment.
///
/// BLAS level-1/2 kernels peel unaligned buffer heads element-by-element
/// before entering their vectorized body, so the floating-point reduction
/// order — and hence the last bit of the result — depends on where the
/// allocator happened to place a buffer. Under work stealing, identical
/// runs allocate from different malloc arenas and can diverge by an ulp.
/// Pinning all allocations to the widest SIMD alignment removes that
/// dependence; binaries that promise bitwise-reproducible output install
/// this with `#[global_allocator]`.
pub struct AlignedAlloc;

impl AlignedAlloc {
    fn padded(layout: Layout) -> Layout {
        let align = layout.align().max(64);
        Layout::from_size_align(layout.size().max(1), align).expect("valid padded layout")
    }
}

unsafe impl GlobalAlloc for AlignedAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        System.alloc(Self::padded(layout))
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, Self::padded(layout))
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        System.alloc_zeroed(Self::padded(layout))
    }
}

/// Map `f` over `0..n`, preserving index order in the output.
pub fn par_map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Map `f` over a slice, preserving order.
pub fn par_map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let squares = par_map_indices(100, |i| i * i);
        assert!(squares.iter().enumerate().all(|(i, &s)| s == i * i));
        let v = vec![3, 1, 4, 1, 5];
        assert_eq!(par_map_slice(&v, |x| x + 1), vec![4, 2, 5, 2, 6]);
    }
}
