//! Breathing detection and rate estimation from received-signal-strength
//! (RSS) time series measured on the links of a static wireless mesh.
//!
//! The pipeline: condition raw per-link traces ([`preprocess`]), jointly
//! estimate breathing frequency, per-link amplitude, and per-link phase by
//! maximum likelihood across all links ([`estimate`]), threshold the
//! network-wide breathing statistic ([`detect`]), and score the results
//! ([`evaluate`]). A schedule-accurate trace simulator ([`simulate`]) stands
//! in for hardware; [`io`] owns the on-disk formats.
//!
//! Data-parallel inner loops (frequency grids, link sets, Monte-Carlo
//! windows) run on rayon when the default `parallel` feature is enabled and
//! fall back to plain iterators without it. Either way, reductions keep a
//! fixed order, so results are bit-identical across thread counts.

pub mod detect;
pub mod estimate;
pub mod evaluate;
pub mod io;
pub mod model;
pub mod preprocess;
pub mod simulate;

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn par_map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).map(f).collect()
}
