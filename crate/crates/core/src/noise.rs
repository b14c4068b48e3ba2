//! Two-sided Wiener paths, generated lazily and reproducibly.
//!
//! Time is measured in integer ticks, `2^30` per unit. Each unit interval `[n, n+1)`,
//! `n ∈ ℤ`, owns a block of increments: level 0 is one standard normal per coordinate,
//! and level `k` splits every level `k-1` increment by the Brownian-bridge midpoint rule.
//! Every normal draw is keyed by `(seed, interval, level, coordinate)` plus its offset in
//! a ChaCha8 stream, so any window of the path can be produced without the rest of it and
//! coarse increments are sums of their refined halves.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use spin::Mutex;

#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{Error, Result};

/// Finest supported dyadic level; steps are `2^-k` with `k <= MAX_LEVEL`.
pub const MAX_LEVEL: u32 = 30;
pub const TICKS_PER_UNIT: i64 = 1 << MAX_LEVEL;
/// Largest representable absolute time.
pub const MAX_TIME: f64 = (1u64 << 30) as f64;

/// Converts a time to ticks; it must be a multiple of `2^-MAX_LEVEL`.
pub fn to_ticks(t: f64) -> Result<i64> {
    if !t.is_finite() || t.abs() > MAX_TIME {
        return Err(Error::NotOnGrid(t));
    }
    let scaled = t * TICKS_PER_UNIT as f64;
    if scaled.fract() != 0.0 {
        return Err(Error::NotOnGrid(t));
    }
    Ok(scaled as i64)
}

pub fn from_ticks(ticks: i64) -> f64 {
    ticks as f64 / TICKS_PER_UNIT as f64
}

/// Dyadic level `k` of a step `2^-k`.
pub fn step_level(step: f64) -> Result<u32> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("step {step} outside (0, 1]")));
    }
    let k = -step.log2();
    if k.fract() != 0.0 || k > MAX_LEVEL as f64 {
        return Err(Error::InvalidArgument(alloc::format!("step {step} is not 2^-k")));
    }
    Ok(k as u32)
}

/// Increments over a window, stored coordinate-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    pub dim: usize,
    pub step: f64,
    len: usize,
    data: Vec<f64>,
}

impl Increments {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn coord(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    /// Total increment of coordinate `c` over the window.
    pub fn total(&self, c: usize) -> f64 {
        self.coord(c).iter().sum()
    }

    /// Sub-window of steps `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> Increments {
        let mut data = Vec::with_capacity(self.dim * (to - from));
        for c in 0..self.dim {
            data.extend_from_slice(&self.coord(c)[from..to]);
        }
        Increments {
            dim: self.dim,
            step: self.step,
            len: to - from,
            data,
        }
    }

    fn reversed(mut self) -> Increments {
        for c in 0..self.dim {
            self.data[c * self.len..(c + 1) * self.len].reverse();
        }
        self
    }
}

/// Anything that yields Wiener increments on the dyadic grid.
pub trait NoiseSource {
    fn dim(&self) -> usize;

    /// Increments over `[t0, t1]` in ticks at dyadic level `level`.
    fn increments_ticks(&self, t0: i64, t1: i64, level: u32) -> Result<Increments>;

    fn increments(&self, t0: f64, t1: f64, step: f64) -> Result<Increments> {
        if !(t0 < t1) {
            return Err(Error::EmptyInterval { t0, t1 });
        }
        let level = step_level(step)?;
        self.increments_ticks(to_ticks(t0)?, to_ticks(t1)?, level)
    }

    /// The view `θ_s ω`: increments over `[a, b]` are this source's over `[a + s, b + s]`.
    fn shift(&self, s: f64) -> Result<PathView<'_, Self>>
    where
        Self: Sized,
    {
        Ok(PathView {
            src: self,
            offset: to_ticks(s)?,
            reversed: false,
        })
    }

    /// Time reversal `W̃(t) = -W(-t)`: increments over `[a, b]` are this source's over
    /// `[-b, -a]`, in reverse order.
    fn time_reversed(&self) -> PathView<'_, Self>
    where
        Self: Sized,
    {
        PathView {
            src: self,
            offset: 0,
            reversed: true,
        }
    }
}

struct UnitBlock {
    /// `levels[k][c * 2^k + o]`
    levels: Vec<Vec<f64>>,
}

/// A `d`-dimensional two-sided Wiener path identified by its seed.
pub struct WienerPath2S {
    seed: u64,
    dim: usize,
    cache: Mutex<BTreeMap<i64, UnitBlock>>,
    generated: AtomicU64,
}

impl core::fmt::Debug for WienerPath2S {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("WienerPath2S")
            .field("seed", &self.seed)
            .field("dim", &self.dim)
            .field("cached_units", &self.cache.lock().len())
            .finish()
    }
}

impl WienerPath2S {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self {
            seed,
            dim,
            cache: Mutex::new(BTreeMap::new()),
            generated: AtomicU64::new(0),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of (unit interval, level) blocks drawn so far. Repeated queries of the
    /// same window do not increase it.
    pub fn blocks_generated(&self) -> u64 {
        self.generated.load(Ordering::Relaxed)
    }

    /// The path value `W(t)` on the grid, with `W(0) = 0`.
    pub fn value(&self, t: f64) -> Result<Vec<f64>> {
        let ticks = to_ticks(t)?;
        if ticks == 0 {
            return Ok(vec![0.0; self.dim]);
        }
        // finest level needed to land on t exactly
        let level = MAX_LEVEL - (ticks.trailing_zeros().min(MAX_LEVEL));
        let (a, b, sign) = if ticks > 0 { (0, ticks, 1.0) } else { (ticks, 0, -1.0) };
        let inc = self.increments_ticks(a, b, level)?;
        Ok((0..self.dim).map(|c| sign * inc.total(c)).collect())
    }

    fn rng(&self, unit: i64, level: u32, coord: usize) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&unit.to_le_bytes());
        key[16..20].copy_from_slice(&level.to_le_bytes());
        key[20..24].copy_from_slice(&(coord as u32).to_le_bytes());
        key[24..32].copy_from_slice(b"wiener2s");
        ChaCha8Rng::from_seed(key)
    }

    fn ensure(&self, cache: &mut BTreeMap<i64, UnitBlock>, unit: i64, level: u32) {
        let block = cache.entry(unit).or_insert_with(|| {
            self.generated.fetch_add(1, Ordering::Relaxed);
            let base = (0..self.dim)
                .map(|c| StandardNormal.sample(&mut self.rng(unit, 0, c)))
                .collect();
            UnitBlock { levels: vec![base] }
        });
        while (block.levels.len() as u32) <= level {
            let k = block.levels.len() as u32;
            self.generated.fetch_add(1, Ordering::Relaxed);
            let parent = &block.levels[k as usize - 1];
            let n_parent = 1usize << (k - 1);
            // half the standard deviation of a parent increment of length 2^-(k-1)
            let bridge_sd = 0.5 * (2f64).powi(-((k - 1) as i32)).sqrt();
            let mut next = vec![0.0; self.dim * 2 * n_parent];
            for c in 0..self.dim {
                let mut rng = self.rng(unit, k, c);
                for o in 0..n_parent {
                    let delta = parent[c * n_parent + o];
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    let left = 0.5 * delta + bridge_sd * xi;
                    next[c * 2 * n_parent + 2 * o] = left;
                    next[c * 2 * n_parent + 2 * o + 1] = delta - left;
                }
            }
            block.levels.push(next);
        }
    }
}

impl NoiseSource for WienerPath2S {
    fn dim(&self) -> usize {
        self.dim
    }

    fn increments_ticks(&self, t0: i64, t1: i64, level: u32) -> Result<Increments> {
        if t0 >= t1 {
            return Err(Error::EmptyInterval {
                t0: from_ticks(t0),
                t1: from_ticks(t1),
            });
        }
        if level > MAX_LEVEL {
            return Err(Error::InvalidArgument(alloc::format!("level {level} too fine")));
        }
        let step = 1i64 << (MAX_LEVEL - level);
        if t0 % step != 0 {
            return Err(Error::NotOnGrid(from_ticks(t0)));
        }
        if t1 % step != 0 {
            return Err(Error::NotOnGrid(from_ticks(t1)));
        }
        let len = ((t1 - t0) / step) as usize;
        let per_unit = 1usize << level;
        let mut data = vec![0.0; self.dim * len];
        let mut cache = self.cache.lock();
        let first_unit = t0.div_euclid(TICKS_PER_UNIT);
        let last_unit = (t1 - 1).div_euclid(TICKS_PER_UNIT);
        for unit in first_unit..=last_unit {
            self.ensure(&mut cache, unit, level);
        }
        let mut j = 0usize;
        let mut t = t0;
        while t < t1 {
            let unit = t.div_euclid(TICKS_PER_UNIT);
            let off = ((t - unit * TICKS_PER_UNIT) / step) as usize;
            let take = (per_unit - off).min(len - j);
            let block = &cache[&unit].levels[level as usize];
            for c in 0..self.dim {
                let src = &block[c * per_unit + off..c * per_unit + off + take];
                data[c * len + j..c * len + j + take].copy_from_slice(src);
            }
            j += take;
            t += take as i64 * step;
        }
        Ok(Increments {
            dim: self.dim,
            step: 1.0 / per_unit as f64,
            len,
            data,
        })
    }
}

/// A shifted and/or time-reversed view of a noise source: time `t` of the view is time
/// `±t + offset` of the source.
#[derive(Debug)]
pub struct PathView<'a, S> {
    src: &'a S,
    offset: i64,
    reversed: bool,
}

impl<S> Clone for PathView<'_, S> {
    fn clone(&self) -> Self {
        Self {
            src: self.src,
            offset: self.offset,
            reversed: self.reversed,
        }
    }
}

impl<'a, S: NoiseSource> PathView<'a, S> {
    pub fn offset(&self) -> f64 {
        from_ticks(self.offset)
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// Shift composed onto this view, staying a single view of the original source.
    pub fn shifted(&self, s: f64) -> Result<PathView<'a, S>> {
        let s = to_ticks(s)?;
        let sign = if self.reversed { -1 } else { 1 };
        Ok(PathView {
            src: self.src,
            offset: self.offset + sign * s,
            reversed: self.reversed,
        })
    }

    pub fn reversed(&self) -> PathView<'a, S> {
        PathView {
            src: self.src,
            offset: self.offset,
            reversed: !self.reversed,
        }
    }
}

impl<S: NoiseSource> NoiseSource for PathView<'_, S> {
    fn dim(&self) -> usize {
        self.src.dim()
    }

    fn increments_ticks(&self, t0: i64, t1: i64, level: u32) -> Result<Increments> {
        if self.reversed {
            self.src
                .increments_ticks(self.offset - t1, self.offset - t0, level)
                .map(Increments::reversed)
        } else {
            self.src
                .increments_ticks(t0 + self.offset, t1 + self.offset, level)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridge_consistency() {
        let p = WienerPath2S::new(11, 3);
        let coarse = p.increments(0.0, 1.0, 1.0).unwrap();
        let fine = p.increments(0.0, 1.0, 2f64.powi(-10)).unwrap();
        assert_eq!(fine.len(), 1024);
        for c in 0..3 {
            assert!((coarse.coord(c)[0] - fine.total(c)).abs() < 1e-12);
        }
        // across levels in the middle of a longer window
        let a = p.increments(-2.0, 3.0, 0.25).unwrap();
        let b = p.increments(-2.0, 3.0, 2f64.powi(-6)).unwrap();
        for c in 0..3 {
            for (j, v) in a.coord(c).iter().enumerate() {
                let s: f64 = b.coord(c)[16 * j..16 * (j + 1)].iter().sum();
                assert!((v - s).abs() < 1e-12 * 4.0);
            }
        }
    }

    #[test]
    fn deterministic_and_two_sided() {
        let p = WienerPath2S::new(5, 1);
        let q = WienerPath2S::new(5, 1);
        let a = p.increments(-3.0, -2.0, 2f64.powi(-4)).unwrap();
        assert_eq!(a, p.increments(-3.0, -2.0, 2f64.powi(-4)).unwrap());
        assert_eq!(a, q.increments(-3.0, -2.0, 2f64.powi(-4)).unwrap());
        assert_eq!(a.len(), 16);
        // query order does not matter
        let r = WienerPath2S::new(5, 1);
        r.increments(0.0, 4.0, 2f64.powi(-8)).unwrap();
        assert_eq!(a, r.increments(-3.0, -2.0, 2f64.powi(-4)).unwrap());
        assert_ne!(a, WienerPath2S::new(6, 1).increments(-3.0, -2.0, 2f64.powi(-4)).unwrap());
    }

    #[test]
    fn argument_errors() {
        let p = WienerPath2S::new(1, 1);
        assert!(matches!(p.increments(1.0, 1.0, 0.5), Err(Error::EmptyInterval { .. })));
        assert!(p.increments(0.0, 1.0, 0.3).is_err());
        assert!(matches!(p.increments(0.1, 1.0, 0.5), Err(Error::NotOnGrid(_))));
        assert!(p.shift(0.1).is_err());
        assert_eq!(p.value(0.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn value_matches_sums() {
        let p = WienerPath2S::new(9, 2);
        let w = p.value(2.5).unwrap();
        let inc = p.increments(0.0, 2.5, 0.5).unwrap();
        for (c, wc) in w.iter().enumerate() {
            assert!((wc - inc.total(c)).abs() < 1e-12);
        }
        let w = p.value(-1.25).unwrap();
        let inc = p.increments(-1.25, 0.0, 0.25).unwrap();
        assert!((w[1] + inc.total(1)).abs() < 1e-12);
    }

    #[test]
    fn shift_views() {
        let p = WienerPath2S::new(3, 2);
        let step = 2f64.powi(-5);
        let base = p.increments(0.0, 1.0, step).unwrap();
        assert_eq!(p.shift(0.0).unwrap().increments(0.0, 1.0, step).unwrap(), base);
        let back = p.shift(1.0).unwrap().shifted(-1.0).unwrap();
        assert_eq!(back.increments(0.0, 1.0, step).unwrap(), base);
        assert_eq!(
            p.shift(2.0).unwrap().increments(0.0, 1.0, step).unwrap(),
            p.increments(2.0, 3.0, step).unwrap()
        );
        let s1 = p.shift(0.5).unwrap().shifted(1.25).unwrap();
        assert_eq!(
            s1.increments(-4.0, 2.0, step).unwrap(),
            p.shift(1.75).unwrap().increments(-4.0, 2.0, step).unwrap()
        );
    }

    #[test]
    fn time_reversal() {
        let p = WienerPath2S::new(4, 1);
        let step = 0.25;
        let r = p.time_reversed();
        let mut direct = p.increments(-2.0, 0.0, step).unwrap().coord(0).to_vec();
        direct.reverse();
        assert_eq!(r.increments(0.0, 2.0, step).unwrap().coord(0), &direct[..]);
        // reversing twice is the identity
        let rr = r.reversed();
        assert_eq!(
            rr.increments(1.0, 3.0, step).unwrap(),
            p.increments(1.0, 3.0, step).unwrap()
        );
        // shift of a reversed view moves the source window the other way
        let rs = r.shifted(1.0).unwrap();
        let mut direct = p.increments(-3.0, -1.0, step).unwrap().coord(0).to_vec();
        direct.reverse();
        assert_eq!(rs.increments(0.0, 2.0, step).unwrap().coord(0), &direct[..]);
    }

    #[test]
    fn pullback_windows_reuse_cache() {
        let p = WienerPath2S::new(8, 1);
        let step = 2f64.powi(-6);
        let mut prev: Option<Increments> = None;
        for t in [1.0, 2.0, 4.0, 8.0] {
            let view = p.shift(-t).unwrap();
            let before = p.blocks_generated();
            let inc = view.increments(0.0, t, step).unwrap();
            let new_blocks = p.blocks_generated() - before;
            if let Some(prev) = &prev {
                // the previous window [-t/2, 0] is the tail of the new one, unchanged
                let n = prev.len();
                assert_eq!(&inc.coord(0)[inc.len() - n..], prev.coord(0));
                // only the newly exposed unit intervals are drawn, each at 7 levels
                assert_eq!(new_blocks, (t / 2.0) as u64 * 7);
            }
            prev = Some(inc);
        }
    }

    #[test]
    fn unit_increment_moments() {
        let n = 10_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for seed in 0..n {
            let p = WienerPath2S::new(seed, 1);
            let v = p.increments(0.0, 1.0, 1.0).unwrap().coord(0)[0];
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn refined_increment_variance() {
        // the bridge refinement must give variance equal to the step
        let step = 2f64.powi(-8);
        let p = WienerPath2S::new(77, 1);
        let inc = p.increments(0.0, 64.0, step).unwrap();
        let var = inc.coord(0).iter().map(|v| v * v).sum::<f64>() / inc.len() as f64;
        assert!((var / step - 1.0).abs() < 0.02, "{}", var / step);
    }
}
