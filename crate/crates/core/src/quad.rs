//! Globally adaptive Gauss–Kronrod (10/21) quadrature.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sum::compensated_sum;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_segments: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-12, rel: 1e-12, max_segments: 2000 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
    roundoff: bool,
}

impl<T: Real> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Segment<T> {}
impl<T: Real> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Segments at the roundoff floor sink to the bottom of the heap.
        match (self.roundoff, other.roundoff) {
            (false, true) => Ordering::Greater,
            (true, false) => Ordering::Less,
            _ => self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal),
        }
    }
}

fn kronrod<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Segment<T> {
    let half = T::lit(0.5);
    let c = (a + b) * half;
    let h = (b - a) * half;
    let fc = f(c);
    let mut k = fc * T::lit(WGK[10]);
    let mut g = T::zero();
    let mut absk = fc.abs() * T::lit(WGK[10]);
    for i in 0..10 {
        let dx = h * T::lit(XGK[i]);
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        k += (f1 + f2) * T::lit(WGK[i]);
        absk += (f1.abs() + f2.abs()) * T::lit(WGK[i]);
        if i % 2 == 1 {
            g += (f1 + f2) * T::lit(WG[i / 2]);
        }
    }
    let value = k * h;
    let error = ((k - g) * h).abs();
    let floor = T::lit(50.0) * T::epsilon() * absk * h.abs();
    Segment { a, b, value, error: error.max(floor), roundoff: error <= floor }
}

/// Integrates `f` over the union of consecutive intervals delimited by `points`.
pub fn integrate_pieces<T: Real, F: FnMut(T) -> T>(mut f: F, points: &[T], tol: Tolerance) -> Result<Estimate<T>> {
    if points.len() < 2 {
        return Ok(Estimate { value: T::zero(), error: T::zero(), evaluations: 0 });
    }
    let abs_tol = T::lit(tol.abs);
    let rel_tol = T::floor_tol(tol.rel);
    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in points.windows(2) {
        if w[1] != w[0] {
            heap.push(kronrod(&mut f, w[0], w[1]));
            evals += 21;
        }
    }
    loop {
        let value = compensated_sum(heap.iter().map(|s| s.value));
        let error = compensated_sum(heap.iter().map(|s| s.error));
        let target = abs_tol.max(rel_tol * value.abs());
        let top = heap.peek().copied();
        let done = error <= target || top.is_none_or(|s| s.roundoff);
        if done {
            return Ok(Estimate { value, error, evaluations: evals });
        }
        if heap.len() >= tol.max_segments {
            return Err(Error::Quadrature {
                a: points[0].to_f64_lossy(),
                b: points[points.len() - 1].to_f64_lossy(),
                err: error.to_f64_lossy(),
            });
        }
        let s = heap.pop().expect("non-empty heap");
        let mid = (s.a + s.b) * T::lit(0.5);
        if mid <= s.a.min(s.b) || mid >= s.a.max(s.b) {
            heap.push(Segment { roundoff: true, ..s });
            continue;
        }
        heap.push(kronrod(&mut f, s.a, mid));
        heap.push(kronrod(&mut f, mid, s.b));
        evals += 42;
    }
}

pub fn integrate<T: Real, F: FnMut(T) -> T>(f: F, a: T, b: T, tol: Tolerance) -> Result<Estimate<T>> {
    integrate_pieces(f, &[a, b], tol)
}

/// Fixed 21-point Kronrod rule on `[a, b]`; used for table panels.
pub fn kronrod_fixed<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T) -> T {
    kronrod(&mut f, a, b).value
}

/// Gauss–Legendre 10-point nodes and weights on `[-1, 1]`.
pub fn gauss10() -> ([f64; 10], [f64; 10]) {
    let mut x = [0.0; 10];
    let mut w = [0.0; 10];
    for i in 0..5 {
        let node = XGK[2 * i + 1];
        x[2 * i] = -node;
        x[2 * i + 1] = node;
        w[2 * i] = WG[i];
        w[2 * i + 1] = WG[i];
    }
    (x, w)
}
