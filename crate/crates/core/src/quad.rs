//! Shared quadrature machinery: Gauss–Legendre rules, the dyadic divergence
//! protocol used for every finite/infinite decision, and an adaptive cell
//! integrator over the model domains.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::{Domain, DomainKind};
use crate::{Point, Real};

/// Value of an integral that may be infinite. Divergence is a value here,
/// not an error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended<R> {
    Finite(R),
    Infinite,
}

impl<R: Real> Extended<R> {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<R> {
        match self {
            Extended::Finite(v) => Some(*v),
            Extended::Infinite => None,
        }
    }

    /// Finite value or panic; use only where divergence is excluded by
    /// construction.
    pub fn expect_finite(&self, what: &str) -> R {
        match self {
            Extended::Finite(v) => *v,
            Extended::Infinite => panic!("{what}: unexpectedly infinite"),
        }
    }

    /// 1/v with the convention 1/∞ = 0.
    pub fn reciprocal_or_zero(&self) -> R {
        match self {
            Extended::Finite(v) => R::one() / *v,
            Extended::Infinite => R::zero(),
        }
    }
}

/// Reproducible finite/infinite decision for dyadic shell sums.
///
/// Shells are indexed k = 0, 1, … with geometry [scale·2^{−k−1}, scale·2^{−k}].
/// The sum is declared infinite when a partial sum exceeds `cap`, or when at
/// shell `decision_shells` the last-octave growth ratio S_K/S_{K−1} is still
/// at least `ratio_threshold`, or when the shell contributions have stopped
/// decaying (median tail ratio ≥ `tail_decay_threshold`, which catches
/// log-type divergence regardless of early-octave transients). Otherwise the
/// remaining tail is extrapolated geometrically from the last contributions.
#[derive(Debug, Clone, Copy)]
pub struct DivergenceProtocol<R> {
    pub cap: R,
    pub ratio_threshold: R,
    pub tail_decay_threshold: R,
    pub decision_shells: usize,
    pub termination_rel: R,
}

impl<R: Real> Default for DivergenceProtocol<R> {
    fn default() -> Self {
        DivergenceProtocol {
            cap: R::of(1e8),
            ratio_threshold: R::of(1.05),
            tail_decay_threshold: R::of(0.995),
            decision_shells: 20,
            termination_rel: R::of(1e-12),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DyadicReport<R> {
    pub outcome: Extended<R>,
    pub contributions: Vec<R>,
    /// growth ratio S_K/S_{K−1} at the decision shell (if reached)
    pub decision_ratio: Option<R>,
}

impl<R: Real> DivergenceProtocol<R> {
    /// Accumulate dyadic shell contributions produced by `shell(lo, hi)` for
    /// the shells of `scale` and apply the divergence decision.
    pub fn run(&self, scale: R, mut shell: impl FnMut(R, R) -> R) -> DyadicReport<R> {
        let half = R::of(0.5);
        let mut contributions = Vec::with_capacity(self.decision_shells + 1);
        let mut sum = R::zero();
        let mut hi = scale;
        for k in 0..=self.decision_shells {
            let lo = hi * half;
            let c = shell(lo, hi);
            contributions.push(c);
            sum = sum + c;
            if sum > self.cap {
                return DyadicReport {
                    outcome: Extended::Infinite,
                    contributions,
                    decision_ratio: None,
                };
            }
            if k >= 3 && c.abs() <= self.termination_rel * sum.abs() {
                return DyadicReport {
                    outcome: Extended::Finite(sum),
                    contributions,
                    decision_ratio: None,
                };
            }
            hi = lo;
        }
        let n = contributions.len();
        let last = contributions[n - 1];
        let prev_sum = sum - last;
        if sum == R::zero() {
            return DyadicReport {
                outcome: Extended::Finite(R::zero()),
                contributions,
                decision_ratio: None,
            };
        }
        let ratio = sum / prev_sum;
        let tail_q = median_tail_ratio(&contributions, 6);
        let decaying = tail_q.map(|q| q < self.tail_decay_threshold).unwrap_or(true);
        if !ratio.is_finite() || ratio >= self.ratio_threshold || !decaying {
            return DyadicReport {
                outcome: Extended::Infinite,
                contributions,
                decision_ratio: Some(ratio),
            };
        }
        // geometric tail from the measured decay
        let mut total = sum;
        if let Some(q) = tail_q {
            if q > R::zero() && last > R::zero() {
                let q = q.min(R::of(0.97));
                total = total + last * q / (R::one() - q);
            }
        }
        DyadicReport {
            outcome: Extended::Finite(total),
            contributions,
            decision_ratio: Some(ratio),
        }
    }
}

/// Median of the consecutive-contribution ratios over the last `m` pairs
/// with positive entries; None when fewer than two positive pairs exist.
fn median_tail_ratio<R: Real>(contributions: &[R], m: usize) -> Option<R> {
    let n = contributions.len();
    let start = n.saturating_sub(m + 1);
    let mut ratios: Vec<R> = Vec::new();
    for k in start..n.saturating_sub(1) {
        if contributions[k] > R::zero() && contributions[k + 1] > R::zero() {
            ratios.push(contributions[k + 1] / contributions[k]);
        }
    }
    if ratios.len() < 2 {
        return None;
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(ratios[ratios.len() / 2])
}

/// Gauss–Legendre nodes and weights on [−1, 1], by Newton iteration on P_n.
pub fn gauss_legendre<R: Real>(n: usize) -> Vec<(R, R)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_deriv(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((R::of(-x), R::of(w))); // ascending order
    }
    out
}

fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped onto [a, b].
pub fn gl_scaled<R: Real>(rule: &[(R, R)], a: R, b: R) -> Vec<(R, R)> {
    let half = (b - a) / R::of(2.0);
    let mid = (a + b) / R::of(2.0);
    rule.iter().map(|&(x, w)| (mid + half * x, half * w)).collect()
}

/// Parameter-space box for the adaptive integrator: (radial, angular(, azimuthal)).
#[derive(Debug, Clone, Copy)]
struct Box3<R> {
    r: (R, R),
    t: (R, R),
    p: (R, R),
}

impl<R: Real> Box3<R> {
    fn volume(&self, kind: DomainKind) -> R {
        let two = R::of(2.0);
        let three = R::of(3.0);
        match kind {
            DomainKind::Disk2d => {
                (self.r.1 * self.r.1 - self.r.0 * self.r.0) / two * (self.t.1 - self.t.0)
            }
            DomainKind::Ball3d => {
                (self.r.1.powi(3) - self.r.0.powi(3)) / three
                    * (self.t.0.cos() - self.t.1.cos())
                    * (self.p.1 - self.p.0)
            }
        }
    }

    fn center_point(&self, kind: DomainKind) -> Point<R> {
        let half = R::of(0.5);
        let rc = (self.r.0 + self.r.1) * half;
        let tc = (self.t.0 + self.t.1) * half;
        match kind {
            DomainKind::Disk2d => [rc * tc.cos(), rc * tc.sin(), R::zero()],
            DomainKind::Ball3d => {
                let pc = (self.p.0 + self.p.1) * half;
                [rc * tc.sin() * pc.cos(), rc * tc.sin() * pc.sin(), rc * tc.cos()]
            }
        }
    }

    fn split(&self, kind: DomainKind) -> Vec<Box3<R>> {
        let half = R::of(0.5);
        let rm = (self.r.0 + self.r.1) * half;
        let tm = (self.t.0 + self.t.1) * half;
        let mut out = Vec::new();
        let rs = [(self.r.0, rm), (rm, self.r.1)];
        let ts = [(self.t.0, tm), (tm, self.t.1)];
        match kind {
            DomainKind::Disk2d => {
                for &r in &rs {
                    for &t in &ts {
                        out.push(Box3 { r, t, p: self.p });
                    }
                }
            }
            DomainKind::Ball3d => {
                let pm = (self.p.0 + self.p.1) * half;
                let ps = [(self.p.0, pm), (pm, self.p.1)];
                for &r in &rs {
                    for &t in &ts {
                        for &p in &ps {
                            out.push(Box3 { r, t, p });
                        }
                    }
                }
            }
        }
        out
    }
}

struct HeapItem<R: Real> {
    err: f64,
    boxed: Box3<R>,
    value: R,
    depth: usize,
}

impl<R: Real> PartialEq for HeapItem<R> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<R: Real> Eq for HeapItem<R> {}
impl<R: Real> PartialOrd for HeapItem<R> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<R: Real> Ord for HeapItem<R> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// Adaptive midpoint integration of `f` over the whole domain, refining the
/// parameter boxes with the largest estimated error until the total estimate
/// falls below `rel_tol` relative. Handles integrable singularities at the
/// boundary or at isolated points by clustering boxes there.
pub fn integrate_adaptive<R: Real, F: Fn(Point<R>) -> R>(
    dom: &Domain<R>,
    f: &F,
    rel_tol: R,
    max_boxes: usize,
) -> R {
    let pi = R::of(std::f64::consts::PI);
    let two_pi = R::of(2.0 * std::f64::consts::PI);
    let (n_t, n_p, t_max, p_max) = match dom.kind {
        DomainKind::Disk2d => (16usize, 1usize, two_pi, R::one()),
        DomainKind::Ball3d => (8, 8, pi, two_pi),
    };
    // radial panels refined dyadically toward the boundary so boundary-blowing
    // weights like d^{−α} start resolved
    let mut radial_edges = vec![R::zero(), R::of(0.5)];
    let mut gap = R::of(0.5);
    while gap > R::of(1e-14) {
        gap = gap / R::of(2.0);
        radial_edges.push(R::one() - gap);
    }
    radial_edges.push(R::one());
    let eval = |b: &Box3<R>| -> (R, R) {
        // midpoint value and refined estimate from children
        let coarse = f(b.center_point(dom.kind)) * b.volume(dom.kind);
        let mut fine = R::zero();
        for c in b.split(dom.kind) {
            fine = fine + f(c.center_point(dom.kind)) * c.volume(dom.kind);
        }
        (fine, (fine - coarse).abs())
    };

    let mut heap: BinaryHeap<HeapItem<R>> = BinaryHeap::new();
    let mut total = R::zero();
    let mut total_err = R::zero();
    for w in radial_edges.windows(2) {
        for j in 0..n_t {
            for k in 0..n_p {
                let b = Box3 {
                    r: (w[0], w[1]),
                    t: (
                        R::from_usize_(j) * t_max / R::from_usize_(n_t),
                        R::from_usize_(j + 1) * t_max / R::from_usize_(n_t),
                    ),
                    p: (
                        R::from_usize_(k) * p_max / R::from_usize_(n_p),
                        R::from_usize_(k + 1) * p_max / R::from_usize_(n_p),
                    ),
                };
                let (v, e) = eval(&b);
                total = total + v;
                total_err = total_err + e;
                heap.push(HeapItem { err: e.f64(), boxed: b, value: v, depth: 0 });
            }
        }
    }
    let mut n_boxes = heap.len();
    while n_boxes < max_boxes {
        if total_err <= rel_tol * total.abs() {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        if worst.err <= 0.0 || worst.depth > 42 {
            break;
        }
        total = total - worst.value;
        total_err = total_err - R::of(worst.err);
        for c in worst.boxed.split(dom.kind) {
            let (v, e) = eval(&c);
            total = total + v;
            total_err = total_err + e;
            heap.push(HeapItem { err: e.f64(), boxed: c, value: v, depth: worst.depth + 1 });
            n_boxes += 1;
        }
    }
    total
}
