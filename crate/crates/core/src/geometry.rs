//! Model domains (unit disk, unit ball), the principal Dirichlet
//! eigenfunction ρ, boundary/interior quadrature grids, and the distance and
//! projection maps onto the boundary.

use crate::point::{norm, scale};
use crate::{Error, Point, Real, Result};

/// First zero of the Bessel function J₀, to double precision.
pub const J0_FIRST_ZERO: f64 = 2.404825557695773;

/// J₁ evaluated at the first zero of J₀.
pub const J1_AT_J0_ZERO: f64 = 0.5191474972894667;

pub mod bessel {
    //! J₀ and J₁ by power series for |z| ≤ 12 and the Hankel asymptotic
    //! expansion beyond; no external special-function dependency.

    use crate::Real;

    pub fn j0<R: Real>(z: R) -> R {
        let z = z.abs();
        if z <= R::of(12.0) {
            series(z, 0)
        } else {
            asymptotic(z, 0)
        }
    }

    pub fn j1<R: Real>(z: R) -> R {
        let sign = if z < R::zero() { -R::one() } else { R::one() };
        let z = z.abs();
        let v = if z <= R::of(12.0) {
            series(z, 1)
        } else {
            asymptotic(z, 1)
        };
        sign * v
    }

    fn series<R: Real>(z: R, nu: usize) -> R {
        let q = z * z / R::of(4.0);
        let mut term = if nu == 0 { R::one() } else { z / R::of(2.0) };
        let mut sum = term;
        for k in 1..200 {
            let kf = R::from_usize_(k);
            let denom = if nu == 0 { kf * kf } else { kf * (kf + R::one()) };
            term = -term * q / denom;
            sum = sum + term;
            if term.abs() <= R::epsilon() * sum.abs() {
                break;
            }
        }
        sum
    }

    // Hankel expansion: J_ν(z) ≈ sqrt(2/(πz)) (cos ω · P − sin ω · Q),
    // ω = z − νπ/2 − π/4, with A_m = Π_{j≤m} (4ν² − (2j−1)²) / (m! 8^m).
    fn asymptotic<R: Real>(z: R, nu: usize) -> R {
        let four_nu2 = R::of(4.0 * (nu * nu) as f64);
        let mut a = R::one();
        let mut p = R::one();
        let mut q = R::zero();
        let mut prev = R::infinity();
        for m in 1..=10 {
            let mf = R::of(m as f64);
            let odd = R::of((2 * m - 1) as f64);
            a = a * (four_nu2 - odd * odd) / (mf * R::of(8.0));
            let term = a / z.powi(m as i32);
            if term.abs() > prev {
                break; // asymptotic series started diverging
            }
            prev = term.abs();
            let signed = if (m / 2) % 2 == 0 { term } else { -term };
            if m % 2 == 0 {
                p = p + signed;
            } else {
                q = q + signed;
            }
        }
        let omega = z - R::of(nu as f64) * R::of(std::f64::consts::FRAC_PI_2)
            - R::of(std::f64::consts::FRAC_PI_4);
        let amp = (R::of(2.0) / (R::of(std::f64::consts::PI) * z)).sqrt();
        amp * (omega.cos() * p - omega.sin() * q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Disk2d,
    Ball3d,
}

/// Model domain of radius 1 with its eigenpair and tubular-neighborhood data.
///
/// ρ is normalized so that ρ(0) = `rho_scale` (default 1); capacity values
/// scale like 1/ρ(0) and every report records the normalization in use.
#[derive(Debug, Clone, Copy)]
pub struct Domain<R: Real> {
    pub kind: DomainKind,
    pub radius: R,
    pub eigenvalue: R,
    pub tubular_radius: R,
    pub dim: usize,
    rho_scale: R,
}

impl<R: Real> Domain<R> {
    pub fn disk() -> Self {
        let j01 = R::of(J0_FIRST_ZERO);
        Domain {
            kind: DomainKind::Disk2d,
            radius: R::one(),
            eigenvalue: j01 * j01,
            tubular_radius: R::of(0.5),
            dim: 2,
            rho_scale: R::one(),
        }
    }

    pub fn ball() -> Self {
        let pi = R::of(std::f64::consts::PI);
        Domain {
            kind: DomainKind::Ball3d,
            radius: R::one(),
            eigenvalue: pi * pi,
            tubular_radius: R::of(0.5),
            dim: 3,
            rho_scale: R::one(),
        }
    }

    /// Same domain with ρ rescaled so that ρ(0) = `scale`.
    pub fn with_rho_scale(mut self, scale: R) -> Self {
        self.rho_scale = scale;
        self
    }

    pub fn rho_scale(&self) -> R {
        self.rho_scale
    }

    pub fn surface_area(&self) -> R {
        let pi = R::of(std::f64::consts::PI);
        match self.kind {
            DomainKind::Disk2d => R::of(2.0) * pi,
            DomainKind::Ball3d => R::of(4.0) * pi,
        }
    }

    pub fn volume(&self) -> R {
        let pi = R::of(std::f64::consts::PI);
        match self.kind {
            DomainKind::Disk2d => pi,
            DomainKind::Ball3d => R::of(4.0 / 3.0) * pi,
        }
    }

    pub fn contains(&self, x: Point<R>) -> bool {
        norm(x) < R::one()
    }

    pub fn contains_closure(&self, x: Point<R>) -> bool {
        norm(x) <= R::one() + R::epsilon().sqrt()
    }

    /// ρ(x): first Dirichlet eigenfunction of −Δ, normalized to ρ(0) = ρ-scale.
    ///
    /// Disk: J₀(j₀,₁ r). Ball: sin(π r)/(π r) with the limit value 1 at r = 0.
    pub fn eigenfunction_rho(&self, x: Point<R>) -> Result<R> {
        let r = norm(x);
        if r > R::one() + R::of(1e-12) {
            return Err(Error::OutOfDomain(format!(
                "|x| = {} exceeds the domain radius 1",
                r
            )));
        }
        Ok(self.rho_scale * self.rho_radial(r.min(R::one())))
    }

    /// Radial profile of ρ at radius `r ∈ [0, 1]`, before the ρ-scale factor.
    pub fn rho_radial(&self, r: R) -> R {
        match self.kind {
            DomainKind::Disk2d => bessel::j0(R::of(J0_FIRST_ZERO) * r),
            DomainKind::Ball3d => {
                let pr = R::of(std::f64::consts::PI) * r;
                if pr < R::of(1e-8) {
                    // sin(z)/z = 1 − z²/6 + O(z⁴)
                    R::one() - pr * pr / R::of(6.0)
                } else {
                    pr.sin() / pr
                }
            }
        }
    }

    /// d/dr of the radial profile (used for closed-form normal derivatives).
    pub fn rho_radial_deriv(&self, r: R) -> R {
        match self.kind {
            DomainKind::Disk2d => {
                let j01 = R::of(J0_FIRST_ZERO);
                -j01 * bessel::j1(j01 * r)
            }
            DomainKind::Ball3d => {
                let pi = R::of(std::f64::consts::PI);
                let pr = pi * r;
                if pr < R::of(1e-6) {
                    -pi * pr / R::of(3.0)
                } else {
                    (pr.cos() - pr.sin() / pr) / r
                }
            }
        }
    }

    /// Outward normal derivative of ρ on the boundary (constant by symmetry).
    pub fn rho_normal_derivative(&self) -> R {
        self.rho_scale * self.rho_radial_deriv(R::one())
    }

    /// Distance to the boundary and the boundary projection σ(x).
    ///
    /// At the center the projection is not unique; an arbitrary boundary
    /// point is returned together with the `unique: false` flag.
    pub fn dist_and_projection(&self, x: Point<R>) -> (R, Projection<R>) {
        let r = norm(x);
        let d = R::one() - r;
        if r < R::of(1e-14) {
            let sigma = [R::one(), R::zero(), R::zero()];
            (R::one(), Projection { sigma, unique: false })
        } else {
            (d, Projection { sigma: scale(x, R::one() / r), unique: true })
        }
    }

    /// Boundary distance d(x) = 1 − |x|.
    pub fn dist(&self, x: Point<R>) -> R {
        R::one() - norm(x)
    }

    /// Constants with `c_low · d(x) ≤ ρ(x) ≤ c_high · d(x)` on a radial sweep.
    pub fn comparability_constants(&self, n_samples: usize) -> (R, R) {
        let mut lo = R::infinity();
        let mut hi = R::zero();
        for i in 0..n_samples {
            // include r = 0; avoid r = 1, where the ratio is the limit ρ'(1)/(−1)
            let r = R::from_usize_(i) / R::from_usize_(n_samples);
            let d = R::one() - r;
            let ratio = self.rho_scale * self.rho_radial(r) / d;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        let limit = -self.rho_normal_derivative();
        (lo.min(limit), hi.max(limit))
    }

    /// Boundary point from intrinsic angles: disk uses θ only, ball (θ, φ)
    /// with θ the polar angle from the +z axis.
    pub fn boundary_point(&self, theta: R, phi: R) -> Point<R> {
        match self.kind {
            DomainKind::Disk2d => [theta.cos(), theta.sin(), R::zero()],
            DomainKind::Ball3d => [
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ],
        }
    }

    /// Geodesic distance between two boundary points (arc length on the
    /// circle / great-circle angle on the sphere).
    pub fn boundary_geodesic(&self, a: Point<R>, b: Point<R>) -> R {
        let c = crate::point::dot(a, b).max(-R::one()).min(R::one());
        c.acos()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Projection<R: Real> {
    pub sigma: Point<R>,
    pub unique: bool,
}

/// Tensor quadrature grid over the interior: radial cells with geometric
/// refinement toward the boundary (ratio 0.9) crossed with uniform angular
/// cells. Nodes sit at cell centers and weights are exact cell volumes, so
/// the weights sum to |Ω| up to rounding.
#[derive(Debug, Clone)]
pub struct InteriorGrid<R: Real> {
    pub domain: Domain<R>,
    pub n_r: usize,
    pub n_theta: usize,
    /// azimuthal count on the ball (ignored on the disk)
    pub n_phi: usize,
    pub radial_edges: Vec<R>,
    nodes: Vec<Point<R>>,
    weights: Vec<R>,
    radii: Vec<R>,
}

/// Refinement ratio of consecutive radial cell widths toward the boundary.
pub const RADIAL_REFINEMENT_RATIO: f64 = 0.9;

impl<R: Real> InteriorGrid<R> {
    pub fn new(domain: Domain<R>, n_r: usize, n_theta: usize) -> Self {
        let n_phi = if domain.kind == DomainKind::Ball3d { 2 * n_theta } else { 0 };
        Self::with_phi(domain, n_r, n_theta, n_phi)
    }

    pub fn with_phi(domain: Domain<R>, n_r: usize, n_theta: usize, n_phi: usize) -> Self {
        let ratio = R::of(RADIAL_REFINEMENT_RATIO);
        // widths ∝ ratio^(n_r−1−i) from the center out, normalized to sum 1,
        // with a floor so deep grids stay representable
        let mut widths = Vec::with_capacity(n_r);
        let floor = R::of(1e-14);
        let mut w = R::one();
        for _ in 0..n_r {
            widths.push(w.max(floor));
            w = w * ratio;
        }
        widths.reverse(); // now increasing-to-decreasing toward boundary: smallest last
        let total: R = widths.iter().copied().sum();
        let mut edges = Vec::with_capacity(n_r + 1);
        let mut acc = R::zero();
        edges.push(R::zero());
        for wd in &widths {
            acc = acc + *wd / total;
            edges.push(acc.min(R::one()));
        }
        *edges.last_mut().unwrap() = R::one();

        let pi = R::of(std::f64::consts::PI);
        let two_pi = R::of(2.0 * std::f64::consts::PI);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut radii = Vec::new();
        match domain.kind {
            DomainKind::Disk2d => {
                let dt = two_pi / R::from_usize_(n_theta);
                for i in 0..n_r {
                    let (rl, rr) = (edges[i], edges[i + 1]);
                    let rc = (rl + rr) / R::of(2.0);
                    let ring = (rr * rr - rl * rl) / R::of(2.0) * dt;
                    radii.push(rc);
                    for j in 0..n_theta {
                        let t = (R::from_usize_(j) + R::of(0.5)) * dt;
                        nodes.push([rc * t.cos(), rc * t.sin(), R::zero()]);
                        weights.push(ring);
                    }
                }
            }
            DomainKind::Ball3d => {
                let dth = pi / R::from_usize_(n_theta);
                let dph = two_pi / R::from_usize_(n_phi);
                for i in 0..n_r {
                    let (rl, rr) = (edges[i], edges[i + 1]);
                    let rc = (rl + rr) / R::of(2.0);
                    let shell = (rr * rr * rr - rl * rl * rl) / R::of(3.0);
                    radii.push(rc);
                    for j in 0..n_theta {
                        let (tl, tr) = (R::from_usize_(j) * dth, R::from_usize_(j + 1) * dth);
                        let tc = (tl + tr) / R::of(2.0);
                        let band = tl.cos() - tr.cos();
                        for k in 0..n_phi {
                            let p = (R::from_usize_(k) + R::of(0.5)) * dph;
                            nodes.push([
                                rc * tc.sin() * p.cos(),
                                rc * tc.sin() * p.sin(),
                                rc * tc.cos(),
                            ]);
                            weights.push(shell * band * dph);
                        }
                    }
                }
            }
        }
        InteriorGrid { domain, n_r, n_theta, n_phi, radial_edges: edges, nodes, weights, radii }
    }

    pub fn nodes(&self) -> &[Point<R>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[R] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn radial_nodes(&self) -> &[R] {
        &self.radii
    }

    /// Midpoint-rule integral of `f` over the domain.
    pub fn integrate(&self, mut f: impl FnMut(Point<R>) -> R) -> R {
        let mut acc = R::zero();
        for (x, w) in self.nodes.iter().zip(self.weights.iter()) {
            acc = acc + f(*x) * *w;
        }
        acc
    }
}

/// Boundary quadrature grid: uniform arcs on the circle, (θ, φ) patches with
/// exact areas on the sphere. Weights sum to |∂Ω| exactly.
#[derive(Debug, Clone)]
pub struct BoundaryGrid<R: Real> {
    pub domain: Domain<R>,
    pub n_theta: usize,
    pub n_phi: usize,
    nodes: Vec<Point<R>>,
    weights: Vec<R>,
    /// intrinsic angles per node: disk (θ, 0); ball (θ, φ)
    angles: Vec<(R, R)>,
}

impl<R: Real> BoundaryGrid<R> {
    pub fn new(domain: Domain<R>, n_theta: usize) -> Self {
        let n_phi = if domain.kind == DomainKind::Ball3d { 2 * n_theta } else { 0 };
        Self::with_phi(domain, n_theta, n_phi)
    }

    pub fn with_phi(domain: Domain<R>, n_theta: usize, n_phi: usize) -> Self {
        let pi = R::of(std::f64::consts::PI);
        let two_pi = R::of(2.0 * std::f64::consts::PI);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut angles = Vec::new();
        match domain.kind {
            DomainKind::Disk2d => {
                let dt = two_pi / R::from_usize_(n_theta);
                for j in 0..n_theta {
                    let t = (R::from_usize_(j) + R::of(0.5)) * dt;
                    nodes.push(domain.boundary_point(t, R::zero()));
                    weights.push(dt);
                    angles.push((t, R::zero()));
                }
            }
            DomainKind::Ball3d => {
                let dth = pi / R::from_usize_(n_theta);
                let dph = two_pi / R::from_usize_(n_phi);
                for j in 0..n_theta {
                    let (tl, tr) = (R::from_usize_(j) * dth, R::from_usize_(j + 1) * dth);
                    let tc = (tl + tr) / R::of(2.0);
                    let band = tl.cos() - tr.cos();
                    for k in 0..n_phi {
                        let p = (R::from_usize_(k) + R::of(0.5)) * dph;
                        nodes.push(domain.boundary_point(tc, p));
                        weights.push(band * dph);
                        angles.push((tc, p));
                    }
                }
            }
        }
        BoundaryGrid { domain, n_theta, n_phi, nodes, weights, angles }
    }

    pub fn nodes(&self) -> &[Point<R>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[R] {
        &self.weights
    }

    pub fn angles(&self) -> &[(R, R)] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Arc (disk) or patch (ball) width at the scale used to mollify atoms.
    pub fn cell_width(&self) -> R {
        match self.domain.kind {
            DomainKind::Disk2d => R::of(2.0 * std::f64::consts::PI) / R::from_usize_(self.n_theta),
            DomainKind::Ball3d => R::of(std::f64::consts::PI) / R::from_usize_(self.n_theta),
        }
    }

    pub fn integrate(&self, mut f: impl FnMut(Point<R>) -> R) -> R {
        let mut acc = R::zero();
        for (x, w) in self.nodes.iter().zip(self.weights.iter()) {
            acc = acc + f(*x) * *w;
        }
        acc
    }
}
