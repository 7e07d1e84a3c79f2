//! Finite positive Radon measures on the boundary: atoms plus a piecewise
//! constant density on a boundary grid, restriction to arc/cap sets, weak*
//! comparison against a finite test family, and mollification of atoms into
//! grid densities.

use crate::geometry::{BoundaryGrid, Domain, DomainKind};
use crate::point::norm;
use crate::{Error, Point, Real, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Atom of a boundary measure, kept both as intrinsic angles and as the
/// embedded boundary point.
#[derive(Debug, Clone, Copy)]
pub struct Atom<R: Real> {
    pub theta: R,
    pub phi: R,
    pub weight: R,
    pub location: Point<R>,
}

/// Finite positive Radon measure on ∂Ω.
#[derive(Debug, Clone)]
pub struct BoundaryMeasure<R: Real> {
    pub grid: BoundaryGrid<R>,
    pub atoms: Vec<Atom<R>>,
    /// density values per boundary-grid cell (with respect to surface measure)
    pub density: Vec<R>,
    pub label: Option<String>,
}

impl<R: Real> BoundaryMeasure<R> {
    pub fn zero(grid: &BoundaryGrid<R>) -> Self {
        BoundaryMeasure {
            grid: grid.clone(),
            atoms: Vec::new(),
            density: vec![R::zero(); grid.len()],
            label: None,
        }
    }

    /// Uniform density carrying the given total mass.
    pub fn uniform(grid: &BoundaryGrid<R>, total_mass: R) -> Self {
        let mut m = Self::zero(grid);
        let dens = total_mass / grid.domain.surface_area();
        m.density.iter_mut().for_each(|v| *v = dens);
        m
    }

    pub fn dirac(grid: &BoundaryGrid<R>, theta: R, phi: R, weight: R) -> Self {
        let mut m = Self::zero(grid);
        m.push_atom(theta, phi, weight).expect("valid atom");
        m
    }

    pub fn from_density_fn(grid: &BoundaryGrid<R>, f: impl Fn(R, R) -> R) -> Self {
        let mut m = Self::zero(grid);
        for (i, &(t, p)) in grid.angles().iter().enumerate() {
            m.density[i] = f(t, p).max(R::zero());
        }
        m
    }

    pub fn push_atom(&mut self, theta: R, phi: R, weight: R) -> Result<()> {
        if !(weight > R::zero()) {
            return Err(Error::InvalidInput(format!("atom weight {weight} must be > 0")));
        }
        let location = self.grid.domain.boundary_point(theta, phi);
        if self
            .atoms
            .iter()
            .any(|a| crate::point::dist(a.location, location) < R::of(1e-14))
        {
            return Err(Error::InvalidInput("duplicate atom location".into()));
        }
        self.atoms.push(Atom { theta, phi, weight, location });
        Ok(())
    }

    pub fn total_mass(&self) -> R {
        let atom_mass: R = self.atoms.iter().map(|a| a.weight).sum();
        let dens_mass: R = self
            .density
            .iter()
            .zip(self.grid.weights())
            .map(|(&d, &w)| d * w)
            .sum();
        atom_mass + dens_mass
    }

    pub fn scaled(&self, s: R) -> Self {
        let mut out = self.clone();
        out.atoms.iter_mut().for_each(|a| a.weight = a.weight * s);
        out.density.iter_mut().for_each(|d| *d = *d * s);
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        assert_eq!(self.grid.len(), other.grid.len(), "incompatible boundary grids");
        let mut out = self.clone();
        for (d, o) in out.density.iter_mut().zip(other.density.iter()) {
            *d = *d + *o;
        }
        for a in &other.atoms {
            match out
                .atoms
                .iter_mut()
                .find(|b| crate::point::dist(b.location, a.location) < R::of(1e-14))
            {
                Some(b) => b.weight = b.weight + a.weight,
                None => out.atoms.push(*a),
            }
        }
        out
    }

    /// Piecewise-constant density value at a boundary point.
    pub fn density_at(&self, y: Point<R>) -> R {
        match self.grid.domain.kind {
            DomainKind::Disk2d => {
                let mut theta = y[1].atan2(y[0]);
                let two_pi = R::of(TWO_PI);
                if theta < R::zero() {
                    theta = theta + two_pi;
                }
                let j = (theta / self.grid.cell_width()).floor().f64() as usize;
                self.density[j.min(self.grid.n_theta - 1)]
            }
            DomainKind::Ball3d => {
                let t = y[2].max(-R::one()).min(R::one()).acos();
                let mut p = y[1].atan2(y[0]);
                let two_pi = R::of(TWO_PI);
                if p < R::zero() {
                    p = p + two_pi;
                }
                let dth = R::of(std::f64::consts::PI) / R::from_usize_(self.grid.n_theta);
                let dph = two_pi / R::from_usize_(self.grid.n_phi.max(1));
                let jt = ((t / dth).floor().f64() as usize).min(self.grid.n_theta - 1);
                let jp = ((p / dph).floor().f64() as usize).min(self.grid.n_phi.max(1) - 1);
                self.density[jt * self.grid.n_phi.max(1) + jp]
            }
        }
    }

    /// |μ − ν| with densities compared cellwise and atoms matched by location.
    pub fn abs_diff(&self, other: &Self) -> Self {
        assert_eq!(self.grid.len(), other.grid.len(), "incompatible boundary grids");
        let mut out = Self::zero(&self.grid);
        for (o, (a, b)) in out
            .density
            .iter_mut()
            .zip(self.density.iter().zip(other.density.iter()))
        {
            *o = (*a - *b).abs();
        }
        for a in &self.atoms {
            let w = other
                .atoms
                .iter()
                .find(|b| crate::point::dist(b.location, a.location) < R::of(1e-14))
                .map(|b| (a.weight - b.weight).abs())
                .unwrap_or(a.weight);
            if w > R::zero() {
                out.atoms.push(Atom { weight: w, ..*a });
            }
        }
        for b in &other.atoms {
            if !self
                .atoms
                .iter()
                .any(|a| crate::point::dist(b.location, a.location) < R::of(1e-14))
            {
                out.atoms.push(*b);
            }
        }
        out
    }

    /// Cellwise/atomwise comparison `self ≤ other` within `tol` on weights.
    pub fn le(&self, other: &Self, tol: R) -> bool {
        let dens_ok = self
            .density
            .iter()
            .zip(other.density.iter())
            .all(|(&a, &b)| a <= b + tol);
        let atoms_ok = self.atoms.iter().all(|a| {
            other
                .atoms
                .iter()
                .find(|b| crate::point::dist(b.location, a.location) < R::of(1e-12))
                .map(|b| a.weight <= b.weight + tol)
                .unwrap_or(a.weight <= tol)
        });
        dens_ok && atoms_ok
    }

    /// χ_E μ: atoms filtered by membership, density prorated by the cell
    /// fraction inside E (exact for disk arcs, subsampled on the ball).
    pub fn restrict(&self, set: &BoundarySet<R>) -> Self {
        let mut out = self.clone();
        out.atoms.retain(|a| set.contains_point(&self.grid.domain, a.location));
        match self.grid.domain.kind {
            DomainKind::Disk2d => {
                let dt = self.grid.cell_width();
                for (i, &(t, _)) in self.grid.angles().iter().enumerate() {
                    let frac = set.arc_cell_fraction(t - dt / R::of(2.0), t + dt / R::of(2.0));
                    out.density[i] = self.density[i] * frac;
                }
            }
            DomainKind::Ball3d => {
                // 4x4 membership subsampling per patch
                let nsub = 4usize;
                let dth = R::of(std::f64::consts::PI) / R::from_usize_(self.grid.n_theta);
                let dph = R::of(TWO_PI) / R::from_usize_(self.grid.n_phi);
                for (i, &(t, p)) in self.grid.angles().iter().enumerate() {
                    let mut inside = 0usize;
                    for a in 0..nsub {
                        for b in 0..nsub {
                            let tt = t + dth * (R::from_usize_(a) + R::of(0.5)) / R::from_usize_(nsub)
                                - dth / R::of(2.0);
                            let pp = p + dph * (R::from_usize_(b) + R::of(0.5)) / R::from_usize_(nsub)
                                - dph / R::of(2.0);
                            let x = self.grid.domain.boundary_point(tt, pp);
                            if set.contains_point(&self.grid.domain, x) {
                                inside += 1;
                            }
                        }
                    }
                    let frac = R::from_usize_(inside) / R::from_usize_(nsub * nsub);
                    out.density[i] = self.density[i] * frac;
                }
            }
        }
        out
    }

    /// Moments ∫ ζ dμ against every member of the test family. Disk moments
    /// are exact (closed-form cell integrals of the trigonometric family);
    /// ball patches use a 4-point Gauss rule per axis.
    pub fn moments(&self, family: &TestFamily) -> Vec<R> {
        let n = family.len();
        let mut out = vec![R::zero(); n];
        for a in &self.atoms {
            for (k, o) in out.iter_mut().enumerate() {
                *o = *o + a.weight * family.eval(k, a.theta, a.phi);
            }
        }
        match self.grid.domain.kind {
            DomainKind::Disk2d => {
                let dt = self.grid.cell_width();
                for (i, &(t, _)) in self.grid.angles().iter().enumerate() {
                    if self.density[i] == R::zero() {
                        continue;
                    }
                    let (a, b) = (t - dt / R::of(2.0), t + dt / R::of(2.0));
                    for (k, o) in out.iter_mut().enumerate() {
                        *o = *o + self.density[i] * family.trig_cell_integral(k, a, b);
                    }
                }
            }
            DomainKind::Ball3d => {
                let rule = crate::quad::gauss_legendre::<R>(4);
                let dth = R::of(std::f64::consts::PI) / R::from_usize_(self.grid.n_theta);
                let dph = R::of(TWO_PI) / R::from_usize_(self.grid.n_phi);
                for (i, &(t, p)) in self.grid.angles().iter().enumerate() {
                    if self.density[i] == R::zero() {
                        continue;
                    }
                    for &(xt, wt) in &rule {
                        let tt = t + xt * dth / R::of(2.0);
                        for &(xp, wp) in &rule {
                            let pp = p + xp * dph / R::of(2.0);
                            let area = wt * wp * dth * dph / R::of(4.0) * tt.sin();
                            for (k, o) in out.iter_mut().enumerate() {
                                *o = *o + self.density[i] * area * family.eval(k, tt, pp);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Pseudo-metric: max over the test family of |∫ζ dμ − ∫ζ dν|.
    pub fn weakstar_distance(&self, other: &Self, family: &TestFamily) -> R {
        let ma = self.moments(family);
        let mb = other.moments(family);
        ma.iter()
            .zip(mb.iter())
            .map(|(&a, &b)| (a - b).abs())
            .fold(R::zero(), R::max)
    }

    /// Replace every atom by a raised-cosine bump of the same mass supported
    /// on an arc/cap of the given width; existing density is kept.
    pub fn mollify_to_density(&self, width: R) -> Result<Self> {
        let min_width = R::of(2.0) * self.grid.cell_width();
        if width < min_width {
            return Err(Error::InvalidInput(format!(
                "mollification width {width} below twice the boundary cell width {min_width}"
            )));
        }
        let mut out = self.clone();
        out.atoms.clear();
        match self.grid.domain.kind {
            DomainKind::Disk2d => {
                let dt = self.grid.cell_width();
                for a in &self.atoms {
                    // Hann bump: (1 + cos(2π(θ−θ_a)/w))/w has unit mass on
                    // [θ_a − w/2, θ_a + w/2]; antiderivative is exact.
                    let half = width / R::of(2.0);
                    let prim = |x: R| {
                        // antiderivative of (1 + cos(2π u / w)) in u = x − θ_a
                        let u = x.max(-half).min(half);
                        u + width / R::of(TWO_PI) * (R::of(TWO_PI) * u / width).sin()
                    };
                    for (i, &(t, _)) in self.grid.angles().iter().enumerate() {
                        // signed angular offset of the cell relative to the atom
                        let mut off = t - a.theta;
                        while off > R::of(std::f64::consts::PI) {
                            off = off - R::of(TWO_PI);
                        }
                        while off < -R::of(std::f64::consts::PI) {
                            off = off + R::of(TWO_PI);
                        }
                        let (ca, cb) = (off - dt / R::of(2.0), off + dt / R::of(2.0));
                        let mass = (prim(cb) - prim(ca)) / width * a.weight;
                        out.density[i] = out.density[i] + mass / self.grid.weights()[i];
                    }
                }
            }
            DomainKind::Ball3d => {
                for a in &self.atoms {
                    // raised-cosine profile in geodesic angle, normalized on
                    // the discrete grid so the mass is preserved exactly
                    let mut profile = vec![R::zero(); self.grid.len()];
                    let mut total = R::zero();
                    for (i, x) in self.grid.nodes().iter().enumerate() {
                        let g = self.grid.domain.boundary_geodesic(a.location, *x);
                        if g < width / R::of(2.0) {
                            let v = R::one()
                                + (R::of(TWO_PI) * g / width).cos();
                            profile[i] = v;
                            total = total + v * self.grid.weights()[i];
                        }
                    }
                    if total <= R::zero() {
                        return Err(Error::Numeric(
                            "mollification cap missed every boundary cell".into(),
                        ));
                    }
                    for (i, v) in profile.iter().enumerate() {
                        out.density[i] = out.density[i] + *v * a.weight / total;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Closed arc on the circle: angles in [start, start + width] (mod 2π).
#[derive(Debug, Clone, Copy)]
pub struct ArcInterval<R: Real> {
    pub start: R,
    pub width: R,
}

impl<R: Real> ArcInterval<R> {
    pub fn new(start: R, width: R) -> Self {
        ArcInterval { start, width: width.min(R::of(TWO_PI)) }
    }

    fn offset(&self, theta: R) -> R {
        let mut off = theta - self.start;
        let two_pi = R::of(TWO_PI);
        while off < R::zero() {
            off = off + two_pi;
        }
        while off >= two_pi {
            off = off - two_pi;
        }
        off
    }

    pub fn contains(&self, theta: R) -> bool {
        self.offset(theta) <= self.width + R::of(1e-12)
    }

    /// Length of the overlap with the angular interval [a, b].
    pub fn overlap(&self, a: R, b: R) -> R {
        // compare in offset coordinates; the cell is short so at most one wrap
        let oa = self.offset(a);
        let len = b - a;
        let lo = oa;
        let hi = oa + len;
        let inside = (hi.min(self.width) - lo).max(R::zero());
        let wrapped = (hi - R::of(TWO_PI)).min(self.width).max(R::zero());
        inside + wrapped
    }
}

/// Spherical cap: geodesic ball around a center direction.
#[derive(Debug, Clone, Copy)]
pub struct SphericalCap<R: Real> {
    pub center: Point<R>,
    pub radius_angle: R,
}

impl<R: Real> SphericalCap<R> {
    pub fn contains(&self, dom: &Domain<R>, x: Point<R>) -> bool {
        dom.boundary_geodesic(self.center, x) <= self.radius_angle + R::of(1e-12)
    }
}

/// Borel subsets of ∂Ω realized in the arc/cap/point algebra, optionally as
/// the complement of such a union. Membership tests are exact.
#[derive(Debug, Clone)]
pub enum SetData<R: Real> {
    Disk { arcs: Vec<ArcInterval<R>>, points: Vec<R> },
    Ball { caps: Vec<SphericalCap<R>>, points: Vec<(R, R)> },
}

#[derive(Debug, Clone)]
pub struct BoundarySet<R: Real> {
    pub data: SetData<R>,
    pub complemented: bool,
}

impl<R: Real> BoundarySet<R> {
    pub fn empty(dom: &Domain<R>) -> Self {
        let data = match dom.kind {
            DomainKind::Disk2d => SetData::Disk { arcs: vec![], points: vec![] },
            DomainKind::Ball3d => SetData::Ball { caps: vec![], points: vec![] },
        };
        BoundarySet { data, complemented: false }
    }

    pub fn full(dom: &Domain<R>) -> Self {
        let mut s = Self::empty(dom);
        s.complemented = true;
        s
    }

    pub fn disk_arc(start: R, width: R) -> Self {
        BoundarySet {
            data: SetData::Disk { arcs: vec![ArcInterval::new(start, width)], points: vec![] },
            complemented: false,
        }
    }

    pub fn disk_points(points: Vec<R>) -> Self {
        BoundarySet { data: SetData::Disk { arcs: vec![], points }, complemented: false }
    }

    pub fn ball_cap(dom: &Domain<R>, theta: R, phi: R, radius_angle: R) -> Self {
        BoundarySet {
            data: SetData::Ball {
                caps: vec![SphericalCap { center: dom.boundary_point(theta, phi), radius_angle }],
                points: vec![],
            },
            complemented: false,
        }
    }

    pub fn ball_points(points: Vec<(R, R)>) -> Self {
        BoundarySet { data: SetData::Ball { caps: vec![], points }, complemented: false }
    }

    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        out.complemented = !out.complemented;
        out
    }

    /// Union of two non-complemented sets (the algebra the experiments use).
    pub fn union(&self, other: &Self) -> Self {
        assert!(
            !self.complemented && !other.complemented,
            "union only representable on direct (non-complemented) sets"
        );
        let data = match (&self.data, &other.data) {
            (SetData::Disk { arcs: a1, points: p1 }, SetData::Disk { arcs: a2, points: p2 }) => {
                SetData::Disk {
                    arcs: a1.iter().chain(a2.iter()).copied().collect(),
                    points: p1.iter().chain(p2.iter()).copied().collect(),
                }
            }
            (SetData::Ball { caps: c1, points: p1 }, SetData::Ball { caps: c2, points: p2 }) => {
                SetData::Ball {
                    caps: c1.iter().chain(c2.iter()).copied().collect(),
                    points: p1.iter().chain(p2.iter()).copied().collect(),
                }
            }
            _ => panic!("mixed disk/ball set union"),
        };
        BoundarySet { data, complemented: false }
    }

    pub fn is_structurally_empty(&self) -> bool {
        if self.complemented {
            return false;
        }
        match &self.data {
            SetData::Disk { arcs, points } => arcs.is_empty() && points.is_empty(),
            SetData::Ball { caps, points } => caps.is_empty() && points.is_empty(),
        }
    }

    fn raw_contains(&self, dom: &Domain<R>, x: Point<R>) -> bool {
        match &self.data {
            SetData::Disk { arcs, points } => {
                let theta = x[1].atan2(x[0]);
                arcs.iter().any(|a| a.contains(theta))
                    || points.iter().any(|&p| {
                        crate::point::dist(dom.boundary_point(p, R::zero()), x) < R::of(1e-10)
                    })
            }
            SetData::Ball { caps, points } => {
                caps.iter().any(|c| c.contains(dom, x))
                    || points.iter().any(|&(t, p)| {
                        crate::point::dist(dom.boundary_point(t, p), x) < R::of(1e-10)
                    })
            }
        }
    }

    pub fn contains_point(&self, dom: &Domain<R>, x: Point<R>) -> bool {
        debug_assert!((norm(x) - R::one()).abs() < R::of(1e-6), "not a boundary point");
        self.raw_contains(dom, x) != self.complemented
    }

    pub fn contains_angle(&self, dom: &Domain<R>, theta: R, phi: R) -> bool {
        self.contains_point(dom, dom.boundary_point(theta, phi))
    }

    /// Fraction of the angular interval [a, b] covered by the set (disk only;
    /// exact up to arc overlaps being counted through the union).
    pub fn arc_cell_fraction(&self, a: R, b: R) -> R {
        let SetData::Disk { arcs, .. } = &self.data else {
            panic!("arc_cell_fraction is only defined on the disk")
        };
        let len = b - a;
        // merge overlap lengths conservatively: clamp the sum at the cell length
        let mut covered = R::zero();
        for arc in arcs {
            covered = covered + arc.overlap(a, b);
        }
        let covered = covered.min(len);
        let frac = covered / len;
        if self.complemented {
            R::one() - frac
        } else {
            frac
        }
    }
}

/// Finite families of smooth boundary test functions for weak* comparison.
#[derive(Debug, Clone)]
pub enum TestFamily {
    /// 1, cos θ, sin θ, …, cos kθ, sin kθ up to the max degree
    TrigPoly { max_degree: usize },
    /// real orthonormal spherical harmonics up to degree l
    SphericalHarmonics { max_degree: usize },
}

impl TestFamily {
    pub fn default_for(kind: DomainKind) -> Self {
        match kind {
            DomainKind::Disk2d => TestFamily::TrigPoly { max_degree: 16 },
            DomainKind::Ball3d => TestFamily::SphericalHarmonics { max_degree: 8 },
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TestFamily::TrigPoly { max_degree } => 2 * max_degree + 1,
            TestFamily::SphericalHarmonics { max_degree } => (max_degree + 1) * (max_degree + 1),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eval<R: Real>(&self, idx: usize, theta: R, phi: R) -> R {
        match self {
            TestFamily::TrigPoly { .. } => {
                if idx == 0 {
                    R::one()
                } else {
                    let k = R::from_usize_((idx + 1) / 2);
                    if idx % 2 == 1 {
                        (k * theta).cos()
                    } else {
                        (k * theta).sin()
                    }
                }
            }
            TestFamily::SphericalHarmonics { .. } => {
                let (l, m) = sh_index(idx);
                real_spherical_harmonic(l, m, theta, phi)
            }
        }
    }

    /// Exact ∫_a^b ζ_idx(θ) dθ for the trigonometric family.
    pub fn trig_cell_integral<R: Real>(&self, idx: usize, a: R, b: R) -> R {
        match self {
            TestFamily::TrigPoly { .. } => {
                if idx == 0 {
                    b - a
                } else {
                    let k = R::from_usize_((idx + 1) / 2);
                    if idx % 2 == 1 {
                        ((k * b).sin() - (k * a).sin()) / k
                    } else {
                        ((k * a).cos() - (k * b).cos()) / k
                    }
                }
            }
            TestFamily::SphericalHarmonics { .. } => {
                panic!("trig_cell_integral called on the spherical-harmonic family")
            }
        }
    }
}

/// idx → (l, m) with m ∈ [−l, l], enumerated l-major.
fn sh_index(idx: usize) -> (usize, i64) {
    let mut l = 0usize;
    let mut base = 0usize;
    while base + 2 * l + 1 <= idx {
        base += 2 * l + 1;
        l += 1;
    }
    let m = idx as i64 - base as i64 - l as i64;
    (l, m)
}

/// Real orthonormal spherical harmonic Y_l^m(θ, φ).
pub fn real_spherical_harmonic<R: Real>(l: usize, m: i64, theta: R, phi: R) -> R {
    let ma = m.unsigned_abs() as usize;
    let p = associated_legendre(l, ma, theta.cos());
    // normalization sqrt((2l+1)/(4π) · (l−m)!/(l+m)!)
    let mut ratio = 1.0;
    for j in (l - ma + 1)..=(l + ma) {
        ratio /= j as f64;
    }
    let norm =
        ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * ratio).sqrt();
    let norm = R::of(norm);
    let sqrt2 = R::of(std::f64::consts::SQRT_2);
    match m.signum() {
        0 => norm * p,
        1 => sqrt2 * norm * p * (R::from_usize_(ma) * phi).cos(),
        _ => sqrt2 * norm * p * (R::from_usize_(ma) * phi).sin(),
    }
}

/// Associated Legendre P_l^m(x) without Condon–Shortley phase applied twice;
/// standard upward recurrence, stable for the small degrees used here.
fn associated_legendre<R: Real>(l: usize, m: usize, x: R) -> R {
    let somx2 = ((R::one() - x) * (R::one() + x)).max(R::zero()).sqrt();
    let mut pmm = R::one();
    let mut fact = R::one();
    for _ in 0..m {
        pmm = -pmm * fact * somx2;
        fact = fact + R::of(2.0);
    }
    if l == m {
        return pmm;
    }
    let mut pmmp1 = x * R::from_usize_(2 * m + 1) * pmm;
    if l == m + 1 {
        return pmmp1;
    }
    let mut pll = R::zero();
    for ll in (m + 2)..=l {
        pll = (x * R::from_usize_(2 * ll - 1) * pmmp1 - R::from_usize_(ll + m - 1) * pmm)
            / R::from_usize_(ll - m);
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}
