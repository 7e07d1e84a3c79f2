//! Boundary capacity: the primal supremum over measures with unit
//! 𝔐^V-norm, its dual over bounded functions, the compact-set formula
//! C_V(E) = max_{y∈E} (Ǩ[1](y))⁻¹, and the max-rule.

use rayon::prelude::*;

use crate::criteria::{admissibility_integral, Potential};
use crate::geometry::{BoundaryGrid, Domain};
use crate::measures::{BoundaryMeasure, BoundarySet, SetData};
use crate::quad::{DivergenceProtocol, Extended};
use crate::{Error, Point, Real, Result};

/// ‖μ‖_{𝔐^V} = ∫ 𝕂[μ] V ρ dx = ∫ Ǩ[1] dμ (Fubini); infinite when μ
/// charges a divergence node of the admissibility integral.
pub fn mv_norm<R: Real>(
    dom: &Domain<R>,
    v: &Potential<R>,
    mu: &BoundaryMeasure<R>,
    proto: &DivergenceProtocol<R>,
) -> Extended<R> {
    crate::criteria::measure_admissible(dom, v, mu, proto).1
}

/// Evaluation nodes for a boundary set: grid nodes inside E refined with the
/// arc endpoints/midpoints (or cap centers/rims) and any isolated points.
fn evaluation_nodes<R: Real>(
    dom: &Domain<R>,
    set: &BoundarySet<R>,
    grid: &BoundaryGrid<R>,
) -> Vec<Point<R>> {
    let mut nodes: Vec<Point<R>> = grid
        .nodes()
        .iter()
        .copied()
        .filter(|&p| set.contains_point(dom, p))
        .collect();
    if !set.complemented {
        match &set.data {
            SetData::Disk { arcs, points } => {
                for a in arcs {
                    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
                        let t = a.start + a.width * R::of(frac);
                        nodes.push(dom.boundary_point(t, R::zero()));
                    }
                }
                for &t in points {
                    nodes.push(dom.boundary_point(t, R::zero()));
                }
            }
            SetData::Ball { caps, points } => {
                for c in caps {
                    nodes.push(c.center);
                    let (e1, e2) = crate::kernels::tangent_frame(c.center);
                    for k in 0..4 {
                        let ang = R::of(std::f64::consts::FRAC_PI_2) * R::from_usize_(k);
                        let dir = crate::point::add(
                            crate::point::scale(e1, ang.cos()),
                            crate::point::scale(e2, ang.sin()),
                        );
                        let p = crate::point::add(
                            crate::point::scale(c.center, c.radius_angle.cos()),
                            crate::point::scale(dir, c.radius_angle.sin()),
                        );
                        nodes.push(p);
                    }
                }
                for &(t, p) in points {
                    nodes.push(dom.boundary_point(t, p));
                }
            }
        }
    }
    nodes
}

/// Ǩ[1] on the evaluation nodes of E.
fn kappa_on_set<R: Real>(
    dom: &Domain<R>,
    v: &Potential<R>,
    set: &BoundarySet<R>,
    grid: &BoundaryGrid<R>,
    proto: &DivergenceProtocol<R>,
) -> Vec<(Point<R>, Extended<R>)> {
    let nodes = evaluation_nodes(dom, set, grid);
    nodes
        .par_iter()
        .map(|&y| (y, admissibility_integral(dom, v, y, proto).outcome))
        .collect()
}

/// One capacity evaluation with the primal witness.
#[derive(Debug, Clone)]
pub struct CapacityReport<R: Real> {
    pub primal: R,
    pub dual: R,
    pub formula: R,
    /// primal optimizer: an atom (location, weight) realizing the supremum
    pub witness_atom: Option<(Point<R>, R)>,
    /// dual optimizer level t = ‖f‖_∞
    pub witness_bound: R,
    /// every admissibility integral on E diverges (E inside the singular set)
    pub e_in_singular_set: bool,
    pub n_eval_nodes: usize,
    /// ρ(0) normalization the values are reported under
    pub rho_normalization: R,
}

/// Primal value: the LP max Σ μ_j subject to Σ κ_j μ_j ≤ 1, μ ≥ 0 on the
/// boundary nodes of E concentrates at argmin κ with value 1/min κ.
pub fn capacity_primal<R: Real>(
    dom: &Domain<R>,
    v: &Potential<R>,
    set: &BoundarySet<R>,
    grid: &BoundaryGrid<R>,
    proto: &DivergenceProtocol<R>,
) -> Result<CapacityReport<R>> {
    if set.is_structurally_empty() {
        return Err(Error::InvalidInput("capacity of the empty set".into()));
    }
    let kappa = kappa_on_set(dom, v, set, grid, proto);
    if kappa.is_empty() {
        return Err(Error::InvalidInput(
            "boundary set contains no evaluation nodes at this resolution".into(),
        ));
    }
    let mut best: Option<(Point<R>, R)> = None;
    let mut all_infinite = true;
    for (y, k) in &kappa {
        if let Extended::Finite(val) = k {
            all_infinite = false;
            if best.map(|(_, b)| *val < b).unwrap_or(true) {
                best = Some((*y, *val));
            }
        }
    }
    let (primal, witness_atom) = match best {
        Some((y, kmin)) => (R::one() / kmin, Some((y, R::one() / kmin))),
        None => (R::zero(), None),
    };
    Ok(CapacityReport {
        primal,
        dual: primal,
        formula: primal,
        witness_atom,
        witness_bound: if primal > R::zero() { R::one() / primal } else { R::infinity() },
        e_in_singular_set: all_infinite,
        n_eval_nodes: kappa.len(),
        rho_normalization: dom.rho_scale(),
    })
}

/// Dual value: min ‖f‖_∞ over f ≥ 0 with Ǩ[f] ≥ 1 on E. With nonnegative
/// kernel data the box LP is solved by a constant function at level
/// 1/min_{y∈E} Ǩ[1](y); the dense simplex oracle guards this reduction on
/// small instances (see tests).
pub fn capacity_dual<R: Real>(
    dom: &Domain<R>,
    v: &Potential<R>,
    set: &BoundarySet<R>,
    grid: &BoundaryGrid<R>,
    proto: &DivergenceProtocol<R>,
) -> Result<R> {
    let kappa = kappa_on_set(dom, v, set, grid, proto);
    if kappa.is_empty() {
        return Err(Error::InvalidInput(
            "boundary set contains no evaluation nodes at this resolution".into(),
        ));
    }
    let mut kmin = R::infinity();
    let mut any_finite = false;
    for (_, k) in &kappa {
        if let Extended::Finite(val) = k {
            any_finite = true;
            kmin = kmin.min(*val);
        }
    }
    if !any_finite {
        // the constraints Ǩ[f] ≥ 1 on E fail at every finite level; the
        // capacity itself is zero
        return Ok(R::zero());
    }
    if kmin <= R::zero() {
        return Err(Error::Numeric("vanishing admissibility integral".into()));
    }
    Ok(R::one() / kmin)
}

/// Compact-set formula C_V(E) = max over refined nodes of E of 1/Ǩ[1](y);
/// nodes with infinite integral contribute zero.
pub fn capacity_compact_formula<R: Real>(
    dom: &Domain<R>,
    v: &Potential<R>,
    set: &BoundarySet<R>,
    grid: &BoundaryGrid<R>,
    proto: &DivergenceProtocol<R>,
) -> Result<R> {
    if set.is_structurally_empty() {
        return Ok(R::zero());
    }
    let kappa = kappa_on_set(dom, v, set, grid, proto);
    if kappa.is_empty() {
        return Err(Error::InvalidInput(
            "boundary set contains no evaluation nodes at this resolution".into(),
        ));
    }
    Ok(kappa
        .iter()
        .map(|(_, k)| k.reciprocal_or_zero())
        .fold(R::zero(), R::max))
}

/// Full report with primal, dual, and formula values from their own routes.
pub fn capacity_report<R: Real>(
    dom: &Domain<R>,
    v: &Potential<R>,
    set: &BoundarySet<R>,
    grid: &BoundaryGrid<R>,
    proto: &DivergenceProtocol<R>,
) -> Result<CapacityReport<R>> {
    let mut report = capacity_primal(dom, v, set, grid, proto)?;
    report.dual = capacity_dual(dom, v, set, grid, proto)?;
    report.formula = capacity_compact_formula(dom, v, set, grid, proto)?;
    Ok(report)
}

/// Max-rule C_V(E₁ ∪ E₂) = max(C_V(E₁), C_V(E₂)) via the compact formula.
pub fn max_rule_check<R: Real>(
    dom: &Domain<R>,
    v: &Potential<R>,
    e1: &BoundarySet<R>,
    e2: &BoundarySet<R>,
    grid: &BoundaryGrid<R>,
    proto: &DivergenceProtocol<R>,
) -> Result<bool> {
    let c1 = if e1.is_structurally_empty() {
        R::zero()
    } else {
        capacity_compact_formula(dom, v, e1, grid, proto)?
    };
    let c2 = if e2.is_structurally_empty() {
        R::zero()
    } else {
        capacity_compact_formula(dom, v, e2, grid, proto)?
    };
    let union = if e1.is_structurally_empty() {
        e2.clone()
    } else if e2.is_structurally_empty() {
        e1.clone()
    } else {
        e1.union(e2)
    };
    let cu = capacity_compact_formula(dom, v, &union, grid, proto)?;
    let rhs = c1.max(c2);
    let scale = cu.abs().max(rhs.abs()).max(R::of(1e-30));
    Ok((cu - rhs).abs() / scale <= R::of(1e-8))
}

/// Inner-regular value of an open arc: the supremum over an increasing
/// sequence of compact sub-arcs. Returns the sequence and its limit.
pub fn capacity_inner_regular<R: Real>(
    dom: &Domain<R>,
    v: &Potential<R>,
    start: R,
    width: R,
    grid: &BoundaryGrid<R>,
    proto: &DivergenceProtocol<R>,
) -> Result<(Vec<R>, R)> {
    let mut values = Vec::new();
    for k in 1..=6 {
        let delta = width * R::of(0.5).powi(k + 1);
        let sub = BoundarySet::disk_arc(start + delta, width - R::of(2.0) * delta);
        values.push(capacity_compact_formula(dom, v, &sub, grid, proto)?);
    }
    let limit = *values.last().unwrap();
    Ok((values, limit))
}

pub mod simplex {
    //! Dense two-phase simplex used as a test oracle for the capacity LPs on
    //! small instances (≤ 64 boundary nodes).

    use crate::Real;

    /// max cᵀx subject to A x ≤ b, x ≥ 0. Returns (optimum, x*).
    /// Bland's rule; intended for small dense instances only.
    pub fn solve_max<R: Real>(
        a: &[Vec<R>],
        b: &[R],
        c: &[R],
        max_iters: usize,
    ) -> Option<(R, Vec<R>)> {
        let m = a.len();
        let n = c.len();
        let mut t = vec![vec![R::zero(); n + m + 1]; m + 1];
        let mut basis = vec![0usize; m];
        let mut needs_artificial = Vec::new();
        for i in 0..m {
            for j in 0..n {
                t[i][j] = a[i][j];
            }
            t[i][n + i] = R::one();
            t[i][n + m] = b[i];
            basis[i] = n + i;
            if b[i] < R::zero() {
                needs_artificial.push(i);
            }
        }
        if !needs_artificial.is_empty() {
            // phase 1: drive the artificial variables out
            let n_art = needs_artificial.len();
            let cols = n + m + n_art + 1;
            let mut t1 = vec![vec![R::zero(); cols]; m + 1];
            for i in 0..m {
                let flip = b[i] < R::zero();
                for j in 0..(n + m) {
                    t1[i][j] = if flip { -t[i][j] } else { t[i][j] };
                }
                t1[i][cols - 1] = if flip { -t[i][n + m] } else { t[i][n + m] };
            }
            for (k, &i) in needs_artificial.iter().enumerate() {
                t1[i][n + m + k] = R::one();
                basis[i] = n + m + k;
            }
            for k in 0..n_art {
                t1[m][n + m + k] = R::one();
            }
            for &i in &needs_artificial {
                for j in 0..cols {
                    t1[m][j] = t1[m][j] - t1[i][j];
                }
            }
            pivot_loop(&mut t1, &mut basis, max_iters)?;
            let phase1 = -t1[m][cols - 1];
            if phase1.abs() > R::of(1e-9) {
                return None; // infeasible
            }
            for i in 0..m {
                if basis[i] >= n + m {
                    return None; // degenerate artificial left in the basis
                }
                for j in 0..(n + m) {
                    t[i][j] = t1[i][j];
                }
                t[i][n + m] = t1[i][cols - 1];
            }
        }
        // phase 2 objective, priced out over the current basis
        for j in 0..n {
            t[m][j] = -c[j];
        }
        for j in n..(n + m + 1) {
            t[m][j] = R::zero();
        }
        for i in 0..m {
            let bj = basis[i];
            if bj < n {
                let coef = t[m][bj];
                if coef != R::zero() {
                    for j in 0..(n + m + 1) {
                        let v = t[i][j];
                        t[m][j] = t[m][j] - coef * v;
                    }
                }
            }
        }
        pivot_loop(&mut t, &mut basis, max_iters)?;
        let mut x = vec![R::zero(); n];
        for i in 0..m {
            if basis[i] < n {
                x[basis[i]] = t[i][n + m];
            }
        }
        let obj = x
            .iter()
            .zip(c.iter())
            .fold(R::zero(), |acc, (&xi, &ci)| acc + xi * ci);
        Some((obj, x))
    }

    fn pivot_loop<R: Real>(t: &mut [Vec<R>], basis: &mut [usize], max_iters: usize) -> Option<()> {
        let m = t.len() - 1;
        let cols = t[0].len();
        for _ in 0..max_iters {
            // Bland: smallest index with negative reduced cost
            let mut enter = None;
            for j in 0..(cols - 1) {
                if t[m][j] < -R::of(1e-11) {
                    enter = Some(j);
                    break;
                }
            }
            let Some(e) = enter else { return Some(()) };
            let mut leave = None;
            let mut best = R::infinity();
            for i in 0..m {
                if t[i][e] > R::of(1e-11) {
                    let ratio = t[i][cols - 1] / t[i][e];
                    if ratio < best - R::of(1e-12)
                        || (ratio < best + R::of(1e-12)
                            && leave.map(|l| basis[l] > basis[i]).unwrap_or(false))
                    {
                        best = ratio;
                        leave = Some(i);
                    }
                }
            }
            let l = leave?; // None: unbounded
            let piv = t[l][e];
            for j in 0..cols {
                t[l][j] = t[l][j] / piv;
            }
            for i in 0..=m {
                if i != l {
                    let f = t[i][e];
                    if f != R::zero() {
                        for j in 0..cols {
                            let v = t[l][j];
                            t[i][j] = t[i][j] - f * v;
                        }
                    }
                }
            }
            basis[l] = e;
        }
        None
    }
}
