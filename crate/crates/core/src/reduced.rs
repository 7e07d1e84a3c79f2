//! The truncation ladder V_k = min(V, k) ↑ V, the reduced measure extracted
//! from the relaxation limit, the perturbed kernel K_V, and its vanishing
//! set.

use rayon::prelude::*;

use crate::criteria::Potential;
use crate::geometry::{BoundaryGrid, Domain};
use crate::kernels::{green_apply, green_apply_light, poisson_apply_auto, poisson_kernel};
use crate::measures::{BoundaryMeasure, BoundarySet};
use crate::point::norm;
use crate::quad::Extended;
use crate::solver::{FvSystem, GridField, SolveOptions, SolverGrid};
use crate::{Error, Point, Real, Result};

/// Default geometric ladder of truncation levels.
pub fn default_levels<R: Real>() -> Vec<R> {
    [1.0, 4.0, 16.0, 64.0, 256.0, 1024.0, 4096.0]
        .iter()
        .map(|&k| R::of(k))
        .collect()
}

/// Geometric ladder k = 1, 4, 16, … extended until the truncation scale of a
/// boundary-critical potential (d_k ≈ √(c/k)) passes the Σ_ε trace window of
/// the grid; boundary-singular instances need this so the relaxation becomes
/// visible to the trace extrapolation.
pub fn levels_for_grid<R: Real>(grid: &SolverGrid<R>, c_top: R) -> Vec<R> {
    let d_target = grid.dr(); // below the innermost trace circle at 2h
    let k_needed = (c_top / (d_target * d_target)).max(R::of(4096.0));
    let mut levels = vec![R::one()];
    let mut k = R::one();
    while k < k_needed {
        k = k * R::of(4.0);
        levels.push(k);
    }
    levels
}

/// Outcome of a truncation-ladder run. The ladder solves in the split form
/// u_k = 𝕂[μ] − w_k with (−Δ + V_k)w_k = V_k·𝕂[μ], w_k|∂Ω = 0, so atomic
/// boundary data enters exactly through the Poisson kernel rather than
/// through a mollified Dirichlet trace.
#[derive(Debug, Clone)]
pub struct ReducedResult<R: Real> {
    pub levels: Vec<R>,
    /// u_k at the grid cells
    pub fields: Vec<GridField<R>>,
    /// absorbed parts w_k = 𝕂[μ] − u_k
    pub absorbed: Vec<GridField<R>>,
    /// extrapolated relaxation limit (geometric extrapolation of the last
    /// three levels where the trajectory is regular, else the last level)
    pub limit: GridField<R>,
    /// boundary mass m_k seen from inside: extrapolated Σ_ε trace per level
    pub mass_trajectory: Vec<R>,
    pub reduced_mass: R,
    pub input_mass: R,
}

impl<R: Real> ReducedResult<R> {
    /// Pointwise view of the relaxation limit: exact Poisson part minus the
    /// interpolated absorbed part.
    pub fn limit_field<'a>(
        &'a self,
        grid: &'a SolverGrid<R>,
        mu: &'a BoundaryMeasure<R>,
    ) -> impl Fn(Point<R>) -> R + Sync + 'a {
        let dom = grid.domain;
        let w_lim = self.absorbed_limit(grid);
        move |x: Point<R>| {
            (poisson_apply_auto(&dom, mu, x) - w_lim.interp(grid, x)).max(R::zero())
        }
    }

    /// Extrapolated absorbed field (𝕂[μ] − limit at cells).
    pub fn absorbed_limit(&self, grid: &SolverGrid<R>) -> GridField<R> {
        let n = self.limit.values.len();
        let last_w = &self.absorbed[self.absorbed.len() - 1];
        let mut w = GridField::zeros(grid);
        for i in 0..n {
            // w_lim = kmu − u_lim = w_last + (u_last − u_lim)
            w.values[i] = last_w.values[i]
                + (self.fields[self.fields.len() - 1].values[i] - self.limit.values[i]);
        }
        w
    }
}

/// Boundary mass of a solve through the ζ = ρ/λ identity:
/// ν(∂Ω) = (λ ∫ u ρ + ∫ W u ρ) / (−∂ρ/∂n). Exact for the truncated solves
/// (it recovers the boundary data); the relaxation is visible only through
/// the Σ_ε-trace masses.
pub fn mass_from_field<R: Real>(
    grid: &SolverGrid<R>,
    u: &GridField<R>,
    v: &Potential<R>,
    k: R,
) -> R {
    let dom = grid.domain;
    let lam = dom.eigenvalue;
    let numer = grid.integrate_cells(|i, j, x, vol| {
        let rho = dom.eigenfunction_rho(x).unwrap();
        let uv = u.values[grid.idx(i, j)];
        (lam * uv * rho + v.eval_truncated(&dom, x, k) * uv * rho) * vol
    });
    numer / (-dom.rho_normal_derivative())
}

/// Solve the ladder (split form with exact boundary data) and extrapolate
/// the limit. The fields must decrease nodewise as k grows; violations
/// beyond the solver tolerance are a discretization failure.
pub fn truncation_ladder<R: Real>(
    grid: &SolverGrid<R>,
    v: &Potential<R>,
    mu: &BoundaryMeasure<R>,
    levels: &[R],
    opts: &SolveOptions<R>,
) -> Result<ReducedResult<R>> {
    let dom = grid.domain;
    truncation_ladder_with(grid, mu, levels, opts, |x, k| v.eval_truncated(&dom, x, k))
}

/// Ladder over an arbitrary family of bounded truncations W(x, k); the
/// level-cutoff and region-exhaustion routes share this driver.
pub fn truncation_ladder_with<R: Real>(
    grid: &SolverGrid<R>,
    mu: &BoundaryMeasure<R>,
    levels: &[R],
    opts: &SolveOptions<R>,
    w_of: impl Fn(Point<R>, R) -> R + Sync,
) -> Result<ReducedResult<R>> {
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("ladder levels must increase".into()));
    }
    let dom = grid.domain;
    // exact Poisson data at the cell centers, shared across levels
    let mut kmu_cells = vec![R::zero(); grid.len()];
    for i in 0..grid.n_r {
        for j in 0..grid.n_ang {
            kmu_cells[grid.idx(i, j)] = poisson_apply_auto(&dom, mu, grid.cell_center(i, j));
        }
    }
    // exact Poisson data at the Σ_ε trace rows, for the mass trajectory
    let rows = crate::trace::sigma_rows(grid)?;
    let kmu_rows: Vec<Vec<R>> = rows
        .iter()
        .map(|row| row.iter().map(|&(x, _)| poisson_apply_auto(&dom, mu, x)).collect())
        .collect();
    let zero_data = vec![R::zero(); grid.n_ang];
    let mut fields: Vec<GridField<R>> = Vec::with_capacity(levels.len());
    let mut absorbed: Vec<GridField<R>> = Vec::with_capacity(levels.len());
    let mut mass_trajectory: Vec<R> = Vec::with_capacity(levels.len());
    for &k in levels {
        let system = FvSystem::assemble_with_source(
            grid,
            |x| w_of(x, k),
            &zero_data,
            |x| w_of(x, k) * poisson_apply_auto(&dom, mu, x),
        );
        let warm = absorbed.last().map(|f: &GridField<R>| f.values.as_slice());
        let (wv, _it, _res) = system.cg_solve_from(warm, opts.cg_rel_tol, opts.cg_max_iter)?;
        let w_field = GridField::new(wv);
        let mut u = GridField::zeros(grid);
        for i in 0..grid.len() {
            u.values[i] = kmu_cells[i] - w_field.values[i];
        }
        u.truncation_level = Some(k);
        u.measure_label = mu.label.clone();
        if let Some(prev) = fields.last() {
            let scale = prev.linf_norm().max(R::of(1e-30));
            let slack = R::of(1e-6) * scale;
            if prev
                .values
                .iter()
                .zip(u.values.iter())
                .any(|(&a, &b)| b > a + slack)
            {
                return Err(Error::Numeric(
                    "ladder violated nodewise monotonicity beyond solver tolerance".into(),
                ));
            }
        }
        // trace mass of u_k = exact 𝕂[μ] minus interpolated absorbed part
        let per_level: Vec<R> = rows
            .iter()
            .zip(kmu_rows.iter())
            .map(|(row, kvals)| {
                row.iter()
                    .zip(kvals.iter())
                    .fold(R::zero(), |acc, (&(x, wgt), &kv)| {
                        acc + (kv - w_field.interp(grid, x)).max(R::zero()) * wgt
                    })
            })
            .collect();
        mass_trajectory.push(crate::trace::extrapolate_three(
            per_level[0],
            per_level[1],
            per_level[2],
        ));
        fields.push(u);
        absorbed.push(w_field);
    }
    let limit = extrapolate_fields(&fields);
    let reduced_mass = extrapolate_scalar(&mass_trajectory).max(R::zero());
    Ok(ReducedResult {
        levels: levels.to_vec(),
        fields,
        absorbed,
        limit,
        mass_trajectory,
        reduced_mass,
        input_mass: mu.total_mass(),
    })
}

/// Nodewise geometric extrapolation from the last three ladder fields.
fn extrapolate_fields<R: Real>(fields: &[GridField<R>]) -> GridField<R> {
    let n = fields.len();
    if n < 3 {
        return fields.last().expect("nonempty ladder").clone();
    }
    let (a, b, c) = (&fields[n - 3], &fields[n - 2], &fields[n - 1]);
    let mut values = Vec::with_capacity(c.values.len());
    for i in 0..c.values.len() {
        values.push(aitken(a.values[i], b.values[i], c.values[i]));
    }
    let mut out = GridField::new(values);
    out.truncation_level = c.truncation_level;
    out.measure_label = c.measure_label.clone();
    out
}

fn extrapolate_scalar<R: Real>(seq: &[R]) -> R {
    let n = seq.len();
    if n < 3 {
        return *seq.last().expect("nonempty");
    }
    aitken(seq[n - 3], seq[n - 2], seq[n - 1])
}

/// Aitken Δ² step with the measured decay clipped to [0, 0.95]; falls back
/// to the last value on irregular trajectories.
fn aitken<R: Real>(a: R, b: R, c: R) -> R {
    let d1 = b - a;
    let d2 = c - b;
    if d1.abs() < R::of(1e-300) || d2.abs() < R::of(1e-14) * c.abs().max(R::one()) {
        return c;
    }
    let q = d2 / d1;
    if !(q > R::zero() && q < R::of(0.95)) {
        return c;
    }
    (c + d2 * q / (R::one() - q)).max(R::zero())
}

/// Reduced measure extracted from the relaxation limit: the distribution
/// comes from the boundary trace of h = u + 𝔾[Vu]; the total mass comes from
/// the eigenfunction identity, which is exact up to quadrature.
#[derive(Debug, Clone)]
pub struct ReducedMeasure<R: Real> {
    pub measure: BoundaryMeasure<R>,
    pub mass: R,
    /// ζ = ρ/λ identity evaluated on the limit field with the last
    /// truncation level (a cross-check that is exact for bounded V)
    pub identity_mass: R,
    /// sup over probes of the deviation of h from its circle means
    pub harmonicity_defect: R,
}

pub fn extract_reduced_measure<R: Real>(
    grid: &SolverGrid<R>,
    result: &ReducedResult<R>,
    v: &Potential<R>,
    mu: &BoundaryMeasure<R>,
    bgrid: &BoundaryGrid<R>,
) -> Result<ReducedMeasure<R>> {
    let dom = grid.domain;
    let u = &result.limit;
    let k_last = *result.levels.last().expect("nonempty ladder");
    // Wu must be ρ-integrable for the extraction to make sense
    let vu_rho = grid.integrate_cells(|i, j, x, vol| {
        v.eval_truncated(&dom, x, k_last)
            * u.values[grid.idx(i, j)].abs()
            * dom.eigenfunction_rho(x).unwrap()
            * vol
    });
    if !vu_rho.is_finite() {
        return Err(Error::Numeric("W·u is not integrable against ρ".into()));
    }
    let uf = result.limit_field(grid, mu);
    let h = |x: Point<R>| -> R {
        let vu = |z: Point<R>| v.eval_truncated(&dom, z, k_last) * uf(z);
        uf(x) + green_apply_light(&dom, &vu, x).expect("interior target")
    };
    // harmonicity of h at interior probes via the mean-value property
    let mut defect = R::zero();
    let probe_r = R::of(0.15);
    for &p in &[
        [R::of(0.2), R::of(0.1), R::zero()],
        [-R::of(0.35), R::of(0.25), R::zero()],
        [R::of(0.05), -R::of(0.4), R::zero()],
    ] {
        let p = match dom.kind {
            crate::geometry::DomainKind::Disk2d => p,
            crate::geometry::DomainKind::Ball3d => [p[0], R::zero(), p[1]],
        };
        let center = h(p);
        let mut mean = R::zero();
        let m = 12usize;
        for q in 0..m {
            let ang = R::of(2.0 * std::f64::consts::PI) * R::from_usize_(q) / R::from_usize_(m);
            let z = match dom.kind {
                crate::geometry::DomainKind::Disk2d => {
                    [p[0] + probe_r * ang.cos(), p[1] + probe_r * ang.sin(), R::zero()]
                }
                crate::geometry::DomainKind::Ball3d => {
                    [p[0] + probe_r * ang.cos(), p[1], p[2] + probe_r * ang.sin()]
                }
            };
            mean = mean + h(z);
        }
        mean = mean / R::from_usize_(m);
        defect = defect.max((center - mean).abs());
    }
    let scale = result.input_mass.max(R::of(1e-12));
    if defect > R::of(0.05) * scale {
        return Err(Error::Numeric(format!(
            "h = u + G[Vu] fails the discrete harmonicity check: defect {defect:e}"
        )));
    }
    let mut measure = crate::trace::extract_boundary_measure(grid, &h, bgrid, 8)?;
    // the ladder-extrapolated trace mass is authoritative; the identity on
    // the limit field cross-checks it for bounded potentials
    let mass = result.reduced_mass;
    let identity_mass = mass_from_field(grid, u, v, k_last);
    let raw = measure.total_mass();
    if raw > R::of(1e-12) && mass > R::of(1e-12) {
        measure = measure.scaled(mass / raw);
    } else {
        measure = BoundaryMeasure::zero(bgrid);
    }
    Ok(ReducedMeasure { measure, mass, identity_mass, harmonicity_defect: defect })
}

/// Largest-good-measure property: every good candidate λ ≤ μ stays below the
/// reduced measure, tested arcwise on a boundary partition.
pub fn maximality_check<R: Real>(
    grid: &SolverGrid<R>,
    v: &Potential<R>,
    mu: &BoundaryMeasure<R>,
    candidates: &[BoundaryMeasure<R>],
    levels: &[R],
    opts: &SolveOptions<R>,
) -> Result<bool> {
    let bgrid = mu.grid.clone();
    let ladder = truncation_ladder(grid, v, mu, levels, opts)?;
    let reduced = extract_reduced_measure(grid, &ladder, v, mu, &bgrid)?;
    let n_arcs = 8usize;
    let two_pi = R::of(2.0 * std::f64::consts::PI);
    for lam in candidates {
        if !lam.le(mu, R::of(1e-10)) {
            return Err(Error::InvalidInput("candidate exceeds μ".into()));
        }
        let lam_ladder = truncation_ladder(grid, v, lam, levels, opts)?;
        let good = (lam_ladder.reduced_mass - lam.total_mass()).abs()
            <= R::of(0.05) * lam.total_mass().max(R::of(1e-9));
        if !good {
            continue;
        }
        for a in 0..n_arcs {
            let arc = BoundarySet::disk_arc(
                two_pi * R::from_usize_(a) / R::from_usize_(n_arcs),
                two_pi / R::from_usize_(n_arcs),
            );
            let lhs = lam.restrict(&arc).total_mass();
            let rhs = reduced.measure.restrict(&arc).total_mass();
            if lhs > rhs + R::of(0.05) * mu.total_mass().max(R::of(1e-9)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Ladder approximation of the perturbed kernel at probe points:
/// K_V(x, y) = lim_k u_k(x) for data δ_y.
#[derive(Debug, Clone)]
pub struct KernelKvResult<R: Real> {
    pub levels: Vec<R>,
    /// per level, per probe
    pub values: Vec<Vec<R>>,
    pub limits: Vec<R>,
    /// unperturbed kernel at the probes
    pub unperturbed: Vec<R>,
}

pub fn kernel_kv<R: Real>(
    grid: &SolverGrid<R>,
    v: &Potential<R>,
    y: Point<R>,
    probes: &[Point<R>],
    levels: &[R],
    opts: &SolveOptions<R>,
) -> Result<KernelKvResult<R>> {
    let bgrid = grid.boundary_grid();
    let dom = grid.domain;
    let theta = y[1].atan2(y[0]);
    let polar = y[2].max(-R::one()).min(R::one()).acos();
    let mu = match dom.kind {
        crate::geometry::DomainKind::Disk2d => {
            BoundaryMeasure::dirac(&bgrid, theta, R::zero(), R::one())
        }
        crate::geometry::DomainKind::Ball3d => {
            BoundaryMeasure::dirac(&bgrid, polar, theta, R::one())
        }
    };
    let ladder = truncation_ladder(grid, v, &mu, levels, opts)?;
    // probe the split representation: exact kernel minus interpolated w
    let mut values = Vec::with_capacity(levels.len());
    for w in &ladder.absorbed {
        values.push(
            probes
                .iter()
                .map(|&p| {
                    let kv = poisson_kernel(&dom, p, y).expect("interior probe");
                    let wv = if norm(p) < R::of(1e-12) {
                        w.center_value(grid)
                    } else {
                        w.interp(grid, p)
                    };
                    (kv - wv).max(R::zero())
                })
                .collect::<Vec<R>>(),
        );
    }
    let limits = probes
        .iter()
        .enumerate()
        .map(|(pi, _)| {
            let seq: Vec<R> = values.iter().map(|row| row[pi]).collect();
            extrapolate_scalar(&seq).max(R::zero())
        })
        .collect();
    let unperturbed = probes
        .iter()
        .map(|&p| poisson_kernel(&dom, p, y).expect("interior probe"))
        .collect();
    Ok(KernelKvResult { levels: levels.to_vec(), values, limits, unperturbed })
}

/// Vanishing-set report with the per-node kernel limits.
#[derive(Debug, Clone)]
pub struct VanishingSetReport<R: Real> {
    pub set: BoundarySet<R>,
    pub node_flags: Vec<bool>,
    pub node_limits: Vec<R>,
    pub threshold_rel: R,
}

/// Z_V^* = { y : K_V(x₀, y) = 0 } resolved on the boundary grid with the
/// relative vanishing threshold θ_v; flagged nodes are re-tested at three
/// more probes (the limit must vanish at every probe or none).
pub fn vanishing_set<R: Real>(
    grid: &SolverGrid<R>,
    v: &Potential<R>,
    bgrid: &BoundaryGrid<R>,
    levels: &[R],
    opts: &SolveOptions<R>,
    threshold_rel: R,
) -> Result<VanishingSetReport<R>> {
    let dom = grid.domain;
    let center = [R::zero(); 3];
    let extra_probes: Vec<Point<R>> = match dom.kind {
        crate::geometry::DomainKind::Disk2d => vec![
            [R::of(0.5), R::zero(), R::zero()],
            [-R::of(0.4), R::of(0.2), R::zero()],
            [R::zero(), -R::of(0.45), R::zero()],
        ],
        crate::geometry::DomainKind::Ball3d => vec![
            [R::of(0.4), R::zero(), R::of(0.2)],
            [-R::of(0.3), R::zero(), -R::of(0.3)],
            [R::zero(), R::zero(), R::of(0.5)],
        ],
    };
    let outcomes: Vec<Result<(bool, R)>> = bgrid
        .nodes()
        .par_iter()
        .map(|&y| {
            let probes: Vec<Point<R>> =
                std::iter::once(center).chain(extra_probes.iter().copied()).collect();
            let res = kernel_kv(grid, v, y, &probes, levels, opts)?;
            let rels: Vec<R> = res
                .limits
                .iter()
                .zip(res.unperturbed.iter())
                .map(|(&l, &k)| l / k)
                .collect();
            let vanished = rels[0] <= threshold_rel;
            // Harnack consistency: the decision must not depend on the probe
            for &r in &rels[1..] {
                let other = r <= threshold_rel * R::of(10.0);
                if vanished != (r <= threshold_rel) && vanished != other {
                    return Err(Error::Diagnostic(format!(
                        "probe disagreement in the vanishing decision: {rels:?}"
                    )));
                }
            }
            Ok((vanished, rels[0]))
        })
        .collect();
    let mut node_flags = Vec::with_capacity(bgrid.len());
    let mut node_limits = Vec::with_capacity(bgrid.len());
    for o in outcomes {
        let (f, l) = o?;
        node_flags.push(f);
        node_limits.push(l);
    }
    let snap = v.singular_boundary_points();
    // refinement probe: re-run the kernel limit at an arbitrary boundary point
    let probe = |y: Point<R>| -> Extended<R> {
        let res = kernel_kv(grid, v, y, &[center], levels, opts).expect("ladder");
        let rel = res.limits[0] / res.unperturbed[0];
        if rel <= threshold_rel {
            Extended::Infinite // "flagged" in the set-builder sense
        } else {
            Extended::Finite(rel)
        }
    };
    let set = crate::criteria::set_from_flags(&dom, bgrid, &node_flags, &snap, &probe);
    Ok(VanishingSetReport { set, node_flags, node_limits, threshold_rel })
}
