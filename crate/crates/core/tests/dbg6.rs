use singlab_core::criteria::Potential;
use singlab_core::geometry::*;
use singlab_core::measures::*;
use singlab_core::reduced::*;
use singlab_core::solver::*;

#[test]
fn dbg_bounded_mass() {
    let disk = Domain::<f64>::disk();
    let grid = SolverGrid::new(disk, 64, 128);
    let bgrid = grid.boundary_grid();
    let mut mu = BoundaryMeasure::uniform(&bgrid, 0.5);
    mu.push_atom(1.0, 0.0, 0.5).unwrap();
    let v = Potential::Constant(2.0);
    let res = truncation_ladder(&grid, &v, &mu, &[4.0, 16.0, 64.0], &SolveOptions::default()).unwrap();
    println!("trajectory {:?}", res.mass_trajectory);
    // pure uniform
    let mu2 = BoundaryMeasure::uniform(&bgrid, 1.0);
    let res2 = truncation_ladder(&grid, &v, &mu2, &[4.0, 16.0, 64.0], &SolveOptions::default()).unwrap();
    println!("uniform trajectory {:?}", res2.mass_trajectory);
    // pure atom
    let mu3 = BoundaryMeasure::dirac(&bgrid, 1.0, 0.0, 1.0);
    let res3 = truncation_ladder(&grid, &v, &mu3, &[4.0, 16.0, 64.0], &SolveOptions::default()).unwrap();
    println!("atom trajectory {:?}", res3.mass_trajectory);
}

#[test]
fn dbg_hardy_monotone() {
    let disk = Domain::<f64>::disk();
    let grid = SolverGrid::new(disk, 96, 128);
    let bgrid = grid.boundary_grid();
    let mu = BoundaryMeasure::dirac(&bgrid, 0.0, 0.0, 1.0);
    let v = Potential::DistPower { c: 9.0, alpha: 2.0 };
    let levels = levels_for_grid(&grid, 9.0);
    match truncation_ladder(&grid, &v, &mu, &levels, &SolveOptions::default()) {
        Ok(res) => println!("ok trajectory {:?}", res.mass_trajectory),
        Err(e) => println!("ERR {e}"),
    }
}
