//! Multigrid hierarchies over the bisection lineage of a mesh.

use super::space::FeSpace;
use crate::error::Result;
use crate::linalg::{Multigrid, Prolongation, SparseOperator};

/// Successive levels keep at most this fraction of the finer level's vertices.
const COARSENING: f64 = 0.5;

/// Vertex counts of the generations used as multigrid levels, finest first.
fn select_levels(counts: &[usize]) -> Vec<usize> {
    let mut levels = vec![*counts.last().expect("lineage includes the mesh itself")];
    for &c in counts.iter().rev().skip(1) {
        if c as f64 <= COARSENING * *levels.last().expect("nonempty") as f64 {
            levels.push(c);
        }
    }
    if *levels.last().expect("nonempty") != counts[0] {
        levels.push(counts[0]);
    }
    levels
}

/// Multigrid preconditioner for an operator assembled on `space`, using
/// coarser generations of its mesh as levels.
pub fn multigrid_for(space: &FeSpace, a: SparseOperator) -> Result<Multigrid> {
    Multigrid::new(a, transfers(space)?)
}

/// Dirichlet-restricted interpolation operators between the selected levels, finest first.
fn transfers(space: &FeSpace) -> Result<Vec<Prolongation>> {
    let mesh = space.mesh();
    let parents = mesh.vertex_parents();
    let levels = select_levels(mesh.lineage_vertex_counts());
    let mut transfers = Vec::with_capacity(levels.len().saturating_sub(1));
    for pair in levels.windows(2) {
        let (nf, nc) = (pair[0], pair[1]);
        // nodal interpolation weights of fine vertices in terms of coarse vertices
        let mut weights: Vec<Vec<(usize, f64)>> = Vec::with_capacity(nf - nc);
        let lookup = |weights: &Vec<Vec<(usize, f64)>>, v: usize| -> Vec<(usize, f64)> {
            if v < nc {
                vec![(v, 1.0)]
            } else {
                weights[v - nc].clone()
            }
        };
        for v in nc..nf {
            let [a, b] = parents[v].expect("refinement vertices record their edge");
            let mut w = lookup(&weights, a);
            for (c, x) in lookup(&weights, b) {
                match w.iter_mut().find(|e| e.0 == c) {
                    Some(e) => e.1 += x,
                    None => w.push((c, x)),
                }
            }
            w.iter_mut().for_each(|e| e.1 *= 0.5);
            w.sort_by_key(|e| e.0);
            weights.push(w);
        }
        let coarse_dofs = (0..nc).filter(|&v| space.dof_of_vertex(v).is_some()).count();
        let rows = (0..space.dof_count())
            .filter(|&i| space.vertex_of_dof(i) < nf)
            .map(|i| {
                lookup(&weights, space.vertex_of_dof(i))
                    .into_iter()
                    .filter_map(|(c, w)| space.dof_of_vertex(c).map(|d| (d, w)))
                    .collect()
            })
            .collect();
        transfers.push(Prolongation::new(coarse_dofs, rows)?);
    }
    Ok(transfers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness, Constant, Diffusion, DiscreteFunction};
    use crate::linalg::{cg_solve, Preconditioner};
    use crate::mesh::{bisect, create_box_mesh, BoxDomain};

    #[test]
    fn level_selection_halves() {
        assert_eq!(select_levels(&[10, 12, 20, 25, 41, 90]), vec![90, 41, 20, 10]);
        assert_eq!(select_levels(&[10]), vec![10]);
        assert_eq!(select_levels(&[10, 15]), vec![15, 10]);
    }

    #[test]
    fn transfers_reproduce_prolongation_and_coarse_mass() {
        let coarse = create_box_mesh(BoxDomain::unit(2), &[4]).unwrap();
        let mut mesh = coarse.clone();
        for k in 0..6 {
            let marked: Vec<usize> = (0..mesh.num_elements()).filter(|e| e % 3 != k % 3).collect();
            mesh = bisect(&mesh, &marked).unwrap();
        }
        let cs = FeSpace::new(coarse);
        let fs = FeSpace::new(mesh);
        let f = DiscreteFunction::interpolate(cs.clone(), |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]) + x[0]);
        let direct = f.prolongate(&fs).unwrap();
        let ts = transfers(&fs).unwrap();
        assert!(ts.len() >= 2);
        assert_eq!(ts.last().unwrap().coarse_dim(), cs.dof_count());
        let mut v = f.coefficients().to_vec();
        for t in ts.iter().rev() {
            let mut fine = vec![0.0; t.fine_dim()];
            t.add_to_fine(&v, &mut fine);
            v = fine;
        }
        for (a, b) in v.iter().zip(direct.coefficients()) {
            assert!((a - b).abs() < 1e-14);
        }
        let mut m = assemble_mass(&fs);
        for t in &ts {
            m = t.galerkin(&m).unwrap();
        }
        let mc = assemble_mass(&cs);
        assert!(m.add_scaled(&mc, -1.0).unwrap().norm() < 1e-14 * mc.norm());
    }

    #[test]
    fn preconditioned_cg_iterations_stay_bounded() {
        let dom = BoxDomain::unit(2);
        let mut mesh = create_box_mesh(dom, &[4]).unwrap();
        let mut counts = Vec::new();
        for round in 0..8 {
            let all: Vec<usize> = (0..mesh.num_elements()).collect();
            mesh = bisect(&mesh, &all).unwrap();
            if round % 2 == 1 {
                let space = FeSpace::new(mesh.clone());
                let a = assemble_stiffness(&space, &Diffusion::identity(), &Constant(0.0)).unwrap();
                let mg = multigrid_for(&space, a.clone()).unwrap();
                let b = vec![1.0; space.dof_count()];
                let s = cg_solve(&a, &b, 1e-10, 500, Preconditioner::Multigrid(&mg)).unwrap();
                counts.push(s.iterations);
            }
        }
        assert!(counts.iter().all(|&c| c <= 20), "{counts:?}");
    }
}
