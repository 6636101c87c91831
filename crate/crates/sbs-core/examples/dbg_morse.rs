use sbs_core::liouville::{solve, SolverConfig};
use sbs_core::mesh::Mesh;
use sbs_core::morse::*;
use sbs_core::parallel::ExecMode;
use sbs_core::surface::regular_2n_gon;

fn main() {
    for h in [0.08, 0.05] {
        let s = regular_2n_gon(4).unwrap();
        let mesh = Mesh::triangulate(&s, h, 0.6, h / 50.0).unwrap();
        let f = solve(&mesh, &SolverConfig::default()).unwrap();
        let set = find_critical_points(&s, &f, &MorseConfig::default(), ExecMode::default());
        let census = nodal_census(&f);
        println!("octagon h={h}: finder {} min {} sad {} deg | census {} min {} sad {} max (broken {})",
            set.minima, set.saddles, set.degenerate, census.minima, census.saddles, census.maxima, census.broken_links);
        let rc = mesh.cones[0].cutoff_radius;
        for p in &set.points {
            let dcone = mesh.nearest_cone(p.poly, p.pos()).map(|(_, d)| d).unwrap_or(f64::NAN);
            println!("  {:?} at ({:+.4},{:+.4}) |z|={:.4} u={:+.4} λ=({:+.3e},{:+.3e}) |g|={:.1e} dcone={:.3} (R={:.3})",
                p.kind, p.re, p.im, p.pos().norm(), p.u, p.lambda[0], p.lambda[1], p.grad_norm, dcone, rc);
        }
    }
}
