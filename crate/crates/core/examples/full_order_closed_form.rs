//! When the interaction order equals the particle number, the inverse problem
//! has a closed form: the potential is the negative log of the target density
//! minus the internal potential, up to the gauge constant. This example
//! checks the iterative solver against that formula.

use std::sync::Arc;

use canens::ensemble::{CanonicalSystem, PotentialSpec};
use canens::solver::{invert, trivial_invert, SolverConfig};
use canens::space::{StateSpace, SymmetricTable};

fn main() {
    let space = Arc::new(StateSpace::new(vec![1.0, 0.75, 1.25]).expect("space"));
    let w = SymmetricTable::random(space.clone(), 2, -0.5, 0.5, 21).expect("internal potential");
    let sys =
        CanonicalSystem::new(space.clone(), 3, 3, PotentialSpec::from_terms([w])).expect("system");

    let truth = SymmetricTable::random(space, 3, -0.8, 0.8, 22).expect("ground truth");
    let target = sys.m_density(&truth).expect("target density");

    let closed = trivial_invert(&sys, &target).expect("closed form");

    let cfg = SolverConfig {
        tol: 1e-12,
        ..SolverConfig::default()
    };
    let iterated = invert(&sys, &target, &cfg).expect("iterative solve");

    println!(
        "iterative solver: {} iterations, residual {:.3e}",
        iterated.iterations, iterated.final_residual
    );
    println!(
        "closed form vs iterative, sup distance = {:.3e}",
        closed.sup_distance(&iterated.u).expect("distance")
    );

    // Both reproduce the target when pushed back through the forward map.
    let from_closed = sys.m_density(&closed).expect("density");
    println!(
        "closed form forward error = {:.3e}",
        from_closed.sup_distance(&target).expect("distance")
    );
}
