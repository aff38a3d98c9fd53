//! Forward map on a small weighted space: build a three-particle system with
//! a pair interaction, then print the partition function, the pair density it
//! induces, and the log-objective against that same density.

use std::sync::Arc;

use canens::ensemble::{bound_log, CanonicalSystem, PotentialSpec};
use canens::space::{multisets, StateSpace, SymmetricTable};

fn main() {
    // Four cells with unequal reference weights, like a coarse histogram of
    // an off-lattice coordinate.
    let space = Arc::new(StateSpace::new(vec![0.5, 1.0, 1.5, 1.0]).expect("space"));

    // Internal one-body potential, fixed by the model.
    let w = SymmetricTable::from_fn(space.clone(), 1, |idx| 0.3 * idx.cells()[0] as f64)
        .expect("internal potential");

    let sys = CanonicalSystem::new(space.clone(), 3, 2, PotentialSpec::from_terms([w]))
        .expect("system");

    // A short-range repulsive pair interaction: penalize same-cell pairs.
    let u = SymmetricTable::from_fn(space.clone(), 2, |idx| {
        let c = idx.cells();
        if c[0] == c[1] {
            1.2
        } else {
            0.0
        }
    })
    .expect("interaction");

    let log_z = sys.log_partition(&u).expect("log partition");
    let density = sys.m_density(&u).expect("pair density");

    println!("log Z = {log_z:.10}");
    println!("pair density (per ordered tuple, against the weight measure):");
    for idx in multisets(&space, 2) {
        let rank = idx.rank(&space).expect("rank");
        println!("  {:?}  {:.10}", idx.cells(), density.value(rank));
    }
    println!("integrates to {:.12}", density.integrate());

    // The objective at the matching target sits exactly at its maximum, so
    // the gradient vanishes there.
    let log_f = sys.log_f(&u, &density).expect("objective");
    let grad = sys.grad_log_f(&u, &density).expect("gradient");
    println!("log objective at the matching interaction = {log_f:.10}");
    println!("gradient sup norm there = {:.3e}", grad.max_abs());

    // Any full-order density with the same pair marginal bounds the optimum.
    let p = sys.marginal_density(&u, 3).expect("full-order density");
    let bound = bound_log(&p, sys.internal_potential()).expect("bound");
    println!("upper bound from the full-order density = {bound:.10}");
    println!("slack at the optimum = {:.3e}", bound - log_f);
}
