//! Run every diagnostic check on one instance: concavity of the objective,
//! its upper bound, finite-difference gradient agreement, uniqueness of the
//! recovered interaction, marginal consistency of the supplied full-order
//! density, and the minorization profile that guarantees well-posedness.

use std::sync::Arc;

use canens::ensemble::{reduce_density, CanonicalSystem, PotentialSpec};
use canens::space::{StateSpace, SymmetricTable};
use canens::verify::{run_suite, SuiteConfig};

fn main() {
    let space = Arc::new(StateSpace::uniform(3).expect("space"));
    let w = SymmetricTable::random(space.clone(), 2, -0.3, 0.3, 41).expect("internal potential");
    let sys = CanonicalSystem::new(space.clone(), 3, 2, PotentialSpec::from_terms([w.clone()]))
        .expect("system");

    // A full-order density generated by an actual interaction, so every
    // check has something true to confirm.
    let truth = SymmetricTable::random(space.clone(), 3, -0.6, 0.6, 42).expect("ground truth");
    let full_sys = CanonicalSystem::new(space, 3, 3, PotentialSpec::from_terms([w]))
        .expect("full-order system");
    let p = full_sys.m_density(&truth).expect("full-order density");
    let target = reduce_density(&p, 2).expect("pair target");

    let reports = run_suite(&sys, Some(&target), Some(&p), &SuiteConfig::default())
        .expect("suite");

    let mut all_passed = true;
    for report in &reports {
        all_passed &= report.passed();
        println!(
            "[{}] {}",
            match report.outcome {
                canens::verify::Outcome::Pass => "pass",
                canens::verify::Outcome::Fail => "FAIL",
                canens::verify::Outcome::Inconclusive => "inconclusive",
            },
            report.name
        );
        println!("    {}", report.witness);
    }
    println!("all checks passed: {all_passed}");
}
