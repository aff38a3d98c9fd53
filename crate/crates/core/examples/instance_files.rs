//! The JSON instance format used by the `canens` binary, driven from code:
//! write an instance document, read it back, build the system, and solve the
//! inverse problem it describes. The same files work on the command line:
//!
//! ```bash
//! cargo run -- generate --cells 4 --particles 3 --order 2 --out instance.json
//! cargo run -- invert instance.json
//! ```

use canens::doc::{
    FullDensityDoc, InstanceDocument, PotentialTermDoc, SolverDoc, SpaceDoc, SystemDoc, TargetDoc,
};
use canens::ensemble::{CanonicalSystem, PotentialSpec};
use canens::solver::invert;
use canens::space::{StateSpace, SymmetricTable};
use std::sync::Arc;

fn main() {
    // Build the instance in memory first: a three-particle pair-interaction
    // system whose target comes from a known ground truth.
    let space = Arc::new(StateSpace::uniform(3).expect("space"));
    let w = SymmetricTable::random(space.clone(), 1, -0.4, 0.4, 51).expect("internal potential");
    let sys = CanonicalSystem::new(space.clone(), 3, 2, PotentialSpec::from_terms([w.clone()]))
        .expect("system");
    let truth = SymmetricTable::random(space.clone(), 2, -0.7, 0.7, 52).expect("ground truth");
    let target = sys.m_density(&truth).expect("target density");
    let p = sys.marginal_density(&truth, 3).expect("full-order density");

    let doc = InstanceDocument {
        space: SpaceDoc {
            num_cells: space.num_cells(),
            weights: space.weights().to_vec(),
        },
        system: SystemDoc { n: 3, m: 2 },
        w: vec![PotentialTermDoc::Term {
            order: 1,
            values: w.values().to_vec(),
        }],
        target: Some(TargetDoc {
            order: 2,
            values: target.values().to_vec(),
        }),
        p: Some(FullDensityDoc {
            values: p.values().to_vec(),
        }),
        solver: SolverDoc::default(),
        sampler: Default::default(),
    };

    let path = std::env::temp_dir().join("canens_example_instance.json");
    doc.to_path(&path).expect("write instance");
    println!("wrote {}", path.display());

    // Round trip: the document rebuilds the exact same system.
    let read_back = InstanceDocument::from_path(&path).expect("read instance");
    let rebuilt = read_back.build_system().expect("rebuild system");
    let rebuilt_target = read_back
        .target_table(rebuilt.space())
        .expect("target")
        .expect("target present");

    let report = invert(&rebuilt, &rebuilt_target, &read_back.solver_config())
        .expect("solve");
    println!(
        "solved from file: {} iterations, residual {:.3e}, converged = {}",
        report.iterations, report.final_residual, report.converged
    );

    let text = std::fs::read_to_string(&path).expect("reread");
    println!("instance document ({} bytes):", text.len());
    for line in text.lines().take(12) {
        println!("  {line}");
    }
    println!("  ...");
    std::fs::remove_file(&path).ok();
}
