//! Cross-variant solver behavior on the factorization problem: the
//! objective must end below its starting value on every variant and seed.

use rayon::prelude::*;
use rmiso::graph::Graph;
use rmiso::problems::NmfProblem;
use rmiso::sampling::SamplerKind;
use rmiso::solver::{SolverConfig, SolverState, Variant};

#[test]
fn nmf_objective_decreases_across_variants_and_seeds() {
    let cases: Vec<(Variant, f64, u64)> = [
        (Variant::Miso, 0.0),
        (Variant::ConstantProx, 50.0),
        (Variant::DynamicProx, 50.0),
        (Variant::DiminishingRadius, 0.0),
    ]
    .into_iter()
    .flat_map(|(variant, rho)| (0..10u64).map(move |seed| (variant, rho, seed)))
    .collect();

    let failures: Vec<String> = cases
        .par_iter()
        .filter_map(|&(variant, rho, seed)| {
            let problem = NmfProblem::synthetic(5, 12, 20, 3, seed);
            let mut config = SolverConfig::new(variant, rho, seed);
            config.record_every = 500;
            config.invariant_checks = false;
            let graph = Graph::cycle(5);
            let outcome = SolverState::init(
                problem,
                Some(graph),
                SamplerKind::RandomWalk { start: 0 },
                config,
            )
            .and_then(|mut state| state.run(500));
            match outcome {
                Ok(summary) if summary.final_objective < summary.initial_objective => None,
                Ok(summary) => Some(format!(
                    "{}/seed {seed}: objective {} -> {}",
                    variant.label(),
                    summary.initial_objective,
                    summary.final_objective
                )),
                Err(e) => Some(format!("{}/seed {seed}: {e}", variant.label())),
            }
        })
        .collect();
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
