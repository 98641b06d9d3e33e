//! CVT centroids and elitist insertion into the archive.

use std::sync::Arc;

use asciime::archive::{Archive, Centroids, EliteRecord, OperatorTag};
use asciime::policy::Genotype;
use rand::{Rng, SeedableRng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let centroids = Arc::new(Centroids::generate(256, &[(0.0, 1.0), (0.0, 1.0)], 0)?);
    let mut archive = Archive::new(centroids);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for round in 1..=5 {
        for _ in 0..500 {
            let d = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            archive.try_add(EliteRecord {
                genotype: Genotype::zeros(1),
                fitness: rng.random_range(0.0..10.0),
                descriptor: d,
                states: vec![],
                rewards_to_go: vec![],
                birth_iteration: round,
                operator_tag: OperatorTag::Init,
            })?;
        }
        let m = archive.metrics();
        println!(
            "after {:>4} candidates: {:>3} cells, coverage {:5.1}%, qd_score {:8.2}",
            round * 500,
            archive.len(),
            m.coverage,
            m.qd_score
        );
    }
    Ok(())
}
