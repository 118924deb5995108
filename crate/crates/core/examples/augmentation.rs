//! Produces augmented views of a featured case by edge dropping and feature
//! masking.

use legalgraph::augment::{edge_drop, feature_mask, MaskTarget};
use legalgraph::features::{featurize_document, PromptTemplateSet, StubEncoder, TemplateId};
use legalgraph::tacg::{CaseDocument, RelationTriplet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> legalgraph::Result<()> {
    let fact_triplets: Vec<RelationTriplet> = (0..20)
        .map(|i| RelationTriplet::new(format!("party {i}"), "contracted with", format!("party {}", i + 1)))
        .collect();
    let doc = CaseDocument {
        case_id: "case".into(),
        fact_text: fact_triplets.iter().map(|t| t.sentence() + ".").collect::<Vec<_>>().join(" "),
        issue_text: "Whether the contract was void.".into(),
        fact_triplets,
        issue_triplets: vec![RelationTriplet::new("the contract", "was", "void")],
    };
    let pair = featurize_document(&doc, true, &StubEncoder::new(16, 3)?, &PromptTemplateSet::get(TemplateId::P0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!("original fact relations: {}", pair.fact.graph.relation_edge_count());
    for eps in [0.1, 0.3, 0.5] {
        let view = edge_drop(&pair, eps, &mut rng)?;
        println!("edge drop {eps}: {} relations kept", view.fact.graph.relation_edge_count());
    }
    let masked = feature_mask(&pair, MaskTarget::Node, 0.3, &mut rng)?;
    let zero_cols = (0..masked.fact.dim())
        .filter(|&c| (0..masked.fact.node_features.rows()).all(|r| masked.fact.node_features.get(r, c) == 0.0))
        .count();
    println!("node mask 0.3: {zero_cols} of {} fact columns zeroed", masked.fact.dim());
    Ok(())
}
