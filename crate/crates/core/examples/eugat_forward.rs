//! Encodes two cases with a freshly initialised edge-updated graph attention
//! encoder and compares them.

use legalgraph::features::{featurize_document, PromptTemplateSet, StubEncoder, TemplateId};
use legalgraph::model::{case_representation, EugatParams, ModelConfig};
use legalgraph::ndiff::Tape;
use legalgraph::objective::{similarity, SimilarityKind};
use legalgraph::tacg::{CaseDocument, RelationTriplet};

fn case(id: &str, triplets: &[(&str, &str, &str)], issue: (&str, &str, &str)) -> CaseDocument {
    let fact_triplets: Vec<RelationTriplet> = triplets.iter().map(|(h, r, t)| RelationTriplet::new(*h, *r, *t)).collect();
    let issue_triplets = vec![RelationTriplet::new(issue.0, issue.1, issue.2)];
    CaseDocument {
        case_id: id.into(),
        fact_text: fact_triplets.iter().map(|t| t.sentence() + ".").collect::<Vec<_>>().join(" "),
        issue_text: issue_triplets[0].sentence(),
        fact_triplets,
        issue_triplets,
    }
}

fn main() -> legalgraph::Result<()> {
    let cfg = ModelConfig::default().with_dim(32);
    let encoder = StubEncoder::new(32, 1)?;
    let templates = PromptTemplateSet::get(TemplateId::P0);
    let a = case("a", &[("the tenant", "signed", "the lease")], ("the deposit", "was", "withheld"));
    let b = case("b", &[("the tenant", "paid", "the rent")], ("the deposit", "was", "withheld"));
    let params = EugatParams::init(&cfg, 0)?;
    let tape = Tape::new();
    let bound = params.bind(&tape, false);
    let mut vectors = Vec::new();
    for doc in [&a, &b] {
        let pair = featurize_document(doc, true, &encoder, &templates)?;
        let v = case_representation(&tape, &pair, &bound, &cfg, None)?;
        vectors.push(tape.value(v).data().to_vec());
    }
    println!("case vector length: {}", vectors[0].len());
    println!("cosine(a, b) = {:.4}", similarity(&vectors[0], &vectors[1], SimilarityKind::Cosine)?);
    Ok(())
}
