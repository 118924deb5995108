//! Renders the encoder prompts for a case under every template and shows
//! the deduplicated export that an external encoder would consume.

use legalgraph::features::{export_requests, PromptTemplateSet, TemplateId};
use legalgraph::tacg::{CaseDocument, RelationTriplet};

fn main() -> legalgraph::Result<()> {
    let doc = CaseDocument {
        case_id: "case-1".into(),
        fact_text: "The applicant is a Canadian.".into(),
        issue_text: "Whether the applicant may appeal.".into(),
        fact_triplets: vec![RelationTriplet::new("The applicant", "is", "a Canadian")],
        issue_triplets: vec![RelationTriplet::new("the applicant", "may", "appeal")],
    };
    for id in [TemplateId::None, TemplateId::P0, TemplateId::P1, TemplateId::P2, TemplateId::P3] {
        let reqs = export_requests(std::slice::from_ref(&doc), &PromptTemplateSet::get(id), true, false)?;
        println!("{id:?}: {} requests", reqs.len());
        for r in reqs.iter().take(4) {
            println!("  [{}] {}", r.role.as_str(), r.prompt);
        }
    }
    Ok(())
}
