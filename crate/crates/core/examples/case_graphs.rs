//! Builds the fact and issue graphs of a small case and prints their
//! structure.

use legalgraph::tacg::{build_case_pair, CaseDocument, RelationTriplet};

fn main() -> legalgraph::Result<()> {
    let doc = CaseDocument {
        case_id: "case-1".into(),
        fact_text: "The tenant signed the lease. The landlord drafted the lease.".into(),
        issue_text: "Whether the deposit was withheld by the landlord.".into(),
        fact_triplets: vec![
            RelationTriplet::new("The tenant", "signed", "the lease"),
            RelationTriplet::new("The landlord", "drafted", "the lease"),
        ],
        issue_triplets: vec![RelationTriplet::new("the deposit", "was withheld by", "the landlord")],
    };
    doc.validate()?;
    let (fact, issue) = build_case_pair(&doc, true)?;
    for g in [&fact, &issue] {
        println!(
            "{} graph: {} nodes ({} entities), {} edges ({} relations), global node {:?}",
            g.role.as_str(),
            g.num_nodes(),
            g.entity_count(),
            g.num_edges(),
            g.relation_edge_count(),
            g.global_node()
        );
        let name = |n: usize| if Some(n) == g.global_node() { "<global>" } else { g.nodes[n].surface.as_str() };
        for e in &g.edges {
            println!("  {} -> {}  {:?} {:?}", name(e.src), name(e.dst), e.kind, e.relation_surface);
        }
    }
    Ok(())
}
