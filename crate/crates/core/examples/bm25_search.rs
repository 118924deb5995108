//! Indexes a handful of cases with BM25, ranks them for a query and mines
//! hard negatives.

use std::collections::HashSet;

use legalgraph::lexical::{Bm25Index, DEFAULT_B, DEFAULT_K1};
use legalgraph::objective::mine_hard_negatives;

fn main() -> legalgraph::Result<()> {
    let corpus = [
        ("c1", "the tenant withheld rent after the landlord failed to repair"),
        ("c2", "the landlord kept the security deposit after the lease ended"),
        ("c3", "an employee was dismissed without notice"),
        ("c4", "the tenant sued for return of the deposit"),
        ("c5", "a contract for the sale of goods was breached"),
    ];
    let index = Bm25Index::build(corpus.iter().map(|(id, t)| (id.to_string(), t.to_string())), DEFAULT_K1, DEFAULT_B)?;
    let query = "landlord refused to return the deposit";
    for s in index.top_k(query, 3, &HashSet::new()) {
        println!("{:>4} {:.4}", s.id, s.score);
    }
    let relevant: HashSet<&str> = ["c2"].into_iter().collect();
    let hard = mine_hard_negatives("q", query, &relevant, &index, 2);
    println!("hard negatives: {:?} (short: {})", hard.ids, hard.short);
    Ok(())
}
