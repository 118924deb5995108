//! Scores a hand-written ranking against relevance judgements and applies a
//! second-stage rerank.

use legalgraph::eval::{metrics_at_k, two_stage, MetricOptions, Qrels, RunRanking};
use legalgraph::lexical::Scored;

fn main() -> legalgraph::Result<()> {
    let mut qrels = Qrels::default();
    for (q, c) in [("q1", "a"), ("q1", "c"), ("q2", "x")] {
        qrels.insert(q, c);
    }
    let mut run = RunRanking::default();
    let scored = |ids: &[&str]| -> Vec<Scored> {
        ids.iter()
            .enumerate()
            .map(|(i, id)| Scored {
                id: id.to_string(),
                score: -(i as f64),
            })
            .collect()
    };
    run.insert_scored("q1", scored(&["b", "a", "d", "c", "e"]));
    run.insert_scored("q2", scored(&["y", "z", "w", "v", "x"]));
    let eval = metrics_at_k(&run, &qrels, 5, &MetricOptions::default())?;
    println!("first stage: {:?}", eval.metrics.percentages());
    // Rerank with a toy scorer that favours relevant candidates.
    let reranked = two_stage(&run, |q, c| Ok(if qrels.relevant(q).is_some_and(|r| r.contains(c)) { 1.0 } else { 0.0 }), 5)?;
    let eval = metrics_at_k(&reranked.run, &qrels, 5, &MetricOptions::default())?;
    println!("reranked:    {:?}", eval.metrics.percentages());
    Ok(())
}
