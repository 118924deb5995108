//! Trains the encoder on a synthetic corpus with the contrastive objective
//! and compares retrieval quality before and after training.

use legalgraph::pipeline::{evaluate_run, init_params, Prepared, RunConfig};

fn main() -> legalgraph::Result<()> {
    let mut cfg = RunConfig {
        epochs: 10,
        ..RunConfig::default()
    };
    cfg.optimizer.lr = 3e-3;
    let prep = Prepared::from_synthetic(&cfg)?;
    let bm25 = evaluate_run(&cfg, &prep.bm25_run(&cfg, &prep.test_qrels)?, &prep.test_qrels)?;
    let before = prep.evaluate_params(&cfg, &init_params(&cfg)?)?;
    let out = prep.train(&cfg, &mut |epoch, _, loss| {
        println!("epoch {:>2}: loss {loss:.4}", epoch + 1);
        Ok(())
    })?;
    let after = prep.evaluate_params(&cfg, &out.params)?;
    println!("NDCG@{}: bm25 {:.3}, untrained {:.3}, trained {:.3}", after.k, bm25.metrics.ndcg, before.metrics.ndcg, after.metrics.ndcg);
    Ok(())
}
