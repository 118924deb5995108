//! Compares layer kinds and the global-node readout on one synthetic corpus.

use legalgraph::model::{GnnKind, ReadoutKind};
use legalgraph::pipeline::{Prepared, RunConfig};

fn main() -> legalgraph::Result<()> {
    let mut base = RunConfig {
        epochs: 10,
        ..RunConfig::default()
    };
    base.optimizer.lr = 3e-3;
    let mut variants: Vec<(String, RunConfig)> = [GnnKind::Eugat, GnnKind::Edgegat, GnnKind::Gat, GnnKind::Gcn]
        .into_iter()
        .map(|k| {
            let mut c = base.clone();
            c.model.gnn_kind = k;
            (k.to_string(), c)
        })
        .collect();
    let mut avg = base.clone();
    avg.model.readout_kind = ReadoutKind::Average;
    avg.features.include_global = false;
    variants.push(("eugat, average readout, no global node".into(), avg));
    for (name, cfg) in variants {
        let prep = Prepared::from_synthetic(&cfg)?;
        let out = prep.train(&cfg, &mut |_, _, _| Ok(()))?;
        let m = prep.evaluate_params(&cfg, &out.params)?.metrics;
        println!("{name:<40} P@5 {:.3}  MRR {:.3}  NDCG {:.3}", m.precision, m.mrr, m.ndcg);
    }
    Ok(())
}
