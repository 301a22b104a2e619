//! The five statistical baselines on planted data: chi-square, correlation
//! with redundancy pruning, forest impurity, information gain and ANOVA F.

use xai_ids::flowdata::{minmax_fit_apply, synth_planted};
use xai_ids::ranking::{baseline_rank, BaselineMethod};

fn main() -> xai_ids::Result<()> {
    let mut data = synth_planted(4000, 15, 4, 3, 8)?;
    // a near-copy of an informative feature exercises correlation pruning
    let copy: Vec<f64> = data.x.column(0).iter().map(|v| v * 2.0 + 1.0).collect();
    data.x.column_mut(14).assign(&ndarray::Array1::from(copy));
    let (data, _, _) = minmax_fit_apply(&data, &[])?;

    println!("informative: f00..f03; f14 duplicates f00");
    for method in BaselineMethod::ALL {
        let r = baseline_rank(method, &data, 1)?;
        println!("{:<12} top-6 {:?}", method.name(), r.top_names(6));
        for f in &r.flags {
            println!("{:<12} note: {f}", "");
        }
    }
    Ok(())
}
