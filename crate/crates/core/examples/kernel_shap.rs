//! Kernel SHAP on a trained forest: complete enumeration against the exact
//! Shapley oracle, sampled coalitions, local accuracy and a global
//! importance chart.

use xai_ids::attribution::{
    exact_shapley_oracle, explain, kernel_shap, BackgroundSet, Coalitions, ExplainConfig, GlobalImportance, Method,
    OutputFn,
};
use xai_ids::flowdata::{minmax_fit_apply, split_train_test, synth_planted, SplitSpec};
use xai_ids::models::{train, ForestParams, Hyperparams};

fn main() -> xai_ids::Result<()> {
    let data = synth_planted(3000, 8, 3, 3, 5)?;
    let (tr, te) = split_train_test(&data, SplitSpec { train_fraction: 0.7, seed: 1 })?;
    let (tr, te, _) = minmax_fit_apply(&tr, &[&te])?;
    let te = &te[0];
    let params = ForestParams { n_trees: 30, ..ForestParams::default() };
    let model = train(&Hyperparams::RandomForest(params), &tr, 2)?;
    let bg = BackgroundSet::sample(tr.x.view(), 20, 3)?;

    let x = te.x.row(0);
    let exact = exact_shapley_oracle(&model, x, &bg)?;
    let full = kernel_shap(&model, x, &bg, Coalitions::All, 0)?;
    let sampled = kernel_shap(&model, x, &bg, Coalitions::Sampled(64), 0)?;
    let max_dev = |a: &ndarray::Array2<f64>| (a - &exact.phi).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("complete enumeration vs oracle: max |diff| = {:.2e}", max_dev(&full.phi));
    println!("64 sampled coalitions vs oracle: max |diff| = {:.2e}", max_dev(&sampled.phi));

    let out = model.eval(x.insert_axis(ndarray::Axis(0)))?;
    for c in 0..model.n_outputs() {
        let sum = full.phi.row(c).sum() + full.base[c];
        println!("class {c}: base {:.4} + sum(phi) = {sum:.6}, f(x) = {:.6}", full.base[c], out[[0, c]]);
    }

    let ids: Vec<usize> = (0..50).collect();
    let xs = te.x.select(ndarray::Axis(0), &ids);
    let attr = explain(
        &model,
        Method::KernelShap,
        xs.view(),
        &ids,
        &bg,
        &ExplainConfig::default(),
        9,
        &te.schema.class_names,
        &te.schema.feature_names,
    )?;
    let g = GlobalImportance::from_attributions(&attr)?;
    println!("global importance (informative: f0..f2):\n{}", g.bar_chart(40, None));
    Ok(())
}
