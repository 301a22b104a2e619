//! Gradient and perturbation attributions of a small neural network:
//! saliency, gradient x input, integrated gradients (with its completeness
//! check), SmoothGrad / SquareGrad / VarGrad, DeconvNet, occlusion and LIME.

use ndarray::Array1;
use xai_ids::attribution::{
    deconvnet, gradient_input, integrated_gradients, lime_tabular, noise_ensemble, occlusion, saliency, Differentiable,
    LimeConfig, Logits, NoiseMode,
};
use xai_ids::flowdata::{minmax_fit_apply, synth_planted};
use xai_ids::models::{train, Hyperparams, MlpParams};

fn show(name: &str, v: &Array1<f64>) {
    let cells: Vec<String> = v.iter().map(|a| format!("{a:+.3}")).collect();
    println!("{name:<22} {}", cells.join(" "));
}

fn main() -> xai_ids::Result<()> {
    let data = synth_planted(3000, 6, 2, 2, 4)?;
    let (data, _, _) = minmax_fit_apply(&data, &[])?;
    let model = train(&Hyperparams::Mlp(MlpParams::dnn()), &data, 1)?;
    let mlp = model.require_mlp("gradients")?;
    let x = data.x.row(0);
    let class = 1;

    println!("features f0, f1 carry the label\n");
    show("saliency", &saliency(mlp, x, class)?);
    show("gradient x input", &gradient_input(mlp, x, class)?);
    let zero = Array1::zeros(x.len());
    let ig = integrated_gradients(mlp, x, zero.view(), 128, class)?;
    show("integrated gradients", &ig);
    show("smoothgrad", &noise_ensemble(mlp, x, class, NoiseMode::Smooth, 32, 0.1, 5)?);
    show("squaregrad", &noise_ensemble(mlp, x, class, NoiseMode::Square, 32, 0.1, 5)?);
    show("vargrad", &noise_ensemble(mlp, x, class, NoiseMode::Var, 32, 0.1, 5)?);
    show("deconvnet", &deconvnet(mlp, x, class)?);

    let gap = mlp.logit(x, class) - mlp.logit(zero.view(), class);
    println!("\nIG completeness: sum = {:.6}, logit gap = {gap:.6}", ig.sum());

    let occ = occlusion(&Logits(&model), x, 0.0)?;
    show("occlusion", &occ.row(class).to_owned());
    let lime = lime_tabular(&model, x, &LimeConfig::default(), 3)?;
    show("lime", &lime.coefficients.row(class).to_owned());
    Ok(())
}
