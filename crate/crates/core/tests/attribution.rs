use ndarray::{array, Array1, Array2, Array3, ArrayView2, Axis};
use proptest::prelude::*;
use xai_ids::attribution::{
    deconvnet, exact_shapley_oracle, explain, gradient_input, integrated_gradients, kernel_shap, lime_tabular,
    occlusion, saliency, AttributionMatrix, BackgroundSet, Coalitions, ExplainConfig, FnOutput, GlobalImportance,
    LimeConfig, Method, Target,
};
use xai_ids::flowdata::synth_planted;
use xai_ids::models::{train, Hyperparams, Mlp, ModelKind};

fn random_mlp(d: usize, hidden: usize, classes: usize, w: &[f64]) -> Mlp {
    let mut it = w.iter().copied().cycle();
    let mut take = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| it.next().unwrap());
    let w1 = take(hidden, d);
    let b1 = take(1, hidden).row(0).to_owned();
    let w2 = take(classes, hidden);
    let b2 = take(1, classes).row(0).to_owned();
    Mlp::from_layers(vec![(w1, b1), (w2, b2)])
}

fn proba(m: &Mlp) -> FnOutput<impl Fn(ArrayView2<f64>) -> Array2<f64> + Sync + '_> {
    FnOutput::new(m.n_inputs(), m.n_outputs(), move |x| m.predict_proba(x))
}

fn setup() -> impl Strategy<Value = (Mlp, Array1<f64>, BackgroundSet)> {
    (2usize..8, 1usize..4).prop_flat_map(|(d, b)| {
        (
            proptest::collection::vec(-2.0f64..2.0, 64),
            proptest::collection::vec(0.0f64..1.0, d),
            proptest::collection::vec(0.0f64..1.0, b * d),
        )
            .prop_map(move |(w, x, bg)| {
                (
                    random_mlp(d, 5, 3, &w),
                    Array1::from(x),
                    BackgroundSet::new(Array2::from_shape_vec((b, d), bg).unwrap()),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn complete_enumeration_matches_the_oracle((mlp, x, bg) in setup()) {
        let f = proba(&mlp);
        let ks = kernel_shap(&f, x.view(), &bg, Coalitions::All, 0).unwrap();
        let or = exact_shapley_oracle(&f, x.view(), &bg).unwrap();
        for (a, b) in ks.phi.iter().zip(or.phi.iter()) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn sampled_attributions_sum_to_the_output_gap((mlp, x, bg) in setup(), n in 20usize..200, s in 0u64..100) {
        let f = proba(&mlp);
        let ks = kernel_shap(&f, x.view(), &bg, Coalitions::Sampled(n), s).unwrap();
        let fx = mlp.predict_proba(x.view().insert_axis(Axis(0)));
        for c in 0..3 {
            let total = ks.phi.row(c).sum() + ks.base[c];
            prop_assert!((total - fx[[0, c]]).abs() <= 1e-9);
        }
    }

    #[test]
    fn integrated_gradients_are_complete((mlp, x, _bg) in setup(), class in 0usize..3) {
        let base = Array1::zeros(x.len());
        let ig = integrated_gradients(&mlp, x.view(), base.view(), 512, class).unwrap();
        let logit = |v: &Array1<f64>| mlp.logits(v.view().insert_axis(Axis(0)))[[0, class]];
        let gap = logit(&x) - logit(&base);
        prop_assert!((ig.sum() - gap).abs() <= 0.01 * gap.abs().max(1e-2), "{} vs {gap}", ig.sum());
    }
}

#[test]
fn sampled_coalitions_converge_on_small_inputs() {
    let mlp = random_mlp(5, 6, 2, &(0..80).map(|i| ((i * 37 % 29) as f64 - 14.0) / 7.0).collect::<Vec<_>>());
    let f = proba(&mlp);
    let bg = BackgroundSet::new(array![[0.1, 0.9, 0.3, 0.2, 0.5], [0.6, 0.2, 0.8, 0.4, 0.0]]);
    let x = array![0.8, 0.1, 0.5, 0.9, 0.7];
    let or = exact_shapley_oracle(&f, x.view(), &bg).unwrap();
    let ks = kernel_shap(&f, x.view(), &bg, Coalitions::Sampled(2048), 5).unwrap();
    let max = or.phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let err = (&ks.phi - &or.phi).mapv(f64::abs).mean().unwrap();
    assert!(err <= 0.05 * max, "mean error {err} vs max {max}");
}

#[test]
fn unused_features_get_nothing() {
    let f = FnOutput::new(4, 1, |x: ArrayView2<f64>| {
        x.map_axis(Axis(1), |r| (r[0] * r[2]).sin() + r[2].powi(2)).insert_axis(Axis(1))
    });
    let bg = BackgroundSet::new(array![[0.2, 0.4, 0.1, 0.9], [0.7, 0.3, 0.5, 0.0]]);
    let s = kernel_shap(&f, array![0.9, 0.8, 0.6, 0.1].view(), &bg, Coalitions::Sampled(40), 2).unwrap();
    assert!(s.phi[[0, 1]].abs() < 1e-9 && s.phi[[0, 3]].abs() < 1e-9, "{:?}", s.phi);
}

#[test]
fn linear_model_attributions_by_hand() {
    // logits 2a - b + 0.5 and -a + 3b; no hidden layer
    let mlp = Mlp::from_layers(vec![(array![[2.0, -1.0], [-1.0, 3.0]], array![0.5, 0.0])]);
    let x = array![0.5, 2.0];
    assert_eq!(saliency(&mlp, x.view(), 0).unwrap(), array![2.0, 1.0]);
    assert_eq!(gradient_input(&mlp, x.view(), 1).unwrap(), array![-0.5, 6.0]);
    assert_eq!(deconvnet(&mlp, x.view(), 0).unwrap(), array![2.0, -1.0]);
    let ig = integrated_gradients(&mlp, x.view(), array![0.0, 0.0].view(), 8, 1).unwrap();
    assert!((&ig - &array![-0.5, 6.0]).iter().all(|v| v.abs() < 1e-12));

    let f = FnOutput::new(2, 1, |x: ArrayView2<f64>| x.map_axis(Axis(1), |r| 2.0 * r[0] - r[1]).insert_axis(Axis(1)));
    assert_eq!(occlusion(&f, x.view(), 0.0).unwrap(), array![[1.0, -2.0]]);
    let fit = lime_tabular(&f, x.view(), &LimeConfig::default(), 3).unwrap();
    assert!((fit.coefficients[[0, 0]] - 2.0).abs() < 0.02 && (fit.coefficients[[0, 1]] + 1.0).abs() < 0.02, "{:?}", fit.coefficients);
}

#[test]
fn global_importance_is_mean_absolute_attribution() {
    let values = Array3::from_shape_vec((2, 2, 2), vec![1.0, -2.0, 0.0, 4.0, -3.0, 0.0, 2.0, -2.0]).unwrap();
    let a = AttributionMatrix {
        method: Method::KernelShap,
        target: Target::Probability,
        values,
        base: None,
        sample_ids: vec![0, 1],
        class_names: vec!["n".into(), "a".into()],
        feature_names: vec!["x".into(), "y".into()],
        flags: vec![],
    };
    let g = GlobalImportance::from_attributions(&a).unwrap();
    assert_eq!(g.per_class, array![[2.0, 1.0], [1.0, 3.0]]);
    assert_eq!(g.overall, array![1.5, 2.0]);
}

#[test]
fn explanations_do_not_depend_on_worker_count() {
    let data = synth_planted(600, 6, 3, 3, 1).unwrap();
    let model = train(&Hyperparams::default_for(ModelKind::Mlp), &data, 2).unwrap();
    let bg = BackgroundSet::sample(data.x.view(), 10, 3).unwrap();
    let rows = data.x.slice(ndarray::s![..12, ..]);
    let ids: Vec<usize> = (0..12).collect();
    let cfg = ExplainConfig { coalitions: Coalitions::Sampled(64), ..ExplainConfig::default() };
    let names = &data.schema;
    for method in [Method::KernelShap, Method::SmoothGrad, Method::Lime] {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                explain(&model, method, rows, &ids, &bg, &cfg, 9, &names.class_names, &names.feature_names).unwrap()
            })
        };
        let (a, b) = (run(1), run(3));
        let bits = |m: &AttributionMatrix| m.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b), "{method}");
    }
}

#[test]
fn gradient_methods_need_a_network() {
    let data = synth_planted(300, 4, 2, 2, 1).unwrap();
    let model = train(&Hyperparams::default_for(ModelKind::RandomForest), &data, 2).unwrap();
    let bg = BackgroundSet::sample(data.x.view(), 5, 3).unwrap();
    let s = &data.schema;
    let r = explain(&model, Method::Saliency, data.x.view(), &(0..300).collect::<Vec<_>>(), &bg, &ExplainConfig::default(), 0, &s.class_names, &s.feature_names);
    assert!(r.is_err());
}
