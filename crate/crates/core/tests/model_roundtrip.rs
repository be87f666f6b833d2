use permdiag::learners::{fit_forest, fit_linear, fit_mlp, ForestConfig, MlpConfig, ModelFile};
use permdiag::synthgen::GeneratorConfig;
use permdiag::Predictor;

fn roundtrip(m: ModelFile) {
    let d = GeneratorConfig::benchmark(50, 0.5, 11).generate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    m.save(&path).unwrap();
    let back = ModelFile::load(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.predict(d.features()).unwrap(), m.predict(d.features()).unwrap());
}

#[test]
fn linear_roundtrip_is_exact() {
    let d = GeneratorConfig::benchmark(100, 0.9, 1).generate().unwrap();
    roundtrip(ModelFile::Linear(fit_linear(&d).unwrap()));
}

#[test]
fn forest_roundtrip_is_exact() {
    let d = GeneratorConfig::benchmark(100, 0.9, 2).generate().unwrap();
    let cfg = ForestConfig {
        n_trees: 5,
        ..ForestConfig::default()
    };
    roundtrip(ModelFile::Forest(fit_forest(&d, &cfg).unwrap()));
}

#[test]
fn mlp_roundtrip_is_exact() {
    let d = GeneratorConfig::benchmark(60, 0.0, 3).generate().unwrap();
    let cfg = MlpConfig {
        hidden: 5,
        max_iter: 50,
        ..MlpConfig::default()
    };
    roundtrip(ModelFile::Mlp(fit_mlp(&d, &cfg).unwrap()));
}

#[test]
fn file_names_its_kind() {
    let d = GeneratorConfig::benchmark(30, 0.0, 4).generate().unwrap();
    let json = ModelFile::Linear(fit_linear(&d).unwrap()).to_json().unwrap();
    assert!(json.contains("\"kind\": \"linear\""));
    assert!(ModelFile::from_json("{\"kind\": \"svm\"}").is_err());
}
