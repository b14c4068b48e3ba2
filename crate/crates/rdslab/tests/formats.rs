use std::path::Path;

use rdslab::config::{CliOverrides, ExperimentConfig, ExperimentKind};
use rdslab::formats;
use rdslab_core::certification::{Param, ParameterSet};
use rdslab_core::vpso::{canonical_purebred, OperatorCatalog};

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn shipped_tensors_are_the_canonical_pair() {
    let canonical = OperatorCatalog::canonical(2, 2).unwrap();
    for k in 1..=2 {
        let text = std::fs::read_to_string(configs().join(format!("tensors/purebred{k}.tensor"))).unwrap();
        let t = formats::parse_tensor(&text).unwrap();
        assert_eq!(t, canonical_purebred(2, 2, k).unwrap());
        assert_eq!(&t, canonical.entry(k - 1));
        assert_eq!(formats::parse_tensor(&formats::write_tensor(&t)).unwrap(), t);
    }
}

#[test]
fn params_record_feeds_a_new_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cli = CliOverrides {
        out: Some(tmp.path().join("first")),
        ..CliOverrides::default()
    };
    let cfg = ExperimentConfig::defaults(ExperimentKind::DeriveParams, &cli).unwrap();
    assert!(rdslab::execute(&cfg, 1).unwrap().passed());
    let first = std::fs::read_to_string(tmp.path().join("first/params.tsv")).unwrap();

    let rec = formats::parse_params(&first).unwrap();
    let again = rec.rederive().unwrap();
    let table = ParameterSet::reference_table().unwrap();
    for p in Param::ALL {
        assert_eq!(again.get(p).to_bits(), table.get(p).to_bits(), "{}", p.name());
    }

    std::fs::copy(tmp.path().join("first/params.tsv"), tmp.path().join("record.tsv")).unwrap();
    let text = "experiment = \"derive-params\"\n[output]\ndir = \"second\"\n[params.params]\ntable = false\nfile = \"record.tsv\"\n";
    let path = tmp.path().join("second.toml");
    std::fs::write(&path, text).unwrap();
    let cfg = ExperimentConfig::load(&path, &CliOverrides::default()).unwrap();
    assert!(rdslab::execute(&cfg, 1).unwrap().passed());
    let second = std::fs::read_to_string(tmp.path().join("second/params.tsv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn missing_tensor_file_is_reported_at_its_key() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "experiment = \"simulate-vpso\"\n[[params.catalog.operators]]\ntensor = \"nowhere.tensor\"\nweight = 1.0\n";
    let path = tmp.path().join("c.toml");
    std::fs::write(&path, text).unwrap();
    let e = ExperimentConfig::load(&path, &CliOverrides::default()).unwrap_err();
    assert_eq!(e.path, "params.catalog.operators[0].tensor");
}

#[test]
fn shipped_recipe_builds_on_the_edge() {
    let text = std::fs::read_to_string(configs().join("sets/cantor-edge.toml")).unwrap();
    let recipe = formats::parse_recipe(&text).unwrap();
    assert_eq!(formats::parse_recipe(&formats::write_recipe(&recipe)).unwrap(), recipe);
    let set = recipe.build().unwrap();
    assert_eq!(set.ambient_dim(), 2);
    assert!(!set.is_empty());
    for x in &set.points {
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((0.2..=0.8).contains(&x[0]), "{x:?}");
    }
}
