use std::path::Path;

use choicerank::choice_models::{ChoiceTable, ParametricChoiceModel, TabularChoiceModel};
use choicerank::harness::ExperimentConfig;
use choicerank::preflib::{
    empirical_choice_probs, ground_truth_ordering, parse_rankings, read_truth_csv, RankingDataset,
};
use choicerank::sampling::{simulate_dataset, ChoiceDataset, SamplingConfig};
use choicerank::verify::{exact_table, random_tabular};
use choicerank::{rng, Error};

#[test]
fn dataset_round_trips_plain_and_gzip() {
    let model = ParametricChoiceModel::mnl_from_weights(&[1.0, 2.0, 3.0, 0.5, 1.5]).unwrap();
    let ds = simulate_dataset(&model, &SamplingConfig::new(5, 3, 0.4, 25, 9).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in ["d.txt", "d.txt.gz"] {
        let path = dir.path().join(name);
        ds.write(&path).unwrap();
        assert_eq!(ChoiceDataset::read(&path).unwrap(), ds);
    }
    let raw = std::fs::read(dir.path().join("d.txt.gz")).unwrap();
    assert_eq!(&raw[..2], &[0x1f, 0x8b]);
}

#[test]
fn tabular_model_round_trips_bit_exactly() {
    let mut r = rng::seeded(3);
    let model = random_tabular(&mut r, 6, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    model.write(&path).unwrap();
    let back = TabularChoiceModel::read(&path).unwrap();
    assert_eq!(back.table(), model.table());
}

#[test]
fn exact_table_text_round_trip() {
    let model = choicerank::choice_models::MnlWeights::new(vec![0.3, 1.0, 2.5, 0.9]).unwrap();
    let table = exact_table(&model, 2).unwrap();
    assert_eq!(ChoiceTable::from_text(&table.to_text()).unwrap(), table);
}

#[test]
fn ranking_corpus_canonical_form_is_stable() {
    let text = "# NUMBER ALTERNATIVES: 4\n# ALTERNATIVE NAME 1: Ann\n# ALTERNATIVE NAME 2: Bo\n3: 2,{1,4}\n1: 4,3,2,1\n2: {3,1}\n";
    let corpus = parse_rankings(text).unwrap();
    let canon = corpus.to_text();
    let again = parse_rankings(&canon).unwrap();
    assert_eq!(again, corpus);
    assert_eq!(again.to_text(), canon);
    assert_eq!(corpus.total_rankings(), 6);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.soi.gz");
    corpus.write(&path).unwrap();
    assert_eq!(RankingDataset::read(&path).unwrap(), corpus);
}

#[test]
fn ingested_model_covers_every_menu_and_truth_round_trips() {
    let text = "# NUMBER ALTERNATIVES: 5\n4: 1,2,3,4,5\n3: 2,1,{3,5}\n2: 5,4\n";
    let corpus = parse_rankings(text).unwrap();
    for m in 2..=5 {
        let model = empirical_choice_probs(&corpus, m).unwrap();
        assert_eq!(model.table().len() as u128, choicerank::menu::binomial(5, m));
    }
    let truth = ground_truth_ordering(&corpus).unwrap();
    assert_eq!(read_truth_csv(&truth.to_csv()).unwrap(), truth.ordering);
}

#[test]
fn malformed_inputs_name_the_line() {
    match ChoiceDataset::from_text("# n=3\n1;2;1,2;1\n1;2;1,9;1\n") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
    match parse_rankings("# NUMBER ALTERNATIVES: 3\n1: 1,2\n2: 1,1\n") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn experiment_config_describe_round_trips() {
    let text = "model = normal\nn = 12\npartworth_seed = 4\nnoise = normal\nm = 2,3\nK = 1,2\nbudgets = 10,100\ntrials = 7\nalgorithms = borda,spectral\nseed = 99\n";
    let cfg = ExperimentConfig::from_text(text, Path::new(".")).unwrap();
    let again = ExperimentConfig::from_text(&cfg.describe(), Path::new(".")).unwrap();
    assert_eq!(again, cfg);
    assert!(ExperimentConfig::from_text("model = normal\nn = 3\nbogus = 1\n", Path::new(".")).is_err());
}
