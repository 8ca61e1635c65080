use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_choice-rank"));
    c.env_remove("CHOICE_RANK_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_then_rank_recovers_top_items() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.txt.gz");
    let o = run(&[
        "simulate", "--mnl-weights", "1,5,2,8,1.5", "--m", "3", "--p", "0.8", "--R", "200",
        "--seed", "11", "--out", p(&data),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("seed=11"));
    for alg in ["borda", "mle", "spectral"] {
        let o = run(&["rank", "--algorithm", alg, p(&data), "--K", "2"]);
        assert!(o.status.success(), "{alg}: {}", stderr(&o));
        let out = stdout(&o);
        assert!(out.starts_with("item,score,rank\n"));
        assert!(out.trim_end().ends_with("top-2: 4 2"), "{alg}: {out}");
    }
}

#[test]
fn simulation_is_reproducible_across_thread_counts() {
    let args = ["simulate", "--partworths", "0.3,-1,2,0", "--noise", "normal", "--m", "2", "--p", "0.6", "--R", "40", "--seed", "5"];
    let one = bin().args(["--threads", "1"]).args(args).output().unwrap();
    let four = bin().env("CHOICE_RANK_THREADS", "4").args(args).output().unwrap();
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
    assert!(stdout(&one).starts_with("# n=4\n"));
}

#[test]
fn rank_on_tabular_model_uses_exact_chain() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("q.txt");
    // Consistent 4-item pairwise model where the spectral top-2 differs from Borda's.
    fs::write(
        &model,
        "# n=4\n2;1,2;0.06,0.94\n2;1,3;0.53,0.47\n2;1,4;0.06,0.94\n2;2,3;0.58,0.42\n2;2,4;0.07,0.93\n2;3,4;0.5,0.5\n",
    )
    .unwrap();
    let top = |alg: &str| {
        let o = run(&["rank", "--algorithm", alg, p(&model), "--K", "2"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stderr(&o).contains("tabular"));
        stdout(&o).lines().last().unwrap().to_owned()
    };
    let sorted = |line: String| {
        let mut v: Vec<String> = line.split_whitespace().skip(1).map(str::to_owned).collect();
        v.sort();
        v
    };
    assert_eq!(sorted(top("borda")), ["2", "4"]);
    assert_eq!(sorted(top("mle")), ["2", "4"]);
    assert_eq!(sorted(top("spectral")), ["3", "4"]);
}

#[test]
fn rank_writes_scores_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.txt");
    let scores = dir.path().join("s.csv");
    fs::write(&data, "# n=3\n1;2;1,2;1\n1;2;2,3;2\n2;2;1,3;1\n2;2;1,2;2\n").unwrap();
    let o = run(&["rank", "--algorithm", "borda", p(&data), "--K", "1", "--out", p(&scores)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "top-1: 1\n");
    let csv = fs::read_to_string(&scores).unwrap();
    assert_eq!(csv.lines().next(), Some("item,score,rank"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn theory_emits_one_row_per_menu_size() {
    let o = run(&["theory", "--mnl-weights", "4,3,2,1,0.5", "--m", "2,3,4", "--K", "2", "--h", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "m,K,delta_K,factor_one,factor_two,bound_exact,bound_approx");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("2,2,"));

    let mc = run(&[
        "theory", "--partworths", "1,0.5,0,-1", "--noise", "exponential", "--monte-carlo",
        "--mc-menus", "100", "--mc-draws", "100", "--m", "2", "--K", "1",
    ]);
    assert!(mc.status.success(), "{}", stderr(&mc));
    assert!(stderr(&mc).contains("monte-carlo"));
}

#[test]
fn ingest_then_experiment_on_tabular_model() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.soi");
    fs::write(
        &corpus,
        "# NUMBER ALTERNATIVES: 4\n# ALTERNATIVE NAME 1: a\n4: 1,2,3,4\n2: {1,2},3\n3: 2,1,4,3\n1: 4,3,2,1\n",
    )
    .unwrap();
    let (model, truth) = (dir.path().join("model.txt"), dir.path().join("truth.csv"));
    let o = run(&["ingest", p(&corpus), "--m", "2", "--out-model", p(&model), "--out-truth", p(&truth)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&truth).unwrap(), "rank,item\n1,1\n2,2\n3,3\n4,4\n");

    let cfg = dir.path().join("exp.cfg");
    fs::write(
        &cfg,
        "model = tabular\ntabular = model.txt\ntruth = truth.csv\nm = 2\nK = 1,2\nbudgets = 50,200\ntrials = 4\nseed = 3\n",
    )
    .unwrap();
    let o = run(&["experiment", p(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("algorithm,n,m,K,expected_samples,trials,successes,accuracy,median_time_s\n"));
    // 3 algorithms x 2 K x 2 budgets
    assert_eq!(out.lines().count(), 13);
    assert!(stderr(&o).contains("trials = 4"));
}

#[test]
fn verify_passes_and_detects_perturbation() {
    let o = run(&["verify"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 failed"));
    let bad = run(&["verify", "--perturb-kl", "1e-6"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(stdout(&bad).contains("FAIL kl_compact_identity"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    assert_eq!(run(&["rank", "--algorithm", "borda", p(&missing), "--K", "1"]).status.code(), Some(4));

    let o = run(&["simulate", "--mnl-weights", "1,2", "--m", "3", "--p", "0.5"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["simulate", "--mnl-weights", "1,2,3", "--m", "2", "--p", "1.5"]);
    assert_eq!(o.status.code(), Some(2));

    // Items {1,2} and {3,4} are never compared across groups.
    let data = dir.path().join("split.txt");
    fs::write(&data, "# n=4\n1;2;1,2;1\n1;2;3,4;4\n2;2;1,2;2\n2;2;3,4;3\n").unwrap();
    let o = run(&["rank", "--algorithm", "mle", p(&data), "--K", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    // clap usage errors
    assert_eq!(run(&["rank"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--m", "2", "--p", "0.5"]).status.code(), Some(2));
}

#[test]
fn negative_partworths_parse() {
    let o = run(&["simulate", "--partworths", "-1.5,0,-0.25", "--m", "2", "--p", "1", "--R", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1 + 2 * 3);
}

#[test]
fn counterexample_masses_split_spectral_from_borda() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.txt");
    // Raw pairwise masses; rows of the source matrix are not complementary.
    fs::write(
        &file,
        "# n=4\n2;1,2;0.2,0.6\n2;1,3;0.45,0.55\n2;1,4;0.45,0.55\n2;2,3;0.4,0.85\n2;2,4;0.45,0.6\n2;3,4;0.15,0.95\n",
    )
    .unwrap();
    let top = |alg: &str| {
        let o = run(&["rank", "--algorithm", alg, p(&file), "--K", "2"]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o).lines().last().unwrap().to_owned()
    };
    assert_eq!(top("spectral"), "top-2: 4 2");
    assert_eq!(top("borda"), "top-2: 4 3");
}
