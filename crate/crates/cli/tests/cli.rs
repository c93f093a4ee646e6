use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use astfim_core::{BenchExample, SourceDocument, TrainingRecord};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_astfim"));
    for var in ["ASTFIM_CONFIG", "ASTFIM_OUT", "ASTFIM_CORPUS", "ASTFIM_STATS", "ASTFIM_MANIFEST"] {
        c.env_remove(var);
    }
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bench_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/bench").join(name)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn astfim");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn write_corpus(path: &Path, docs: &[SourceDocument]) {
    let mut s = String::new();
    for d in docs {
        s.push_str(&serde_json::json!({"path": d.path, "lang": d.lang, "content": d.content}).to_string());
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn mask_single_node_golden() {
    let args = ["mask", "--strategy", "single_node", "--n", "3", "--seed", "7"];
    let out = run(bin().args(args).arg(fixture("add.py")).current_dir(fixture("")));
    assert!(out.status.success());
    let golden = std::fs::read_to_string(fixture("mask_single_node_seed7.txt")).unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    // The header carries the path as given; compare the mask lines.
    assert_eq!(text.lines().skip(1).collect::<Vec<_>>(), golden.lines().skip(1).collect::<Vec<_>>());
    let again = run(bin().args(args).arg(fixture("add.py")));
    assert_eq!(String::from_utf8(again.stdout).unwrap().lines().skip(1).collect::<Vec<_>>(), text.lines().skip(1).collect::<Vec<_>>());
}

#[test]
fn mask_spans_are_reported_nodes() {
    let out = run(bin()
        .args(["mask", "--strategy", "single_node", "--n", "20", "--seed", "1", "--format", "json"])
        .arg(fixture("add.py")));
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let content = std::fs::read_to_string(fixture("add.py")).unwrap();
    let doc = SourceDocument::new("add.py", astfim_core::LanguageId::new("python"), content);
    let tree = astfim_core::parse(&doc).unwrap();
    for m in v["masks"].as_array().unwrap() {
        let (s, e) = (m["start"].as_u64().unwrap() as usize, m["end"].as_u64().unwrap() as usize);
        let kind = m["node_kinds"][0].as_str().unwrap();
        assert!(tree.preorder().any(|n| n.span().start == s && n.span().end == e && n.kind() == kind));
        assert_eq!(m["middle"].as_str().unwrap(), &doc.content[s..e]);
    }
}

#[test]
fn mask_rand_char_on_broken_file() {
    let out = run(bin().args(["mask", "--strategy", "rand_char", "--n", "5"]).arg(fixture("broken.py")));
    assert!(out.status.success());
    let syntax = run(bin().args(["mask", "--strategy", "single_node"]).arg(fixture("broken.py")));
    assert_eq!(syntax.status.code(), Some(1));
}

#[test]
fn mask_unreadable_file_fails() {
    let out = run(bin().args(["mask", "/nonexistent/file.py"]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_fim_rate_zero_is_all_l2r() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    write_corpus(&corpus, &astfim_core::synth::corpus(50, &["python", "rust", "go"], 1));
    let out_path = dir.path().join("out.jsonl");
    let out = run(bin().args(["gen", "--fim-rate", "0", "--seed", "3", "-o"]).arg(&out_path).arg(&corpus));
    assert!(out.status.success());
    let recs: Vec<TrainingRecord> = read_jsonl(&out_path);
    assert_eq!(recs.len(), 50);
    assert!(recs.iter().all(|r| r.kind == astfim_core::RecordKind::L2r && r.text.ends_with("[EOT]")));
}

#[test]
fn gen_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("src");
    for d in astfim_core::synth::corpus(120, astfim_core::synth::SYNTH_LANGUAGES, 5) {
        let p = corpus.join(&d.path);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, &d.content).unwrap();
    }
    let outputs: Vec<Vec<u8>> = ["1", "1", "4"]
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let o = dir.path().join(format!("o{i}.jsonl"));
            let out = run(bin().args(["gen", "--seed", "11", "--workers", w, "-o"]).arg(&o).arg(&corpus));
            assert!(out.status.success());
            std::fs::read(&o).unwrap()
        })
        .collect();
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn gen_manifest_replays_run() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    write_corpus(&corpus, &astfim_core::synth::corpus(40, &["java", "cpp"], 2));
    let first = dir.path().join("a.jsonl");
    let out = run(bin()
        .args(["gen", "--seed", "99", "--psm-fraction", "0.2", "--context-budget", "200", "-o"])
        .arg(&first)
        .arg(&corpus));
    assert!(out.status.success());
    let manifest = dir.path().join("a.jsonl.manifest.json");
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m["config"]["seed"], 99);
    assert_eq!(m["inputs"][0]["items"], 40);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    let second = dir.path().join("b.jsonl");
    let out = run(bin().arg("gen").arg("--config").arg(&manifest).arg("-o").arg(&second).arg(&corpus));
    assert!(out.status.success());
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn gen_default_config_realizes_fim_rate() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    write_corpus(&corpus, &astfim_core::synth::corpus(20_000, &["python", "javascript", "go", "rust"], 17));
    let out_path = dir.path().join("out.jsonl");
    let out = run(bin().args(["gen", "--seed", "7", "-o"]).arg(&out_path).arg(&corpus));
    assert!(out.status.success());
    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out.jsonl.stats.json")).unwrap()).unwrap();
    let rate = stats["rates"]["fim_rate"].as_f64().unwrap();
    assert!((rate - 0.7).abs() <= 0.01, "fim rate {rate}");
    assert_eq!(stats["rates"]["parse_validity_rate"].as_f64(), Some(1.0));
}

#[test]
fn gen_empty_corpus_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().arg("gen").arg("-o").arg(dir.path().join("o.jsonl")).arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[mix]\nfim_rate = 1.5\n").unwrap();
    let out = run(bin().arg("gen").arg("--config").arg(&cfg).arg("-o").arg(dir.path().join("o")).arg(dir.path()));
    assert_eq!(out.status.code(), Some(1));
}

fn golden_examples() -> Vec<BenchExample> {
    read_jsonl(&bench_fixture("expected.jsonl"))
}

#[test]
fn bench_build_from_case_directory_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("bench.jsonl");
    let out = run(bin().args(["bench", "build", "--pairs"]).arg(bench_fixture("cases")).arg("-o").arg(&out_path));
    assert!(out.status.success());
    let got: Vec<BenchExample> = read_jsonl(&out_path);
    assert_eq!(got, golden_examples());
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 add, 2 edit"));
    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("bench.jsonl.stats.json")).unwrap()).unwrap();
    assert_eq!(stats["total"], serde_json::json!({"add": 3, "edit": 2}));
    assert_eq!(stats["reference"], serde_json::json!({"add": 17879, "edit": 13922}));
}

fn git(repo: &Path, args: &[&str], date: &str) {
    let status = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(args)
        .env("GIT_AUTHOR_NAME", "Fixture")
        .env("GIT_AUTHOR_EMAIL", "fixture@example.com")
        .env("GIT_COMMITTER_NAME", "Fixture")
        .env("GIT_COMMITTER_EMAIL", "fixture@example.com")
        .env("GIT_AUTHOR_DATE", date)
        .env("GIT_COMMITTER_DATE", date)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("HOME", repo)
        .status()
        .unwrap();
    assert!(status.success(), "git {args:?}");
}

/// Replays the case directory as history: one commit adding every `before`
/// file, then one commit per case applying its `after` file.
fn fixture_repo(root: &Path) -> PathBuf {
    let repo = root.join("fixture");
    std::fs::create_dir_all(&repo).unwrap();
    git(&repo, &["init", "-q"], "2024-02-01T10:00:00Z");
    let cases = bench_fixture("cases");
    let mut metas = Vec::new();
    for c in ["c1", "c2", "c3", "c4"] {
        let meta: serde_json::Value =
            serde_json::from_slice(&std::fs::read(cases.join(c).join("meta.json")).unwrap()).unwrap();
        let path = meta["path"].as_str().unwrap().to_string();
        let ext = Path::new(&path).extension().unwrap().to_str().unwrap().to_string();
        let target = repo.join(&path);
        std::fs::create_dir_all(target.parent().unwrap()).unwrap();
        std::fs::copy(cases.join(c).join(format!("before.{ext}")), &target).unwrap();
        metas.push((c, path, ext, meta["timestamp"].as_str().unwrap().to_string()));
    }
    git(&repo, &["add", "-A"], "2024-02-01T10:00:00Z");
    git(&repo, &["commit", "-q", "-m", "initial"], "2024-02-01T10:00:00Z");
    for (c, path, ext, date) in metas {
        std::fs::copy(cases.join(c).join(format!("after.{ext}")), repo.join(&path)).unwrap();
        git(&repo, &["commit", "-q", "-a", "-m", c], &date);
    }
    repo
}

#[test]
fn bench_build_from_git_history() {
    let dir = tempfile::tempdir().unwrap();
    let repo = fixture_repo(dir.path());
    let out_path = dir.path().join("bench.jsonl");
    let out = run(bin()
        .args(["bench", "build", "--since", "2024-03-01", "--until", "2024-03-31", "--langs", "python,rust,go", "--repos"])
        .arg(&repo)
        .arg("-o")
        .arg(&out_path));
    assert!(out.status.success());
    let got: Vec<BenchExample> = read_jsonl(&out_path);
    let mut golden = golden_examples();
    // Commit hashes differ from the case names, so compare content in path order.
    let key = |e: &BenchExample| (e.metadata.path.clone(), e.metadata.hunk_index);
    let mut got_sorted = got.clone();
    got_sorted.sort_by_key(key);
    golden.sort_by_key(key);
    assert_eq!(got.len(), 5);
    for (g, e) in got_sorted.iter().zip(&golden) {
        assert_eq!(g.metadata.repo, "fixture");
        assert_eq!((g.split, &g.prefix, &g.middle, &g.suffix, &g.original), (e.split, &e.prefix, &e.middle, &e.suffix, &e.original));
    }

    let narrow = dir.path().join("narrow.jsonl");
    let out = run(bin().args(["bench", "build", "--until", "2024-03-02", "--repos"]).arg(&repo).arg("-o").arg(&narrow));
    assert!(out.status.success());
    assert_eq!(read_jsonl::<BenchExample>(&narrow).len(), 2);
}

#[test]
fn bench_build_nothing_matched_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["bench", "build", "--langs", "kotlin", "--pairs"])
        .arg(bench_fixture("cases"))
        .arg("-o")
        .arg(dir.path().join("b.jsonl")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_ppl_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let prompts = dir.path().join("p.jsonl");
    let scores = dir.path().join("s.jsonl");
    let ln2 = std::f64::consts::LN_2;
    std::fs::write(
        &prompts,
        [
            serde_json::json!({"id": "a", "prompt": "", "middle": "ab", "split": "add", "lang": "python"}),
            serde_json::json!({"id": "b", "prompt": "", "middle": "abcd", "split": "edit", "lang": "python"}),
            serde_json::json!({"id": "c", "prompt": "", "middle": "xyz", "split": "edit", "lang": "rust"}),
        ]
        .map(|v| v.to_string())
        .join("\n"),
    )
    .unwrap();
    std::fs::write(
        &scores,
        [
            // ppl = exp(ln 2 / 2) = sqrt 2
            serde_json::json!({"id": "a", "tokens": [{"text": "ab", "logprob": -ln2}]}),
            // ppl = exp(2 / 4) = e^0.5
            serde_json::json!({"id": "b", "tokens": [{"text": "ab", "logprob": -1.0}, {"text": "cd", "logprob": -1.0}]}),
            // ppl = 1
            serde_json::json!({"id": "c", "tokens": [{"text": "xyz", "logprob": 0.0}]}),
        ]
        .map(|v| v.to_string())
        .join("\n"),
    )
    .unwrap();
    let per_example = dir.path().join("ppl.jsonl");
    let out = run(bin()
        .args(["eval", "ppl", "--group-by", "split", "--format", "json", "--prompts"])
        .arg(&prompts)
        .arg("--scores")
        .arg(&scores)
        .arg("--out")
        .arg(&per_example));
    assert!(out.status.success());
    let recs: Vec<serde_json::Value> = read_jsonl(&per_example);
    let ppl = |id: &str| recs.iter().find(|r| r["id"] == id).unwrap()["ppl"].as_f64().unwrap();
    assert!((ppl("a") - 2f64.sqrt()).abs() < 1e-12);
    assert!((ppl("b") - 0.5f64.exp()).abs() < 1e-12);
    assert!((ppl("c") - 1.0).abs() < 1e-12);
    let groups: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(groups.len(), 2);
    let edit = groups.iter().find(|g| g["group"][0] == "edit").unwrap();
    assert_eq!(edit["count"], 2);
    assert!((edit["mean_ppl"].as_f64().unwrap() - (0.5f64.exp() + 1.0) / 2.0).abs() < 1e-12);
    // pooled: exp(2 / 7)
    assert!((edit["pooled_ppl"].as_f64().unwrap() - (2.0f64 / 7.0).exp()).abs() < 1e-12);
}

#[test]
fn eval_end_to_end_with_ngram_scorer() {
    let dir = tempfile::tempdir().unwrap();
    let bench = dir.path().join("bench.jsonl");
    assert!(run(bin().args(["bench", "build", "--pairs"]).arg(bench_fixture("cases")).arg("-o").arg(&bench))
        .status
        .success());
    for format in ["psm", "l2r"] {
        let prompts = dir.path().join(format!("{format}.prompts.jsonl"));
        let scores = dir.path().join(format!("{format}.scores.jsonl"));
        assert!(run(bin().args(["eval", "prompts", "--format", format, "--bench"]).arg(&bench).arg("-o").arg(&prompts))
            .status
            .success());
        assert!(run(bin().args(["eval", "ngram", "--prompts"]).arg(&prompts).arg("-o").arg(&scores)).status.success());
        let out = run(bin()
            .args(["eval", "ppl", "--group-by", "split,lang", "--prompts"])
            .arg(&prompts)
            .arg("--scores")
            .arg(&scores));
        assert!(out.status.success());
        let table = String::from_utf8(out.stdout).unwrap();
        assert!(table.starts_with("| split | lang | n |"), "{table}");
        assert_eq!(table.lines().count(), 2 + 5);
    }
    let psm: Vec<serde_json::Value> = read_jsonl(&dir.path().join("psm.prompts.jsonl"));
    let c2 = psm.iter().find(|p| p["id"] == "fixture@c2:src/g.py#0").unwrap();
    assert_eq!(c2["prompt"].as_str().unwrap(), std::fs::read_to_string(bench_fixture("c2_conflict_prompt.txt")).unwrap());
}

#[test]
fn stats_on_empty_dir_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().args(["stats", "--format", "json"]).arg(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["total"]["files"], 0);
    assert_eq!(v["total"]["bytes"], 0);
    assert!(v["parse_validity_rate"].is_null());
}

#[test]
fn stats_counts_valid_and_broken_files() {
    let out = run(bin().args(["stats", "--format", "json"]).arg(fixture("")));
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["languages"]["python"]["files"], 2);
    assert_eq!(v["languages"]["python"]["parse_valid"], 1);
    assert_eq!(v["languages"]["python"]["parse_invalid"], 1);
    assert_eq!(v["parse_validity_rate"], 0.5);
}
