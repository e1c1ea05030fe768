use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use chunkspace::Method;
use chunkspace_cli::config::GridSpec;
use chunkspace_cli::matrix::{run_cells, write_correlations, write_tables};
use chunkspace_cli::{execute, DatasetRef, ExperimentConfig, Ordering, Stage};
use tempfile::TempDir;

const TOPICS: [&str; 4] = [
    "river boat current bank fish water",
    "engine piston fuel spark gear crank",
    "garden seed soil bloom root leaf",
    "market price trade coin buyer stall",
];

fn paragraph(topic: usize, n: usize) -> String {
    let words: Vec<&str> = TOPICS[topic].split(' ').collect();
    (0..3)
        .map(|s| {
            let w: Vec<&str> = (0..6).map(|i| words[(n + s * 5 + i * 7) % words.len()]).collect();
            let mut sent = w.join(" ");
            sent[..1].make_ascii_uppercase();
            sent + "."
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn beir(dir: &Path) -> PathBuf {
    let root = dir.join("tinybeir");
    fs::create_dir_all(root.join("qrels")).unwrap();
    let mut corpus = String::new();
    for d in 0..8 {
        let body = (0..3).map(|p| paragraph(d % 4, d * 3 + p)).collect::<Vec<_>>().join("\n\n");
        corpus += &serde_json::json!({"_id": format!("d{d}"), "title": "", "text": body}).to_string();
        corpus.push('\n');
    }
    fs::write(root.join("corpus.jsonl"), corpus).unwrap();
    let mut queries = String::new();
    let mut qrels = String::from("query-id\tcorpus-id\tscore\n");
    for (q, topic) in TOPICS.iter().enumerate() {
        let text = topic.split(' ').take(3).collect::<Vec<_>>().join(" ");
        queries += &serde_json::json!({"_id": format!("q{q}"), "text": text}).to_string();
        queries.push('\n');
        qrels += &format!("q{q}\td{q}\t1\nq{q}\td{}\t2\n", q + 4);
    }
    fs::write(root.join("queries.jsonl"), queries).unwrap();
    fs::write(root.join("qrels/test.tsv"), qrels).unwrap();
    root
}

fn gutenqa(dir: &Path) -> PathBuf {
    let root = dir.join("tinyguten");
    fs::create_dir_all(&root).unwrap();
    let mut books = String::from("book_name\tchapter_paragraph_index\tparagraph_text\n");
    let mut qa = String::from("question\tbook_name\tground_truth_paragraph\n");
    for b in 0..2 {
        for p in 0..6 {
            let text = paragraph((b + p) % 4, p);
            books += &format!("book{b}\t{p}\t{text}\n");
            if p % 2 == 0 {
                let question = TOPICS[(b + p) % 4].split(' ').take(2).collect::<Vec<_>>().join(" ");
                qa += &format!("{question}?\tbook{b}\t{text}\n");
            }
        }
    }
    fs::write(root.join("books.tsv"), books).unwrap();
    fs::write(root.join("qa.tsv"), qa).unwrap();
    root
}

fn config(dataset: &Path, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        dataset: Some(DatasetRef::detect(dataset).unwrap()),
        out: out.to_owned(),
        ..Default::default()
    };
    cfg.chunker.fixed_size_tokens = 16;
    cfg
}

#[test]
fn report_is_deterministic_across_output_dirs() {
    let tmp = TempDir::new().unwrap();
    let data = beir(tmp.path());
    let a = execute(&config(&data, &tmp.path().join("a")), Stage::Report).unwrap();
    let b = execute(&config(&data, &tmp.path().join("b")), Stage::Report).unwrap();
    let read = |o: &chunkspace_cli::RunOutputs| fs::read(o.run_dir.join("report.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(fs::read(a.run_dir.join("run.trec")).unwrap(), fs::read(b.run_dir.join("run.trec")).unwrap());
    assert_eq!(a.report.unwrap().metric_name, "ndcg@10");
}

#[test]
fn rerun_hits_every_cache() {
    let tmp = TempDir::new().unwrap();
    let data = gutenqa(tmp.path());
    let cfg = config(&data, &tmp.path().join("out"));
    let first = execute(&cfg, Stage::Report).unwrap();
    assert!(first.stages.iter().all(|s| !s.cache_hit));
    let before = fs::read(first.run_dir.join("report.json")).unwrap();
    let second = execute(&cfg, Stage::Report).unwrap();
    assert!(second.all_cached(), "{:?}", second.stages.iter().map(|s| (s.stage, s.cache_hit)).collect::<Vec<_>>());
    assert_eq!(fs::read(second.run_dir.join("report.json")).unwrap(), before);
    assert_eq!(second.report.unwrap().metric_name, "dcg@10");
}

#[test]
fn changing_the_method_reuses_ingest_only() {
    let tmp = TempDir::new().unwrap();
    let data = beir(tmp.path());
    let mut cfg = config(&data, &tmp.path().join("out"));
    execute(&cfg, Stage::Chunk).unwrap();
    cfg.method = Method::Sentence;
    let out = execute(&cfg, Stage::Chunk).unwrap();
    let hits: Vec<bool> = out.stages.iter().map(|s| s.cache_hit).collect();
    assert_eq!(hits, vec![true, false]);
}

#[test]
fn zero_context_makes_orderings_agree() {
    let tmp = TempDir::new().unwrap();
    let data = beir(tmp.path());
    let mut cfg = config(&data, &tmp.path().join("out"));
    cfg.embedder.context_mix_lambda = 0.0;
    let pre = execute(&cfg, Stage::Report).unwrap().report.unwrap();
    cfg.ordering = Ordering::Contextualized;
    let con = execute(&cfg, Stage::Report).unwrap().report.unwrap();
    assert!((pre.aggregate - con.aggregate).abs() < 1e-6);
    for (q, v) in &pre.per_query {
        assert!((v - con.per_query[q]).abs() < 1e-6, "{q}");
    }
}

#[test]
fn two_by_two_matrix_writes_tables() {
    let tmp = TempDir::new().unwrap();
    let data = beir(tmp.path());
    let out = tmp.path().join("out");
    let mut cfg = config(&data, &out);
    cfg.grid = Some(GridSpec {
        methods: vec![Method::Fixed, Method::Paragraph],
        orderings: vec![Ordering::Pre, Ordering::Contextualized],
        workers: 2,
        ..Default::default()
    });
    let results = run_cells(&cfg, Stage::Report).unwrap();
    assert_eq!(results.len(), 4);
    assert!(results.iter().all(|r| r.succeeded()));
    let summary = write_tables(&results, &out.join("tables")).unwrap();
    assert_eq!(summary.failed, 0);
    let rel = fs::read_to_string(out.join("tables/relative_change_reference.tsv")).unwrap();
    assert_eq!(rel.lines().count(), 3, "{rel}");
    assert!(rel.lines().skip(1).all(|l| l.ends_with('%') || l.ends_with("%*")), "{rel}");
    let eff = fs::read_to_string(out.join("tables/effectiveness_reference_pre.tsv")).unwrap();
    assert!(eff.starts_with("run\ttinybeir\n"), "{eff}");

    let written = write_correlations(&results, &out.join("correlations")).unwrap();
    assert_eq!(written.len(), 4);
    let scatter = fs::read_to_string(out.join("correlations/scatter_reference_pre_in_corpus.tsv")).unwrap();
    assert_eq!(scatter.lines().count(), 1 + 2 * 4);
}

#[test]
fn unreachable_llm_fails_one_cell_and_keeps_the_rest() {
    let tmp = TempDir::new().unwrap();
    let data = beir(tmp.path());
    let out = tmp.path().join("out");
    let mut cfg = config(&data, &out);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    cfg.llm.endpoint = Some(format!("http://127.0.0.1:{port}/v1/chat/completions"));
    cfg.llm.max_retries = 1;
    cfg.llm.backoff_ms = 1;
    cfg.grid = Some(GridSpec {
        methods: vec![Method::Fixed, Method::Lumber],
        orderings: vec![Ordering::Pre, Ordering::Contextualized],
        ..Default::default()
    });
    let results = run_cells(&cfg, Stage::Report).unwrap();
    let failed: Vec<_> = results.iter().filter(|r| !r.succeeded()).collect();
    assert_eq!(failed.len(), 2);
    assert!(failed.iter().all(|r| r.cell.config.method == Method::Lumber));
    let err = failed[0].outcome.as_ref().unwrap_err();
    assert!(err.contains("stage `chunk` failed"), "{err}");
    let summary = write_tables(&results, &out.join("tables")).unwrap();
    assert_eq!(summary.failed, 2);
    let eff = fs::read_to_string(out.join("tables/effectiveness_reference_pre.tsv")).unwrap();
    assert!(eff.contains("lumber\tFAILED"), "{eff}");
    let rel = fs::read_to_string(out.join("tables/relative_change_reference.tsv")).unwrap();
    assert!(rel.contains("lumber\tn/a"), "{rel}");
    // No partial chunk artifact may be left looking complete.
    let chunk_cache = out.join("cache/chunk");
    for entry in fs::read_dir(chunk_cache).unwrap() {
        let dir = entry.unwrap().path();
        if !dir.to_string_lossy().ends_with(".partial") {
            assert!(dir.join("chunks.jsonl").is_file());
        }
    }
}

#[test]
fn config_file_and_binary() {
    let tmp = TempDir::new().unwrap();
    let data = beir(tmp.path());
    let toml = format!(
        "method = \"sentence\"\nordering = \"con\"\nk = 5\nout = \"out\"\n\n[dataset]\nkind = \"beir\"\nname = \"tiny\"\npath = \"{}\"\n",
        data.file_name().unwrap().to_string_lossy()
    );
    let path = tmp.path().join("exp.toml");
    fs::write(&path, toml).unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.out, tmp.path().join("out"));
    assert_eq!(cfg.run_tag(), "tiny-reference-sentence-contextualized");

    let bin = env!("CARGO_BIN_EXE_chunkspace");
    let run = Command::new(bin).args(["--config", path.to_str().unwrap(), "run"]).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.starts_with("tiny-reference-sentence-contextualized\tndcg@5\t"), "{stdout}");
    let published = tmp.path().join("out/runs/tiny-reference-sentence-contextualized");
    for f in ["run.trec", "report.json", "per_query.jsonl", "manifest.json"] {
        assert!(published.join(f).is_file(), "{f}");
    }

    let report = Command::new(bin).args(["--config", path.to_str().unwrap(), "report"]).output().unwrap();
    assert!(report.status.success());
    let json: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(json["metric_name"], "ndcg@5");
    assert!(String::from_utf8_lossy(&report.stderr).contains("cached"));

    let bad = Command::new(bin)
        .args(["--dataset", tmp.path().join("missing").to_str().unwrap(), "--out"])
        .arg(tmp.path().join("o2"))
        .arg("ingest")
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));

    let remote = Command::new(bin)
        .args(["--dataset", data.to_str().unwrap(), "--backend", "remote", "--endpoint", "http://127.0.0.1:9", "--out"])
        .arg(tmp.path().join("o3"))
        .arg("embed")
        .output()
        .unwrap();
    assert!(!remote.status.success());
    let err = String::from_utf8_lossy(&remote.stderr);
    assert!(err.contains("stage `"), "{err}");
}
