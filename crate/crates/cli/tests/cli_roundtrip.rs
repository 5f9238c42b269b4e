//! End-to-end subcommand tests through the real binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn medcap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medcap"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path
}

const FIXTURE_CSV: &str = "id,caption,cuis\n\
im1,62-year-old woman with pleural effusion,pleural effusion\n\
im2,grey matter of 1 cm \u{d7} 1.3 cm seen,grey matter\n\
im3,late sagittal t2-weighted mri,mri\n";

#[test]
fn clean_writes_rows_audit_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "data.csv", FIXTURE_CSV);
    let out = medcap(
        dir.path(),
        &["clean", "--in", "data.csv", "--out", "cleaned.csv"],
    );
    assert!(out.status.success(), "{out:?}");

    let cleaned = fs::read_to_string(dir.path().join("cleaned.csv")).unwrap();
    let rows: Vec<&str> = cleaned.lines().collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1], "im1,with pleural effusion,pleural effusion");
    assert_eq!(rows[2], "im2,grey matter seen,grey matter");
    assert_eq!(rows[3], "im3,late sagittal t2-weighted mri,mri");

    let audit = fs::read_to_string(dir.path().join("cleaned.csv.audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 3);
    assert!(audit.contains("demographic-phrase"));
    assert!(audit.contains("measurement-phrase"));

    assert!(dir.path().join("cleaned.csv.manifest.json").exists());
}

#[test]
fn clean_with_no_rules_copies_bytes() {
    let dir = tempfile::tempdir().unwrap();
    // awkward quoting and spacing that a rewrite could normalize
    let original = "id,caption,cuis\nim1,\"odd,  spacing\",C1\n";
    write(dir.path(), "data.csv", original);
    let out = medcap(
        dir.path(),
        &[
            "clean",
            "--in",
            "data.csv",
            "--out",
            "copy.csv",
            "--rules",
            "none",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let copied = fs::read(dir.path().join("copy.csv")).unwrap();
    assert_eq!(copied, original.as_bytes());
}

#[test]
fn clean_rejects_corrupt_rows_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "data.csv",
        "id,caption,cuis\nim1,fine,\nim2,broken\n",
    );
    let out = medcap(
        dir.path(),
        &["clean", "--in", "data.csv", "--out", "x.csv"],
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
}

#[test]
fn clean_rejects_duplicate_ids_naming_both_rows() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "data.csv",
        "id,caption,cuis\nim1,a,\nim2,b,\nim3,c,\nim1,d,\n",
    );
    let out = medcap(dir.path(), &["clean", "--in", "data.csv", "--out", "x.csv"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("lines 2 and 5"),
        "stderr: {stderr}"
    );
}

#[test]
fn lexicon_counts_match_a_hand_count() {
    let dir = tempfile::tempdir().unwrap();
    // chest in 3 samples, mri in 2, lesion in 1 (concept-marked only)
    write(
        dir.path(),
        "data.csv",
        "id,caption,cuis\n\
         a,chest mri shows chest,chest;mri\n\
         b,chest lesion,chest;lesion\n\
         c,mri of the chest,chest;mri\n",
    );
    let out = medcap(
        dir.path(),
        &[
            "lexicon",
            "--in",
            "data.csv",
            "--out",
            "lex.tsv",
            "--min-count",
            "1",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let lex = fs::read_to_string(dir.path().join("lex.tsv")).unwrap();
    assert_eq!(
        lex,
        "#M=3 min_count=1\nchest\t3\nlesion\t1\nmri\t2\n"
    );

    // min-count filters
    let out = medcap(
        dir.path(),
        &[
            "lexicon",
            "--in",
            "data.csv",
            "--out",
            "lex2.tsv",
            "--min-count",
            "2",
        ],
    );
    assert!(out.status.success());
    let lex2 = fs::read_to_string(dir.path().join("lex2.tsv")).unwrap();
    assert_eq!(lex2, "#M=3 min_count=2\nchest\t3\nmri\t2\n");
}

#[test]
fn lexicon_on_empty_corpus_fails() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "data.csv", "id,caption,cuis\n");
    let out = medcap(
        dir.path(),
        &["lexicon", "--in", "data.csv", "--out", "lex.tsv"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn weights_prints_f_min_as_one() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "lex.tsv",
        "#M=100 min_count=2\ncommon\t40\nrare\t2\n",
    );
    let out = medcap(
        dir.path(),
        &["weights", "--in", "lex.tsv", "--out", "w.tsv"],
    );
    assert!(out.status.success(), "{out:?}");
    let w = fs::read_to_string(dir.path().join("w.tsv")).unwrap();
    assert!(w.contains("rare\t1.000000"), "{w}");
}

#[test]
fn weights_decrease_down_the_frequency_ranking() {
    let dir = tempfile::tempdir().unwrap();
    // the ten most frequent terms of the reference corpus
    write(
        dir.path(),
        "lex.tsv",
        "#M=60918 min_count=5\n\
         abdomen\t3201\nartery\t4997\nbone\t2051\nchest\t8761\nlesion\t3958\n\
         lobe\t2489\nlung\t2806\nradiography\t5038\ntomography\t7822\nultrasound\t2383\n",
    );
    let out = medcap(
        dir.path(),
        &["weights", "--in", "lex.tsv", "--out", "w.tsv"],
    );
    assert!(out.status.success(), "{out:?}");
    let w = fs::read_to_string(dir.path().join("w.tsv")).unwrap();
    let mut weights: Vec<(String, f64)> = w
        .lines()
        .skip(1)
        .map(|l| {
            let (t, v) = l.split_once('\t').unwrap();
            (t.to_string(), v.parse().unwrap())
        })
        .collect();
    let by_name: std::collections::HashMap<String, f64> = weights.drain(..).collect();
    let ranking = [
        "chest",
        "tomography",
        "radiography",
        "artery",
        "lesion",
        "abdomen",
        "lung",
        "lobe",
        "ultrasound",
        "bone",
    ];
    for pair in ranking.windows(2) {
        assert!(
            by_name[pair[0]] < by_name[pair[1]],
            "{} should weigh less than {}",
            pair[0],
            pair[1]
        );
    }
    assert_eq!(by_name["bone"], 1.0);
}

#[test]
fn weights_on_missing_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = medcap(
        dir.path(),
        &["weights", "--in", "nope.tsv", "--out", "w.tsv"],
    );
    assert!(!out.status.success());
}

#[test]
fn score_identical_files_attain_maxima() {
    let dir = tempfile::tempdir().unwrap();
    let captions = "chest x-ray shows a lesion\nultrasound of the liver\nbrain mri without contrast\n";
    write(dir.path(), "c.txt", captions);
    write(dir.path(), "r.txt", captions);
    let out = medcap(
        dir.path(),
        &["score", "--candidates", "c.txt", "--references", "r.txt"],
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("bleu1=1.000000"), "{stdout}");
    assert!(stdout.contains("rouge1=1.000000"));
    assert!(stdout.contains("rouge_l=1.000000"));
    assert!(stdout.contains("BERTScore  n/a"));

    // no --out: the run manifest goes to stderr instead of a file
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("\"subcommand\":\"score\"") && stderr.contains("sha256"),
        "stderr manifest missing: {stderr}"
    );
}

#[test]
fn score_matches_the_library_on_a_fixture() {
    use medcap_core::corpus::TokenSequence;
    use medcap_core::metrics::score_corpus;

    let dir = tempfile::tempdir().unwrap();
    let cands = "chest ct shows a nodule\npleural effusion on the left\nunremarkable head mri\n";
    let refs = "chest ct shows a small nodule\nleft pleural effusion\nnormal brain mri\n";
    write(dir.path(), "c.txt", cands);
    write(dir.path(), "r.txt", refs);
    let out = medcap(
        dir.path(),
        &["score", "--candidates", "c.txt", "--references", "r.txt"],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);

    let to_seqs = |text: &str, p: &str| -> Vec<TokenSequence> {
        text.lines()
            .enumerate()
            .map(|(i, l)| TokenSequence::from_text(l, format!("{p}{i}")))
            .collect()
    };
    let report = score_corpus(&to_seqs(cands, "c"), &to_seqs(refs, "r")).unwrap();
    for (key, value) in [
        ("bleu1", report.bleu1),
        ("rouge1", report.rouge1),
        ("rouge_l", report.rouge_l),
        ("cider", report.cider),
    ] {
        let line = format!("{key}={value:.6}");
        assert!(stdout.contains(&line), "missing {line} in:\n{stdout}");
    }
}

#[test]
fn score_rejects_line_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.txt", "one\n");
    write(dir.path(), "r.txt", "one\ntwo\n");
    let out = medcap(
        dir.path(),
        &["score", "--candidates", "c.txt", "--references", "r.txt"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lines"));
}

#[test]
fn train_demo_is_seed_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = medcap(
            dir.path(),
            &[
                "train-demo",
                "--n-samples",
                "60",
                "--epochs",
                "3",
                "--seed",
                "11",
                "--out",
                &format!("{name}.bin"),
                "--report",
                &format!("{name}.txt"),
            ],
        );
        assert!(out.status.success(), "{out:?}");
    }
    let a = fs::read(dir.path().join("a.bin")).unwrap();
    let b = fs::read(dir.path().join("b.bin")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        fs::read_to_string(dir.path().join("a.txt")).unwrap(),
        fs::read_to_string(dir.path().join("b.txt")).unwrap()
    );
}

#[test]
fn train_demo_ablate_emits_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = medcap(
        dir.path(),
        &[
            "train-demo",
            "--n-samples",
            "60",
            "--epochs",
            "3",
            "--ablate",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    for cell in ["full", "no_adapter", "no_mke", "no_both"] {
        assert!(stdout.contains(cell), "missing {cell} in:\n{stdout}");
    }
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("\"subcommand\":\"train-demo\""),
        "stderr manifest missing: {stderr}"
    );
}

#[test]
fn train_demo_defaults_encode_the_reference_hyperparameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = medcap(
        dir.path(),
        &[
            "train-demo",
            "--n-samples",
            "60",
            "--epochs",
            "2",
            "--report",
            "r.txt",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let manifest = fs::read_to_string(dir.path().join("r.txt.manifest.json")).unwrap();
    assert!(manifest.contains("\"beta\": \"0.5\""), "{manifest}");
    assert!(manifest.contains("\"alpha\": \"0.2\""));
    assert!(manifest.contains("\"rank\": \"8\""));
    assert!(manifest.contains("\"mke_norm\": \"full\""));
}
