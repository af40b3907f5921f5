use vmpost_harness::experiments::lda::{run_lda, simulate_corpus, with_outlier};
use vmpost_harness::output::KlRow;
use vmpost_harness::{ExperimentConfig, ExperimentKind};

fn kl(rows: &[KlRow], len: usize, method: &str) -> f64 {
    rows.iter()
        .find(|r| r.outlier_len == len && r.method == method)
        .unwrap()
        .mean_kl
}

#[test]
fn default_run_reproduces_the_qualitative_picture() {
    let cfg = ExperimentConfig::defaults(ExperimentKind::Lda);
    let (rows, timing) = run_lda(&cfg).unwrap();
    for r in &rows {
        println!("{:>4} {} {:.4}", r.outlier_len, r.method, r.mean_kl);
    }
    for t in &timing {
        println!("{} {:.2}s", t.method, t.seconds);
    }
    assert!(rows.iter().all(|r| r.mean_kl >= 0.0 && r.replications == 20));

    let (vb0, vm0) = (kl(&rows, 0, "vb"), kl(&rows, 0, "vm"));
    assert!(vb0 <= 2.0 * vm0 && vm0 <= 2.0 * vb0, "length 0: vb {vb0}, vm {vm0}");
    let longest = *cfg.outlier_lengths.iter().max().unwrap();
    let (vb, vm) = (kl(&rows, longest, "vb"), kl(&rows, longest, "vm"));
    assert!(vm <= vb, "length {longest}: vb {vb}, vm {vm}");
}

#[test]
fn corpus_has_n_documents_with_the_outlier_last() {
    let cfg = ExperimentConfig::defaults(ExperimentKind::Lda);
    let corpus = simulate_corpus(&cfg, 3).unwrap();
    assert_eq!(corpus.docs.len(), cfg.n - 1);
    for row in corpus.topics.row_iter() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
    let docs = with_outlier(&corpus, 40);
    assert_eq!(docs.len(), cfg.n);
    assert_eq!(docs.last().unwrap(), &vec![40, 0, 0, 0]);
    assert_eq!(simulate_corpus(&cfg, 3).unwrap(), corpus);
}
