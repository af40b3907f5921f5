//! Topic recovery in LDA when one document is replaced by a long run of a
//! single word.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use vmpost_core::median::weiszfeld_median;
use vmpost_core::variational::{cavi_lda, sample_dirichlet_rows, CaviOptions, LdaPrior, LdaVariationalState};
use vmpost_core::{make_partition, DiscreteMeasure, RbfKernel, SubsetPosteriorSet};

use super::{derive_seed, Timer};
use crate::config::{ExperimentConfig, Method};
use crate::error::Result;
use crate::output::{KlRow, TimingRow};

const WEISZFELD_EPS: f64 = 1e-8;

/// A simulated corpus: true topics and the regular documents' word counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub topics: DMatrix<f64>,
    pub docs: Vec<Vec<u32>>,
}

fn categorical<R: Rng>(probs: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if u < p {
            return i;
        }
        u -= p;
        last = i;
    }
    last
}

/// Draws topics from `Dir(beta)` and `n - 1` regular documents with
/// `Poisson(mean_doc_len)` words and `Dir(alpha)` topic proportions.
pub fn simulate_corpus(cfg: &ExperimentConfig, seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topics = sample_dirichlet_rows(&DMatrix::from_element(cfg.topics, cfg.vocab, cfg.beta), &mut rng)?;
    let lengths = Poisson::new(cfg.mean_doc_len)
        .map_err(|e| crate::error::HarnessError::ConfigInvalid(format!("mean_doc_len: {e}")))?;
    let alpha = DMatrix::from_element(1, cfg.topics, cfg.alpha);
    let mut docs = Vec::with_capacity(cfg.n - 1);
    for _ in 0..cfg.n - 1 {
        let len = lengths.sample(&mut rng) as usize;
        let theta = sample_dirichlet_rows(&alpha, &mut rng)?;
        let mut counts = vec![0u32; cfg.vocab];
        for _ in 0..len {
            let z = categorical(theta.row(0).iter().cloned(), &mut rng);
            let w = categorical(topics.row(z).iter().cloned(), &mut rng);
            counts[w] += 1;
        }
        docs.push(counts);
    }
    Ok(Corpus { topics, docs })
}

/// The corpus documents followed by the outlier document: `len` copies of
/// word 0.
pub fn with_outlier(corpus: &Corpus, len: usize) -> Vec<Vec<u32>> {
    let mut docs = corpus.docs.clone();
    let mut outlier = vec![0u32; corpus.topics.ncols()];
    outlier[0] = len as u32;
    docs.push(outlier);
    docs
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

fn permute_rows(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(perm[i], j)])
}

/// Permutation of `a`'s rows closest to `b` in total L1 distance.
fn align(a: &DMatrix<f64>, b: &DMatrix<f64>, perms: &[Vec<usize>]) -> (Vec<usize>, f64) {
    perms
        .iter()
        .map(|p| (p.clone(), (permute_rows(a, p) - b).abs().sum()))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("at least one permutation")
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Mean over topics of `KL(estimate_k || smoothed truth_k)`, minimised over
/// topic relabellings.
pub fn mean_topic_kl(estimate: &DMatrix<f64>, truth: &DMatrix<f64>, smoothing: f64) -> f64 {
    let v = truth.ncols() as f64;
    let smooth = truth.map(|x| (x + smoothing) / (1.0 + v * smoothing));
    let k = truth.nrows();
    permutations(k)
        .iter()
        .map(|perm| {
            (0..k)
                .map(|t| {
                    let p: Vec<f64> = estimate.row(perm[t]).iter().cloned().collect();
                    let q: Vec<f64> = smooth.row(t).iter().cloned().collect();
                    kl(&p, &q)
                })
                .sum::<f64>()
                / k as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn prior(cfg: &ExperimentConfig) -> LdaPrior {
    LdaPrior {
        alpha: cfg.alpha,
        beta: cfg.beta,
    }
}

fn options(cfg: &ExperimentConfig) -> CaviOptions {
    CaviOptions {
        max_iters: cfg.cavi_max_iters,
        tol: cfg.cavi_tol,
    }
}

pub fn fit_mfvb(cfg: &ExperimentConfig, docs: &[Vec<u32>], seed: u64) -> Result<DMatrix<f64>> {
    Ok(cavi_lda(docs, cfg.topics, &prior(cfg), 1, &options(cfg), seed)?.topic_word_means())
}

/// VM estimate of the topic-word matrix: powered fits per document group,
/// topics aligned to the medoid group, posterior draws summarised as
/// discrete measures and combined by the RKHS geometric median.
pub fn fit_vm(cfg: &ExperimentConfig, docs: &[Vec<u32>], seed: u64) -> Result<DMatrix<f64>> {
    let m = cfg.groups;
    let plan = make_partition(docs.len(), m, seed)?;
    plan.validate()?;
    let groups = plan.split(docs)?;
    let seeds: Vec<u64> = (0..m).map(|j| derive_seed(seed, &[j as u64])).collect();
    let states = groups
        .par_iter()
        .zip(&seeds)
        .map(|(g, &s)| cavi_lda(g, cfg.topics, &prior(cfg), m, &options(cfg), s).map_err(Into::into))
        .collect::<Result<Vec<LdaVariationalState>>>()?;

    let perms = permutations(cfg.topics);
    let means: Vec<DMatrix<f64>> = states.iter().map(|s| s.topic_word_means()).collect();
    let medoid = (0..m)
        .map(|j| (j, (0..m).map(|i| align(&means[i], &means[j], &perms).1).sum::<f64>()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| j)
        .expect("at least one group");

    let mut measures = Vec::with_capacity(m);
    for (j, state) in states.iter().enumerate() {
        let (perm, _) = align(&means[j], &means[medoid], &perms);
        let lambda = permute_rows(&state.lambda, &perm);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seeds[j], &[u64::MAX]));
        let atoms = (0..cfg.phi_samples)
            .map(|_| {
                let draw = sample_dirichlet_rows(&lambda, &mut rng)?;
                Ok(DVector::from_iterator(draw.len(), draw.transpose().iter().cloned()))
            })
            .collect::<Result<Vec<_>>>()?;
        measures.push(DiscreteMeasure::uniform(atoms)?);
    }
    let kernel = RbfKernel::median_heuristic(&measures)?;
    let set = SubsetPosteriorSet::new(measures, plan.sizes(), seeds)?;
    let median = weiszfeld_median(&set, &kernel, WEISZFELD_EPS)?;
    let mean = median.result.mean();
    let (k, v) = (cfg.topics, cfg.vocab);
    let mut out = DMatrix::from_fn(k, v, |t, w| mean[t * v + w]);
    for mut row in out.row_iter_mut() {
        let total = row.sum();
        row /= total;
    }
    Ok(out)
}

pub fn fit_method(cfg: &ExperimentConfig, method: Method, docs: &[Vec<u32>], seed: u64) -> Result<DMatrix<f64>> {
    match method {
        Method::Vb => fit_mfvb(cfg, docs, seed),
        Method::Vm => fit_vm(cfg, docs, seed),
    }
}

pub fn run_lda(cfg: &ExperimentConfig) -> Result<(Vec<KlRow>, Vec<TimingRow>)> {
    cfg.validate()?;
    let corpora = (0..cfg.replications)
        .map(|rep| simulate_corpus(cfg, derive_seed(cfg.seed, &[rep as u64])))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut timers = vec![Timer::default(); cfg.methods.len()];
    for (li, &len) in cfg.outlier_lengths.iter().enumerate() {
        for (k, &method) in cfg.methods.iter().enumerate() {
            let kls = timers[k].time(|| {
                corpora
                    .par_iter()
                    .enumerate()
                    .map(|(rep, corpus)| {
                        let docs = with_outlier(corpus, len);
                        let fit_seed = derive_seed(cfg.seed, &[rep as u64, li as u64, 1 + k as u64]);
                        let est = fit_method(cfg, method, &docs, fit_seed)?;
                        Ok(mean_topic_kl(&est, &corpus.topics, cfg.kl_smoothing))
                    })
                    .collect::<Result<Vec<f64>>>()
            })?;
            rows.push(KlRow {
                outlier_len: len,
                method: method.name().to_string(),
                mean_kl: kls.iter().sum::<f64>() / kls.len() as f64,
                replications: kls.len(),
            });
        }
    }
    let timing = cfg
        .methods
        .iter()
        .zip(&timers)
        .map(|(m, t)| TimingRow {
            experiment: "lda".into(),
            method: m.name().into(),
            seconds: t.seconds(),
        })
        .collect();
    Ok((rows, timing))
}
