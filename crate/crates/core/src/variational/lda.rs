//! Mean-field coordinate-ascent VI for latent Dirichlet allocation on a
//! document-by-word count matrix.
//!
//! With likelihood power `m` the objective is that of the corpus in which
//! every document appears `m` times: the per-document terms of the ELBO are
//! multiplied by `m` and the topic-word statistics entering `lambda` are
//! scaled by `m`. The per-document updates for `phi` and `gamma` are the
//! usual ones.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{digamma, ln_gamma};

use super::CaviOptions;
use crate::error::{Error, Result};

const LOCAL_TOL: f64 = 1e-8;
const LOCAL_MAX_ITERS: usize = 100;

/// Symmetric Dirichlet hyperparameters: `alpha` for document-topic
/// proportions, `beta` for topic-word distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaPrior {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaVariationalState {
    /// K x V topic-word Dirichlet parameters.
    pub lambda: DMatrix<f64>,
    /// M x K document-topic Dirichlet parameters.
    pub gamma: DMatrix<f64>,
    /// Per document, a V x K matrix of responsibilities for each word type.
    pub phi: Vec<DMatrix<f64>>,
    pub power: usize,
    pub elbo_trace: Vec<f64>,
}

impl LdaVariationalState {
    pub fn topics(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn vocabulary(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn elbo(&self) -> Option<f64> {
        self.elbo_trace.last().copied()
    }

    /// Posterior mean of each topic's word distribution (rows of `lambda`
    /// normalised).
    pub fn topic_word_means(&self) -> DMatrix<f64> {
        let mut out = self.lambda.clone();
        for mut row in out.row_iter_mut() {
            let total = row.sum();
            row /= total;
        }
        out
    }

    /// One draw of the K x V topic-word matrix from `q`.
    pub fn sample_topic_words<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        sample_dirichlet_rows(&self.lambda, rng)
    }
}

/// Draws each row independently from a Dirichlet with that row's
/// parameters, via normalised gamma variates.
pub fn sample_dirichlet_rows<R: Rng + ?Sized>(params: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(params.nrows(), params.ncols());
    for i in 0..params.nrows() {
        let mut total = 0.0;
        for j in 0..params.ncols() {
            let g = Gamma::new(params[(i, j)], 1.0)
                .map_err(|e| Error::InvalidArgument(format!("Dirichlet parameter: {e}")))?;
            let v = g.sample(rng);
            out[(i, j)] = v;
            total += v;
        }
        if total > 0.0 {
            for j in 0..params.ncols() {
                out[(i, j)] /= total;
            }
        } else {
            // every gamma draw underflowed; fall back to the mean
            let row_sum: f64 = params.row(i).sum();
            for j in 0..params.ncols() {
                out[(i, j)] = params[(i, j)] / row_sum;
            }
        }
    }
    Ok(out)
}

fn expected_log_dirichlet_rows(params: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(params.nrows(), params.ncols());
    for i in 0..params.nrows() {
        let total = digamma(params.row(i).sum());
        for j in 0..params.ncols() {
            out[(i, j)] = digamma(params[(i, j)]) - total;
        }
    }
    out
}

fn ln_dirichlet_norm(params: impl Iterator<Item = f64> + Clone) -> f64 {
    ln_gamma(params.clone().sum()) - params.map(ln_gamma).sum::<f64>()
}

struct Corpus<'a> {
    counts: &'a [Vec<u32>],
    vocab: usize,
}

impl Corpus<'_> {
    /// Nonzero `(word, count)` pairs for document `d`.
    fn words(&self, d: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.counts[d]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(w, &c)| (w, c as f64))
    }
}

/// Coordinate ascent on the local factors of one document with `lambda`
/// held fixed; `gamma_row` is warm-started and updated in place.
fn update_document(
    corpus: &Corpus,
    d: usize,
    elog_beta: &DMatrix<f64>,
    alpha: f64,
    gamma_row: &mut [f64],
    phi: &mut DMatrix<f64>,
) {
    let k = gamma_row.len();
    let mut logits = vec![0.0; k];
    for _ in 0..LOCAL_MAX_ITERS {
        let total = digamma(gamma_row.iter().sum());
        let elog_theta: Vec<f64> = gamma_row.iter().map(|&g| digamma(g) - total).collect();
        for w in 0..corpus.vocab {
            for t in 0..k {
                logits[t] = elog_theta[t] + elog_beta[(t, w)];
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut norm = 0.0;
            for t in 0..k {
                logits[t] = (logits[t] - max).exp();
                norm += logits[t];
            }
            for t in 0..k {
                phi[(w, t)] = logits[t] / norm;
            }
        }
        let mut change = 0.0;
        for t in 0..k {
            let updated = alpha + corpus.words(d).map(|(w, c)| c * phi[(w, t)]).sum::<f64>();
            change += (updated - gamma_row[t]).abs();
            gamma_row[t] = updated;
        }
        if change / k as f64 <= LOCAL_TOL {
            break;
        }
    }
}

fn elbo(
    corpus: &Corpus,
    prior: &LdaPrior,
    power: f64,
    lambda: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    phi: &[DMatrix<f64>],
) -> f64 {
    let k = lambda.nrows();
    let v = corpus.vocab;
    let elog_beta = expected_log_dirichlet_rows(lambda);
    let elog_theta = expected_log_dirichlet_rows(gamma);
    let mut local = 0.0;
    let prior_theta = ln_gamma(k as f64 * prior.alpha) - k as f64 * ln_gamma(prior.alpha);
    for d in 0..gamma.nrows() {
        local += prior_theta;
        for t in 0..k {
            local += (prior.alpha - 1.0) * elog_theta[(d, t)];
        }
        for (w, c) in corpus.words(d) {
            for t in 0..k {
                let p = phi[d][(w, t)];
                if p > 0.0 {
                    local += c * p * (elog_theta[(d, t)] + elog_beta[(t, w)] - p.ln());
                }
            }
        }
        local -= ln_dirichlet_norm(gamma.row(d).iter().cloned());
        for t in 0..k {
            local -= (gamma[(d, t)] - 1.0) * elog_theta[(d, t)];
        }
    }
    let mut global = 0.0;
    let prior_beta = ln_gamma(v as f64 * prior.beta) - v as f64 * ln_gamma(prior.beta);
    for t in 0..k {
        global += prior_beta - ln_dirichlet_norm(lambda.row(t).iter().cloned());
        for w in 0..v {
            global += (prior.beta - lambda[(t, w)]) * elog_beta[(t, w)];
        }
    }
    power * local + global
}

fn update_lambda(corpus: &Corpus, prior: &LdaPrior, power: f64, phi: &[DMatrix<f64>], k: usize) -> DMatrix<f64> {
    let mut lambda = DMatrix::from_element(k, corpus.vocab, prior.beta);
    for (d, phi_d) in phi.iter().enumerate() {
        for (w, c) in corpus.words(d) {
            for t in 0..k {
                lambda[(t, w)] += power * c * phi_d[(w, t)];
            }
        }
    }
    lambda
}

/// Fits LDA with `k` topics to the M x V count matrix `docs`.
///
/// Initialisation draws a topic proportion vector per document from the
/// seeded generator and uses it as every token's responsibility; the fit
/// is therefore equivariant under permutations of the vocabulary.
pub fn cavi_lda(
    docs: &[Vec<u32>],
    k: usize,
    prior: &LdaPrior,
    power: usize,
    options: &CaviOptions,
    seed: u64,
) -> Result<LdaVariationalState> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one topic".into()));
    }
    if power == 0 {
        return Err(Error::InvalidArgument("power must be at least 1".into()));
    }
    if !(prior.alpha > 0.0 && prior.beta > 0.0) {
        return Err(Error::InvalidArgument("alpha and beta must be positive".into()));
    }
    let vocab = docs.first().map_or(0, Vec::len);
    if let Some(doc) = docs.iter().find(|d| d.len() != vocab) {
        return Err(Error::DimensionMismatch {
            expected: vocab,
            found: doc.len(),
        });
    }
    if vocab < 2 {
        return Err(Error::InvalidArgument("vocabulary must have at least two words".into()));
    }
    if docs.iter().all(|d| d.iter().all(|&c| c == 0)) {
        return Err(Error::EmptyCorpus);
    }
    let corpus = Corpus { counts: docs, vocab };
    let m = power as f64;
    let n_docs = docs.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = DMatrix::from_element(1, k, 1.0);
    let mut gamma = DMatrix::zeros(n_docs, k);
    let mut phi = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let theta = sample_dirichlet_rows(&uniform, &mut rng)?;
        let mut phi_d = DMatrix::zeros(vocab, k);
        for w in 0..vocab {
            phi_d.row_mut(w).copy_from(&theta.row(0));
        }
        let length: f64 = corpus.words(d).map(|(_, c)| c).sum();
        for t in 0..k {
            gamma[(d, t)] = prior.alpha + length * theta[(0, t)];
        }
        phi.push(phi_d);
    }
    let mut lambda = update_lambda(&corpus, prior, m, &phi, k);

    let mut trace: Vec<f64> = Vec::new();
    for _ in 0..options.max_iters.max(1) {
        let elog_beta = expected_log_dirichlet_rows(&lambda);
        for d in 0..n_docs {
            let mut row: Vec<f64> = gamma.row(d).iter().cloned().collect();
            update_document(&corpus, d, &elog_beta, prior.alpha, &mut row, &mut phi[d]);
            for t in 0..k {
                gamma[(d, t)] = row[t];
            }
        }
        lambda = update_lambda(&corpus, prior, m, &phi, k);
        let value = elbo(&corpus, prior, m, &lambda, &gamma, &phi);
        if !value.is_finite() {
            return Err(Error::InvalidState("non-finite ELBO".into()));
        }
        let gain = trace.last().map(|&last| value - last);
        trace.push(value);
        if gain.is_some_and(|g| g < options.tol) {
            break;
        }
    }
    Ok(LdaVariationalState {
        lambda,
        gamma,
        phi,
        power,
        elbo_trace: trace,
    })
}
