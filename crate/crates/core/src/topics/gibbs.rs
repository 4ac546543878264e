use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{default_topic_names, TopicCorpus, TopicError, TopicModel, TopicModelParams};
use crate::seed::rng;

/// Averaged phi (K x V), averaged theta (D x K) and the final assignments.
pub type SamplerOutput = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<u32>>);

/// Collapsed Gibbs sampler over a [`TopicCorpus`].
///
/// Each document may be restricted to a subset of topics (Labeled LDA);
/// without restrictions this is plain LDA. The sampler is exposed so that
/// callers can drive sweeps one at a time and inspect the state.
pub struct GibbsSampler<'a> {
    docs: &'a [Vec<u32>],
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    allowed: Vec<Vec<u32>>,
    z: Vec<Vec<u32>>,
    ndk: Vec<Vec<u32>>,
    nkw: Vec<u32>,
    nk: Vec<u32>,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
    sweeps: usize,
}

impl<'a> GibbsSampler<'a> {
    /// `allowed[d]` lists the topics document `d` may use; `None` allows all.
    pub fn new(
        corpus: &'a TopicCorpus,
        k: usize,
        alpha: f64,
        beta: f64,
        allowed: Option<Vec<Vec<u32>>>,
        seed: u64,
    ) -> Self {
        let docs = corpus.docs();
        let v = corpus.n_terms();
        let allowed = allowed.unwrap_or_else(|| vec![(0..k as u32).collect(); docs.len()]);
        assert_eq!(allowed.len(), docs.len(), "one label set per document");
        assert!(allowed.iter().all(|a| !a.is_empty() && a.iter().all(|&t| (t as usize) < k)));
        let mut rng = rng(seed);
        let mut ndk = vec![vec![0u32; k]; docs.len()];
        let mut nkw = vec![0u32; k * v];
        let mut nk = vec![0u32; k];
        let z = docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.iter()
                    .map(|&w| {
                        let t = allowed[d][rng.gen_range(0..allowed[d].len())];
                        ndk[d][t as usize] += 1;
                        nkw[t as usize * v + w as usize] += 1;
                        nk[t as usize] += 1;
                        t
                    })
                    .collect()
            })
            .collect();
        Self { docs, k, v, alpha, beta, allowed, z, ndk, nkw, nk, rng, weights: vec![0.0; k], sweeps: 0 }
    }

    /// One full sweep over every token, in document order.
    pub fn step(&mut self) {
        let vbeta = self.v as f64 * self.beta;
        for d in 0..self.docs.len() {
            let allowed = &self.allowed[d];
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i] as usize;
                let old = self.z[d][i] as usize;
                self.ndk[d][old] -= 1;
                self.nkw[old * self.v + w] -= 1;
                self.nk[old] -= 1;

                let mut total = 0.0;
                for (j, &t) in allowed.iter().enumerate() {
                    let t = t as usize;
                    let p = (self.ndk[d][t] as f64 + self.alpha) * (self.nkw[t * self.v + w] as f64 + self.beta)
                        / (self.nk[t] as f64 + vbeta);
                    total += p;
                    self.weights[j] = total;
                }
                let u = self.rng.gen::<f64>() * total;
                let j = self.weights[..allowed.len()].iter().position(|&c| u < c).unwrap_or(allowed.len() - 1);
                let new = allowed[j] as usize;
                debug_assert!(allowed.contains(&(new as u32)), "doc {d} token {i} left its label set");

                self.z[d][i] = new as u32;
                self.ndk[d][new] += 1;
                self.nkw[new * self.v + w] += 1;
                self.nk[new] += 1;
            }
        }
        self.sweeps += 1;
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn z(&self) -> &[Vec<u32>] {
        &self.z
    }

    pub fn allowed(&self, d: usize) -> &[u32] {
        &self.allowed[d]
    }

    pub fn doc_topic_count(&self, d: usize, k: usize) -> u32 {
        self.ndk[d][k]
    }

    pub fn topic_word_count(&self, k: usize, w: usize) -> u32 {
        self.nkw[k * self.v + w]
    }

    pub fn topic_count(&self, k: usize) -> u32 {
        self.nk[k]
    }

    /// Recounts the tables from `z` and compares them with the running ones.
    pub fn counts_consistent(&self) -> bool {
        let mut ndk = vec![vec![0u32; self.k]; self.docs.len()];
        let mut nkw = vec![0u32; self.k * self.v];
        let mut nk = vec![0u32; self.k];
        for (d, doc) in self.docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let t = self.z[d][i] as usize;
                ndk[d][t] += 1;
                nkw[t * self.v + w as usize] += 1;
                nk[t] += 1;
            }
        }
        ndk == self.ndk && nkw == self.nkw && nk == self.nk
    }

    /// Posterior-mean phi for the current state.
    pub fn phi(&self) -> Vec<Vec<f64>> {
        let vbeta = self.v as f64 * self.beta;
        (0..self.k)
            .map(|t| {
                let denom = self.nk[t] as f64 + vbeta;
                (0..self.v).map(|w| (self.nkw[t * self.v + w] as f64 + self.beta) / denom).collect()
            })
            .collect()
    }

    /// Posterior-mean theta for the current state; topics outside a
    /// document's label set get zero mass.
    pub fn theta(&self) -> Vec<Vec<f64>> {
        (0..self.docs.len())
            .map(|d| {
                let allowed = &self.allowed[d];
                let denom = self.docs[d].len() as f64 + allowed.len() as f64 * self.alpha;
                let mut row = vec![0.0; self.k];
                for &t in allowed {
                    row[t as usize] = (self.ndk[d][t as usize] as f64 + self.alpha) / denom;
                }
                row
            })
            .collect()
    }

    /// Runs `params.iterations` sweeps and averages phi and theta over the
    /// post-burn-in samples taken every `params.sample_lag` sweeps.
    pub fn run(mut self, params: &TopicModelParams) -> SamplerOutput {
        let mut phi_sum = vec![vec![0.0; self.v]; self.k];
        let mut theta_sum = vec![vec![0.0; self.k]; self.docs.len()];
        let mut samples = 0usize;
        for it in 1..=params.iterations {
            self.step();
            if it > params.burn_in && (it - params.burn_in).is_multiple_of(params.sample_lag) {
                add_into(&mut phi_sum, &self.phi());
                add_into(&mut theta_sum, &self.theta());
                samples += 1;
            }
        }
        if samples == 0 {
            return (self.phi(), self.theta(), self.z);
        }
        (normalize_rows(phi_sum), normalize_rows(theta_sum), self.z)
    }
}

fn add_into(acc: &mut [Vec<f64>], x: &[Vec<f64>]) {
    for (a, r) in acc.iter_mut().zip(x) {
        for (ai, xi) in a.iter_mut().zip(r) {
            *ai += xi;
        }
    }
}

/// Divides each row by its sum, which removes the sample count and any
/// accumulated rounding in one step.
fn normalize_rows(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for r in &mut rows {
        let s: f64 = r.iter().sum();
        r.iter_mut().for_each(|x| *x /= s);
    }
    rows
}

/// Vanilla LDA by collapsed Gibbs sampling.
pub fn lda_gibbs(corpus: &TopicCorpus, params: &TopicModelParams) -> Result<TopicModel, TopicError> {
    params.validate()?;
    if corpus.is_empty() {
        return Err(TopicError::EmptyCorpus);
    }
    let sampler = GibbsSampler::new(corpus, params.k, params.alpha(), params.beta, None, params.seed);
    let (phi, theta, z) = sampler.run(params);
    Ok(TopicModel {
        params: *params,
        topic_names: default_topic_names(params.k),
        terms: corpus.terms().to_vec(),
        doc_ids: corpus.doc_ids().to_vec(),
        phi,
        theta,
        z,
        background: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{planted_topic_corpus, PlantedTopicConfig};

    fn tiny() -> TopicCorpus {
        TopicCorpus::new(
            vec!["aa".into(), "bb".into(), "cc".into()],
            vec![("d0".into(), vec![0, 0, 1]), ("d1".into(), vec![1, 2, 2])],
        )
        .unwrap()
    }

    /// Rising factorial a (a+1) ... (a+n-1) = Gamma(a+n) / Gamma(a).
    fn rising(a: f64, n: u32) -> f64 {
        (0..n).map(|i| a + i as f64).product()
    }

    /// Exact per-token marginals P(z_i = 1) by enumerating all 2^6 states
    /// weighted by the collapsed joint probability.
    fn exact_marginals(corpus: &TopicCorpus, alpha: f64, beta: f64) -> Vec<f64> {
        let k = 2;
        let v = corpus.n_terms();
        let tokens: Vec<(usize, usize)> =
            corpus.docs().iter().enumerate().flat_map(|(d, doc)| doc.iter().map(move |&w| (d, w as usize))).collect();
        let n = tokens.len();
        let mut marg = vec![0.0; n];
        let mut total = 0.0;
        for state in 0..(1u32 << n) {
            let z: Vec<usize> = (0..n).map(|i| ((state >> i) & 1) as usize).collect();
            let mut ndk = vec![[0u32; 2]; corpus.len()];
            let mut nkw = vec![vec![0u32; v]; k];
            let mut nk = [0u32; 2];
            for (i, &(d, w)) in tokens.iter().enumerate() {
                ndk[d][z[i]] += 1;
                nkw[z[i]][w] += 1;
                nk[z[i]] += 1;
            }
            let mut p = 1.0;
            for counts in &ndk {
                let len = counts[0] + counts[1];
                p *= rising(alpha, counts[0]) * rising(alpha, counts[1]) / rising(k as f64 * alpha, len);
            }
            for t in 0..k {
                p *= nkw[t].iter().map(|&c| rising(beta, c)).product::<f64>() / rising(v as f64 * beta, nk[t]);
            }
            total += p;
            for i in 0..n {
                if z[i] == 1 {
                    marg[i] += p;
                }
            }
        }
        marg.iter().map(|m| m / total).collect()
    }

    #[test]
    fn single_topic_is_degenerate() {
        let c = tiny();
        let params = TopicModelParams { iterations: 30, burn_in: 10, ..TopicModelParams::new(1, 3) };
        let m = lda_gibbs(&c, &params).unwrap();
        assert!(m.z.iter().flatten().all(|&t| t == 0));
        assert!(m.theta.iter().all(|row| row == &vec![1.0]));
    }

    #[test]
    fn marginals_match_enumeration() {
        let c = tiny();
        let (alpha, beta) = (0.5, 0.3);
        let exact = exact_marginals(&c, alpha, beta);
        let mut s = GibbsSampler::new(&c, 2, alpha, beta, None, 99);
        for _ in 0..500 {
            s.step();
        }
        let sweeps = 50_000;
        let mut ones = vec![0usize; 6];
        for _ in 0..sweeps {
            s.step();
            for (i, &t) in s.z().iter().flatten().enumerate() {
                ones[i] += t as usize;
            }
        }
        for i in 0..6 {
            let est = ones[i] as f64 / sweeps as f64;
            assert!((est - exact[i]).abs() < 0.05, "token {i}: {est} vs {}", exact[i]);
        }
    }

    #[test]
    fn counts_conserved_and_rows_normalized() {
        let (docs, _) = planted_topic_corpus(&PlantedTopicConfig { n_docs: 40, ..PlantedTopicConfig::default() }, 2);
        let mut s = GibbsSampler::new(&docs, 4, 0.1, 0.01, None, 1);
        for _ in 0..20 {
            s.step();
            assert!(s.counts_consistent());
            for d in 0..docs.len() {
                let total: u32 = (0..4).map(|k| s.doc_topic_count(d, k)).sum();
                assert_eq!(total as usize, docs.docs()[d].len());
            }
        }
        let params = TopicModelParams { alpha: Some(0.1), iterations: 60, burn_in: 20, ..TopicModelParams::new(4, 5) };
        let m = lda_gibbs(&docs, &params).unwrap();
        for row in m.phi.iter().chain(&m.theta) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn deterministic_z_trace() {
        let c = tiny();
        let params = TopicModelParams { iterations: 50, burn_in: 10, ..TopicModelParams::new(2, 17) };
        assert_eq!(lda_gibbs(&c, &params).unwrap(), lda_gibbs(&c, &params).unwrap());
    }
}
