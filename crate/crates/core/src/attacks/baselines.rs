use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::log_softmax;
use crate::error::{Error, Result};
use crate::lm::{sequence_logits, ModelParams};
use crate::seed::derive_seed;

/// Mean NLL is clamped here before exponentiating, keeping perplexity finite.
pub const NLL_CAP: f64 = 700.0;

fn check_len(tokens: &[usize]) -> Result<()> {
    if tokens.len() < 2 {
        return Err(Error::Input(format!(
            "scoring needs at least 2 tokens, got {}",
            tokens.len()
        )));
    }
    Ok(())
}

/// `log p(tokens[i] | tokens[..i])` for `i = 1..n`.
pub fn token_log_likelihoods(params: &ModelParams, tokens: &[usize]) -> Result<Vec<f64>> {
    check_len(tokens)?;
    let logits = sequence_logits(params, &tokens[..tokens.len() - 1])?;
    let v = params.config().vocab_size;
    Ok(logits
        .data()
        .chunks_exact(v)
        .zip(&tokens[1..])
        .map(|(row, &t)| log_softmax(row)[t])
        .collect())
}

/// Mean of the lowest `ceil(k% * n)` values, at least one.
pub fn min_k_of(log_likelihoods: &[f64], k_percent: f64) -> Result<f64> {
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::Input(format!("k must lie in (0, 100], got {k_percent}")));
    }
    if log_likelihoods.is_empty() {
        return Err(Error::Input("no token log-likelihoods".into()));
    }
    let mut sorted = log_likelihoods.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let count = ((k_percent / 100.0 * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    Ok(sorted[..count].iter().sum::<f64>() / count as f64)
}

/// Min-k% score over the whole token sequence; higher is more member-like.
pub fn min_k_score(params: &ModelParams, tokens: &[usize], k_percent: f64) -> Result<f64> {
    min_k_of(&token_log_likelihoods(params, tokens)?, k_percent)
}

/// `exp(mean NLL)`, with the mean clamped to [`NLL_CAP`].
pub fn perplexity_of(log_likelihoods: &[f64]) -> Result<f64> {
    if log_likelihoods.is_empty() {
        return Err(Error::Input("no token log-likelihoods".into()));
    }
    let nll = -log_likelihoods.iter().sum::<f64>() / log_likelihoods.len() as f64;
    Ok(nll.min(NLL_CAP).exp())
}

pub fn perplexity(params: &ModelParams, tokens: &[usize]) -> Result<f64> {
    perplexity_of(&token_log_likelihoods(params, tokens)?)
}

/// Negated perplexity, so that higher is more member-like.
pub fn perplexity_score(params: &ModelParams, tokens: &[usize]) -> Result<f64> {
    Ok(-perplexity(params, tokens)?)
}

/// Length in bytes of `bytes` under zlib at the default level.
pub fn compressed_len(bytes: &[u8]) -> usize {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes).expect("writing to memory");
    enc.finish().expect("writing to memory").len()
}

/// Negated ratio of perplexity to the compressed bit length of `text`.
pub fn zlib_score(params: &ModelParams, text: &str, tokens: &[usize]) -> Result<f64> {
    if text.is_empty() {
        return Err(Error::Input("zlib score needs non-empty text".into()));
    }
    let bits = 8 * compressed_len(text.as_bytes());
    Ok(-perplexity(params, tokens)? / bits as f64)
}

/// Mean next-token NLL over the sequence.
pub fn sequence_loss(params: &ModelParams, tokens: &[usize]) -> Result<f64> {
    let ll = token_log_likelihoods(params, tokens)?;
    Ok(-ll.iter().sum::<f64>() / ll.len() as f64)
}

/// Copies of `tokens`, each with one prompt position in `1..prompt_len`
/// replaced by a different token drawn from the model's own next-token
/// distribution at that position.
pub fn make_neighbours(
    params: &ModelParams,
    tokens: &[usize],
    prompt_len: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::Input("need at least one neighbour".into()));
    }
    if prompt_len < 2 || prompt_len > tokens.len() {
        return Err(Error::Input(format!(
            "prompt of {prompt_len} tokens is too short to perturb"
        )));
    }
    // Row i of the prompt logits predicts position i + 1.
    let logits = sequence_logits(params, &tokens[..prompt_len - 1])?;
    let v = params.config().vocab_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let pos = rng.random_range(1..prompt_len);
        let row = &logits.data()[(pos - 1) * v..pos * v];
        let mut probs: Vec<f64> = log_softmax(row).iter().map(|l| l.exp()).collect();
        // Excluding the original token is equivalent to resampling until the
        // draw differs.
        probs[tokens[pos]] = 0.0;
        let total: f64 = probs.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = (0..v).rev().find(|&i| probs[i] > 0.0).expect("V >= 2");
        for (i, p) in probs.iter().enumerate() {
            if *p > 0.0 && u < *p {
                pick = i;
                break;
            }
            u -= p;
        }
        let mut nb = tokens.to_vec();
        nb[pos] = pick;
        out.push(nb);
    }
    Ok(out)
}

/// Mean neighbour sequence loss minus the sample's own sequence loss.
pub fn neighbour_score_of(params: &ModelParams, tokens: &[usize], neighbours: &[Vec<usize>]) -> Result<f64> {
    if neighbours.is_empty() {
        return Err(Error::Input("need at least one neighbour".into()));
    }
    let own = sequence_loss(params, tokens)?;
    let mut total = 0.0;
    for nb in neighbours {
        total += sequence_loss(params, nb)?;
    }
    Ok(total / neighbours.len() as f64 - own)
}

/// Neighbour score with `n` self-sampled single-token substitutions in the
/// prompt; higher is more member-like.
pub fn neighbour_score(
    params: &ModelParams,
    tokens: &[usize],
    prompt_len: usize,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let nbs = make_neighbours(params, tokens, prompt_len, n, seed)?;
    neighbour_score_of(params, tokens, &nbs)
}

/// Seed of the neighbour stream for one sample.
pub fn neighbour_seed(base: u64, sample_id: usize) -> u64 {
    derive_seed(base, "neighbours", sample_id as u64)
}
