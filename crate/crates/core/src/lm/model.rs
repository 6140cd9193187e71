use super::params::layer_name;
use super::ModelParams;
use crate::autodiff::{GradientSet, Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Output logits and final hidden state at the last prompt position.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `[V]`
    pub logits: Tensor,
    /// `[d]`, the residual stream after the final layer norm.
    pub hidden: Tensor,
}

struct Built {
    /// `[n x d]` after the final layer norm.
    hidden: NodeId,
    out_w: NodeId,
    out_b: NodeId,
}

fn check_prompt(params: &ModelParams, tokens: &[usize]) -> Result<()> {
    let cfg = params.config();
    if tokens.is_empty() {
        return Err(Error::Input("empty prompt".into()));
    }
    if tokens.len() > cfg.max_seq_len {
        return Err(Error::Input(format!(
            "prompt has {} tokens, model supports {}",
            tokens.len(),
            cfg.max_seq_len
        )));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= cfg.vocab_size) {
        return Err(Error::Input(format!(
            "token id {bad} outside vocabulary of {}",
            cfg.vocab_size
        )));
    }
    Ok(())
}

/// Registers every parameter (so backward reports all of them) and runs the
/// pre-norm decoder stack up to the final layer norm.
fn build<'a>(g: &mut Graph<'a>, params: &'a ModelParams, tokens: &[usize]) -> Result<Built> {
    check_prompt(params, tokens)?;
    let cfg = params.config();
    let ids: std::collections::BTreeMap<&str, NodeId> = params
        .iter()
        .map(|(name, t)| (name.as_str(), g.param(name.clone(), t)))
        .collect();
    let p = |name: &str| ids[name];
    let lp = |l: usize, part: &str| ids[layer_name(l, part).as_str()];

    let n = tokens.len();
    let positions: Vec<usize> = (0..n).collect();
    let tok = g.gather(p("tok_emb"), tokens)?;
    let pos = g.gather(p("pos_emb"), &positions)?;
    let mut x = g.add(tok, pos)?;

    let hd = cfg.head_dim();
    let attn_scale = 1.0 / (hd as f64).sqrt();
    for l in 0..cfg.n_layers {
        let a = g.layer_norm(x, lp(l, "ln1.gamma"), lp(l, "ln1.beta"))?;
        let q = g.matmul(a, lp(l, "attn.wq"))?;
        let q = g.add_bias(q, lp(l, "attn.bq"))?;
        let k = g.matmul(a, lp(l, "attn.wk"))?;
        let k = g.add_bias(k, lp(l, "attn.bk"))?;
        let v = g.matmul(a, lp(l, "attn.wv"))?;
        let v = g.add_bias(v, lp(l, "attn.bv"))?;
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let qh = g.slice_cols(q, h * hd, hd)?;
            let kh = g.slice_cols(k, h * hd, hd)?;
            let vh = g.slice_cols(v, h * hd, hd)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, attn_scale)?;
            let weights = g.softmax(scores, true)?;
            heads.push(g.matmul(weights, vh)?);
        }
        let o = g.concat_cols(&heads)?;
        let o = g.matmul(o, lp(l, "attn.wo"))?;
        let o = g.add_bias(o, lp(l, "attn.bo"))?;
        x = g.add(x, o)?;

        let m = g.layer_norm(x, lp(l, "ln2.gamma"), lp(l, "ln2.beta"))?;
        let f = g.matmul(m, lp(l, "ffn.w1"))?;
        let f = g.add_bias(f, lp(l, "ffn.b1"))?;
        let f = g.gelu(f)?;
        let f = g.matmul(f, lp(l, "ffn.w2"))?;
        let f = g.add_bias(f, lp(l, "ffn.b2"))?;
        x = g.add(x, f)?;
    }
    let hidden = g.layer_norm(x, p("ln_f.gamma"), p("ln_f.beta"))?;
    Ok(Built {
        hidden,
        out_w: p("out.w"),
        out_b: p("out.b"),
    })
}

fn project(g: &mut Graph<'_>, built: &Built, hidden: NodeId) -> Result<NodeId> {
    let z = g.matmul(hidden, built.out_w)?;
    g.add_bias(z, built.out_b)
}

/// Logits and hidden state at the last prompt position; the position whose
/// output predicts the answer token.
pub fn forward(params: &ModelParams, tokens: &[usize]) -> Result<ForwardTrace> {
    let mut g = Graph::new();
    let (_, logits, hidden) = last_position(&mut g, params, tokens)?;
    Ok(ForwardTrace {
        logits: g.value(logits).clone().reshaped(vec![params.config().vocab_size])?,
        hidden: g.value(hidden).clone().reshaped(vec![params.config().model_dim])?,
    })
}

fn last_position<'a>(
    g: &mut Graph<'a>,
    params: &'a ModelParams,
    tokens: &[usize],
) -> Result<(Built, NodeId, NodeId)> {
    let built = build(g, params, tokens)?;
    let last = g.select_row(built.hidden, tokens.len() - 1)?;
    let logits = project(g, &built, last)?;
    Ok((built, logits, last))
}

/// Logits at every position, `[n x V]`. Row `i` predicts token `i + 1`.
pub fn sequence_logits(params: &ModelParams, tokens: &[usize]) -> Result<Tensor> {
    let mut g = Graph::new();
    let built = build(&mut g, params, tokens)?;
    let logits = project(&mut g, &built, built.hidden)?;
    Ok(g.value(logits).clone())
}

/// Cross-entropy of the next-token prediction at the last prompt position
/// against `target`, with gradients for every parameter.
pub fn loss_and_grad(params: &ModelParams, tokens: &[usize], target: usize) -> Result<(f64, GradientSet)> {
    if target >= params.config().vocab_size {
        return Err(Error::Index(format!(
            "target {target} outside vocabulary of {}",
            params.config().vocab_size
        )));
    }
    let mut g = Graph::new();
    let (_, logits, _) = last_position(&mut g, params, tokens)?;
    let loss = g.cross_entropy(logits, target)?;
    let value = g.value(loss).item().expect("scalar");
    Ok((value, g.backward(loss)?))
}
