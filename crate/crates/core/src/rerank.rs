//! Listwise and pointwise scoring. The listwise input packs the query, every
//! candidate's memory vectors with a separator after each, and the query
//! again; candidate i is represented by the hidden state at its separator and
//! scored by cosine against the hidden state at the final position.

use crate::compress::CompressedDoc;
use crate::error::{Error, Result};
use crate::model::{InputItem, Model, ModelConfig};
use crate::tensor::{cosine_sim, Graph, Scalar, Tensor, Var};

pub const DEFAULT_TAU: f64 = 0.125;

/// Length of X = (q; c_1; SEP; ...; c_k; SEP; q).
pub fn listwise_len(q_len: usize, k: usize, mem_tokens: usize) -> usize {
    2 * q_len + k * (mem_tokens + 1)
}

/// Length of the pointwise input (q; c; SEP).
pub fn pointwise_len(q_len: usize, mem_tokens: usize) -> usize {
    q_len + mem_tokens + 1
}

#[derive(Debug, Clone)]
pub struct ListwiseInput<F: Scalar = f32> {
    pub items: Vec<InputItem<F>>,
    pub doc_ids: Vec<String>,
    /// Position of the separator following candidate i's memory vectors.
    pub sep_positions: Vec<usize>,
    pub final_position: usize,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct ScoredCandidates {
    /// (doc_id, score) in candidate input order.
    pub entries: Vec<(String, f32)>,
}

impl ScoredCandidates {
    /// Doc ids by descending score; equal scores order by doc_id ascending.
    pub fn ranking(&self) -> Vec<String> {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| {
            let (ida, sa) = (&self.entries[a].0, self.entries[a].1);
            let (idb, sb) = (&self.entries[b].0, self.entries[b].1);
            sb.partial_cmp(&sa)
                .expect("scores must be finite")
                .then_with(|| ida.cmp(idb))
        });
        order.into_iter().map(|i| self.entries[i].0.clone()).collect()
    }
}

/// Assembles the listwise input from a tokenized query and compressed docs.
pub fn build_listwise_input(
    config: &ModelConfig,
    query_tokens: &[u32],
    compressed: &[&CompressedDoc],
) -> Result<ListwiseInput<f32>> {
    if query_tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    if compressed.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let l = config.mem_tokens;
    let d = config.d_model;
    for c in compressed {
        if c.embeddings.rows != l || c.embeddings.cols != d {
            return Err(Error::Config(format!(
                "compressed doc {} has shape {}x{}, model expects {l}x{d}",
                c.doc_id, c.embeddings.rows, c.embeddings.cols
            )));
        }
    }
    let q_len = query_tokens.len();
    let k = compressed.len();
    let total = listwise_len(q_len, k, l);
    if total > config.max_seq_len {
        return Err(Error::ListwiseTooLong {
            q_len,
            k,
            l,
            len: total,
            max: config.max_seq_len,
        });
    }

    let mut items: Vec<InputItem<f32>> = Vec::with_capacity(total);
    let mut sep_positions = Vec::with_capacity(k);
    items.extend(query_tokens.iter().map(|&t| InputItem::Token(t)));
    for c in compressed {
        for s in 0..l {
            items.push(InputItem::Vector(c.embeddings.row(s).to_vec()));
        }
        items.push(InputItem::Token(config.sep_id()));
        sep_positions.push(items.len() - 1);
    }
    items.extend(query_tokens.iter().map(|&t| InputItem::Token(t)));

    debug_assert_eq!(items.len(), total);
    debug_assert!(sep_positions.windows(2).all(|w| w[0] < w[1]));
    debug_assert_eq!(sep_positions[0], q_len + l);

    Ok(ListwiseInput {
        items,
        doc_ids: compressed.iter().map(|c| c.doc_id.clone()).collect(),
        sep_positions,
        final_position: total - 1,
        k,
    })
}

/// Cosine scores for every candidate from the final hidden states.
pub fn extract_scores(hidden: &Tensor<f32>, input: &ListwiseInput<f32>) -> Result<Vec<f32>> {
    let q = hidden.row(input.final_position);
    input
        .sep_positions
        .iter()
        .map(|&p| Ok(cosine_sim(q, hidden.row(p))?.clamp(-1.0, 1.0)))
        .collect()
}

/// Scores a listwise input with the reranker, outside any training graph.
pub fn score_listwise(model: &Model<f32>, input: &ListwiseInput<f32>) -> Result<ScoredCandidates> {
    let hidden = model.forward(&input.items)?;
    let scores = extract_scores(&hidden, input)?;
    Ok(ScoredCandidates {
        entries: input
            .doc_ids
            .iter()
            .cloned()
            .zip(scores)
            .collect(),
    })
}

/// In-graph listwise scoring over already-embedded candidate blocks, used for
/// joint training where each block is the live output of the compressor.
/// Returns one 1x1 score node per candidate.
pub fn listwise_scores_graph<F: Scalar>(
    g: &mut Graph<F>,
    reranker: &Model<F>,
    query_tokens: &[u32],
    doc_blocks: &[Var],
) -> Result<Vec<Var>> {
    if query_tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    if doc_blocks.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let cfg = &reranker.config;
    let l = cfg.mem_tokens;
    for b in doc_blocks {
        let (r, c) = g.shape(*b);
        if r != l || c != cfg.d_model {
            return Err(Error::Config(format!(
                "candidate block is {r}x{c}, model expects {l}x{}",
                cfg.d_model
            )));
        }
    }
    let q_len = query_tokens.len();
    let k = doc_blocks.len();
    let total = listwise_len(q_len, k, l);
    if total > cfg.max_seq_len {
        return Err(Error::ListwiseTooLong {
            q_len,
            k,
            l,
            len: total,
            max: cfg.max_seq_len,
        });
    }

    let table = g.param(&reranker.params, "embed")?;
    let q_embed = g.embed(table, query_tokens)?;
    let sep_embed = g.embed(table, &[cfg.sep_id()])?;
    let mut parts = Vec::with_capacity(2 + 2 * k);
    parts.push(q_embed);
    let mut sep_positions = Vec::with_capacity(k);
    let mut pos = q_len;
    for &b in doc_blocks {
        parts.push(b);
        parts.push(sep_embed);
        pos += l + 1;
        sep_positions.push(pos - 1);
    }
    parts.push(q_embed);
    let x = g.concat_rows(&parts)?;
    let hidden = reranker.run(g, x)?;

    let q_vec = g.slice_rows(hidden, total - 1, 1)?;
    sep_positions
        .iter()
        .map(|&p| {
            let h = g.slice_rows(hidden, p, 1)?;
            g.cosine(q_vec, h)
        })
        .collect()
}

/// Strict preference pairs (i, j) with teacher(i) > teacher(j); ties yield
/// no pair.
pub fn preference_pairs(teacher_scores: &[f64]) -> Vec<(usize, usize)> {
    let n = teacher_scores.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && teacher_scores[i] > teacher_scores[j] {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// RankNet loss sum over preference pairs: log(1 + exp(-(s_i - s_j)/tau)).
pub fn ranknet_loss(scores: &[f64], pairs: &[(usize, usize)], tau: f64) -> f64 {
    assert!(tau > 0.0, "tau must be positive");
    pairs
        .iter()
        .map(|&(i, j)| {
            let x = -(scores[i] - scores[j]) / tau;
            // Stable softplus.
            x.max(0.0) + (-x.abs()).exp().ln_1p()
        })
        .sum()
}

/// Graph form of the RankNet loss over 1x1 score nodes.
pub fn ranknet_loss_graph<F: Scalar>(
    g: &mut Graph<F>,
    scores: &[Var],
    pairs: &[(usize, usize)],
    tau: f64,
) -> Result<Var> {
    assert!(tau > 0.0, "tau must be positive");
    if pairs.is_empty() {
        return Ok(g.scalar(F::ZERO));
    }
    let mut terms = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let diff = g.sub(scores[i], scores[j])?;
        let scaled = g.scale(diff, -1.0 / tau)?;
        terms.push(g.softplus(scaled)?);
    }
    let stacked = g.concat_rows(&terms)?;
    g.sum(stacked)
}

/// Mean squared error between two equal-length score lists.
pub fn mse_loss(predicted: &[f64], teacher: &[f64]) -> Result<f64> {
    if predicted.len() != teacher.len() || predicted.is_empty() {
        return Err(Error::Invalid(format!(
            "mse over lists of length {} and {}",
            predicted.len(),
            teacher.len()
        )));
    }
    let n = predicted.len() as f64;
    Ok(predicted
        .iter()
        .zip(teacher)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Graph form of the MSE loss: predictions as 1x1 nodes, fixed targets.
pub fn mse_loss_graph<F: Scalar>(
    g: &mut Graph<F>,
    predicted: &[Var],
    teacher: &[f64],
) -> Result<Var> {
    if predicted.len() != teacher.len() || predicted.is_empty() {
        return Err(Error::Invalid(format!(
            "mse over lists of length {} and {}",
            predicted.len(),
            teacher.len()
        )));
    }
    let pred = g.concat_rows(predicted)?;
    let target = g.constant(Tensor::new(
        teacher.len(),
        1,
        teacher.iter().map(|&t| F::from_f64(t)).collect(),
    ));
    let diff = g.sub(pred, target)?;
    let sq = g.mul(diff, diff)?;
    g.mean(sq)
}

/// Pointwise score of one compressed document: linear head over the last
/// hidden state of (q; c; SEP).
pub fn pointwise_score(
    model: &Model<f32>,
    query_tokens: &[u32],
    doc: &CompressedDoc,
) -> Result<f32> {
    if query_tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let cfg = &model.config;
    let total = pointwise_len(query_tokens.len(), cfg.mem_tokens);
    if total > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            len: total,
            max: cfg.max_seq_len,
        });
    }
    let mut g: Graph<f32> = Graph::new();
    let s = pointwise_score_graph(&mut g, model, query_tokens, None, Some(doc))?;
    Ok(g.value(s).data[0])
}

/// In-graph pointwise scoring. The candidate is either a live graph block
/// (joint training) or a fixed compressed doc.
pub fn pointwise_score_graph<F: Scalar>(
    g: &mut Graph<F>,
    model: &Model<F>,
    query_tokens: &[u32],
    doc_block: Option<Var>,
    doc_fixed: Option<&CompressedDoc>,
) -> Result<Var> {
    let cfg = &model.config;
    let block = match (doc_block, doc_fixed) {
        (Some(b), None) => b,
        (None, Some(c)) => g.constant(Tensor {
            rows: c.embeddings.rows,
            cols: c.embeddings.cols,
            data: c.embeddings.data.iter().map(|&v| F::from_f64(v as f64)).collect(),
        }),
        _ => return Err(Error::Invalid("exactly one candidate form required".into())),
    };
    let (r, c) = g.shape(block);
    if r != cfg.mem_tokens || c != cfg.d_model {
        return Err(Error::Config(format!(
            "candidate block is {r}x{c}, model expects {}x{}",
            cfg.mem_tokens, cfg.d_model
        )));
    }
    let table = g.param(&model.params, "embed")?;
    let q_embed = g.embed(table, query_tokens)?;
    let sep_embed = g.embed(table, &[cfg.sep_id()])?;
    let x = g.concat_rows(&[q_embed, block, sep_embed])?;
    let hidden = model.run(g, x)?;
    let (t, _) = g.shape(hidden);
    let last = g.slice_rows(hidden, t - 1, 1)?;
    model.score_head(g, last)
}

/// Pointwise scoring over raw document text instead of memory vectors:
/// (q; d; SEP). This is the uncompressed baseline the cost model compares
/// against.
pub fn pointwise_score_textual(
    model: &Model<f32>,
    query_tokens: &[u32],
    doc_tokens: &[u32],
) -> Result<f32> {
    if query_tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    if doc_tokens.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let cfg = &model.config;
    let total = query_tokens.len() + doc_tokens.len() + 1;
    if total > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            len: total,
            max: cfg.max_seq_len,
        });
    }
    let mut g: Graph<f32> = Graph::new();
    let table = g.param(&model.params, "embed")?;
    let mut tokens: Vec<u32> = Vec::with_capacity(total);
    tokens.extend_from_slice(query_tokens);
    tokens.extend_from_slice(doc_tokens);
    tokens.push(cfg.sep_id());
    let x = g.embed(table, &tokens)?;
    let hidden = model.run(&mut g, x)?;
    let last = g.slice_rows(hidden, total - 1, 1)?;
    let s = model.score_head(&mut g, last)?;
    Ok(g.value(s).data[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::tensor::ParamStore;

    fn zero_doc(cfg: &ModelConfig, id: &str) -> CompressedDoc {
        // Deterministic nonzero payload so cosine is defined.
        let mut emb = Tensor::zeros(cfg.mem_tokens, cfg.d_model);
        for (i, v) in emb.data.iter_mut().enumerate() {
            *v = 0.01 + (i % 7) as f32 * 0.1;
        }
        CompressedDoc {
            doc_id: id.to_string(),
            embeddings: emb,
            source_len: Some(3),
        }
    }

    #[test]
    fn length_identity_examples() {
        assert_eq!(listwise_len(32, 50, 8), 514);
        assert_eq!(listwise_len(1, 1, 8), 11);
        assert_eq!(pointwise_len(32, 8), 41);
    }

    #[test]
    fn smallest_instance_layout() {
        let cfg = ModelConfig::default();
        let doc = zero_doc(&cfg, "d0");
        let input = build_listwise_input(&cfg, &[7], &[&doc]).unwrap();
        assert_eq!(input.items.len(), 11);
        assert_eq!(input.sep_positions, vec![9]);
        assert_eq!(input.final_position, 10);
        match &input.items[9] {
            InputItem::Token(t) => assert_eq!(*t, cfg.sep_id()),
            other => panic!("expected SEP token, got {other:?}"),
        }
        match &input.items[10] {
            InputItem::Token(t) => assert_eq!(*t, 7),
            other => panic!("expected query token, got {other:?}"),
        }
    }

    #[test]
    fn paper_scale_layout() {
        let cfg = ModelConfig::default();
        let docs: Vec<CompressedDoc> =
            (0..50).map(|i| zero_doc(&cfg, &format!("d{i:02}"))).collect();
        let refs: Vec<&CompressedDoc> = docs.iter().collect();
        let q: Vec<u32> = (0..32).collect();
        let input = build_listwise_input(&cfg, &q, &refs).unwrap();
        assert_eq!(input.items.len(), 514);
        assert_eq!(input.sep_positions.len(), 50);
        for (i, &p) in input.sep_positions.iter().enumerate() {
            assert_eq!(p, 32 + (i + 1) * 9 - 1);
        }
    }

    #[test]
    fn rejects_empty_and_oversized_inputs() {
        let cfg = ModelConfig::default();
        let doc = zero_doc(&cfg, "d0");
        assert!(matches!(
            build_listwise_input(&cfg, &[], &[&doc]),
            Err(Error::EmptyQuery)
        ));
        assert!(matches!(
            build_listwise_input(&cfg, &[1], &[]),
            Err(Error::EmptyCandidates)
        ));
        let docs: Vec<CompressedDoc> =
            (0..120).map(|i| zero_doc(&cfg, &format!("d{i}"))).collect();
        let refs: Vec<&CompressedDoc> = docs.iter().collect();
        let err = build_listwise_input(&cfg, &[1; 10], &refs).unwrap_err();
        match err {
            Error::ListwiseTooLong { q_len, k, l, len, max } => {
                assert_eq!((q_len, k, l), (10, 120, 8));
                assert_eq!(len, 2 * 10 + 120 * 9);
                assert_eq!(max, 1024);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn rejects_mismatched_memory_shape() {
        let cfg = ModelConfig::default();
        let mut doc = zero_doc(&cfg, "d0");
        doc.embeddings = Tensor::zeros(cfg.mem_tokens + 1, cfg.d_model);
        assert!(matches!(
            build_listwise_input(&cfg, &[1], &[&doc]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn scores_are_in_range_and_reproducible() {
        let cfg = ModelConfig::micro(5);
        let m = Model::new(cfg.clone(), 5).unwrap();
        let m2 = Model::new(cfg.clone(), 5).unwrap();
        let docs: Vec<CompressedDoc> = (0..3)
            .map(|i| crate::compress::compress(&m, &format!("d{i}"), &[i + 1, 2, 3], 64).unwrap())
            .collect();
        let refs: Vec<&CompressedDoc> = docs.iter().collect();
        let input = build_listwise_input(&cfg, &[4, 9], &refs).unwrap();
        let a = score_listwise(&m, &input).unwrap();
        let b = score_listwise(&m2, &input).unwrap();
        for ((_, sa), (_, sb)) in a.entries.iter().zip(&b.entries) {
            assert!((-1.0..=1.0).contains(sa));
            assert_eq!(sa.to_bits(), sb.to_bits());
        }
    }

    #[test]
    fn graph_and_inference_scoring_agree() {
        let cfg = ModelConfig::micro(5);
        let m = Model::new(cfg.clone(), 5).unwrap();
        let docs: Vec<CompressedDoc> = (0..3)
            .map(|i| crate::compress::compress(&m, &format!("d{i}"), &[i + 1, 2, 3], 64).unwrap())
            .collect();
        let refs: Vec<&CompressedDoc> = docs.iter().collect();
        let q = [4u32, 9];
        let input = build_listwise_input(&cfg, &q, &refs).unwrap();
        let inference = score_listwise(&m, &input).unwrap();

        let mut g: Graph<f32> = Graph::new();
        let blocks: Vec<Var> = docs
            .iter()
            .map(|d| g.constant(d.embeddings.clone()))
            .collect();
        let scores = listwise_scores_graph(&mut g, &m, &q, &blocks).unwrap();
        for (var, (_, s)) in scores.iter().zip(&inference.entries) {
            assert_eq!(g.value(*var).data[0].to_bits(), s.to_bits());
        }
    }

    #[test]
    fn ranknet_closed_forms() {
        let ln2 = std::f64::consts::LN_2;
        let tau = DEFAULT_TAU;
        assert!((ranknet_loss(&[0.5, 0.5], &[(0, 1)], tau) - ln2).abs() < 1e-9);
        let up = ranknet_loss(&[tau, 0.0], &[(0, 1)], tau);
        assert!((up - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-9);
        assert!((up - 0.313262).abs() < 1e-6);
        let down = ranknet_loss(&[0.0, tau], &[(0, 1)], tau);
        assert!((down - (1.0 + 1.0f64.exp()).ln()).abs() < 1e-9);
        assert!((down - 1.313262).abs() < 1e-6);
        assert_eq!(ranknet_loss(&[1.0, 2.0], &[], tau), 0.0);
        // All-equal scores: every pair contributes ln 2.
        let pairs = vec![(0, 1), (1, 2), (0, 2)];
        let loss = ranknet_loss(&[0.1, 0.1, 0.1], &pairs, tau);
        assert!((loss - 3.0 * ln2).abs() < 1e-9);
    }

    #[test]
    fn ranknet_graph_matches_pure_form_and_gradient_signs() {
        let tau = DEFAULT_TAU;
        let mut store: ParamStore<f64> = ParamStore::new();
        store.insert("s0", Tensor::new(1, 1, vec![0.4]));
        store.insert("s1", Tensor::new(1, 1, vec![0.4]));
        let mut g: Graph<f64> = Graph::new();
        let s0 = g.param(&store, "s0").unwrap();
        let s1 = g.param(&store, "s1").unwrap();
        let loss = ranknet_loss_graph(&mut g, &[s0, s1], &[(0, 1)], tau).unwrap();
        let pure = ranknet_loss(&[0.4, 0.4], &[(0, 1)], tau);
        assert!((g.value(loss).data[0] - pure).abs() < 1e-12);
        g.backward(loss, &mut [&mut store]).unwrap();
        let g0 = store.get("s0").unwrap().grad.as_ref().unwrap().data[0];
        let g1 = store.get("s1").unwrap().grad.as_ref().unwrap().data[0];
        assert!(g0 < 0.0, "preferred score must pull loss down, got {g0}");
        assert!(g1 > 0.0, "non-preferred score must push loss up, got {g1}");
        assert!((g0 + g1).abs() < 1e-12);
    }

    #[test]
    fn preference_pairs_are_strict() {
        let pairs = preference_pairs(&[2.0, 2.0, 1.0]);
        assert_eq!(pairs, vec![(0, 2), (1, 2)]);
        assert!(preference_pairs(&[1.0, 1.0]).is_empty());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0], &[2.0]).unwrap(), 4.0);
        assert_eq!(mse_loss(&[1.0, 3.0], &[2.0, 5.0]).unwrap(), 2.5);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse_loss(&[], &[]).is_err());
    }

    #[test]
    fn mse_graph_matches_pure_form() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.insert("p0", Tensor::new(1, 1, vec![1.0]));
        store.insert("p1", Tensor::new(1, 1, vec![3.0]));
        let mut g: Graph<f64> = Graph::new();
        let p0 = g.param(&store, "p0").unwrap();
        let p1 = g.param(&store, "p1").unwrap();
        let loss = mse_loss_graph(&mut g, &[p0, p1], &[2.0, 5.0]).unwrap();
        assert!((g.value(loss).data[0] - 2.5).abs() < 1e-12);
        g.backward(loss, &mut [&mut store]).unwrap();
        // d/dp0 of ((p0-2)^2 + (p1-5)^2)/2 = (p0-2) = -1
        let g0 = store.get("p0").unwrap().grad.as_ref().unwrap().data[0];
        assert!((g0 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_follows_scores_then_ids() {
        let sc = ScoredCandidates {
            entries: vec![
                ("a".into(), 0.2),
                ("b".into(), 0.9),
                ("c".into(), 0.5),
            ],
        };
        assert_eq!(sc.ranking(), vec!["b", "c", "a"]);

        let tied = ScoredCandidates {
            entries: vec![
                ("c".into(), 0.5),
                ("a".into(), 0.5),
                ("b".into(), 0.5),
            ],
        };
        assert_eq!(tied.ranking(), vec!["a", "b", "c"]);

        let single = ScoredCandidates {
            entries: vec![("only".into(), -0.3)],
        };
        assert_eq!(single.ranking(), vec!["only"]);
    }

    #[test]
    fn ranking_is_invariant_under_monotone_transforms() {
        let entries = vec![
            ("a".into(), 0.12f32),
            ("b".into(), -0.4),
            ("c".into(), 0.77),
            ("d".into(), 0.3),
        ];
        let base = ScoredCandidates { entries: entries.clone() };
        let squashed = ScoredCandidates {
            entries: entries
                .iter()
                .map(|(id, s)| (id.clone(), (2.0 * s + 1.0).tanh()))
                .collect(),
        };
        assert_eq!(base.ranking(), squashed.ranking());
        // And it is a permutation of the inputs.
        let mut ids = base.ranking();
        ids.sort();
        assert_eq!(ids, vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn pointwise_zero_head_scores_zero() {
        let cfg = ModelConfig::micro(5);
        let mut m = Model::new(cfg.clone(), 5).unwrap();
        m.params.get_mut("score_head.w").unwrap().value.data.fill(0.0);
        let doc = crate::compress::compress(&m, "d0", &[1, 2, 3], 64).unwrap();
        let s = pointwise_score(&m, &[4, 9], &doc).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn pointwise_is_deterministic_and_respects_length_limit() {
        let cfg = ModelConfig::micro(5);
        let m = Model::new(cfg.clone(), 5).unwrap();
        let doc = crate::compress::compress(&m, "d0", &[1, 2, 3], 64).unwrap();
        let a = pointwise_score(&m, &[4, 9], &doc).unwrap();
        let b = pointwise_score(&m, &[4, 9], &doc).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());

        let long_q = vec![1u32; cfg.max_seq_len];
        assert!(matches!(
            pointwise_score(&m, &long_q, &doc),
            Err(Error::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn textual_pointwise_scores_finite() {
        let cfg = ModelConfig::micro(5);
        let m = Model::new(cfg.clone(), 5).unwrap();
        let s = pointwise_score_textual(&m, &[4, 9], &[1, 2, 3, 7, 7, 2]).unwrap();
        assert!(s.is_finite());
    }
}
