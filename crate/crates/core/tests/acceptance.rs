//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers. Oracles here are deliberately
//! independent re-implementations (direct set arithmetic for the metrics,
//! central finite differences for the gradients).

mod common;

use std::collections::BTreeSet;
use std::rc::Rc;
use std::time::Instant;

use common::{
    clustered_corpus, grad_check, graph_over, preprocess_plain, random_probs, random_tensor,
    FD_TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use triage::corpusgraph::{CorpusGraph, GraphNode, NodeKind};
use triage::dataset::{parse_corpus, save_corpus, DatasetSplit, LabelVector, LabelVocabulary};
use triage::diffcore::{bce_loss, BoolMat, Binder, ParamStore, Tape, Tensor2, VarId};
use triage::encoder::EncoderSpec;
use triage::gat::{gat_layer, GatConfig, GatHeadParams, GatLayerParams, HeadCombine};
use triage::metrics::{
    aaw_from_parts, hamming_loss, high_priority_worth, jaccard_mean, low_priority_worth,
    weighted_f1, AawConfig, LabelScore, MetricsReport,
};
use triage::preprocess::ProcessedTweet;
use triage::relnet::{model_forward, Model, ModelConfig, Prediction, Variant};
use triage::train::{model_from_checkpoint, train, TrainConfig, TrainInputs};

// ---------------------------------------------------------------------------
// criterion 1: metric oracle equivalence
// ---------------------------------------------------------------------------

fn naive_weighted_f1(preds: &[BTreeSet<usize>], truths: &[BTreeSet<usize>], k: usize) -> f64 {
    let total_support: usize = (0..k)
        .map(|j| truths.iter().filter(|t| t.contains(&j)).count())
        .sum();
    let mut sum = 0.0;
    for j in 0..k {
        let tp = preds
            .iter()
            .zip(truths)
            .filter(|(p, t)| p.contains(&j) && t.contains(&j))
            .count();
        let pred_count = preds.iter().filter(|p| p.contains(&j)).count();
        let truth_count = truths.iter().filter(|t| t.contains(&j)).count();
        let precision = if pred_count == 0 {
            0.0
        } else {
            tp as f64 / pred_count as f64
        };
        let recall = if truth_count == 0 {
            0.0
        } else {
            tp as f64 / truth_count as f64
        };
        if precision + recall > 0.0 {
            sum += 2.0 * (truth_count as f64 / total_support as f64) * (precision * recall)
                / (precision + recall);
        }
    }
    sum
}

fn naive_hamming(preds: &[BTreeSet<usize>], truths: &[BTreeSet<usize>], k: usize) -> f64 {
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(truths) {
        let diff = (0..k).filter(|j| p.contains(j) != t.contains(j)).count();
        total += diff as f64 / k as f64;
    }
    total / preds.len() as f64
}

fn naive_jaccard(preds: &[BTreeSet<usize>], truths: &[BTreeSet<usize>]) -> f64 {
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(truths) {
        let inter = p.intersection(t).count();
        let union = p.union(t).count();
        total += if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        };
    }
    total / preds.len() as f64
}

fn to_vectors(sets: &[BTreeSet<usize>], k: usize) -> Vec<LabelVector> {
    sets.iter()
        .map(|s| LabelVector {
            bits: (0..k).map(|j| u8::from(s.contains(&j))).collect(),
        })
        .collect()
}

#[test]
fn criterion_1_metric_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    for trial in 0..500 {
        let s = rng.gen_range(1..=20);
        let k = rng.gen_range(1..=6);
        let vocab =
            LabelVocabulary::new((0..k).map(|j| format!("L{j}")).collect()).unwrap();
        let random_sets = |rng: &mut ChaCha20Rng| -> Vec<BTreeSet<usize>> {
            (0..s)
                .map(|_| {
                    (0..k)
                        .filter(|_| rng.gen_bool(0.35))
                        .collect::<BTreeSet<usize>>()
                })
                .collect()
        };
        let mut truth_sets = random_sets(&mut rng);
        if truth_sets.iter().all(BTreeSet::is_empty) {
            truth_sets[0].insert(rng.gen_range(0..k));
        }
        let pred_sets = random_sets(&mut rng);
        let preds = to_vectors(&pred_sets, k);
        let truths = to_vectors(&truth_sets, k);

        let (f1, _) = weighted_f1(&preds, &truths, &vocab).unwrap();
        let f1_naive = naive_weighted_f1(&pred_sets, &truth_sets, k);
        assert!(
            (f1 - f1_naive).abs() < 1e-12,
            "trial {trial}: f1 {f1} vs naive {f1_naive}"
        );

        let ham = hamming_loss(&preds, &truths).unwrap();
        let ham_naive = naive_hamming(&pred_sets, &truth_sets, k);
        assert!((ham - ham_naive).abs() < 1e-12);

        let jac = jaccard_mean(&preds, &truths).unwrap();
        let jac_naive = naive_jaccard(&pred_sets, &truth_sets);
        assert!((jac - jac_naive).abs() < 1e-12);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("criterion 1 (metric oracle equivalence, 500 instances, {elapsed:?}): PASS");
}

// ---------------------------------------------------------------------------
// criterion 2: gradient suite
// ---------------------------------------------------------------------------

/// Check one op: analytic gradients (tape backward) against central
/// differences, with the loss being a fixed random weighting of the output.
fn fd_check_op(
    name: &str,
    trials: usize,
    rng: &mut ChaCha20Rng,
    make_inputs: &dyn Fn(&mut ChaCha20Rng) -> Vec<Tensor2>,
    apply: &dyn Fn(&mut Tape, &[VarId]) -> VarId,
) {
    for trial in 0..trials {
        let inputs = make_inputs(rng);
        // probe the output shape, then fix the loss weighting for this trial
        let coeff = {
            let mut probe = Tape::new();
            let vars: Vec<VarId> = inputs.iter().map(|t| probe.leaf(t.clone())).collect();
            let out = apply(&mut probe, &vars);
            let (r, c) = probe.value(out).shape();
            random_tensor(r, c, rng)
        };
        let eval = |xs: &[Tensor2]| -> (Tape, Vec<VarId>, VarId) {
            let mut tape = Tape::new();
            let vars: Vec<VarId> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
            let out = apply(&mut tape, &vars);
            let c = tape.leaf(coeff.clone());
            let weighted = tape.mul(out, c).unwrap();
            let loss = tape.sum_all(weighted);
            (tape, vars, loss)
        };
        let analytic: Vec<Tensor2> = {
            let (mut tape, vars, loss) = eval(&inputs);
            tape.backward(loss).unwrap();
            vars.iter().map(|&v| tape.grad(v).clone()).collect()
        };
        let f = |xs: &[Tensor2]| -> f64 {
            let (tape, _, loss) = eval(xs);
            tape.value(loss).get(0, 0)
        };
        let worst = grad_check(&f, &inputs, &analytic);
        assert!(
            worst <= FD_TOL,
            "{name} trial {trial}: worst relative error {worst}"
        );
    }
}

/// Inputs with entries pushed away from piecewise kinks at zero.
fn kink_safe(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> Tensor2 {
    let mut t = random_tensor(rows, cols, rng);
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v += if *v >= 0.0 { 0.1 } else { -0.1 };
        }
    }
    t
}

#[test]
fn criterion_2_gradient_suite() {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let trials = 100;
    let dims = |rng: &mut ChaCha20Rng| (rng.gen_range(1..=6), rng.gen_range(1..=6));

    fd_check_op(
        "matmul",
        trials,
        &mut rng,
        &|rng| {
            let (m, k) = dims(rng);
            let n = rng.gen_range(1..=6);
            vec![random_tensor(m, k, rng), random_tensor(k, n, rng)]
        },
        &|tape, vars| tape.matmul(vars[0], vars[1]).unwrap(),
    );
    fd_check_op(
        "add",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![random_tensor(m, n, rng), random_tensor(m, n, rng)]
        },
        &|tape, vars| tape.add(vars[0], vars[1]).unwrap(),
    );
    fd_check_op(
        "add_row_broadcast",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![random_tensor(m, n, rng), random_tensor(1, n, rng)]
        },
        &|tape, vars| tape.add_row_broadcast(vars[0], vars[1]).unwrap(),
    );
    fd_check_op(
        "mul",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![random_tensor(m, n, rng), random_tensor(m, n, rng)]
        },
        &|tape, vars| tape.mul(vars[0], vars[1]).unwrap(),
    );
    fd_check_op(
        "scale",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![random_tensor(m, n, rng)]
        },
        &|tape, vars| tape.scale(vars[0], -1.75),
    );
    fd_check_op(
        "sigmoid",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![random_tensor(m, n, rng)]
        },
        &|tape, vars| tape.sigmoid(vars[0]),
    );
    fd_check_op(
        "leaky_relu",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![kink_safe(m, n, rng)]
        },
        &|tape, vars| tape.leaky_relu(vars[0], 0.2),
    );
    fd_check_op(
        "elu",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![kink_safe(m, n, rng)]
        },
        &|tape, vars| tape.elu(vars[0], 1.0),
    );
    fd_check_op(
        "relu",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![kink_safe(m, n, rng)]
        },
        &|tape, vars| tape.relu(vars[0]),
    );
    fd_check_op(
        "softmax_rows",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![random_tensor(m, n, rng)]
        },
        &|tape, vars| tape.softmax_rows(vars[0], None).unwrap(),
    );
    {
        // masked softmax needs a mask with at least one live entry per row
        let mut mask_rng = ChaCha20Rng::seed_from_u64(2002);
        for _ in 0..trials {
            let (m, n) = (mask_rng.gen_range(1..=6), mask_rng.gen_range(2..=6));
            let mut mask = BoolMat::filled(m, n, false);
            for r in 0..m {
                let live = mask_rng.gen_range(1..=n);
                for c in 0..live {
                    mask.set(r, c, true);
                }
            }
            let mask = Rc::new(mask);
            let mask_for_apply = mask.clone();
            fd_check_op(
                "softmax_rows_masked",
                1,
                &mut mask_rng,
                &|rng| vec![random_tensor(m, n, rng)],
                &move |tape, vars| {
                    tape.softmax_rows(vars[0], Some(mask_for_apply.clone())).unwrap()
                },
            );
        }
    }
    {
        // dropout with one fixed seed per trial so the mask is repeatable
        let mut drop_rng = ChaCha20Rng::seed_from_u64(2003);
        for trial in 0..trials {
            let seed = 5000 + trial as u64;
            fd_check_op(
                "dropout",
                1,
                &mut drop_rng,
                &|rng| {
                    let (m, n) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
                    vec![random_tensor(m, n, rng)]
                },
                &move |tape, vars| {
                    let mut op_rng = ChaCha20Rng::seed_from_u64(seed);
                    tape.dropout(vars[0], 0.25, true, &mut op_rng).unwrap()
                },
            );
        }
    }
    fd_check_op(
        "concat_rows",
        trials,
        &mut rng,
        &|rng| {
            let n = rng.gen_range(1..=6);
            vec![
                random_tensor(rng.gen_range(1..=6), n, rng),
                random_tensor(rng.gen_range(1..=6), n, rng),
            ]
        },
        &|tape, vars| tape.concat_rows(vars[0], vars[1]).unwrap(),
    );
    fd_check_op(
        "concat_cols",
        trials,
        &mut rng,
        &|rng| {
            let m = rng.gen_range(1..=6);
            vec![
                random_tensor(m, rng.gen_range(1..=6), rng),
                random_tensor(m, rng.gen_range(1..=6), rng),
            ]
        },
        &|tape, vars| tape.concat_cols(vars[0], vars[1]).unwrap(),
    );
    fd_check_op(
        "pairwise_sum",
        trials,
        &mut rng,
        &|rng| {
            vec![
                random_tensor(rng.gen_range(1..=6), 1, rng),
                random_tensor(rng.gen_range(1..=6), 1, rng),
            ]
        },
        &|tape, vars| tape.pairwise_sum(vars[0], vars[1]).unwrap(),
    );
    {
        let mut sel_rng = ChaCha20Rng::seed_from_u64(2004);
        for _ in 0..trials {
            let m = sel_rng.gen_range(1..=6);
            let picks: Vec<usize> = (0..sel_rng.gen_range(1..=6))
                .map(|_| sel_rng.gen_range(0..m))
                .collect();
            let picks_for_apply = picks.clone();
            fd_check_op(
                "row_select",
                1,
                &mut sel_rng,
                &|rng| vec![random_tensor(m, rng.gen_range(1..=6), rng)],
                &move |tape, vars| tape.row_select(vars[0], &picks_for_apply).unwrap(),
            );
        }
    }
    fd_check_op(
        "mean_rows",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![random_tensor(m, n, rng)]
        },
        &|tape, vars| tape.mean_rows(vars[0]).unwrap(),
    );
    fd_check_op(
        "reshape",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![random_tensor(m, n, rng)]
        },
        &|tape, vars| {
            let (m, n) = tape.value(vars[0]).shape();
            tape.reshape(vars[0], m * n, 1).unwrap()
        },
    );
    fd_check_op(
        "transpose",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![random_tensor(m, n, rng)]
        },
        &|tape, vars| tape.transpose(vars[0]),
    );
    fd_check_op(
        "sum_all",
        trials,
        &mut rng,
        &|rng| {
            let (m, n) = dims(rng);
            vec![random_tensor(m, n, rng)]
        },
        &|tape, vars| tape.sum_all(vars[0]),
    );
    {
        let mut bce_rng = ChaCha20Rng::seed_from_u64(2005);
        for _ in 0..trials {
            let (m, n) = (bce_rng.gen_range(1..=6), bce_rng.gen_range(1..=6));
            let targets = Rc::new(Tensor2::from_vec(
                m,
                n,
                (0..m * n)
                    .map(|_| f64::from(bce_rng.gen_bool(0.5)))
                    .collect(),
            ));
            let targets_for_apply = targets.clone();
            fd_check_op(
                "bce_loss",
                1,
                &mut bce_rng,
                &|rng| vec![random_probs(m, n, rng)],
                &move |tape, vars| tape.bce_loss(vars[0], targets_for_apply.clone()).unwrap(),
            );
        }
    }

    // full model forward: every variant on a 4-tweet, 3-label toy corpus
    // whose graph stays at 10 nodes (7 distinct words + 3 labels)
    let vocab = LabelVocabulary::new(vec![
        "Alert".into(),
        "Relief".into(),
        "Weather".into(),
    ])
    .unwrap();
    let toy = [
        ("t0", "flames smoke hillside", vec!["Alert"]),
        ("t1", "smoke shelter supplies", vec!["Alert", "Relief"]),
        ("t2", "supplies shelter supplies", vec!["Relief"]),
        ("t3", "storm winds flames", vec!["Weather"]),
    ];
    let corpus: Vec<triage::dataset::RawTweet> = toy
        .iter()
        .map(|(id, text, labels)| triage::dataset::RawTweet {
            id: id.to_string(),
            text: text.to_string(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            priority: None,
        })
        .collect();
    let tweets = preprocess_plain(&corpus, &vocab);
    let graph = graph_over(&tweets, &vocab, 4, 9);
    assert!(graph.node_count() <= 10, "toy graph has {} nodes", graph.node_count());
    for variant in [Variant::Full, Variant::EncoderOnly, Variant::GraphOnly] {
        fd_check_model(variant, &tweets, &vocab, &graph);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("criterion 2 (gradient suite incl. model_forward, {elapsed:?}): PASS");
}

fn fd_check_model(
    variant: Variant,
    tweets: &[ProcessedTweet],
    vocab: &LabelVocabulary,
    graph: &CorpusGraph,
) {
    use triage::encoder::TokenVocab;

    let config = ModelConfig {
        variant,
        encoder: EncoderSpec::trainable(4),
        gat: GatConfig {
            hidden: 4,
            heads1: 2,
            heads2: 1,
            out_dim: 4,
            dropout: 0.0,
            ..Default::default()
        },
        relnet_hidden: 6,
    };
    let token_vocab = TokenVocab::from_corpus(tweets.iter());
    let model = Model::build(
        &config,
        vocab,
        Some(token_vocab),
        None,
        variant.needs_graph().then_some(graph),
    )
    .unwrap();
    let mut store = ParamStore::new();
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    model.init_params(&mut store, &mut rng);

    let refs: Vec<&ProcessedTweet> = tweets.iter().collect();
    let k = vocab.k();
    let mut target_data = Vec::new();
    for t in &refs {
        target_data.extend(t.label_vector.bits.iter().map(|&b| b as f64));
    }
    let targets = Rc::new(Tensor2::from_vec(refs.len(), k, target_data));

    let snapshot = store.export();
    let names: Vec<String> = snapshot.iter().map(|(n, _)| n.clone()).collect();
    let tensors: Vec<Tensor2> = snapshot.iter().map(|(_, t)| t.clone()).collect();

    let loss_of = |params: &[Tensor2]| -> f64 {
        let mut store = ParamStore::new();
        for (name, tensor) in names.iter().zip(params.iter()) {
            store.insert(name, tensor.clone());
        }
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let probs = model
            .forward_batch(&mut tape, &refs, &store, &mut binder, false, &mut rng)
            .unwrap();
        let loss = tape.bce_loss(probs, targets.clone()).unwrap();
        tape.value(loss).get(0, 0)
    };

    // analytic gradients through the tape
    let analytic: Vec<Tensor2> = {
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let mut fwd_rng = ChaCha20Rng::seed_from_u64(0);
        let probs = model
            .forward_batch(&mut tape, &refs, &store, &mut binder, false, &mut fwd_rng)
            .unwrap();
        let loss = tape.bce_loss(probs, targets.clone()).unwrap();
        tape.backward(loss).unwrap();
        store.zero_grads();
        binder.harvest(&tape, &mut store).unwrap();
        names
            .iter()
            .map(|n| store.grad(n).unwrap().clone())
            .collect()
    };

    let worst = grad_check(&loss_of, &tensors, &analytic);
    assert!(
        worst <= FD_TOL,
        "model_forward {variant:?}: worst relative error {worst}"
    );
}

// ---------------------------------------------------------------------------
// criterion 3: attention invariants
// ---------------------------------------------------------------------------

fn random_support_graph(n: usize, dim: usize, rng: &mut ChaCha20Rng) -> CorpusGraph {
    let mut adjacency = Tensor2::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.5) {
                let w = rng.gen_range(0.05..1.0);
                adjacency.set(i, j, w);
                adjacency.set(j, i, w);
            }
        }
    }
    let nodes = (0..n)
        .map(|index| GraphNode {
            name: format!("n{index}"),
            kind: NodeKind::Word,
            index,
        })
        .collect();
    CorpusGraph {
        nodes,
        adjacency,
        features: random_tensor(n, dim, rng),
        label_indices: vec![],
    }
}

fn random_layer_params(
    f_in: usize,
    f_out: usize,
    heads: usize,
    rng: &mut ChaCha20Rng,
) -> GatLayerParams {
    GatLayerParams {
        heads: (0..heads)
            .map(|_| GatHeadParams {
                w: random_tensor(f_out, f_in, rng),
                a: random_tensor(2 * f_out, 1, rng),
            })
            .collect(),
        combine: HeadCombine::Concat,
    }
}

#[test]
fn criterion_3_attention_invariants() {
    let mut rng = ChaCha20Rng::seed_from_u64(303);

    // rows sum to 1 within 1e-10 on random graphs
    for _ in 0..50 {
        let n = rng.gen_range(2..=8);
        let graph = random_support_graph(n, 3, &mut rng);
        let params = random_layer_params(3, 2, 1, &mut rng);
        let (_, alpha) = gat_layer(&graph.features, &graph, &params, false, 0).unwrap();
        let a = &alpha.per_head[0];
        for i in 0..n {
            let sum: f64 = (0..n).map(|j| a.get(i, j)).sum();
            assert!((sum - 1.0).abs() < 1e-10, "row {i} sums to {sum}");
            for j in 0..n {
                if graph.adjacency.get(i, j) == 0.0 {
                    assert_eq!(a.get(i, j), 0.0);
                }
            }
        }
    }

    // zero attention vector -> exactly uniform over each neighborhood
    for _ in 0..20 {
        let n = rng.gen_range(2..=8);
        let graph = random_support_graph(n, 3, &mut rng);
        let mut params = random_layer_params(3, 2, 1, &mut rng);
        params.heads[0].a = Tensor2::zeros(4, 1);
        let (_, alpha) = gat_layer(&graph.features, &graph, &params, false, 0).unwrap();
        let a = &alpha.per_head[0];
        for i in 0..n {
            let degree = (0..n).filter(|&j| graph.adjacency.get(i, j) > 0.0).count();
            for j in 0..n {
                if graph.adjacency.get(i, j) > 0.0 {
                    assert_eq!(a.get(i, j), 1.0 / degree as f64);
                }
            }
        }
    }

    // permutation equivariance, exact to the bit, on 50 random 6-node graphs
    for trial in 0..50 {
        let n = 6;
        let graph = random_support_graph(n, 4, &mut rng);
        let heads = 1 + (trial % 2);
        let params = random_layer_params(4, 3, heads, &mut rng);
        let (out, alpha) = gat_layer(&graph.features, &graph, &params, false, 0).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);

        let mut padj = Tensor2::zeros(n, n);
        let mut pfeat = Tensor2::zeros(n, graph.features.cols());
        for i in 0..n {
            for j in 0..n {
                padj.set(perm[i], perm[j], graph.adjacency.get(i, j));
            }
            for c in 0..graph.features.cols() {
                pfeat.set(perm[i], c, graph.features.get(i, c));
            }
        }
        let pgraph = CorpusGraph {
            nodes: graph.nodes.clone(),
            adjacency: padj,
            features: pfeat,
            label_indices: vec![],
        };
        let (pout, palpha) = gat_layer(&pgraph.features, &pgraph, &params, false, 0).unwrap();
        for i in 0..n {
            for c in 0..out.cols() {
                assert_eq!(
                    out.get(i, c).to_bits(),
                    pout.get(perm[i], c).to_bits(),
                    "trial {trial}: feature ({i},{c}) differs under permutation"
                );
            }
            for j in 0..n {
                for h in 0..alpha.per_head.len() {
                    assert_eq!(
                        alpha.per_head[h].get(i, j).to_bits(),
                        palpha.per_head[h].get(perm[i], perm[j]).to_bits()
                    );
                }
            }
        }
    }

    println!("criterion 3 (attention invariants + exact permutation equivariance): PASS");
}

// ---------------------------------------------------------------------------
// criterion 4: overfit test
// ---------------------------------------------------------------------------

fn overfit_model_config() -> ModelConfig {
    ModelConfig {
        variant: Variant::Full,
        encoder: EncoderSpec::trainable(16),
        gat: GatConfig {
            hidden: 16,
            heads1: 2,
            heads2: 1,
            out_dim: 16,
            ..Default::default()
        },
        relnet_hidden: 32,
    }
}

#[test]
fn criterion_4_overfit_separable_corpus() {
    let started = Instant::now();
    let (corpus, vocab) = clustered_corpus(4, 777);
    assert_eq!(corpus.len(), 12);
    let tweets = preprocess_plain(&corpus, &vocab);
    let graph = graph_over(&tweets, &vocab, 16, 1);
    let ids: Vec<String> = tweets.iter().map(|t| t.id.clone()).collect();
    // overfit check: validate on the training set itself
    let split = DatasetSplit {
        seed: 0,
        train: ids.clone(),
        valid: ids,
        test: vec![],
    };
    let inputs = TrainInputs {
        tweets: &tweets,
        split: &split,
        vocab: &vocab,
        graph: Some(&graph),
        imported: None,
    };
    for seed in 1..=5 {
        let config = TrainConfig {
            epochs: 200,
            learning_rate: 1e-2,
            patience: 200,
            seed,
            ..Default::default()
        };
        let (ckpt, history) = train(&inputs, &overfit_model_config(), &config).unwrap();
        assert_eq!(
            ckpt.best_valid_f1, 1.0,
            "seed {seed} reached only {} after {} epochs",
            ckpt.best_valid_f1,
            history.len()
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!("criterion 4 (overfit to F1 1.0, 5/5 seeds, {elapsed:?}): PASS");
}

// ---------------------------------------------------------------------------
// criterion 5: ablation behavior
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_full_variant_dominates_ablations() {
    let (corpus, vocab) = clustered_corpus(10, 888);
    let tweets = preprocess_plain(&corpus, &vocab);
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 1..=5u64 {
        let split = triage::dataset::make_split(&corpus, (0.8, 0.2), 0.2, seed).unwrap();
        // transductive graph over the training tweets only
        let train_tweets: Vec<ProcessedTweet> = tweets
            .iter()
            .filter(|t| split.train.contains(&t.id))
            .cloned()
            .collect();
        let graph = graph_over(&train_tweets, &vocab, 16, seed);
        let inputs = TrainInputs {
            tweets: &tweets,
            split: &split,
            vocab: &vocab,
            graph: Some(&graph),
            imported: None,
        };
        let f1_of = |variant: Variant| -> f64 {
            let config = TrainConfig {
                epochs: 150,
                batch_size: 16,
                learning_rate: 1e-2,
                patience: 150,
                seed,
                variant,
                ..Default::default()
            };
            let (ckpt, _) = train(&inputs, &overfit_model_config(), &config).unwrap();
            ckpt.best_valid_f1
        };
        let full = f1_of(Variant::Full);
        let encoder_only = f1_of(Variant::EncoderOnly);
        let graph_only = f1_of(Variant::GraphOnly);
        if full >= encoder_only && full >= graph_only {
            wins += 1;
        }
        detail.push(format!(
            "seed {seed}: full {full:.3} encoder-only {encoder_only:.3} graph-only {graph_only:.3}"
        ));
    }
    assert!(wins >= 4, "full variant won only {wins}/5 seeds: {detail:?}");
    println!("criterion 5 (ablation dominance {wins}/5 seeds): PASS");
}

// ---------------------------------------------------------------------------
// criterion 6: alert-worth branch table and bounds
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_aaw_branch_table_and_bounds() {
    // worked branch examples, exact
    assert_eq!(high_priority_worth(0.75, 0.7, 0.3, 0.4), -1.0);
    assert_eq!(high_priority_worth(0.75, 0.7, 0.9, 0.0), 0.75);
    assert_eq!(low_priority_worth(0.7, 0.9, 0.0, 0.3), 0.0);

    // all tweets low-priority, unalerted, with saturated worth: aaw_all = 0.5
    let vocab = LabelVocabulary::new(vec!["MovePeople".into(), "News".into()]).unwrap();
    let cfg = AawConfig::default();
    let parts: Vec<(String, Option<f64>, LabelVector)> = (0..4)
        .map(|i| {
            (
                format!("t{i}"),
                Some(0.1),
                LabelVector { bits: vec![1, 1] },
            )
        })
        .collect();
    let preds: Vec<Prediction> = (0..4)
        .map(|_| Prediction {
            probs: vec![0.6, 0.6],
            labels: LabelVector { bits: vec![1, 1] },
            priority_score: 0.1,
        })
        .collect();
    let (aaw_all, aaw_high) = aaw_from_parts(&preds, &parts, &vocab, &cfg).unwrap();
    assert_eq!(aaw_all, 0.5);
    assert_eq!(aaw_high, 0.0);

    // 1000 random instances stay within [-1, 1]
    let mut rng = ChaCha20Rng::seed_from_u64(606);
    for _ in 0..1000 {
        let s = rng.gen_range(1..=12);
        let k = rng.gen_range(1..=5);
        let vocab =
            LabelVocabulary::new((0..k).map(|j| format!("L{j}")).collect()).unwrap();
        let cfg = AawConfig {
            alpha: rng.gen_range(0.0..=1.0),
            cutoff: rng.gen_range(0.05..0.95),
            actionable_labels: (0..k)
                .filter(|_| rng.gen_bool(0.5))
                .map(|j| format!("L{j}"))
                .collect(),
            ..Default::default()
        };
        let parts: Vec<(String, Option<f64>, LabelVector)> = (0..s)
            .map(|i| {
                (
                    format!("t{i}"),
                    Some(rng.gen_range(0.0..=1.0)),
                    LabelVector {
                        bits: (0..k).map(|_| u8::from(rng.gen_bool(0.4))).collect(),
                    },
                )
            })
            .collect();
        let preds: Vec<Prediction> = (0..s)
            .map(|_| {
                let probs: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
                let priority_score = probs.iter().copied().fold(0.0, f64::max);
                Prediction {
                    labels: LabelVector {
                        bits: probs.iter().map(|&p| u8::from(p >= 0.5)).collect(),
                    },
                    probs,
                    priority_score,
                }
            })
            .collect();
        let (aaw_all, aaw_high) = aaw_from_parts(&preds, &parts, &vocab, &cfg).unwrap();
        assert!((-1.0..=1.0).contains(&aaw_all), "aaw_all {aaw_all}");
        assert!((-1.0..=1.0).contains(&aaw_high), "aaw_high {aaw_high}");
    }
    println!("criterion 6 (alert-worth branch table + 1000-instance bounds): PASS");
}

// ---------------------------------------------------------------------------
// criterion 7: determinism of the train command
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_train_command_is_byte_deterministic() {
    use std::process::Command;
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = clustered_corpus(4, 99);
    save_corpus(&corpus, &dir.path().join("corpus.jsonl")).unwrap();
    let bin = env!("CARGO_BIN_EXE_triage");

    let run = |name: &str| -> (Vec<u8>, Vec<u8>) {
        let status = Command::new(bin)
            .current_dir(dir.path())
            .args(["preprocess", "--corpus", "corpus.jsonl", "--out", "p.json"])
            .status()
            .unwrap();
        assert!(status.success());
        let status = Command::new(bin)
            .current_dir(dir.path())
            .args([
                "build-graph",
                "--processed",
                "p.json",
                "--feature-dim",
                "8",
                "--out",
                "g.bin",
            ])
            .status()
            .unwrap();
        assert!(status.success());
        let ckpt = format!("{name}.ckpt");
        let hist = format!("{name}.csv");
        let split = format!("{name}.split.json");
        let status = Command::new(bin)
            .current_dir(dir.path())
            .args([
                "train",
                "--processed",
                "p.json",
                "--graph",
                "g.bin",
                "--epochs",
                "8",
                "--batch-size",
                "4",
                "--learning-rate",
                "0.01",
                "--patience",
                "8",
                "--seed",
                "11",
                "--encoder-dim",
                "8",
                "--gat-hidden",
                "8",
                "--gat-heads1",
                "2",
                "--gat-out-dim",
                "8",
                "--relnet-hidden",
                "16",
                "--checkpoint-out",
                &ckpt,
                "--history-out",
                &hist,
                "--split-out",
                &split,
            ])
            .status()
            .unwrap();
        assert!(status.success());
        (
            std::fs::read(dir.path().join(&ckpt)).unwrap(),
            std::fs::read(dir.path().join(&hist)).unwrap(),
        )
    };
    let (ckpt_a, hist_a) = run("a");
    let (ckpt_b, hist_b) = run("b");
    assert_eq!(ckpt_a, ckpt_b, "checkpoints differ between identical runs");
    assert_eq!(hist_a, hist_b, "histories differ between identical runs");
    println!("criterion 7 (byte-identical checkpoints and histories): PASS");
}

// ---------------------------------------------------------------------------
// criterion 8: round-trips
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_round_trips() {
    // checkpoint save/load: bit-equal forward outputs on 10 random tweets
    let (corpus, vocab) = clustered_corpus(4, 55);
    let tweets = preprocess_plain(&corpus, &vocab);
    let graph = graph_over(&tweets, &vocab, 8, 3);
    let split = triage::dataset::make_split(&corpus, (0.8, 0.2), 0.2, 5).unwrap();
    let inputs = TrainInputs {
        tweets: &tweets,
        split: &split,
        vocab: &vocab,
        graph: Some(&graph),
        imported: None,
    };
    let config = TrainConfig {
        epochs: 4,
        batch_size: 4,
        learning_rate: 1e-2,
        patience: 10,
        seed: 2,
        ..Default::default()
    };
    let mcfg = ModelConfig {
        variant: Variant::Full,
        encoder: EncoderSpec::trainable(8),
        gat: GatConfig {
            hidden: 8,
            heads1: 2,
            heads2: 1,
            out_dim: 8,
            ..Default::default()
        },
        relnet_hidden: 16,
    };
    let (ckpt, _) = train(&inputs, &mcfg, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ckpt.save(&path).unwrap();
    let loaded = triage::train::Checkpoint::load(&path).unwrap();
    let (model_a, store_a) = model_from_checkpoint(&ckpt, Some(&graph), None).unwrap();
    let (model_b, store_b) = model_from_checkpoint(&loaded, Some(&graph), None).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    for _ in 0..10 {
        let tweet = &tweets[rng.gen_range(0..tweets.len())];
        let pa = model_forward(&model_a, &store_a, tweet).unwrap();
        let pb = model_forward(&model_b, &store_b, tweet).unwrap();
        assert_eq!(
            pa.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            pb.iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
    }

    // corpus serialization is lossless
    let corpus_path = dir.path().join("corpus.jsonl");
    save_corpus(&corpus, &corpus_path).unwrap();
    let text = std::fs::read_to_string(&corpus_path).unwrap();
    let (reloaded, revocab) = parse_corpus(&text, None).unwrap();
    assert_eq!(corpus, reloaded);
    assert_eq!(vocab, revocab);

    // metrics report serialization is lossless
    let report = MetricsReport {
        f1_weighted: 1.0 / 3.0,
        per_label: vec![LabelScore {
            label: "Alert".into(),
            precision: 2.0 / 7.0,
            recall: 0.9999999999999999,
            f1: 0.123_456_789_012_345_68,
            support: 3,
        }],
        hamming_loss: 1e-300,
        jaccard_mean: 0.7,
        aaw_high: Some(-0.987654321098765),
        aaw_all: Some(0.0),
    };
    let report_path = dir.path().join("report.json");
    report.save(&report_path).unwrap();
    assert_eq!(report, MetricsReport::load(&report_path).unwrap());

    println!("criterion 8 (checkpoint/corpus/report round-trips): PASS");
}

// ---------------------------------------------------------------------------
// criterion 9: BCE closed form
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_bce_closed_form() {
    let mut rng = ChaCha20Rng::seed_from_u64(909);
    for _ in 0..20 {
        let (m, n) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let probs = Tensor2::filled(m, n, 0.5);
        let targets = Tensor2::from_vec(
            m,
            n,
            (0..m * n).map(|_| f64::from(rng.gen_bool(0.5))).collect(),
        );
        let loss = bce_loss(&probs, &targets).unwrap();
        assert!(
            (loss - 2.0f64.ln()).abs() < 1e-12,
            "loss {loss} vs ln 2 {}",
            2.0f64.ln()
        );
    }
    println!("criterion 9 (bce at one-half equals ln 2): PASS");
}
