//! Acceptance suite: one test per release criterion, each printing a PASS
//! line with its measurements (visible with `--nocapture`).
//!
//! Criterion 8 needs external SNLI files and is skipped unless the
//! `DRCN_SNLI_TRAIN` / `DRCN_SNLI_DEV` environment variables point at them.

// index loops keep the brute-force oracles shaped like the formulas
#![allow(clippy::needless_range_loop)]

use std::time::Instant;

use drcn::data::{
    exact_match_flags, load_glove, make_batches, tokenize, SentencePair, Vocab,
};
use drcn::model::{
    co_attention, ConnectionMode, DrcnModel, ForwardOptions, Mode, ModelConfig,
};
use drcn::params::GradMap;
use drcn::rng::DrcnRng;
use drcn::runconfig::RunConfig;
use drcn::tensor::{cosine, Tape, Tensor, COSINE_EPS};
use drcn::train::{
    self, evaluate, overfit_smoke, rmsprop_step, run_ablation, run_micro_gradcheck,
    RmspropState, TrainConfig, Variant, MICRO_GRADCHECK_TOLERANCE,
};

fn rand_tensor(rng: &mut DrcnRng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.range(-1.0, 1.0)).collect()).unwrap()
}

#[test]
fn accept_01_gradient_soundness() {
    let start = Instant::now();
    let combos = [
        (ConnectionMode::Dense, true),
        (ConnectionMode::Dense, false),
        (ConnectionMode::Residual, true),
        (ConnectionMode::Residual, false),
        (ConnectionMode::Plain, true),
        (ConnectionMode::Plain, false),
    ];
    for (mode, attention) in combos {
        let report = run_micro_gradcheck(mode, attention).unwrap();
        assert!(
            report.max_rel_err < MICRO_GRADCHECK_TOLERANCE,
            "{mode:?} attention={attention}: {} at {}[{}]",
            report.max_rel_err,
            report.worst_param,
            report.worst_index
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "gradient checks took {elapsed:.1}s");
    println!("ACCEPTANCE 1 gradient soundness: PASS ({elapsed:.1}s for 6 configs)");
}

#[test]
fn accept_02_concat_preservation() {
    // 100 random inputs through dense stacks; the trailing slice of every
    // transition output must reproduce the layer input bit-exactly
    let mut rng = DrcnRng::seed_from(2020);
    let vocab_words: Vec<String> = (0..30).map(|i| format!("t{i}")).collect();
    let mut checked = 0usize;
    for round in 0..10 {
        let pairs: Vec<SentencePair> = (0..10)
            .map(|_| {
                let len_p = 2 + rng.below(5);
                let len_q = 2 + rng.below(5);
                SentencePair {
                    premise: (0..len_p).map(|_| vocab_words[rng.below(30)].clone()).collect(),
                    hypothesis: (0..len_q)
                        .map(|_| vocab_words[rng.below(30)].clone())
                        .collect(),
                    label: rng.below(3) as u32,
                    group_id: None,
                }
            })
            .collect();
        let words = Vocab::build_words(&pairs);
        let chars = Vocab::build_chars(&pairs);
        let mut cfg = ModelConfig::micro(ConnectionMode::Dense, true);
        if round % 2 == 0 {
            cfg.ae_layers.clear(); // also exercise the no-bottleneck stack
        }
        let mut mrng = DrcnRng::seed_from(3000 + round);
        let model = DrcnModel::init(cfg, words.len(), chars.len(), &mut mrng).unwrap();
        let batch = make_batches(&pairs, 10, 8, 6, &words, &chars, None).remove(0);
        let opts = ForwardOptions {
            mode: Mode::Eval,
            collect_diagnostics: false,
            collect_transitions: true,
        };
        let pass = model.forward_batch(&batch, &opts, None).unwrap();
        for b in 0..batch.size {
            for l in 0..model.config.num_layers {
                for (side_in, side_out) in [
                    (&pass.diag.layer_inputs_p[b][l], &pass.diag.transitions_p[b][l]),
                    (&pass.diag.layer_inputs_q[b][l], &pass.diag.transitions_q[b][l]),
                ] {
                    let tail = side_out.cols() - side_in.cols();
                    for t in 0..side_out.rows() {
                        for k in 0..side_in.cols() {
                            assert_eq!(
                                side_out.at2(t, tail + k).to_bits(),
                                side_in.at2(t, k).to_bits(),
                                "input {round}/{b} layer {l}"
                            );
                        }
                    }
                    checked += 1;
                }
            }
        }
    }
    assert!(checked >= 100, "only {checked} transitions checked");
    println!("ACCEPTANCE 2 concatenation preservation: PASS ({checked} transitions bit-exact)");
}

#[test]
fn accept_03_attention_stochasticity() {
    let mut rng = DrcnRng::seed_from(333);
    // 1000 random masked score rows
    for _ in 0..1000 {
        let n = 2 + rng.below(10);
        let mut mask: Vec<u8> = (0..n).map(|_| (rng.uniform() < 0.6) as u8).collect();
        if mask.iter().all(|&m| m == 0) {
            mask[rng.below(n)] = 1;
        }
        let scores: Vec<f64> = (0..n).map(|_| rng.range(-50.0, 50.0)).collect();
        let mut tape = Tape::no_grad();
        let s = tape.constant(Tensor::new(vec![n], scores).unwrap());
        let y = tape.softmax_masked_rows(s, &mask).unwrap();
        let out = tape.value(y);
        let mass: f64 =
            out.iter().zip(&mask).filter(|(_, &m)| m == 1).map(|(v, _)| v).sum();
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        for (v, &m) in out.iter().zip(&mask) {
            if m == 0 {
                assert_eq!(*v, 0.0);
            }
        }
    }
    // cosine scores stay within [−1−1e−9, 1+1e−9], including degenerate rows
    for _ in 0..1000 {
        let d = 1 + rng.below(8);
        let mut u: Vec<f64> = (0..d).map(|_| rng.range(-3.0, 3.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.range(-3.0, 3.0)).collect();
        if rng.uniform() < 0.05 {
            u.iter_mut().for_each(|x| *x = 0.0);
        }
        let c = cosine(&u, &v, COSINE_EPS);
        assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&c), "cosine {c}");
    }
    println!("ACCEPTANCE 3 attention stochasticity: PASS (1000 rows + 1000 cosine bounds)");
}

#[test]
fn accept_04_oracle_equivalence() {
    let mut rng = DrcnRng::seed_from(44);

    // single LSTM step against a scalar brute-force reference
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let d = 3;
    let h = 2;
    let x: Vec<f64> = (0..d).map(|_| rng.range(-1.0, 1.0)).collect();
    let wx: Vec<f64> = (0..d * 4 * h).map(|_| rng.range(-0.5, 0.5)).collect();
    let wh: Vec<f64> = (0..h * 4 * h).map(|_| rng.range(-0.5, 0.5)).collect();
    let b: Vec<f64> = (0..4 * h).map(|_| rng.range(-0.5, 0.5)).collect();
    let mut expect = vec![0.0; h];
    for j in 0..h {
        let pre = |g: usize| -> f64 {
            let col = g * h + j;
            b[col] + (0..d).map(|k| x[k] * wx[k * 4 * h + col]).sum::<f64>()
        };
        let (i_g, f_g, g_g, o_g) = (sig(pre(0)), sig(pre(1)), pre(2).tanh(), sig(pre(3)));
        let c = f_g * 0.0 + i_g * g_g;
        expect[j] = o_g * c.tanh();
    }
    let mut tape = Tape::no_grad();
    let xv = tape.constant(Tensor::new(vec![1, d], x).unwrap());
    let wxv = tape.constant(Tensor::new(vec![d, 4 * h], wx).unwrap());
    let whv = tape.constant(Tensor::new(vec![h, 4 * h], wh).unwrap());
    let bv = tape.constant(Tensor::new(vec![4 * h], b).unwrap());
    let out = tape.lstm_seq(xv, wxv, whv, bv, 1, false).unwrap();
    for (a, e) in tape.value(out).iter().zip(&expect) {
        assert!((a - e).abs() < 1e-10, "lstm {a} vs {e}");
    }

    // co-attention I=3, J=4 against the brute-force double loop
    let (i_n, j_n, dd) = (3, 4, 5);
    let hp = rand_tensor(&mut rng, &[i_n, dd]);
    let hq = rand_tensor(&mut rng, &[j_n, dd]);
    let mut tape = Tape::no_grad();
    let hpv = tape.constant(hp.clone());
    let hqv = tape.constant(hq.clone());
    let att = co_attention(&mut tape, hpv, hqv).unwrap();
    for i in 0..i_n {
        let mut scores = vec![0.0; j_n];
        for j in 0..j_n {
            scores[j] = cosine(
                &hp.data()[i * dd..(i + 1) * dd],
                &hq.data()[j * dd..(j + 1) * dd],
                COSINE_EPS,
            );
        }
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
        for j in 0..j_n {
            let alpha = (scores[j] - mx).exp() / z;
            assert!((tape.value(att.alpha_p)[i * j_n + j] - alpha).abs() < 1e-10);
        }
        for k in 0..dd {
            let ctx: f64 = (0..j_n)
                .map(|j| (scores[j] - mx).exp() / z * hq.data()[j * dd + k])
                .sum();
            assert!((tape.value(att.context_p)[i * dd + k] - ctx).abs() < 1e-10);
        }
    }

    // max-pool against brute force
    let x = rand_tensor(&mut rng, &[7, 4]);
    let mask = [1u8, 1, 1, 1, 1, 0, 0];
    let mut tape = Tape::no_grad();
    let xv = tape.constant(x.clone());
    let (pooled, rec) = tape.max_pool_time(xv, &mask).unwrap();
    for j in 0..4 {
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
        for t in 0..5 {
            if x.at2(t, j) > best {
                best = x.at2(t, j);
                arg = t;
            }
        }
        assert_eq!(tape.value(pooled)[j], best);
        assert_eq!(rec.argmax[j], arg);
    }

    // AP / RR on 50 random ranking groups against a direct oracle (exact)
    for g in 0..50 {
        let n = 2 + rng.below(9);
        let labels: Vec<bool> = {
            let mut l: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.4).collect();
            if !l.iter().any(|&x| x) {
                l[rng.below(n)] = true;
            }
            l
        };
        let ap = train::average_precision(&labels).unwrap();
        let rr = train::reciprocal_rank(&labels).unwrap();
        // oracle: walk the list directly
        let mut hits = 0;
        let mut ap_sum = 0.0;
        let mut first = None;
        for (rank0, &rel) in labels.iter().enumerate() {
            if rel {
                hits += 1;
                ap_sum += hits as f64 / (rank0 + 1) as f64;
                if first.is_none() {
                    first = Some(rank0 + 1);
                }
            }
        }
        assert_eq!(ap, ap_sum / hits as f64, "group {g}");
        assert_eq!(rr, 1.0 / first.unwrap() as f64, "group {g}");
    }
    println!("ACCEPTANCE 4 oracle equivalence: PASS (lstm, co-attention, max-pool, AP/RR)");
}

#[test]
fn accept_05_feature_width_arithmetic() {
    let cfg = RunConfig::preset("paper-snli").unwrap();
    assert_eq!(cfg.model.word_feature_width(), 633, "word features 300+300+32+1");
    assert_eq!(cfg.model.ae_hidden, 200);
    let plan = cfg.model.plan().unwrap();
    assert_eq!(plan.layer_inputs[0], 633);
    // layers 2..=5 read the 200-wide AE encodings
    for l in 1..5 {
        assert!(plan.layer_inputs[l] >= 200);
    }
    assert_eq!(plan.layer_inputs[1], 200);

    // structural check on the real thing: a 2-pair batch through the preset
    let pairs = vec![
        SentencePair {
            premise: tokenize("a man sleeps on the couch"),
            hypothesis: tokenize("a person rests"),
            label: 0,
            group_id: None,
        },
        SentencePair {
            premise: tokenize("two dogs race outside"),
            hypothesis: tokenize("the animals are inside"),
            label: 2,
            group_id: None,
        },
    ];
    let words = Vocab::build_words(&pairs);
    let chars = Vocab::build_chars(&pairs);
    let mut rng = DrcnRng::seed_from(5005);
    let model =
        DrcnModel::init(cfg.model.clone(), words.len(), chars.len(), &mut rng).unwrap();
    let batch = make_batches(&pairs, 2, 35, 16, &words, &chars, None).remove(0);
    let opts = ForwardOptions {
        mode: Mode::Eval,
        collect_diagnostics: true,
        collect_transitions: true,
    };
    let pass = model.forward_batch(&batch, &opts, None).unwrap();
    assert_eq!(pass.diag.layer_inputs_p[0][0].cols(), 633);
    assert_eq!(pass.diag.layer_inputs_p[0][1].cols(), 200, "AE-encoded width");
    for b in 0..2 {
        let s: f64 = pass.probs_of(b).iter().sum();
        assert!((s - 1.0).abs() < 1e-9, "probability row sums to {s}");
    }
    println!("ACCEPTANCE 5 feature-width arithmetic: PASS (633-wide words, 200-wide encodings)");
}

#[test]
fn accept_06_overfit_smoke() {
    let (loss, acc) = overfit_smoke(500, 5).unwrap();
    assert!(loss < 0.01, "loss {loss} after 500 steps");
    assert_eq!(acc, 1.0, "accuracy {acc}");
    println!("ACCEPTANCE 6 overfit smoke: PASS (loss {loss:.6}, accuracy 100%)");
}

#[test]
fn accept_07_synthetic_ablation_ordering() {
    let start = Instant::now();
    let cfg = RunConfig::preset("desk-ablate").unwrap();
    let mut tc = cfg.train.clone();
    tc.seed = 11;
    let train_pairs = train::synthetic::generate(5000, 3);
    let test_pairs = train::synthetic::generate(1000, 4);
    let words = Vocab::build_words(&train_pairs);
    let chars = Vocab::build_chars(&train_pairs);
    let suite =
        [Variant::Full, Variant::ResidualBoth, Variant::PlainAttn, Variant::PlainNoAttn];
    let rows = run_ablation(
        &suite,
        &cfg.model,
        &train_pairs,
        &test_pairs,
        &words,
        &chars,
        &tc,
        1,
    )
    .unwrap();
    let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    println!(
        "  full {:.4} >= residual {:.4} >= plain-attn {:.4} >= plain-noattn {:.4}",
        acc[0], acc[1], acc[2], acc[3]
    );
    assert!(acc[0] >= 0.95, "full-DRCN accuracy {} below 0.95", acc[0]);
    assert!(acc[0] >= acc[1], "full {} < residual {}", acc[0], acc[1]);
    assert!(acc[1] >= acc[2], "residual {} < plain-attn {}", acc[1], acc[2]);
    assert!(acc[2] >= acc[3], "plain-attn {} < plain-noattn {}", acc[2], acc[3]);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "ablation took {elapsed:.0}s");
    println!("ACCEPTANCE 7 synthetic ablation ordering: PASS ({elapsed:.0}s)");
}

#[test]
fn accept_08_snli_subset_smoke() {
    let (Ok(train_path), Ok(dev_path)) =
        (std::env::var("DRCN_SNLI_TRAIN"), std::env::var("DRCN_SNLI_DEV"))
    else {
        println!(
            "ACCEPTANCE 8 SNLI-subset smoke: SKIPPED \
             (set DRCN_SNLI_TRAIN and DRCN_SNLI_DEV to run)"
        );
        return;
    };
    let start = Instant::now();
    use drcn::data::{load_pairs, DataFormat, LabelMap};
    use std::path::Path;
    let mut train_pairs = load_pairs(
        Path::new(&train_path),
        DataFormat::from_path(Path::new(&train_path)),
        LabelMap::Nli,
    )
    .unwrap()
    .pairs;
    train_pairs.truncate(10_000);
    let mut dev_pairs = load_pairs(
        Path::new(&dev_path),
        DataFormat::from_path(Path::new(&dev_path)),
        LabelMap::Nli,
    )
    .unwrap()
    .pairs;
    dev_pairs.truncate(2_000);

    let mut cfg = RunConfig::preset("paper-snli").unwrap();
    cfg.model.num_layers = 2;
    cfg.model.ae_layers = vec![1];
    cfg.train.max_epochs = 2;
    cfg.train.seed = 8;
    let words = Vocab::build_words(&train_pairs);
    let chars = Vocab::build_chars(&train_pairs);
    let mut rng = DrcnRng::stream(cfg.train.seed, "init");
    let mut model =
        DrcnModel::init(cfg.model.clone(), words.len(), chars.len(), &mut rng).unwrap();
    if let Ok(glove) = std::env::var("DRCN_GLOVE") {
        let mut grng = DrcnRng::stream(cfg.train.seed, "oov");
        let (table, cov) =
            load_glove(Path::new(&glove), &words, cfg.model.word_dim, &mut grng).unwrap();
        model.load_word_embeddings(&table).unwrap();
        println!("  glove coverage {cov:.3}");
    }
    let out = drcn::train::train(
        &mut model,
        &train_pairs,
        &dev_pairs,
        &words,
        &chars,
        &cfg.train,
    )
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    println!("  dev accuracy {:.4} after 2 epochs ({elapsed:.0}s)", out.best_dev_acc);
    assert!(out.best_dev_acc > 0.55, "dev accuracy {}", out.best_dev_acc);
    assert!(elapsed < 1800.0, "took {elapsed:.0}s");
    println!("ACCEPTANCE 8 SNLI-subset smoke: PASS");
}

#[test]
fn accept_09_ae_regularizer_path() {
    // reconstruction loss strictly decreases over 50 optimizer steps on the
    // AE parameters alone
    let pairs: Vec<SentencePair> = drcn::train::micro_fixture_pairs();
    let words = Vocab::build_words(&pairs);
    let chars = Vocab::build_chars(&pairs);
    let cfg = ModelConfig::micro(ConnectionMode::Dense, true);
    let mut rng = DrcnRng::seed_from(99);
    let mut model = DrcnModel::init(cfg, words.len(), chars.len(), &mut rng).unwrap();
    let batch = make_batches(&pairs, pairs.len(), 8, 6, &words, &chars, None).remove(0);
    // small constant rate: near the optimum RMSProp's normalized step
    // oscillates at the scale of lr, so the window stays monotone only for
    // rates well below the final loss level
    let tc = TrainConfig { lr: 1e-4, l2: 0.0, ..TrainConfig::default() };
    let mut state = RmspropState::new();
    let mut last = f64::INFINITY;
    for step in 0..50 {
        let mut pass = model
            .forward_batch(
                &batch,
                &ForwardOptions { mode: Mode::Train, collect_diagnostics: false, collect_transitions: false },
                Some(&mut DrcnRng::seed_from(0)),
            )
            .unwrap();
        let recon = pass.recon_value();
        assert!(recon < last, "step {step}: recon {recon} did not decrease from {last}");
        last = recon;
        pass.tape.backward(pass.loss).unwrap();
        let grads = pass.tape.into_grads();
        // AE parameters only
        let ae_grads: GradMap =
            grads.into_iter().filter(|(k, _)| k.starts_with("ae")).collect();
        let mut ae_params = drcn::params::ParamSet::new();
        for name in model.params.names() {
            if name.starts_with("ae") {
                ae_params.insert_full(&name, model.params.get(&name).clone());
            }
        }
        rmsprop_step(&mut ae_params, &ae_grads, &mut state, &tc, tc.lr).unwrap();
        for name in ae_params.names() {
            model.params.get_mut(&name).data = ae_params.get(&name).data.clone();
        }
    }

    // total loss decomposition: loss == xent + weight·Σrecon to 1e−12
    let pass = model
        .forward_batch(
            &batch,
            &ForwardOptions { mode: Mode::Train, collect_diagnostics: false, collect_transitions: false },
            Some(&mut DrcnRng::seed_from(0)),
        )
        .unwrap();
    let total = pass.loss_value();
    let reconstructed = pass.xent_value() + model.config.ae_loss_weight * pass.recon_value();
    assert!(
        (total - reconstructed).abs() < 1e-12,
        "loss {total} vs xent+w*recon {reconstructed}"
    );
    println!("ACCEPTANCE 9 AE regularizer path: PASS (50 strict decreases, exact decomposition)");
}

#[test]
fn accept_10_determinism_and_persistence() {
    use drcn::checkpoint::{load_model, save_model};
    let dir = tempfile::tempdir().unwrap();
    let train_pairs = train::synthetic::generate(120, 5);
    let dev_pairs = train::synthetic::generate(40, 6);
    let words = Vocab::build_words(&train_pairs);
    let chars = Vocab::build_chars(&train_pairs);
    let mut cfg = RunConfig::preset("desk-ablate").unwrap();
    cfg.model.num_layers = 2;
    cfg.model.lstm_hidden = 8;
    cfg.model.ae_layers = vec![1];
    cfg.model.ae_hidden = 16;
    cfg.train.max_epochs = 2;
    cfg.train.seed = 77;
    cfg.train.max_len = 12;

    let run = |path: &std::path::Path| {
        let mut rng = DrcnRng::stream(cfg.train.seed, "init");
        let mut model =
            DrcnModel::init(cfg.model.clone(), words.len(), chars.len(), &mut rng).unwrap();
        drcn::train::train(&mut model, &train_pairs, &dev_pairs, &words, &chars, &cfg.train)
            .unwrap();
        save_model(&model, path).unwrap();
    };
    let a = dir.path().join("a.drcn");
    let b = dir.path().join("b.drcn");
    run(&a);
    run(&b);
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap(), "same seed, different checkpoints");

    // round trip: bit-identical eval forward
    let model = load_model(&a).unwrap();
    let batch =
        make_batches(&dev_pairs, 16, 12, model.config.char_max_word_len, &words, &chars, None)
            .remove(0);
    let p1 = model.forward_batch(&batch, &ForwardOptions::eval(), None).unwrap();
    let reloaded = load_model(&a).unwrap();
    let p2 = reloaded.forward_batch(&batch, &ForwardOptions::eval(), None).unwrap();
    let bits = |xs: &[f64]| xs.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&p1.probs), bits(&p2.probs));

    // ensemble of 8 identical members agrees with the single model on every
    // argmax
    let members: Vec<DrcnModel> = (0..8).map(|_| load_model(&a).unwrap()).collect();
    let refs: Vec<&DrcnModel> = members.iter().collect();
    let single = evaluate(&[&model], &dev_pairs, &words, &chars, 16, 12).unwrap();
    let ens = evaluate(&refs, &dev_pairs, &words, &chars, 16, 12).unwrap();
    assert_eq!(single.accuracy, ens.accuracy, "argmax disagreement");
    let probs_single = drcn::train::predict_probs(&[&model], &batch).unwrap();
    let probs_ens = drcn::train::predict_probs(&refs, &batch).unwrap();
    for (a, b) in probs_single.iter().zip(&probs_ens) {
        assert!((a - b).abs() <= 1e-15, "{a} vs {b}");
    }
    println!("ACCEPTANCE 10 determinism & persistence: PASS");
}

#[test]
fn accept_11_visualization_contract() {
    let pairs = vec![SentencePair {
        premise: tokenize("two bicyclists pedal uphill in a race"),
        hypothesis: tokenize("a pair of humans riding with tight clothing"),
        label: 0,
        group_id: None,
    }];
    let words = Vocab::build_words(&pairs);
    let chars = Vocab::build_chars(&pairs);
    let cfg = ModelConfig::micro(ConnectionMode::Dense, true);
    let mut rng = DrcnRng::seed_from(1111);
    let model = DrcnModel::init(cfg, words.len(), chars.len(), &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    drcn::viz::export_pair_visualization(
        &model,
        "two bicyclists pedal uphill in a race",
        "a pair of humans riding with tight clothing",
        &words,
        &chars,
        35,
        dir.path(),
    )
    .unwrap();

    let read_rows = |name: &str| -> Vec<Vec<f64>> {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        text.lines()
            .skip(1)
            .map(|l| {
                l.split(',')
                    .filter_map(|c| c.parse::<f64>().ok())
                    .collect::<Vec<f64>>()
            })
            .collect()
    };
    for f in ["poolrate_p.csv", "poolrate_q.csv"] {
        let rows = read_rows(f);
        assert_eq!(rows.len(), 1);
        let sum: f64 = rows[0].iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "{f} sums to {sum}");
    }
    // alpha_avg equals the arithmetic mean of the per-layer maps
    let n_layers = model.config.num_layers;
    let mut acc: Option<Vec<Vec<f64>>> = None;
    for l in 1..=n_layers {
        let rows = read_rows(&format!("alpha_layer{l}.csv"));
        acc = Some(match acc {
            None => rows,
            Some(mut a) => {
                for (ar, r) in a.iter_mut().zip(&rows) {
                    for (x, v) in ar.iter_mut().zip(r) {
                        *x += v;
                    }
                }
                a
            }
        });
    }
    let avg = read_rows("alpha_avg.csv");
    for (ar, fr) in acc.unwrap().iter().zip(&avg) {
        for (a, f) in ar.iter().zip(fr) {
            assert!((a / n_layers as f64 - f).abs() < 1e-12);
        }
    }
    println!("ACCEPTANCE 11 visualization contract: PASS");
}

#[test]
fn invariant_exact_match_flags_brute_force() {
    // spec invariant: the flag equals an independent membership test
    let mut rng = DrcnRng::seed_from(4004);
    let vocab: Vec<String> = (0..15).map(|i| format!("v{i}")).collect();
    for _ in 0..200 {
        let p: Vec<String> = (0..2 + rng.below(6)).map(|_| vocab[rng.below(15)].clone()).collect();
        let q: Vec<String> = (0..2 + rng.below(6)).map(|_| vocab[rng.below(15)].clone()).collect();
        let flags = exact_match_flags(&p, &q);
        for (i, t) in p.iter().enumerate() {
            assert_eq!(flags[i] == 1.0, q.contains(t));
        }
    }
}
