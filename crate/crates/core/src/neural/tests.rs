use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{Question, QuestionPair, Vocabulary, PAD};

fn q(id: &str, text: &str) -> Question {
    Question::new(id, text).unwrap()
}

fn small_dims() -> ModelDims {
    ModelDims {
        word_dim: 4,
        overlap_dim: 2,
        window: 3,
        filters: 5,
        lstm_hidden: 3,
        mlp_hidden: 4,
        max_len: 8,
    }
}

fn toy_pairs() -> (Vec<QuestionPair>, Vocabulary) {
    let pairs = vec![
        QuestionPair::gold(q("1", "renew visa online"), q("2", "renew my visa online"), true),
        QuestionPair::gold(q("3", "start a bakery"), q("4", "cheap flights to paris"), false),
        QuestionPair::gold(q("5", "learn python fast"), q("6", "learn python quickly"), true),
        QuestionPair::gold(q("7", "visa fees"), q("8", "bakery hours"), false),
    ];
    let vocab = Vocabulary::from_tokens(
        pairs.iter().flat_map(|p| p.q1.tokens.iter().chain(&p.q2.tokens).cloned()),
    );
    (pairs, vocab)
}

fn examples(pairs: &[QuestionPair], vocab: &Vocabulary, max_len: usize) -> Vec<PairExample> {
    pairs.iter().map(|p| encode_pair(p, vocab, max_len)).collect()
}

#[test]
fn sentence_matrix_shape_and_overlap() {
    let (_, vocab) = toy_pairs();
    let dims = ModelDims::default();
    let table = EmbeddingTable::random(vocab.len(), &dims, &mut ChaCha8Rng::seed_from_u64(1));
    let a = q("a", "how to renew a visa");
    let b = q("b", "visa renewal");
    let s = embed_sequence(&a, &b, &table, &vocab, 50);
    assert_eq!(s.shape(), &[50, 55]);
    let visa = a.tokens.iter().position(|t| t == "visa").unwrap();
    assert_eq!(&s.row(visa)[50..], table.overlap.row(1));
    assert_eq!(&s.row(0)[50..], table.overlap.row(0));
    assert_eq!(&s.row(0)[..50], table.words.row(vocab.index("how")));
    assert!(s.row(10).iter().all(|&v| v == 0.0));
    let empty = embed_sequence(&q("e", ""), &b, &table, &vocab, 7);
    assert!(empty.data().iter().all(|&v| v == 0.0));
    assert_eq!(overlap_bits(&a.tokens, &b.tokens), vec![0, 0, 0, 0, 1]);
}

#[test]
fn cnn_single_filter_by_hand() {
    let s = Tensor::from_vec(&[5, 2], vec![1., 0., 2., 0., 3., 1., 0., 1., 1., 1.]).unwrap();
    let enc = CnnEncoder {
        filters: Tensor::from_vec(&[1, 10], vec![1., 0., 0., 1., 1., 1., 0., 0., -1., 0.]).unwrap(),
        bias: Tensor::from_vec(&[1], vec![-1.0]).unwrap(),
        window: 5,
    };
    // pre-activations per position: -3, 1, 3, 3, 5
    assert_eq!(conv_maxpool_encode(&s, 5, &enc).unwrap().data(), &[5.0]);
    // with len 4 the last row becomes padding: position 2 loses its −1 term
    assert_eq!(conv_maxpool_encode(&s, 4, &enc).unwrap().data(), &[4.0]);
    assert!(matches!(conv_maxpool_encode(&s, 0, &enc), Err(NeuralError::EmptySequence)));
}

#[test]
fn cnn_zero_input_gives_zero_vector() {
    let dims = ModelDims::default();
    let m = PairClassifier::new(EncoderKind::Cnn, dims, 3, &mut ChaCha8Rng::seed_from_u64(0));
    let Encoder::Cnn(enc) = &m.enc1 else { unreachable!() };
    let mut enc = enc.clone();
    enc.bias.fill(0.0);
    let out = conv_maxpool_encode(&Tensor::zeros(&[6, 55]), 6, &enc).unwrap();
    assert_eq!(out.len(), 100);
    assert!(out.data().iter().all(|&v| v == 0.0));
}

fn scalar_lstm(w: [f64; 4], b: [f64; 4]) -> LstmDirection {
    LstmDirection {
        w: Tensor::from_vec(&[4, 1], w.to_vec()).unwrap(),
        u: Tensor::from_vec(&[4, 1], vec![0.3, -0.2, 0.1, 0.4]).unwrap(),
        b: Tensor::from_vec(&[4], b.to_vec()).unwrap(),
    }
}

#[test]
fn lstm_zero_weights_and_single_step() {
    let zero = LstmEncoder {
        forward: scalar_lstm([0.0; 4], [0.0; 4]),
        backward: scalar_lstm([0.0; 4], [0.0; 4]),
    };
    let s = Tensor::from_vec(&[3, 1], vec![1.0, -2.0, 0.5]).unwrap();
    assert_eq!(bilstm_encode(&s, 3, &zero).unwrap().data(), &[0.0, 0.0]);

    // one step, x = 2: i = σ(1), f = σ(0), o = σ(2), g = tanh(0.5),
    // c = i·g, h = o·tanh(c) = 0.286737276378271
    let d = scalar_lstm([0.5, -0.5, 1.0, 0.25], [0.0, 1.0, 0.0, 0.0]);
    let enc = LstmEncoder { forward: d.clone(), backward: d };
    let out = bilstm_encode(&Tensor::from_vec(&[1, 1], vec![2.0]).unwrap(), 1, &enc).unwrap();
    for v in out.data() {
        assert!((v - 0.286737276378271).abs() < 1e-15);
    }
}

#[test]
fn lstm_output_width() {
    let dims = ModelDims::default();
    let m = PairClassifier::new(EncoderKind::Lstm, dims, 3, &mut ChaCha8Rng::seed_from_u64(0));
    let Encoder::Lstm(enc) = &m.enc1 else { unreachable!() };
    assert_eq!(&enc.forward.b.data()[50..100], &[1.0; 50][..]);
    let out = bilstm_encode(&Tensor::zeros(&[4, 55]), 2, enc).unwrap();
    assert_eq!(out.len(), 100);
}

#[test]
fn all_zero_parameters_give_one_half() {
    let (pairs, vocab) = toy_pairs();
    for kind in [EncoderKind::Cnn, EncoderKind::Lstm] {
        let m = PairClassifier::new(kind, ModelDims::default(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(0))
            .zeros_like();
        assert_eq!(forward_pair(&pairs[0], &m, &vocab).unwrap(), 0.5);
    }
}

#[test]
fn toy_network_probability_by_hand() {
    let vocab = Vocabulary::from_tokens(["visa"]);
    let dims = ModelDims {
        word_dim: 1,
        overlap_dim: 1,
        window: 1,
        filters: 1,
        lstm_hidden: 1,
        mlp_hidden: 1,
        max_len: 4,
    };
    let mut m = PairClassifier::new(EncoderKind::Cnn, dims, vocab.len(), &mut ChaCha8Rng::seed_from_u64(0));
    m.embeddings.words.row_mut(vocab.index("visa")).copy_from_slice(&[2.0]);
    m.embeddings.overlap.data_mut().copy_from_slice(&[0.0, 1.0]);
    let set = |e: &mut Encoder, w: [f64; 2], b: f64| {
        let Encoder::Cnn(c) = e else { unreachable!() };
        c.filters.data_mut().copy_from_slice(&w);
        c.bias.data_mut()[0] = b;
    };
    set(&mut m.enc1, [0.5, 1.0], 0.0); // 0.5·2 + 1·1 = 2
    set(&mut m.enc2, [1.0, -1.0], 0.5); // 2 − 1 + 0.5 = 1.5
    m.mlp.w1.data_mut().copy_from_slice(&[1.0, 2.0]);
    m.mlp.b1.data_mut()[0] = -1.0; // h = relu(2 + 3 − 1) = 4
    m.mlp.w2.data_mut()[0] = 0.5;
    m.mlp.b2.data_mut()[0] = -1.0; // z = 1
    let p = QuestionPair::unlabeled(q("a", "visa"), q("b", "visa"));
    assert_eq!(forward_pair(&p, &m, &vocab).unwrap(), 0.7310585786300049);
}

#[test]
fn probabilities_stay_in_unit_interval() {
    let (pairs, vocab) = toy_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..1000 {
        let kind = if case % 2 == 0 { EncoderKind::Cnn } else { EncoderKind::Lstm };
        let mut m = PairClassifier::new(kind, small_dims(), vocab.len(), &mut rng);
        let scale = rng.gen_range(0.1..20.0);
        for t in m.tensors_mut() {
            t.scale(scale);
        }
        let p = forward_pair(&pairs[case % pairs.len()], &m, &vocab).unwrap();
        assert!((0.0..=1.0).contains(&p) && p.is_finite());
        assert!(bce_loss(p, 1.0) >= 0.0 && bce_loss(p, 0.0) >= 0.0);
    }
}

#[test]
fn bce_values() {
    assert!((bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!(bce_loss(1.0 - 1e-12, 1.0) < 1e-11);
    assert!(bce_loss(0.0, 1.0).is_finite());
    let l = |p: f64| bce_loss(p, 1.0);
    let (p1, p2) = ((-0.2f64).exp(), (-0.4f64).exp());
    assert!((l(p1) - 0.2).abs() < 1e-12 && (l(p2) - 0.4).abs() < 1e-12);
    assert!((mean_bce(&[p1, p2], &[1.0, 1.0]) - 0.3).abs() < 1e-12);
}

#[test]
fn gradients_match_finite_differences() {
    let (pairs, vocab) = toy_pairs();
    let batch = examples(&pairs, &vocab, 8);
    for (kind, seed) in [(EncoderKind::Cnn, 3), (EncoderKind::Lstm, 4)] {
        let m = PairClassifier::new(kind, small_dims(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(seed));
        let report = gradient_check(&m, &batch, 1e-5, 30, seed).unwrap();
        assert!(report.passed(1e-4), "{kind}: {report:#?}");
        assert!(report.kinks() * 20 <= report.checked(), "{kind}: {report:#?}");
        assert_eq!(report.tensors.len(), m.tensors().len());
    }
}

#[test]
fn pad_row_gets_no_gradient_and_duplication_keeps_mean() {
    let (pairs, vocab) = toy_pairs();
    let batch = examples(&pairs, &vocab, 8);
    let m = PairClassifier::new(EncoderKind::Cnn, small_dims(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(5));
    let (l1, g1) = m.loss_and_gradient(&batch).unwrap();
    let doubled: Vec<PairExample> = batch.iter().chain(&batch).cloned().collect();
    let (l2, g2) = m.loss_and_gradient(&doubled).unwrap();
    assert!((l1 - l2).abs() < 1e-14);
    for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }
    assert!(g1.embeddings.words.row(PAD).iter().all(|&v| v == 0.0));
}

#[test]
fn saturated_correct_predictions_have_tiny_gradients() {
    let (pairs, vocab) = toy_pairs();
    let mut batch = examples(&pairs, &vocab, 8);
    for e in &mut batch {
        e.label = Some(true);
    }
    let mut m = PairClassifier::new(EncoderKind::Cnn, small_dims(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(5));
    m.mlp.b2.data_mut()[0] = 40.0;
    let (loss, g) = m.loss_and_gradient(&batch).unwrap();
    assert!(loss < 1e-11);
    assert!(g.tensors().iter().all(|t| t.max_abs() < 1e-11));
}

#[test]
fn padding_never_changes_the_output() {
    let (pairs, vocab) = toy_pairs();
    for kind in [EncoderKind::Cnn, EncoderKind::Lstm] {
        let mut m = PairClassifier::new(kind, ModelDims::default(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(6));
        let base = forward_pair(&pairs[1], &m, &vocab).unwrap();
        m.dims.max_len = 200;
        assert_eq!(forward_pair(&pairs[1], &m, &vocab).unwrap(), base);
        let p = &pairs[1];
        let n = p.q1.tokens.len();
        let short = embed_sequence(&p.q1, &p.q2, &m.embeddings, &vocab, n);
        let long = embed_sequence(&p.q1, &p.q2, &m.embeddings, &vocab, n + 30);
        match &m.enc1 {
            Encoder::Cnn(c) => assert_eq!(
                conv_maxpool_encode(&short, n, c).unwrap(),
                conv_maxpool_encode(&long, n, c).unwrap()
            ),
            Encoder::Lstm(l) => assert_eq!(
                bilstm_encode(&short, n, l).unwrap(),
                bilstm_encode(&long, n, l).unwrap()
            ),
        }
    }
}

#[test]
fn second_encoder_does_not_touch_first() {
    let (pairs, vocab) = toy_pairs();
    let p = &pairs[0];
    let mut m = PairClassifier::new(EncoderKind::Lstm, small_dims(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(2));
    let s = embed_sequence(&p.q1, &p.q2, &m.embeddings, &vocab, 8);
    let n = p.q1.tokens.len();
    let Encoder::Lstm(e1) = &m.enc1 else { unreachable!() };
    let before = bilstm_encode(&s, n, e1).unwrap();
    let Encoder::Lstm(e2) = &mut m.enc2 else { unreachable!() };
    e2.forward.w.scale(-3.0);
    e2.backward.b.fill(0.7);
    let Encoder::Lstm(e1) = &m.enc1 else { unreachable!() };
    assert_eq!(bilstm_encode(&s, n, e1).unwrap(), before);
}

#[test]
fn adam_counts_steps() {
    let (pairs, vocab) = toy_pairs();
    let batch = examples(&pairs, &vocab, 8);
    let mut m = PairClassifier::new(EncoderKind::Cnn, small_dims(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(5));
    let mut adam = AdamState::new(&m, 1e-3);
    for k in 1..=3 {
        let (_, g) = m.loss_and_gradient(&batch).unwrap();
        adam.step(&mut m, &g);
        assert_eq!(adam.t, k);
    }
    assert!(m.embeddings.words.row(PAD).iter().all(|&v| v == 0.0));
}

#[test]
fn training_is_deterministic_and_starts_near_chance() {
    let (pairs, vocab) = toy_pairs();
    let data = examples(&pairs, &vocab, 8);
    let schedule = TrainSchedule { epochs: 5, batch_size: 2, lr: 1e-3, seed: 3, ..Default::default() };
    let run = || {
        let mut m = PairClassifier::new(EncoderKind::Cnn, ModelDims::default(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(8));
        let out = train(&mut m, &data, &schedule, None).unwrap();
        (m, out)
    };
    let (a, oa) = run();
    let (b, ob) = run();
    assert_eq!(a, b);
    assert_eq!(oa, ob);
    assert_eq!(oa.trace.len(), 5);
    assert!(oa.trace[0].mean_loss <= std::f64::consts::LN_2 + 0.1);
}

#[test]
fn training_edge_cases() {
    let (pairs, vocab) = toy_pairs();
    let mut data = examples(&pairs, &vocab, 8);
    let mut m = PairClassifier::new(EncoderKind::Cnn, small_dims(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(1));
    let before = m.clone();
    let out = train(&mut m, &[], &TrainSchedule::default(), None).unwrap();
    assert_eq!(out.steps, 0);
    assert_eq!(m, before);
    data[0].label = None;
    assert!(matches!(
        train(&mut m, &data, &TrainSchedule::default(), None),
        Err(NeuralError::Unlabeled)
    ));
}

#[test]
fn early_stopping_restores_best_epoch() {
    let (pairs, vocab) = toy_pairs();
    let data = examples(&pairs, &vocab, 8);
    let mut m = PairClassifier::new(EncoderKind::Cnn, small_dims(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(1));
    let schedule = TrainSchedule { epochs: 50, batch_size: 4, lr: 1e-2, seed: 1, patience: Some(2), ..Default::default() };
    let out = train(&mut m, &data, &schedule, Some(&data)).unwrap();
    let best = out.trace.iter().filter_map(|s| s.dev_accuracy).fold(0.0, f64::max);
    assert_eq!(accuracy_on(&m, &data).unwrap(), best);
    assert!(out.trace.len() <= 50);
}

#[test]
fn checkpoint_round_trip() {
    let (pairs, vocab) = toy_pairs();
    let dir = tempfile::tempdir().unwrap();
    for kind in [EncoderKind::Cnn, EncoderKind::Lstm] {
        let m = PairClassifier::new(kind, small_dims(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(4));
        let path = dir.path().join(format!("{kind}.ckpt"));
        save_checkpoint(&m, &vocab, &path).unwrap();
        let back = load_checkpoint(&path, Some(&vocab)).unwrap();
        assert_eq!(back, m);
        for p in &pairs {
            assert_eq!(forward_pair(p, &back, &vocab).unwrap(), forward_pair(p, &m, &vocab).unwrap());
        }
        let other = Vocabulary::from_tokens(["x"]);
        assert!(load_checkpoint(&path, Some(&other)).is_err());
    }
}

#[test]
fn embedding_file_contract() {
    let vocab = Vocabulary::from_tokens(["visa", "bakery", "paris"]);
    let dims = ModelDims::default();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.txt");
    let vec_line = |tok: &str, v: f64| format!("{tok} {}\n", vec![v.to_string(); 50].join(" "));
    std::fs::write(&path, format!("{}{}{}", vec_line("visa", 0.5), vec_line("bakery", -1.0), vec_line("zzz", 9.0))).unwrap();
    let t = load_embeddings(&path, &vocab, &dims, 1).unwrap();
    assert!(t.words.row(vocab.index("visa")).iter().all(|&v| v == 0.5));
    assert!(t.words.row(vocab.index("bakery")).iter().all(|&v| v == -1.0));
    assert!(t.words.row(vocab.index("paris")).iter().all(|&v| v.abs() <= 0.25));
    assert!(t.words.row(PAD).iter().all(|&v| v == 0.0));

    let out = dir.path().join("saved.txt");
    save_embeddings(&t, &vocab, &out).unwrap();
    let back = load_embeddings(&out, &vocab, &dims, 99).unwrap();
    assert_eq!(back.words, t.words);

    std::fs::write(&path, format!("visa {}\n", vec!["0.1"; 49].join(" "))).unwrap();
    assert!(matches!(load_embeddings(&path, &vocab, &dims, 1), Err(NeuralError::Embeddings { line: 1, .. })));
}
