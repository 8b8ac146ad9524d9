use flowdelta::harness::*;
use flowdelta::model::{ModelConfig, QaModel};
use flowdelta::tensor::ParamSet;
use flowdelta::{Error, Rng};
use flowdelta_oracle as oracle;
use proptest::prelude::*;

const WORDS: [&str; 6] = ["cat", "dog", "Red", "red.", "the", "box"];

fn random_tokens(rng: &mut Rng) -> Vec<&'static str> {
    (0..rng.below(6)).map(|_| WORDS[rng.below(WORDS.len())]).collect()
}

#[test]
fn token_f1_matches_counting_oracle() {
    let mut rng = Rng::new(1);
    for _ in 0..500 {
        let (p, g) = (random_tokens(&mut rng), random_tokens(&mut rng));
        let np = normalize_answer(&p.join(" "));
        let ng = normalize_answer(&g.join(" "));
        let want = oracle::token_f1_counts(
            &np.iter().map(String::as_str).collect::<Vec<_>>(),
            &ng.iter().map(String::as_str).collect::<Vec<_>>(),
        );
        assert_eq!(token_f1(&p, &g), want, "{p:?} vs {g:?}");
    }
}

proptest! {
    #[test]
    fn token_f1_symmetric_bounded_and_exact(p in prop::collection::vec(0usize..6, 0..6), g in prop::collection::vec(0usize..6, 0..6)) {
        let p: Vec<&str> = p.iter().map(|&i| WORDS[i]).collect();
        let g: Vec<&str> = g.iter().map(|&i| WORDS[i]).collect();
        let f = token_f1(&p, &g);
        prop_assert_eq!(f, token_f1(&g, &p));
        prop_assert!((0.0..=1.0).contains(&f));
        let mut np = normalize_answer(&p.join(" "));
        let mut ng = normalize_answer(&g.join(" "));
        np.sort();
        ng.sort();
        prop_assert_eq!(f == 1.0, np == ng);
    }
}

fn random_heq_case(rng: &mut Rng, questions: usize, dialogues: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let cuts = {
        let mut c = rng.sample_distinct(questions - 1, dialogues - 1);
        c.sort();
        c
    };
    let mut lengths = Vec::new();
    let mut prev = 0;
    for c in cuts.iter().map(|c| c + 1).chain([questions]) {
        lengths.push(c - prev);
        prev = c;
    }
    // Scores on a coarse grid so ties are common.
    let model = (0..questions).map(|_| rng.below(5) as f64 / 4.0).collect();
    let human = (0..questions).map(|_| rng.below(5) as f64 / 4.0).collect();
    (model, human, lengths)
}

#[test]
fn heq_matches_loop_oracle() {
    let mut rng = Rng::new(2);
    for _ in 0..50 {
        let (model, human, lengths) = random_heq_case(&mut rng, 100, 20);
        let got = heq(&model, &human.iter().map(|&h| Some(h)).collect::<Vec<_>>(), &lengths).unwrap().unwrap();
        assert_eq!(got, oracle::heq(&model, &human, &lengths));
    }
}

#[test]
fn heq_dialogue_rate_bounded_by_question_rate_for_equal_lengths() {
    let mut rng = Rng::new(3);
    for _ in 0..100 {
        let d = 1 + rng.below(20);
        let len = 1 + rng.below(6);
        let model: Vec<f64> = (0..d * len).map(|_| rng.below(5) as f64 / 4.0).collect();
        let human: Vec<Option<f64>> = (0..d * len).map(|_| Some(rng.below(5) as f64 / 4.0)).collect();
        let (hq, hd) = heq(&model, &human, &vec![len; d]).unwrap().unwrap();
        assert!(hd <= hq);
    }
}

#[test]
fn heq_dialogue_rate_can_exceed_question_rate_for_unequal_lengths() {
    // One short dialogue that passes, one long dialogue that fails.
    let mut model = vec![1.0];
    model.extend([0.0; 9]);
    let human = vec![Some(0.5); 10];
    assert_eq!(heq(&model, &human, &[1, 9]).unwrap(), Some((0.1, 0.5)));
}

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn toks(s: &str) -> Vec<String> {
    s.split(' ').map(str::to_string).collect()
}

#[test]
fn fixture_parses_to_expected_structure() {
    let ds = load_dialogues(&fixture("three_dialogues.jsonl")).unwrap();
    let turn = |q: &str, span, human_f1, history_dependent| Turn { question: toks(q), span, human_f1, history_dependent };
    let expected = vec![
        Dialogue {
            context: toks("the red box holds the key ."),
            turns: vec![turn("what does the red box hold ?", (5, 5), Some(1.0), Some(false))],
        },
        Dialogue {
            context: toks("anna met bob in paris . she gave him a map ."),
            turns: vec![
                turn("who did anna meet?", (2, 2), Some(0.8), None),
                turn("where?", (4, 4), Some(0.5), Some(true)),
                turn("what did she give him", (9, 10), None, None),
            ],
        },
        Dialogue { context: toks("x"), turns: vec![turn("y", (0, 0), None, None)] },
    ];
    assert_eq!(ds, expected);
}

#[test]
fn schema_violations_name_record_and_field() {
    let bad = [
        (r#"{"context": "a b", "qas": [{"question": "q", "answer_start": 0, "answer_end": 5}]}"#, "answer_end"),
        (r#"{"context": "a b", "qas": [{"question": "  ", "answer_start": 0, "answer_end": 0}]}"#, "question"),
        (r#"{"context": "a b", "qas": [{"question": "q", "answer_start": 0}]}"#, "answer_end"),
        (r#"{"context": "a b", "qas": []}"#, "qas"),
        (r#"{"context": "a", "qas": [{"question": "q", "answer_start": 0, "answer_end": 0, "extra": 1}]}"#, "extra"),
    ];
    for (line, field) in bad {
        let text = format!("{{\"context\": \"ok\", \"qas\": [{{\"question\": \"q\", \"answer_start\": 0, \"answer_end\": 0}}]}}\n{line}\n");
        match parse_dialogues(&text) {
            Err(Error::Data(msg)) => assert!(msg.contains("record 1") && msg.contains(field), "{msg}"),
            other => panic!("{line}: {other:?}"),
        }
    }
}

#[test]
fn empty_file_loads_as_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    assert!(load_dialogues(&path).unwrap().is_empty());
}

/// Re-derives every answer from the passage text and the question wording.
#[test]
fn synthetic_answers_follow_from_the_passage() {
    let ds = generate_synthetic_qa(&mut Rng::new(4), 300, 14..=40, 1..=5).unwrap();
    for d in &ds {
        let m = d.context.len();
        assert!((14..=40).contains(&m) && m % 7 == 0);
        let facts: Vec<&[String]> = d.context.chunks(7).collect();
        let find = |pred: &dyn Fn(&[String]) -> bool| facts.iter().position(|f| pred(f)).expect("referent exists");
        let mut focus = None;
        for (k, t) in d.turns.iter().enumerate() {
            let q: Vec<&str> = t.question.iter().map(String::as_str).collect();
            let (sentence, want): (usize, &[usize]) = match q.as_slice() {
                ["what", "does", "the", c, b, "hold", "?"] => (find(&|f| f[1] == *c && f[2] == *b), &[5]),
                ["which", "container", "holds", "the", o, "?"] => (find(&|f| f[5] == *o), &[1, 2]),
                ["what", "color", "is", "the", b, "that", "holds", "the", o, "?"] => {
                    (find(&|f| f[2] == *b && f[5] == *o), &[1])
                }
                ["what", "color", "is", "it", "?"] => (focus.unwrap(), &[1]),
                ["what", "is", "inside", "it", "?"] => (focus.unwrap(), &[5]),
                ["what", "kind", "of", "container", "is", "it", "?"] => (focus.unwrap(), &[2]),
                other => panic!("unexpected question {other:?}"),
            };
            let follow_up = q.contains(&"it");
            assert_eq!(t.history_dependent, Some(follow_up));
            assert!(k > 0 || !follow_up);
            focus = Some(sentence);
            let span = (sentence * 7 + want[0], sentence * 7 + want[want.len() - 1]);
            assert_eq!(t.span, span);
            assert!(t.span.1 < m);
        }
    }
}

#[test]
fn synthetic_generation_is_deterministic() {
    let write = || {
        let ds = generate_synthetic_qa(&mut Rng::new(3), 40, 7..=40, 1..=4).unwrap();
        let mut buf = Vec::new();
        write_dialogues(&mut buf, &ds).unwrap();
        buf
    };
    let a = write();
    assert_eq!(a, write());
    // And the emitted file parses back to the same dialogues.
    let again = parse_dialogues(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(again, generate_synthetic_qa(&mut Rng::new(3), 40, 7..=40, 1..=4).unwrap());
}

#[test]
fn report_breakdowns_reconcile_and_repeat() {
    let ds = generate_synthetic_qa(&mut Rng::new(5), 20, 7..=28, 1..=4).unwrap();
    let vocab = build_vocab(&ds);
    let cfg = ModelConfig { embed_dim: 8, encoder_hidden: 8, flow_hidden: 8, ..ModelConfig::default() };
    let mut params = ParamSet::new();
    let model = QaModel::init(&mut params, &cfg, vocab.len(), &mut Rng::new(6)).unwrap();
    let r = evaluate(&model, &params, &vocab, &ds, &cfg).unwrap();
    let weighted: f64 = r.per_turn.iter().map(|b| b.f1 * b.questions as f64).sum::<f64>() / r.questions as f64;
    assert!((weighted - r.f1).abs() <= 1e-9);
    let (hq, hd) = r.heq.unwrap();
    assert!((0.0..=1.0).contains(&hq) && (0.0..=1.0).contains(&hd) && (0.0..=1.0).contains(&r.f1) && (0.0..=1.0).contains(&r.exact));
    let again = evaluate(&model, &params, &vocab, &ds, &cfg).unwrap();
    assert_eq!(r.to_text(), again.to_text());
    assert!(r.to_text().contains("config.variant=\"delta\""));
}

#[test]
fn shipped_default_config_is_the_default() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    assert_eq!(flowdelta::model::ModelConfig::load(&path).unwrap(), flowdelta::model::ModelConfig::default());
}
