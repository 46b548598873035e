mod common;

use std::collections::BTreeSet;

use common::{fixture, random::random_tree};
use domstep::dom::{assign_node_ids, parse_html};
use domstep::eval::{
    aggregate, evaluate, relax_labels, EvalCounts, EvalOptions, GoldRecord, PredictionRecord,
    RankRecord, StepJudgment,
};
use domstep::jsonl::read_jsonl;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn load() -> (Vec<GoldRecord>, Vec<PredictionRecord>) {
    let gold = read_jsonl(&fixture("eval/gold.jsonl")).unwrap();
    let preds = read_jsonl(&fixture("eval/predictions.jsonl")).unwrap();
    (gold, preds)
}

// Six tasks of five steps. Per-step cases:
//   C correct, W grandchild of gold, U unsolvable, O click where typing is gold,
//   T partial typed text, A other button with the same text, M no prediction.
//   task-1 CCCCC  task-2 CCWCC  task-3 CUCCC  task-4 OCCTC  task-5 CCCAM  task-6 UUCCC
// Counted by hand:
//   solvable 27, exact 24, strict step success 22, strict tasks 1/6.
//   Refined adds W and A as element-correct: 26 elements, 24 successes, tasks 2/6.
//   F1 loses 1 (O), 0.2 (T) and 1 (M): 27.8 / 30.
#[test]
fn synthetic_thirty_steps_strict() {
    let (gold, preds) = load();
    assert_eq!(gold.len(), 30);
    let (r, outcomes) = evaluate(&gold, &preds, None, &EvalOptions::default()).unwrap();
    assert_eq!(outcomes.len(), 30);
    assert_eq!(r.em, 24.0 / 30.0);
    assert_eq!(r.cem, Some(24.0 / 27.0));
    assert_eq!(r.element_accuracy, 24.0 / 30.0);
    assert_eq!(r.step_sr, 22.0 / 30.0);
    assert_eq!(r.task_sr, 1.0 / 6.0);
    assert!((r.mean_action_f1 - 27.8 / 30.0).abs() < 1e-12);
    assert_eq!(r.counts.tasks, 6);
    assert_eq!(outcomes[0].workflow_id, "task-1");
    let missing = outcomes.iter().find(|o| o.workflow_id == "task-5" && o.step_index == 4).unwrap();
    assert_eq!(missing.predicted_node, None);
}

#[test]
fn synthetic_thirty_steps_refined() {
    let (gold, preds) = load();
    let opts = EvalOptions {
        refined: true,
        ..EvalOptions::default()
    };
    let (r, _) = evaluate(&gold, &preds, None, &opts).unwrap();
    assert_eq!(r.em, 24.0 / 30.0);
    assert_eq!(r.cem, Some(24.0 / 27.0));
    assert_eq!(r.element_accuracy, 26.0 / 30.0);
    assert_eq!(r.step_sr, 24.0 / 30.0);
    assert_eq!(r.task_sr, 2.0 / 6.0);
    assert!((r.mean_action_f1 - 27.8 / 30.0).abs() < 1e-12);
}

#[test]
fn refined_needs_dom() {
    let (mut gold, preds) = load();
    gold[3].dom = None;
    let opts = EvalOptions {
        refined: true,
        ..EvalOptions::default()
    };
    let err = evaluate(&gold, &preds, None, &opts).unwrap_err().to_string();
    assert!(err.contains("task-1 step 3"), "{err}");
    assert!(evaluate(&gold, &preds, None, &EvalOptions::default()).is_ok());
}

#[test]
fn ranker_remaps_to_ancestor() {
    let (gold, preds) = load();
    // task-2 step 2 predicted node 3 (a link); gold is the list, node 7.
    let ranks = vec![RankRecord {
        workflow_id: "task-2".into(),
        step_index: 2,
        ranked: vec![serde_json::json!(8), serde_json::json!(7)],
    }];
    let (r, outcomes) = evaluate(&gold, &preds, Some(&ranks), &EvalOptions::default()).unwrap();
    let o = outcomes.iter().find(|o| o.workflow_id == "task-2" && o.step_index == 2).unwrap();
    assert_eq!(o.predicted_node, Some(7));
    assert_eq!(r.counts.exact, 25);
    assert_eq!(r.task_sr, 2.0 / 6.0);
}

fn random_judgment(rng: &mut impl Rng) -> StepJudgment {
    let solvable = rng.gen_bool(0.7);
    let exact = solvable && rng.gen_bool(0.5);
    StepJudgment {
        exact_match: exact,
        element_correct: exact || (solvable && rng.gen_bool(0.3)),
        op_correct: rng.gen_bool(0.8),
        action_f1: rng.gen_range(0.0..=1.0),
        solvable,
    }
}

fn random_tasks(rng: &mut impl Rng) -> Vec<Vec<StepJudgment>> {
    (0..rng.gen_range(1..8))
        .map(|_| (0..rng.gen_range(1..10)).map(|_| random_judgment(rng)).collect())
        .collect()
}

#[test]
fn cem_at_least_em() {
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..1000 {
        let r = aggregate(&random_tasks(&mut rng)).unwrap();
        match r.cem {
            Some(cem) => assert!(cem >= r.em, "{r:?}"),
            None => assert_eq!(r.em, 0.0),
        }
        assert!(r.element_accuracy >= r.em);
        assert!(r.step_sr <= r.element_accuracy);
        if r.task_sr == 1.0 {
            assert_eq!(r.step_sr, 1.0);
        }
    }
}

#[test]
fn relax_matches_path_enumeration() {
    let mut rng = StdRng::seed_from_u64(11);
    let mut nonempty = 0;
    for _ in 0..300 {
        let pd = assign_node_ids(&random_tree(&mut rng, 40));
        for gold in 0..pd.len() as u32 {
            let gp = pd.path(gold).unwrap();
            let want: BTreeSet<u32> = (0..pd.len() as u32)
                .filter(|&c| {
                    let cp = pd.path(c).unwrap();
                    cp.starts_with(gp) && cp.len() - gp.len() <= 2
                })
                .collect();
            let got = relax_labels(gold, &pd).unwrap();
            nonempty += usize::from(got.len() > 1);
            assert_eq!(got, want);
        }
    }
    assert!(nonempty > 500);
}

#[test]
fn three_children_two_grandchildren_each() {
    let html = "<div>".to_string() + &"<section><p></p><p></p></section>".repeat(3) + "</div>";
    let pd = assign_node_ids(&parse_html(&html));
    let root = pd.len() as u32 - 1;
    assert_eq!(relax_labels(root, &pd).unwrap().len(), 10);
}

proptest! {
    #[test]
    fn merge_is_associative(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let parts: Vec<EvalCounts> = (0..3)
            .map(|_| {
                let t = random_tasks(&mut rng);
                t.iter().map(|s| EvalCounts::from_task(s)).fold(EvalCounts::default(), EvalCounts::merge)
            })
            .collect();
        let l = parts[0].merge(parts[1]).merge(parts[2]);
        let r = parts[0].merge(parts[1].merge(parts[2]));
        prop_assert_eq!((l.steps, l.solvable_steps, l.exact, l.element_correct), (r.steps, r.solvable_steps, r.exact, r.element_correct));
        prop_assert_eq!((l.step_success, l.tasks, l.task_success), (r.step_success, r.tasks, r.task_success));
        prop_assert!((l.f1_sum - r.f1_sum).abs() < 1e-9);
    }
}
