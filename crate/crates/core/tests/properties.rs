//! Property tests over the parser, scoring, selection, masking and metrics.

mod common;

use proptest::prelude::*;

use navverify::cot::{parse_cot_with, CotLabel, CotTriple, EntityList, ParseMode};
use navverify::metrics::{evaluate, MetricsConfig};
use navverify::verify::{prepare_masks, select_action, Candidate, VerificationTrace, DEFAULT_MASK_TOKEN};
use navverify::world::{synth_world, NavEdge, NavGraph, SynthConfig, Viewpoint};

const LETTERS: [char; 6] = ['A', 'B', 'C', 'D', 'E', 'F'];

fn candidate(index: usize) -> Candidate {
    Candidate {
        index,
        cot: CotTriple {
            prediction: format!("p{index}"),
            view_match: 'B',
            action: 'B',
            raw: format!("raw {index}"),
        },
    }
}

/// `(tfv, mev)` outcome lists for `k` candidates sharing `p` and `r`.
fn outcomes(max_k: usize) -> impl Strategy<Value = Vec<(Vec<bool>, Vec<Vec<bool>>)>> {
    (1..=max_k, 1..=4usize, 0..=3usize).prop_flat_map(|(k, p, r)| {
        prop::collection::vec(
            (
                prop::collection::vec(any::<bool>(), p),
                prop::collection::vec(prop::collection::vec(any::<bool>(), p), r),
            ),
            k,
        )
    })
}

fn traces(outcomes: &[(Vec<bool>, Vec<Vec<bool>>)]) -> Vec<VerificationTrace> {
    outcomes
        .iter()
        .enumerate()
        .map(|(i, (t, m))| VerificationTrace::from_outcomes(i, t.clone(), m.clone()))
        .collect()
}

/// A random walk over `graph` steered by `choices`.
fn walk(graph: &NavGraph, start: usize, choices: &[usize]) -> Vec<String> {
    let ids = graph.viewpoints();
    let mut path = vec![ids[start % ids.len()].id.clone()];
    for &c in choices {
        let next = graph.navigable_from(path.last().unwrap()).unwrap();
        path.push(next[c % next.len()].to.clone());
    }
    path
}

fn world(seed: u64, n: usize) -> NavGraph {
    synth_world(&SynthConfig::new(seed, n, 2)).unwrap().graph
}

fn relabeled(graph: &NavGraph) -> (NavGraph, impl Fn(&str) -> String) {
    let rename = |id: &str| format!("renamed-{}", id.chars().rev().collect::<String>());
    let viewpoints = graph
        .viewpoints()
        .iter()
        .map(|v| Viewpoint {
            id: rename(&v.id),
            position: v.position,
        })
        .collect();
    let edges = graph
        .edges()
        .iter()
        .map(|e| NavEdge {
            from: rename(&e.from),
            to: rename(&e.to),
            ..e.clone()
        })
        .collect();
    (NavGraph::new(viewpoints, edges).unwrap(), rename)
}

proptest! {
    #[test]
    fn parser_never_panics_and_respects_letters(raw in "\\PC{0,200}", n in 1usize..=6, strict in any::<bool>()) {
        let letters = &LETTERS[..n];
        let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
        match parse_cot_with(&raw, letters, mode) {
            Ok(t) => {
                prop_assert!(letters.contains(&t.action));
                prop_assert!(letters.contains(&t.view_match));
                prop_assert_eq!(t.raw, raw);
            }
            Err(e) => prop_assert_eq!(e.raw(), raw.as_str()),
        }
    }

    #[test]
    fn labels_round_trip(prediction in "[a-z][a-z ]{0,24}[a-z]", i in 0usize..6) {
        let label = CotLabel::new(prediction.clone(), LETTERS[i]);
        for mode in [ParseMode::Strict, ParseMode::Lenient] {
            let t = parse_cot_with(&label.rendered, &LETTERS, mode).unwrap();
            prop_assert_eq!(&t.prediction, &prediction);
            prop_assert_eq!(t.action, LETTERS[i]);
            prop_assert_eq!(t.view_match, LETTERS[i]);
        }
    }

    #[test]
    fn lenient_accepts_whatever_strict_accepts(raw in "(Prediction: [a-z ]{1,12}\\. )?(View match: [A-F] [a-z ]{0,12}\\. )?(Action: [A-G]\\.?)?") {
        if let Ok(strict) = parse_cot_with(&raw, &LETTERS, ParseMode::Strict) {
            let lenient = parse_cot_with(&raw, &LETTERS, ParseMode::Lenient).unwrap();
            prop_assert_eq!(strict.action, lenient.action);
        }
    }

    #[test]
    fn scores_are_bounded_and_consistent(o in outcomes(1)) {
        let (tfv, mev) = &o[0];
        let t = VerificationTrace::from_outcomes(0, tfv.clone(), mev.clone());
        let p = tfv.len();
        prop_assert!(t.tfv_score <= p);
        prop_assert!(t.mev_score <= mev.len() * p);
        prop_assert_eq!(t.total, t.tfv_score + t.mev_score);
        prop_assert!(t.is_consistent());
    }

    #[test]
    fn selection_picks_the_lexicographic_best(o in outcomes(6)) {
        let cands: Vec<Candidate> = (0..o.len()).map(candidate).collect();
        let ts = traces(&o);
        let chosen = select_action(&cands, &ts).unwrap().index;
        let key = |i: usize| (ts[i].total, ts[i].tfv_score);
        for i in 0..o.len() {
            prop_assert!(key(i) <= key(chosen));
            if key(i) == key(chosen) {
                prop_assert!(chosen <= i, "tie must go to the earliest candidate");
            }
        }
    }

    #[test]
    fn selection_is_invariant_to_presentation_order(o in outcomes(6), rot in 0usize..6) {
        let cands: Vec<Candidate> = (0..o.len()).map(candidate).collect();
        let ts = traces(&o);
        let chosen = select_action(&cands, &ts).unwrap().index;
        // Rotate the lists but keep decoding indices: the winner must not move.
        let k = o.len();
        let order: Vec<usize> = (0..k).map(|i| (i + rot) % k).collect();
        let c2: Vec<Candidate> = order.iter().map(|&i| cands[i].clone()).collect();
        let t2: Vec<VerificationTrace> = order.iter().map(|&i| ts[i].clone()).collect();
        prop_assert_eq!(select_action(&c2, &t2).unwrap().index, chosen);
    }

    #[test]
    fn more_support_never_unseats_the_winner(o in outcomes(5), pick in any::<prop::sample::Index>()) {
        let cands: Vec<Candidate> = (0..o.len()).map(candidate).collect();
        let chosen = select_action(&cands, &traces(&o)).unwrap().index;
        let mut boosted = o.clone();
        let (tfv, mev) = &mut boosted[chosen];
        let slots = tfv.len() + mev.iter().map(Vec::len).sum::<usize>();
        let mut at = pick.index(slots);
        if at < tfv.len() {
            tfv[at] = true;
        } else {
            at -= tfv.len();
            let p = tfv.len();
            mev[at / p][at % p] = true;
        }
        prop_assert_eq!(select_action(&cands, &traces(&boosted)).unwrap().index, chosen);
    }

    #[test]
    fn masks_hide_exactly_one_phrase(r in 0usize..5) {
        let instruction = "Walk past the sofa, go up the stairs and wait by the window near the piano.";
        let entities = EntityList::from_phrases(instruction, ["sofa", "stairs", "window", "piano", "lamp"]);
        let masks = prepare_masks(instruction, r, &entities, DEFAULT_MASK_TOKEN);
        prop_assert_eq!(masks.len(), r.min(4));
        for m in &masks {
            prop_assert_eq!(m.text.matches(DEFAULT_MASK_TOKEN).count(), 1);
            let restored = m.text.replacen(DEFAULT_MASK_TOKEN, &m.masked_entity, 1);
            prop_assert_eq!(restored, instruction);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_stay_in_range(
        seed in 0u64..500,
        n in 4usize..12,
        start in 0usize..12,
        choices in prop::collection::vec(0usize..8, 0..8),
        gt_choices in prop::collection::vec(0usize..8, 1..6),
    ) {
        let g = world(seed, n);
        let traj = walk(&g, start, &choices);
        let gt = walk(&g, start + 1, &gt_choices);
        let m = evaluate(&g, &traj, &gt, &MetricsConfig::default()).unwrap();
        prop_assert!(m.ne >= 0.0 && m.tl >= 0.0);
        for v in [m.spl, m.ndtw, m.sdtw, m.cls] {
            prop_assert!((0.0..=1.0).contains(&v), "{m:?}");
        }
        prop_assert!(m.sdtw <= m.ndtw);
        prop_assert!(!m.success || m.oracle_success);
        prop_assert_eq!(m.success, m.ne <= 3.0);
    }

    #[test]
    fn a_detour_lowers_alignment(seed in 0u64..500, n in 4usize..12, start in 0usize..12, gt_choices in prop::collection::vec(0usize..8, 1..5), at in any::<prop::sample::Index>(), via in 0usize..8) {
        let g = world(seed, n);
        let gt = walk(&g, start, &gt_choices);
        let i = at.index(gt.len());
        let side = g.navigable_from(&gt[i]).unwrap();
        let excursion = side[via % side.len()].to.clone();
        prop_assume!(!gt.contains(&excursion));
        let mut detoured = gt[..=i].to_vec();
        detoured.push(excursion);
        detoured.extend_from_slice(&gt[i..]);
        let straight = evaluate(&g, &gt, &gt, &MetricsConfig::default()).unwrap();
        let bent = evaluate(&g, &detoured, &gt, &MetricsConfig::default()).unwrap();
        prop_assert_eq!(straight.ndtw, 1.0);
        prop_assert!(bent.ndtw < straight.ndtw);
        prop_assert!(bent.cls < straight.cls);
    }

    #[test]
    fn metrics_ignore_viewpoint_names(seed in 0u64..500, n in 4usize..12, start in 0usize..12, choices in prop::collection::vec(0usize..8, 0..6), gt_choices in prop::collection::vec(0usize..8, 1..5)) {
        let g = world(seed, n);
        let traj = walk(&g, start, &choices);
        let gt = walk(&g, start + 3, &gt_choices);
        let (g2, rename) = relabeled(&g);
        let map = |p: &[String]| p.iter().map(|id| rename(id)).collect::<Vec<_>>();
        let a = evaluate(&g, &traj, &gt, &MetricsConfig::default()).unwrap();
        let b = evaluate(&g2, &map(&traj), &map(&gt), &MetricsConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
