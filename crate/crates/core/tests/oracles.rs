//! Engine results checked against closed-form answers computed from world
//! ground truth.

use vlscore::alpha_tuner::grid_search;
use vlscore::retrieval_eval::PreparedTasks;
use vlscore::synthworld::{
    exact_conditional, exact_prior_table, export_bank, generate_world, model_scores, ExactI2tObjective, ExportOptions,
    PriorKind, Scenario, World, WorldParams,
};
use vlscore::{
    debias_log, eval_t2i, pmi_k_log, prior_from_testset, AggregationMode, Alpha, BetaBias, Direction, PriorTable64,
};

const SUM: AggregationMode = AggregationMode::SumLog;

fn world(k: usize, n: usize, skew: f64, seed: u64) -> World {
    generate_world(&WorldParams {
        n_images: k,
        n_captions: n,
        caption_len: 3,
        vocab_size: 8,
        skew,
        seed,
        ..WorldParams::default()
    })
    .unwrap()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Indices sorted by descending score, ties by index.
fn order(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]).then(a.cmp(&b)));
    idx
}

#[test]
fn debiasing_at_one_ranks_captions_by_likelihood() {
    for seed in 0..5 {
        let w = world(8, 24, 2.0, seed);
        let cond = exact_conditional(&w);
        let prior = exact_prior_table(&w, PriorKind::Train, SUM);
        for (i, row) in cond.iter().enumerate() {
            let debiased: Vec<f64> = row
                .iter()
                .zip(&w.caption_ids)
                .map(|(&c, id)| debias_log(c, prior.get(id).unwrap(), Alpha::ONE).unwrap())
                .collect();
            assert_eq!(argmax(&debiased), argmax(&w.likelihood[i]), "seed {seed} image {i}");
        }
    }
}

#[test]
fn uniform_test_scenario_keeps_likelihood_and_train_prior() {
    let w = world(6, 12, 3.0, 4);
    let u = w.clone().with_scenario(Scenario::UniformTest);
    assert_eq!(u.likelihood, w.likelihood);
    assert_eq!(u.train_prior, w.train_prior);
    assert!(u.test_prior.iter().all(|&p| (p - 1.0 / 12.0).abs() < 1e-15));
    let m = w.clone().with_scenario(Scenario::Matched);
    assert_eq!(m.test_prior, w.train_prior);
}

fn t2i_oracle_recall(w: &World, queries: &[usize], positives: &[usize]) -> f64 {
    // rank images for caption t by P(i|t); hit when the drawn image wins strictly
    let hits = positives
        .iter()
        .zip(queries)
        .filter(|&(&t, &i)| {
            let col: Vec<f64> = w.likelihood.iter().map(|r| r[t]).collect();
            col.iter().enumerate().all(|(j, &v)| j == i || v < col[i])
        })
        .count();
    100.0 * hits as f64 / positives.len() as f64
}

#[test]
fn t2i_matches_posterior_oracle_when_images_are_balanced() {
    for seed in 0..4 {
        let w = world(8, 20, 1.5, seed).with_uniform_image_prior().unwrap();
        let mut opts = ExportOptions::for_world(&w, Scenario::Matched, seed);
        opts.n_tasks = 300;
        opts.include_t2i = true;
        let ex = export_bank(&w, &opts).unwrap();
        let tasks = ex.bank.tasks_with_direction(Direction::TextToImage);
        let report = eval_t2i(&ex.bank, &tasks, SUM).unwrap();
        let oracle = t2i_oracle_recall(&ex.world, &ex.queries, &ex.positives);
        assert!((report.metric("R@1").unwrap() - oracle).abs() < 1e-9, "seed {seed}");
    }
}

#[test]
fn t2i_departs_from_posterior_oracle_when_images_are_skewed() {
    // P(t|i) ∝ P(i|t) / P(i): with a skewed image marginal the conditional
    // ranking disagrees with the posterior for some captions.
    let mut disagreements = 0;
    for seed in 0..4 {
        let w = world(8, 40, 2.0, seed);
        let cond = model_scores(&w);
        for t in 0..w.n_captions() {
            let by_cond: Vec<f64> = cond.iter().map(|r| r[t]).collect();
            let by_post: Vec<f64> = w.likelihood.iter().map(|r| r[t]).collect();
            if argmax(&by_cond) != argmax(&by_post) {
                disagreements += 1;
            }
        }
    }
    assert!(disagreements > 0);
}

#[test]
fn pmi_k_ranks_like_debiasing_on_worlds() {
    for seed in 0..5 {
        let w = world(8, 32, 2.0, seed);
        let cond = exact_conditional(&w);
        let prior: Vec<f64> = w.train_prior.iter().map(|p| p.ln()).collect();
        for alpha in [0.25, 0.5, 1.0] {
            let a = Alpha::new(alpha).unwrap();
            for (i, row) in cond.iter().enumerate() {
                let image = w.image_prior[i].ln();
                let d: Vec<f64> = row.iter().zip(&prior).map(|(&c, &p)| debias_log(c, p, a).unwrap()).collect();
                let k: Vec<f64> =
                    row.iter().zip(&prior).map(|(&c, &p)| pmi_k_log(c, p, image, 1.0 / alpha).unwrap()).collect();
                assert_eq!(order(&d), order(&k), "seed {seed} alpha {alpha} image {i}");
            }
        }
    }
}

#[test]
fn halving_the_grid_step_only_resolves_narrow_crossings() {
    let mut discrepancies = Vec::new();
    for seed in 0..5 {
        let w = world(16, 48, 2.0, seed).with_beta(BetaBias::new(1.0).unwrap());
        let ex = export_bank(&w, &ExportOptions::for_world(&w, Scenario::Matched, seed)).unwrap();
        let prior = exact_model_prior(&ex.world);
        let obj = ExactI2tObjective::new(&ex.world, &ex.bank, &prior, SUM).unwrap();
        let coarse = grid_search(|a| obj.accuracy(a), 0.001).unwrap();
        let fine = grid_search(|a| obj.accuracy(a), 0.0005).unwrap();
        // every coarse point is on the fine grid
        for p in &coarse.curve {
            let q = fine.curve.iter().find(|q| (q.alpha - p.alpha).abs() < 1e-12).unwrap();
            assert_eq!(p.objective, q.objective);
        }
        assert!(fine.objective_at_star >= coarse.objective_at_star);
        let gap = (fine.alpha_star.value() - coarse.alpha_star.value()).abs();
        if gap > 0.001 {
            discrepancies.push((seed, coarse.alpha_star.value(), fine.alpha_star.value()));
        }
    }
    assert!(discrepancies.is_empty(), "alpha* moved by more than one coarse step: {discrepancies:?}");
}

/// Exact prior as the biased model would report it: `(1 + beta) log P_train(t)`.
fn exact_model_prior(w: &World) -> PriorTable64 {
    let mut table = exact_prior_table(w, PriorKind::Train, SUM);
    let b = 1.0 + w.beta.value();
    table.entries.values_mut().for_each(|v| *v *= b);
    table
}

#[test]
fn testset_prior_gap_matches_oracle() {
    for seed in 0..4 {
        let w = world(8, 16, 1.0, seed);
        let mut opts = ExportOptions::for_world(&w, Scenario::Matched, seed);
        opts.n_tasks = 200;
        let ex = export_bank(&w, &opts).unwrap();
        let tasks = ex.bank.tasks_with_direction(Direction::ImageToText);
        let testset = prior_from_testset(&ex.bank, &tasks, SUM).unwrap();
        let exact = exact_prior_table(&ex.world, PriorKind::Train, SUM);

        let mut seen: Vec<usize> = ex.queries.clone();
        seen.sort();
        seen.dedup();
        let cond = exact_conditional(&ex.world);
        let mut max_gap: f64 = 0.0;
        for (t, id) in ex.world.caption_ids.iter().enumerate() {
            let uniform_avg = (seen.iter().map(|&i| cond[i][t].exp()).sum::<f64>() / seen.len() as f64).ln();
            let got = testset.get(id).unwrap();
            assert!((got - uniform_avg).abs() < 1e-10, "seed {seed} caption {t}");
            max_gap = max_gap.max((got - exact.get(id).unwrap()).abs());
        }
        // the train image marginal is not uniform on these worlds
        assert!(max_gap > 1e-3, "seed {seed}: gap {max_gap}");
    }
}

#[test]
fn testset_prior_is_exact_on_balanced_worlds() {
    let w = world(6, 12, 1.0, 2).with_uniform_image_prior().unwrap();
    let ex = export_bank(&w, &ExportOptions::for_world(&w, Scenario::Matched, 0)).unwrap();
    // one task per image so every image is present
    let all_images: Vec<_> = (0..6)
        .map(|i| vlscore::RetrievalTask {
            task_id: format!("q{i}"),
            query_id: ex.world.images[i].clone(),
            candidate_ids: ex.world.caption_ids.clone(),
            positive_index: 0,
            direction: Direction::ImageToText,
        })
        .collect();
    let testset = prior_from_testset(&ex.bank, &all_images, SUM).unwrap();
    let exact = exact_prior_table(&ex.world, PriorKind::Train, SUM);
    for id in &ex.world.caption_ids {
        assert!((testset.get(id).unwrap() - exact.get(id).unwrap()).abs() < 1e-10);
    }
}

/// Mean |alpha*_val - alpha*_test| over seeds for val and test sets of `size` tasks each.
fn val_test_alpha_gap(size: usize, seeds: u64) -> f64 {
    let mut total = 0.0;
    for seed in 0..seeds {
        let w = world(16, 48, 2.0, 100 + seed).with_beta(BetaBias::new(1.0).unwrap());
        let mut opts = ExportOptions::for_world(&w, Scenario::Matched, seed);
        opts.n_tasks = 2 * size;
        let ex = export_bank(&w, &opts).unwrap();
        let prior = exact_model_prior(&ex.world);
        let tasks = ex.bank.tasks_with_direction(Direction::ImageToText);
        let prepared = PreparedTasks::new(&ex.bank, &tasks, &prior, SUM).unwrap();
        let val: Vec<usize> = (0..size).collect();
        let test: Vec<usize> = (size..2 * size).collect();
        let a_val = grid_search(|a| prepared.recall_on(&val, a, 1), 0.001).unwrap().alpha_star.value();
        let a_test = grid_search(|a| prepared.recall_on(&test, a, 1), 0.001).unwrap().alpha_star.value();
        total += (a_val - a_test).abs();
    }
    total / seeds as f64
}

#[test]
fn val_and_test_alpha_agree_better_with_more_data() {
    let small = val_test_alpha_gap(50, 10);
    let large = val_test_alpha_gap(500, 10);
    eprintln!("mean |alpha_val - alpha_test|: size 50 -> {small:.3}, size 500 -> {large:.3}");
    assert!(large < small, "size 50: {small}, size 500: {large}");
}
