//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances are pinned below.

mod common;

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use iaa_core::augment::{subsample_giaa, SubsampleConfig};
use iaa_core::dataset::{
    build_giaa, ingest_annotations, materialize_sets, split_images, split_users_disjoint, AnnotationTable, SplitManifest,
    SplitRatios, TraitLookup,
};
use iaa_core::metrics::{aggregate_distribution, demographic_gini, emd_loss, emd_w1, gini_impurity, plcc, srocc};
use iaa_core::model::{evaluate_with, init_model, EvalMode};
use iaa_core::schema::{encode_trait, schema_dimension, FieldKind, TraitVector};
use iaa_core::synth::{
    gen_population, run_disjoint_sweep, run_transfer_experiment, PopulationConfig, ScaleSpec, SchemaSpec, SweepSpec,
    TransferSpec,
};
use iaa_core::theory::{convex_membership, verify_theorem};
use iaa_core::{Error, ScoreDistribution, ScoreScale, TraitSchema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const THEOREM_TRIALS: usize = 100_000;
const THEOREM_SLACK: f64 = 1e-12;
const THEOREM_BUDGET: Duration = Duration::from_secs(10);
const GOLDEN_TOL: f64 = 1e-9;
const EMD_ORACLE_TOL: f64 = 1e-9;
const EMD_LOSS_TOL: f64 = 1e-12;
const EMD_PAIRS: usize = 1000;
const GRAD_NETWORKS: usize = 100;
const GRAD_TOL: f64 = 1e-4;
const HULL_TOL: f64 = 1e-8;
const HULL_MIN_SAMPLES: usize = 10_000;
const SEEDS: u64 = 5;
const SEEDS_REQUIRED: usize = 4;
const TRANSFER_BUDGET: Duration = Duration::from_secs(300);
const GIAA_DRIFT: f64 = 0.02;
const SWEEP_MIN_SPLITS: usize = 8;
const SWEEP_PLCC_MAX: f64 = -0.5;
const CORR_TOL: f64 = 1e-12;
const CORR_VECTORS: usize = 1000;
const GINI_SLACK: f64 = 1e-12;

type Outcome = Result<String, String>;

fn require(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let sweep = verify_theorem(THEOREM_TRIALS, 2024);
    let elapsed = start.elapsed();
    require(
        sweep.trials == THEOREM_TRIALS
            && sweep.scalar_trials > 0
            && sweep.violations == 0
            && sweep.max_gap <= THEOREM_SLACK
            && elapsed < THEOREM_BUDGET,
        format!(
            "{} trials + {} scalar, {} violations, max(giaa - piaa) = {:.3e}, {:.2?}",
            sweep.trials, sweep.scalar_trials, sweep.violations, sweep.max_gap, elapsed
        ),
    )
}

fn criterion_2() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("golden.csv");
    std::fs::write(&csv, common::golden_para_csv()).unwrap();
    let table = ingest_annotations(&csv, &TraitSchema::para_onehot(), &ScoreScale::para(), None).map_err(|e| e.to_string())?;
    let samples = build_giaa(&table, None).map_err(|e| e.to_string())?;
    let mean = table.scale().mean_score(&samples[0].score_dist);
    let shown = format!("{mean:.2}");
    require(
        samples.len() == 1 && samples[0].group_size == 24 && (mean - 83.0 / 24.0).abs() <= GOLDEN_TOL && shown == "3.46",
        format!("mean {mean:.12} (83/24 = {:.12}), displayed {shown}", 83.0 / 24.0),
    )
}

fn criterion_3() -> Outcome {
    let dims = [
        schema_dimension(&TraitSchema::para_onehot()),
        schema_dimension(&TraitSchema::lapis_onehot()),
        schema_dimension(&TraitSchema::para_conventional()),
        schema_dimension(&TraitSchema::lapis_conventional()),
    ];
    require(
        dims == [70, 137, 25, 71],
        format!("para one-hot {}, lapis one-hot {}, conventional {} and {}", dims[0], dims[1], dims[2], dims[3]),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..EMD_PAIRS {
        let d = rng.random_range(2..=11);
        // irregular grids so the ground metric is not just bin distance
        let mut values = vec![rng.random_range(-3.0..3.0)];
        for _ in 1..d {
            let next = values.last().unwrap() + rng.random_range(0.05..2.0);
            values.push(next);
        }
        let scale = ScoreScale::new("oracle", values.clone()).unwrap();
        let draw = |rng: &mut ChaCha8Rng| {
            let w: Vec<f64> = (0..d).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect();
            ScoreDistribution::from_weights(&w).unwrap_or_else(|_| ScoreDistribution::one_hot(d, 0))
        };
        let (p, q) = (draw(&mut rng), draw(&mut rng));
        let got = emd_w1(&p, &q, &scale).map_err(|e| e.to_string())?;
        worst = worst.max((got - common::transport_emd(p.mass(), q.mass(), &values)).abs());
    }
    let hand = emd_loss(&ScoreDistribution::one_hot(2, 0), &ScoreDistribution::one_hot(2, 1), 2.0).map_err(|e| e.to_string())?;
    let hand_err = (hand - 0.5f64.sqrt()).abs();
    require(
        worst <= EMD_ORACLE_TOL && hand_err <= EMD_LOSS_TOL,
        format!("max |emd_w1 - transport| = {worst:.3e} over {EMD_PAIRS} pairs, |emd_loss - sqrt(0.5)| = {hand_err:.3e}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for k in 0..GRAD_NETWORKS {
        let r = [2.0, 3.0, 1.5][k % 3];
        let (p, ex) = common::grad::random_case(&mut rng);
        worst = worst.max(common::grad::max_relative_error(&p, &ex, r));
    }
    require(
        worst < GRAD_TOL,
        format!("max relative error {worst:.3e} over {GRAD_NETWORKS} networks (eps {:e})", common::grad::EPS),
    )
}

/// Small synthetic fixtures covering both score scales and the three trait
/// schemas with demographic fields.
fn hull_fixtures() -> Vec<AnnotationTable> {
    [("para", "para", 1), ("lapis", "lapis", 2), ("demographics", "lapis", 3)]
        .into_iter()
        .map(|(schema, scale, seed)| {
            gen_population(&PopulationConfig {
                n_raters: 60,
                n_images: 120,
                raters_per_image: Some(25),
                schema: SchemaSpec::Preset(schema.into()),
                scale: ScaleSpec::Preset(scale.into()),
                effects: Default::default(),
                ..PopulationConfig::heterogeneous(seed)
            })
            .unwrap()
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let config = SubsampleConfig { samples_per_image: 30, k_min: 2, k_max: 20, seed: 6 };
    let (mut checked, mut failures) = (0usize, 0usize);
    for table in hull_fixtures() {
        let bins = table.scale().bin_count();
        let mut samples = build_giaa(&table, None).map_err(|e| e.to_string())?;
        samples.extend(subsample_giaa(&table, None, &config).map_err(|e| e.to_string())?.samples);
        for s in &samples {
            let traits: Vec<TraitVector> = s
                .member_ids
                .iter()
                .map(|id| encode_trait(table.rater(id).unwrap(), table.schema()).unwrap())
                .collect();
            let trait_members: Vec<&[f64]> = traits.iter().map(|t| t.values()).collect();
            let score_members: Vec<Vec<f64>> = table
                .records_for_image(&s.image_id)
                .iter()
                .filter(|r| s.member_ids.contains(&r.rater_id))
                .map(|r| ScoreDistribution::one_hot(bins, r.bin).mass().to_vec())
                .collect();
            let inside = convex_membership(s.trait_dist.values(), &trait_members, HULL_TOL).map_err(|e| e.to_string())?
                && convex_membership(s.score_dist.mass(), &score_members, HULL_TOL).map_err(|e| e.to_string())?;
            checked += 1;
            if !inside {
                failures += 1;
            }
        }
    }
    require(
        checked >= HULL_MIN_SAMPLES && failures == 0,
        format!("{failures} failures over {checked} GIAA/sGIAA samples (tol {HULL_TOL:e})"),
    )
}

/// Transfer runs shared by criteria 7 and 8.
struct TransferRuns {
    reports: Vec<iaa_core::synth::TransferReport>,
    elapsed: Duration,
}

fn transfer_runs() -> Result<TransferRuns, String> {
    let start = Instant::now();
    let spec = TransferSpec::default();
    let reports = (0..SEEDS)
        .map(|seed| run_transfer_experiment(&PopulationConfig::heterogeneous(seed), &spec).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TransferRuns { reports, elapsed: start.elapsed() })
}

fn criterion_7(runs: &Result<TransferRuns, String>) -> Outcome {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let wins = runs.reports.iter().filter(|r| r.p_to_g_gap() < r.g_to_p_gap()).count();
    let gaps: Vec<String> = runs
        .reports
        .iter()
        .map(|r| format!("{:+.3}/{:+.3}", r.p_to_g_gap(), r.g_to_p_gap()))
        .collect();
    require(
        wins >= SEEDS_REQUIRED && runs.elapsed < TRANSFER_BUDGET,
        format!("P->G gap < G->P gap in {wins}/{SEEDS} seeds [{}], {:.1?}", gaps.join(", "), runs.elapsed),
    )
}

fn criterion_8(runs: &Result<TransferRuns, String>) -> Outcome {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let mut wins = 0;
    let mut cells = Vec::new();
    for r in &runs.reports {
        let (Some(sg), Some(sp)) = (&r.sgiaa_on_giaa, &r.sgiaa_on_piaa) else {
            return Err("transfer spec produced no sGIAA model".into());
        };
        let gain = sp.srocc - r.giaa_on_piaa.srocc;
        let drift = sg.srocc - r.giaa_on_giaa.srocc;
        if gain > 0.0 && drift.abs() <= GIAA_DRIFT {
            wins += 1;
        }
        cells.push(format!("{gain:+.3}/{drift:+.3}"));
    }
    require(
        wins >= SEEDS_REQUIRED,
        format!("G->P gain > 0 with |GIAA change| <= {GIAA_DRIFT} in {wins}/{SEEDS} seeds [{}]", cells.join(", ")),
    )
}

fn criterion_9() -> Outcome {
    let fields: Vec<String> = ["gender", "age", "education", "photo_experience", "art_experience"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let entries =
        run_disjoint_sweep(&PopulationConfig::heterogeneous(0), &fields, &SweepSpec::default()).map_err(|e| e.to_string())?;
    let (emd, sr): (Vec<f64>, Vec<f64>) = entries.iter().filter_map(|e| Some((e.group_emd?, e.test_srocc?))).unzip();
    if emd.len() < SWEEP_MIN_SPLITS {
        return Err(format!("only {} usable splits", emd.len()));
    }
    let r = plcc(&emd, &sr).map_err(|e| e.to_string())?;
    require(r <= SWEEP_PLCC_MAX, format!("plcc(group_emd, test srocc) = {r:.3} over {} splits", emd.len()))
}

/// Every categorical field of a table's schema.
fn categorical_fields(table: &AnnotationTable) -> Vec<String> {
    table
        .schema()
        .fields()
        .iter()
        .filter(|f| matches!(f.kind, FieldKind::Categorical { .. }))
        .map(|f| f.name.clone())
        .collect()
}

/// Tables every fixture-wide check runs over.
fn fixture_tables() -> Vec<(String, AnnotationTable)> {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("golden.csv");
    std::fs::write(&csv, common::golden_para_csv()).unwrap();
    let golden = ingest_annotations(&csv, &TraitSchema::para_onehot(), &ScoreScale::para(), None).unwrap();
    let mut out = vec![("tiny".to_string(), common::tiny_table()), ("golden".to_string(), golden)];
    let small = |seed| PopulationConfig { n_raters: 40, n_images: 60, raters_per_image: Some(15), ..PopulationConfig::heterogeneous(seed) };
    out.push(("synth-heterogeneous".into(), gen_population(&small(11)).unwrap()));
    out.push((
        "synth-homogeneous".into(),
        gen_population(&PopulationConfig { n_raters: 30, n_images: 40, ..PopulationConfig::homogeneous(12) }).unwrap(),
    ));
    for (i, table) in hull_fixtures().into_iter().enumerate() {
        out.push((format!("synth-hull-{i}"), table));
    }
    out
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_s: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    let mut done = 0;
    while done < CORR_VECTORS {
        let n = rng.random_range(3..60);
        // small integer ranges force ties
        let range = rng.random_range(2..12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..range) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(0..range) as f64 * 0.5).collect();
        let (Ok(s), Ok(p)) = (srocc(&x, &y), plcc(&x, &y)) else {
            continue;
        };
        worst_s = worst_s.max((s - common::naive_srocc(&x, &y)).abs());
        worst_p = worst_p.max((p - common::two_pass_pearson(&x, &y)).abs());
        done += 1;
    }
    let one_hot = gini_impurity(&ScoreDistribution::one_hot(10, 3));
    let uniform = gini_impurity(&ScoreDistribution::uniform(10));
    let mut gini_checks = 0;
    let mut gini_worst = f64::NEG_INFINITY;
    for (_, table) in fixture_tables() {
        let pooled = gini_impurity(&aggregate_distribution(&table, None).unwrap());
        for field in categorical_fields(&table) {
            let g = demographic_gini(&table, &field).map_err(|e| e.to_string())?;
            gini_worst = gini_worst.max(g - pooled);
            gini_checks += 1;
        }
    }
    require(
        worst_s <= CORR_TOL && worst_p <= CORR_TOL && one_hot == 0.0 && uniform == 0.9 && gini_worst <= GINI_SLACK,
        format!(
            "srocc err {worst_s:.1e}, plcc err {worst_p:.1e}, gini one-hot {one_hot}, uniform-10 {uniform}, \
             max(demographic - pooled) {gini_worst:.3e} over {gini_checks} fields"
        ),
    )
}

/// Trait lookup that remembers whose traits were read.
struct Recording<'a> {
    table: &'a AnnotationTable,
    seen: RefCell<BTreeSet<String>>,
}

impl TraitLookup for Recording<'_> {
    fn trait_vector(&self, rater_id: &str) -> Option<&TraitVector> {
        self.seen.borrow_mut().insert(rater_id.to_string());
        self.table.trait_vector(rater_id)
    }
}

fn criterion_11() -> Outcome {
    let ratios = SplitRatios::new(0.4, 0.2, 0.4).unwrap();
    let (mut manifests, mut evaluated, mut leaks, mut overlaps, mut control) = (0, 0, 0, 0, 0);
    for (name, table) in fixture_tables() {
        // single-image fixtures admit no three-way manifest
        let Ok(images) = split_images(&table, ratios, 3) else {
            continue;
        };
        let model = init_model(table.feature_dim(), table.schema().total_dim(), 4, table.scale().bin_count(), 1).unwrap();
        for field in categorical_fields(&table) {
            for label in table.schema().field(&field).unwrap().labels() {
                let Ok(users) = split_users_disjoint(&table, &field, &[label].into()) else {
                    continue;
                };
                let manifest = SplitManifest::disjoint(images.clone(), users);
                let Ok(sets) = materialize_sets(&table, &manifest) else {
                    continue;
                };
                manifests += 1;
                let ids = |t: &AnnotationTable| -> (BTreeSet<String>, BTreeSet<String>) {
                    t.records().iter().map(|r| (r.image_id.clone(), r.rater_id.clone())).unzip()
                };
                let (train_img, train_raters) = ids(&sets.train);
                let (test_img, test_raters) = ids(&sets.test);
                if !train_img.is_disjoint(&test_img) || !train_raters.is_disjoint(&test_raters) {
                    overlaps += 1;
                }
                let spy = Recording { table: &table, seen: RefCell::default() };
                match evaluate_with(&model, &table, &spy, &manifest, EvalMode::Giaa) {
                    Ok(_) => evaluated += 1,
                    Err(Error::DegenerateInput(_) | Error::EmptySet(_)) => {}
                    Err(e) => return Err(format!("{name}: {e}")),
                }
                if !spy.seen.borrow().is_disjoint(&manifest.test_users) {
                    leaks += 1;
                }
                // the spy does see test users when PIAA mode legitimately reads them
                let spy = Recording { table: &table, seen: RefCell::default() };
                let _ = evaluate_with(&model, &table, &spy, &manifest, EvalMode::Piaa);
                if !spy.seen.borrow().is_disjoint(&manifest.test_users) {
                    control += 1;
                }
            }
        }
    }
    require(
        manifests > 0 && evaluated > 0 && control > 0 && leaks == 0 && overlaps == 0,
        format!(
            "{manifests} disjoint manifests ({evaluated} evaluated): {leaks} GIAA reads of test-user traits, \
             {overlaps} shared image/rater ids; PIAA control saw test users in {control}"
        ),
    )
}

fn criterion_12() -> Outcome {
    use common::pipeline::{pipeline, snapshot};
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("out");
    let runs = pipeline(&out, work.path());
    let first = snapshot(&out);
    std::fs::remove_dir_all(&out).unwrap();
    pipeline(&out, work.path());
    let second = snapshot(&out);
    let json = first.keys().filter(|k| k.extension().is_some_and(|e| e == "json")).count();
    let differing: Vec<String> = first
        .iter()
        .filter(|(k, v)| second.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    require(
        first.len() == second.len() && differing.is_empty() && runs.iter().all(|r| r.join("run.json").is_file()),
        format!(
            "{} runs, {} files ({json} JSON) byte-identical across reruns{}",
            runs.len(),
            first.len(),
            if differing.is_empty() { String::new() } else { format!("; differing: {}", differing.join(", ")) }
        ),
    )
}

fn main() {
    let transfer = transfer_runs();
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("theorem sweep", Box::new(criterion_1)),
        ("golden PARA mean", Box::new(criterion_2)),
        ("encoding dimensions", Box::new(criterion_3)),
        ("EMD oracle", Box::new(criterion_4)),
        ("gradient check", Box::new(criterion_5)),
        ("hull membership", Box::new(criterion_6)),
        ("interpolation beats extrapolation", Box::new(|| criterion_7(&transfer))),
        ("sGIAA gain", Box::new(|| criterion_8(&transfer))),
        ("EMD vs SROCC anti-correlation", Box::new(criterion_9)),
        ("metric oracles", Box::new(criterion_10)),
        ("leakage guard", Box::new(criterion_11)),
        ("reproducibility", Box::new(criterion_12)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
