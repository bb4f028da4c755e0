use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use bbayes::chain::{occupancy_compare, ChainInstance, ChainModel};
use bbayes::harness::experiment::{for_each_replication, summarize, summarize_replication};
use bbayes::harness::{derive_rng, run_replication, ExperimentConfig, Purpose};
use bbayes::mixture::run_mixture;
use bbayes::scoring::{log_score_average, mixture_log_ratio_series};
use bbayes::search::SearchDistribution;
use bbayes::sr::{run_sr, sr_decide};
use bbayes::srf::{run_srf, SrfOptions, TrialSchedule};
use bbayes::{ModelId, ModelSpace, ModelSpec, ObservationVector, Schema, Trace};

const GRID: &str = r#"
[schema]

[[models]]
name = "theta-0.1"
family = "fixed-bernoulli"
theta = 0.1

[[models]]
name = "theta-0.3"
family = "fixed-bernoulli"
theta = 0.3

[[models]]
name = "theta-0.5"
family = "fixed-bernoulli"
theta = 0.5

[[models]]
name = "theta-0.7"
family = "fixed-bernoulli"
theta = 0.7

[[models]]
name = "theta-0.9"
family = "fixed-bernoulli"
theta = 0.9

[generator]
outcome = { rule = "in-space", model = "theta-0.7" }
"#;

fn grid(forecasters: &str, horizon: usize, replications: u64) -> bbayes::harness::Experiment {
    let text = format!(
        "{GRID}\n[forecasters]\n{forecasters}\n\n[run]\nhorizon = {horizon}\nreplications = {replications}\nseed = 99\n"
    );
    ExperimentConfig::from_toml_str(&text).unwrap().build().unwrap()
}

#[test]
fn mixture_is_not_beaten_by_any_single_model() {
    let exp = grid("mixture = true", 10_000, 100);
    let worst = for_each_replication(&exp, exp.run.seed, |rec| {
        let u_mix = log_score_average(&rec.realized(&rec.mixture.as_ref().unwrap().forecasts))?;
        let best_single = exp
            .space
            .ids()
            .map(|id| {
                let theta = exp.space.spec(id).family.clone();
                let bbayes::Family::FixedBernoulli { theta } = theta else { unreachable!() };
                rec.stream.iter().map(|o| if o.x { theta.ln() } else { (1.0 - theta).ln() }).sum::<f64>()
                    / rec.horizon() as f64
            })
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(u_mix - best_single)
    })
    .unwrap()
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    assert!(worst >= -0.01, "mixture trails the best single model by {}", -worst);
}

#[test]
fn mixture_only_run_matches_direct_engine() {
    let exp = grid("mixture = true", 2_000, 1);
    let rec = run_replication(&exp, 5, 0).unwrap();
    let direct = run_mixture(&exp.space, rec.stream.clone(), rec.horizon()).unwrap();
    assert_eq!(rec.mixture.as_ref().unwrap(), &direct);
}

#[test]
fn every_forecaster_sees_the_generated_stream() {
    let text = format!(
        "{GRID}\n[forecasters]\nmixture = true\nsr = {{}}\nsrf = {{ schedule = {{ schedule = \"fixed\", k = 3 }} }}\n\n[run]\nhorizon = 1500\nseed = 4\n"
    );
    let exp = ExperimentConfig::from_toml_str(&text).unwrap().build().unwrap();
    let rec = run_replication(&exp, 4, 2).unwrap();
    let stream = exp.generator.generate_stream(&mut derive_rng(4, 2, Purpose::Stream), 1500);
    assert_eq!(rec.stream, stream);
    let sr = run_sr(&exp.space, SearchDistribution::Uniform, None, stream.clone(), 1500, derive_rng(4, 2, Purpose::Sr)).unwrap();
    assert_eq!(rec.sr.as_ref().unwrap(), &sr);
    let options = SrfOptions { record_decisions: true, record_q_states: true, record_q_sequence: false };
    let srf = run_srf(
        &exp.space,
        SearchDistribution::Uniform,
        TrialSchedule::Fixed { k: 3 },
        None,
        stream,
        1500,
        derive_rng(4, 2, Purpose::Srf),
        options,
    )
    .unwrap();
    assert_eq!(rec.srf.as_ref().unwrap(), &srf);
}

#[test]
fn summary_shows_mixture_closer_to_truth_than_early_sr() {
    let exp = grid("mixture = true\nsr = { initial = [\"theta-0.1\", \"theta-0.9\"] }", 5_000, 8);
    let reps = for_each_replication(&exp, exp.run.seed, |rec| summarize_replication(&exp, &rec)).unwrap();
    let summary = summarize(&exp, reps);
    let get = |n: &str| summary.forecasters.iter().find(|f| f.name == n).unwrap();
    assert!(get("mixture").mean_final_window_gap_to_truth < get("sr").mean_first_window_gap_to_truth);
    assert_eq!(summary.sr_final_current.iter().map(|c| c.count).sum::<u64>(), 8);
}

#[test]
fn mixture_ratio_never_drops_below_truth_prior() {
    let space = ModelSpace::new(
        Schema::new(vec![2], vec![]).unwrap(),
        vec![
            ModelSpec::fixed_bernoulli("coin", 0.5),
            ModelSpec::cpt("b1", vec![0], 1.0),
            ModelSpec::cpt("none", vec![], 2.0),
        ],
        vec![0.5, 0.2, 0.3],
    )
    .unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    for truth in space.ids() {
        let records: Vec<_> = (0..2000)
            .map(|_| {
                use rand::Rng;
                let b = rng.random_range(0..2);
                ObservationVector::new(vec![b], rng.random_bool(if b == 1 { 0.8 } else { 0.3 }), vec![])
            })
            .collect();
        let trace = Trace::from_records(space.schema().clone(), records).unwrap();
        let floor = space.prior(truth).ln();
        for (t, r) in mixture_log_ratio_series(&space, truth, &trace).unwrap().iter().enumerate() {
            assert!(*r >= floor - 1e-12, "t={t}: {r} < {floor}");
        }
    }
}

#[test]
fn balanced_blocks_keep_the_current_model() {
    let space = ModelSpace::uniform(
        Schema::outcome_only(),
        vec![ModelSpec::fixed_bernoulli("lo", 0.3), ModelSpec::fixed_bernoulli("hi", 0.7)],
    )
    .unwrap();
    let block = [ObservationVector::outcome(false), ObservationVector::outcome(true)];
    let (lo, _) = space.replay(ModelId(0), &block);
    let (hi, _) = space.replay(ModelId(1), &block);
    // 0.7·0.3 against 0.3·0.7; exact in real arithmetic, not in floating point
    assert_eq!(sr_decide(&space, ModelId(0), lo, ModelId(1), hi), ModelId(0));
    assert_eq!(sr_decide(&space, ModelId(1), hi, ModelId(0), lo), ModelId(1));
}

#[test]
fn srf_engine_occupancy_matches_chain_at_k2() {
    let space = ModelSpace::uniform(
        Schema::outcome_only(),
        vec![
            ModelSpec::fixed_bernoulli("a", 0.2),
            ModelSpec::fixed_bernoulli("b", 0.55),
            ModelSpec::fixed_bernoulli("c", 0.8),
        ],
    )
    .unwrap();
    let search = SearchDistribution::PriorProportional;
    let chain = ChainModel::build(&ChainInstance::new(space.clone(), vec![0.4, 0.6], 2, search).unwrap()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let stream = std::iter::repeat_with(move || {
        use rand::Rng;
        ObservationVector::outcome(rng.random_bool(0.6))
    });
    let options = SrfOptions { record_q_states: true, ..Default::default() };
    let run = run_srf(&space, search, TrialSchedule::Fixed { k: 2 }, None, stream, 600_000, ChaCha20Rng::seed_from_u64(13), options)
        .unwrap();
    let tv = occupancy_compare(&chain, run.q_occupancy.as_ref().unwrap()).unwrap();
    assert!(tv < 0.02, "TV {tv}");
}
