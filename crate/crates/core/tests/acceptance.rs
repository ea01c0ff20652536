//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero when a criterion fails that is not listed in
//! `DOCUMENTED_FAILURES`.
//!
//! Pass criterion numbers as arguments to run a subset.

use std::fs;
use std::time::{Duration, Instant};

use fpg_core::agents::maddpg::{actor_objective_and_grad, critic_input, critic_loss_and_grad};
use fpg_core::agents::nn::{Mlp, OutputActivation};
use fpg_core::agents::{rollout, train, AllyKind, OpponentKind};
use fpg_core::analysis::overlap_ratio;
use fpg_core::config::ScenarioConfig;
use fpg_core::experiment::{ablation_cells, replay, run_in, PlannerFactory};
use fpg_core::game::log::DetectionOutcome;
use fpg_core::game::reward::{ally_reward, opponent_reward, spreading_cost, CostModel};
use fpg_core::game::{Env, EnvConfig, TickRecord, ALLY_ACTION_DIM, MAX_ACTION, OPPONENT_ACTION_DIM, STATE_DIM};
use fpg_core::knowledge::{CounterAction, KnowledgeBase};
use fpg_core::planner::mock::{MockFixture, MockLlmServer, MockReply};
use fpg_core::planner::{
    build_prompt, format_directions, parse_directions, plan_heuristic, HttpChatClient, PlanSource, Planner,
    PlannerConfig, PlannerMode, PositionRewardHistory,
};
use fpg_core::radio::{band_overlap_fraction, channel_capacity, path_loss_db, AllyChannel, FrequencyGrid, JamKind, JamShape, JammingSpec};
use fpg_core::world::{MotionLimits, Vec3, WorldBounds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot pass as stated; see the project notes for the
/// analysis. They still print FAIL.
const DOCUMENTED_FAILURES: &[(u32, &str)] = &[
    (1, "the stated path-loss value is inconsistent with the stated formula and constant"),
    (6, "broadband carries the smallest jammer multiplier, so it is the mildest jammer under accurate targeting"),
];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 9] = [
        (1, "formula oracles", Duration::from_secs(5), c1_formula_oracles),
        (2, "knowledge-base soundness", Duration::from_secs(30), c2_kb_soundness),
        (3, "spectral-overlap oracle", Duration::from_secs(60), c3_overlap_oracle),
        (4, "detection discipline", Duration::from_secs(10), c4_detection),
        (5, "overlap trend vs pursuit", Duration::from_secs(300), c5_overlap_trend),
        (6, "single-jam ablation trend", Duration::from_secs(600), c6_single_jam),
        (7, "learning sanity", Duration::from_secs(900), c7_learning),
        (8, "planner protocol", Duration::from_secs(30), c8_planner),
        (9, "end-to-end determinism", Duration::from_secs(30), c9_determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, budget, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = std::panic::catch_unwind(f).unwrap_or_else(|_| Outcome::new(false, "panicked"));
        let elapsed = t.elapsed();
        let in_time = elapsed <= budget;
        let pass = o.pass && in_time;
        let timing = if in_time { String::new() } else { format!(" over budget {budget:?};") };
        println!(
            "criterion {id} ({name}): {} [{:.1}s]{timing} {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            o.detail
        );
        if !pass {
            match DOCUMENTED_FAILURES.iter().find(|(i, _)| *i == id) {
                Some((_, why)) => println!("  documented failure: {why}"),
                None => unexpected.push(id),
            }
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

// ---------------------------------------------------------------- criterion 1

fn c1_formula_oracles() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let pl = path_loss_db(1.0, 200.0).unwrap();
    let literal = (pl - 78.4624).abs() <= 1e-4;
    let independent = 32.44 + 20.0 * 200f64.log10();
    let formula = (pl - independent).abs() <= 1e-12;
    pass &= literal && formula;
    notes.push(format!(
        "path_loss_db(1, 200) = {pl:.6} (stated 78.4624: {}; 32.44 + 20log10(f) + 20log10(d) = {independent:.6}: {})",
        ok(literal),
        ok(formula)
    ));

    let spread = [(10.0, 5.0), (20.0, 15.0), (40.0, 39.0)].iter().all(|&(t, v)| spreading_cost(t).unwrap() == v);
    pass &= spread;
    notes.push(format!("spreading cost 5/15/39: {}", ok(spread)));

    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let c = CostModel {
            hop_cost: rng.random_range(0.0..5.0),
            snr_threshold_db: rng.random_range(-5.0..20.0),
            distance_coef: rng.random_range(0.0..3.0),
            alpha: rng.random_range(0.0..2.0),
            proximity_radius: rng.random_range(1.0..100.0),
        };
        let snr = rng.random_range(-40.0..60.0);
        let t = rng.random_range(0.0..80.0);
        let a_hop = rng.random_range(-5.0..5.0);
        let d = 0.5 * f64::min(t, 10.0)
            + (t - 10.0).clamp(0.0, 10.0)
            + 1.2 * (t - 20.0).clamp(0.0, 20.0)
            + 1.5 * (t - 40.0).max(0.0);
        let oracle = snr - c.snr_threshold_db - d - c.hop_cost * f64::from(u8::from(a_hop > 0.5));
        worst = worst.max((ally_reward(snr, &c, t, a_hop) - oracle).abs());

        let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..200.0));
        let q: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..200.0));
        let delta = rng.random_range(-30.0..30.0);
        let dist = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        let oracle = c.distance_coef * f64::from(u8::from(c.proximity_radius > dist)) + c.alpha * delta;
        worst = worst.max((opponent_reward(Vec3::from(p), Vec3::from(q), delta, &c) - oracle).abs());
    }
    let rewards = worst <= 1e-9;
    pass &= rewards;
    notes.push(format!("rewards on 1e4 inputs, max error {worst:.1e}: {}", ok(rewards)));

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let b = rng.random_range(1e3..3e9);
        let i = rng.random_range(-150.0..0.0);
        let n0 = rng.random_range(-180.0..-60.0);
        let nj = if rng.random_bool(0.2) { f64::NEG_INFINITY } else { rng.random_range(-200.0..0.0) };
        // powers in mW, ln(1 + x) without cancellation
        let mw = |dbm: f64| 10f64.powf(dbm / 10.0);
        let oracle = b * (mw(i) / (mw(n0) + mw(nj))).ln_1p() / std::f64::consts::LN_2;
        let got = channel_capacity(b, i, n0, nj);
        worst = worst.max((got - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
    }
    let cap = worst <= 1e-9;
    pass &= cap;
    notes.push(format!("capacity on 100 inputs, max rel error {worst:.1e}: {}", ok(cap)));

    Outcome::new(pass, notes.join("; "))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "MISMATCH"
    }
}

// ------------------------------------------------------ shared spectral tools

fn random_jam(rng: &mut impl Rng) -> JammingSpec {
    let shape = match rng.random_range(0..4) {
        0 => JamShape::SingleTone { f_j: rng.random_range(145.0..255.0), tooth_width: rng.random_range(0.05..1.0) },
        1 => JamShape::NarrowbandTargeted { f_c: rng.random_range(145.0..255.0), bandwidth: rng.random_range(0.5..40.0) },
        2 => {
            let lo = rng.random_range(140.0..245.0);
            JamShape::BroadbandBlocking { f_min: lo, f_max: rng.random_range(lo + 0.5..lo.max(200.0) + 60.0) }
        }
        _ => JamShape::CombSpectrum {
            f_0: rng.random_range(140.0..170.0),
            spacing: rng.random_range(2.0..20.0),
            teeth: rng.random_range(1..16),
            tooth_width: rng.random_range(0.1..4.0),
        },
    };
    JammingSpec::new(shape, rng.random_range(20.0..50.0)).unwrap()
}

/// Radiated intervals straight from the shape parameters, unmerged and
/// sorted by start.
fn raw_intervals(shape: &JamShape) -> Vec<(f64, f64)> {
    match *shape {
        JamShape::SingleTone { f_j, tooth_width } => vec![(f_j - tooth_width / 2.0, f_j + tooth_width / 2.0)],
        JamShape::NarrowbandTargeted { f_c, bandwidth } => vec![(f_c - bandwidth / 2.0, f_c + bandwidth / 2.0)],
        JamShape::BroadbandBlocking { f_min, f_max } => vec![(f_min, f_max)],
        JamShape::CombSpectrum { f_0, spacing, teeth, tooth_width } => (0..teeth)
            .map(|n| {
                let c = f_0 + f64::from(n) * spacing;
                (c - tooth_width / 2.0, c + tooth_width / 2.0)
            })
            .collect(),
    }
}

fn touches(intervals: &[(f64, f64)], lo: f64, hi: f64) -> bool {
    intervals.iter().any(|&(a, b)| a.max(lo) < b.min(hi))
}

// ---------------------------------------------------------------- criterion 2

fn c2_kb_soundness() -> Outcome {
    let grid = FrequencyGrid::default();
    let mut kb = KnowledgeBase::with_defaults(7);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut hops, mut spreads, mut bad) = (0, 0, Vec::new());
    for i in 0..10_000 {
        let jam = random_jam(&mut rng);
        let intervals = raw_intervals(&jam.shape);
        let here = grid.points()[rng.random_range(0..grid.points().len())];
        let ch = if rng.random_bool(0.3) { AllyChannel::spread(here) } else { AllyChannel::narrow(here) };
        let clean_exists = grid.points().iter().any(|&f| {
            let (lo, hi) = AllyChannel::narrow(f).band();
            !touches(&intervals, lo, hi)
        });
        match kb.recommend(&jam, &grid, &ch).action {
            CounterAction::Hop { target, .. } => {
                hops += 1;
                let (lo, hi) = AllyChannel::narrow(target).band();
                let on_grid = grid.points().contains(&target);
                if touches(&intervals, lo, hi) || band_overlap_fraction(&jam, &AllyChannel::narrow(target)) != 0.0 || !on_grid {
                    bad.push(format!("#{i}: hop to {target} overlaps {:?}", jam.shape));
                }
            }
            CounterAction::Spread => {
                spreads += 1;
                if clean_exists {
                    bad.push(format!("#{i}: spread although a clean channel exists for {:?}", jam.shape));
                }
            }
            other => bad.push(format!("#{i}: unexpected {other:?}")),
        }
        if rng.random_bool(0.1) {
            kb.record_jam_frequency(jam.center());
        }
    }
    let detail = format!("{hops} hops, {spreads} spreads, {} violations{}", bad.len(), first(&bad));
    Outcome::new(bad.is_empty() && hops > 0 && spreads > 0, detail)
}

fn first(v: &[String]) -> String {
    v.first().map(|s| format!(" (first: {s})")).unwrap_or_default()
}

// ---------------------------------------------------------------- criterion 3

/// Fraction of the band `[lo, hi)` whose 1 kHz cells have their midpoint
/// inside the jammer support.
fn rasterized_overlap(intervals: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    const CELL: f64 = 1e-3;
    let env_lo = intervals.iter().map(|i| i.0).fold(f64::INFINITY, f64::min);
    let env_hi = intervals.iter().map(|i| i.1).fold(f64::NEG_INFINITY, f64::max);
    let n = ((hi - lo) / CELL).ceil() as i64;
    let first = (((env_lo - lo) / CELL).floor() as i64).clamp(0, n);
    let last = (((env_hi - lo) / CELL).ceil() as i64).clamp(0, n);
    let (mut next, mut reach, mut hits) = (0usize, f64::NEG_INFINITY, 0u64);
    for k in first..last {
        let mid = lo + (k as f64 + 0.5) * CELL;
        while next < intervals.len() && intervals[next].0 <= mid {
            reach = reach.max(intervals[next].1);
            next += 1;
        }
        if reach >= mid {
            hits += 1;
        }
    }
    hits as f64 * CELL / (hi - lo)
}

fn c3_overlap_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = (0.0f64, String::new());
    let mut nonzero = 0;
    for _ in 0..10_000 {
        let jam = random_jam(&mut rng);
        let center = rng.random_range(140.0..260.0);
        let ch = match rng.random_range(0..3) {
            0 => AllyChannel::narrow(center),
            1 => AllyChannel::spread(center),
            _ => AllyChannel { center, bandwidth: rng.random_range(0.5..60.0), spread: false },
        };
        let (lo, hi) = ch.band();
        let mut intervals = raw_intervals(&jam.shape);
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let oracle = rasterized_overlap(&intervals, lo, hi);
        let got = band_overlap_fraction(&jam, &ch);
        if got > 0.0 {
            nonzero += 1;
        }
        let err = (got - oracle).abs();
        if err > worst.0 {
            worst = (err, format!("{:?} vs {ch:?}: {got} vs {oracle}", jam.shape));
        }
    }
    Outcome::new(
        worst.0 <= 0.01 && nonzero > 1000,
        format!("10000 pairs ({nonzero} overlapping), max |error| {:.2e}", worst.0),
    )
}

// ---------------------------------------------------------------- criterion 4

fn c4_detection() -> Outcome {
    let m = CostModel::default().snr_threshold_db;
    let check = |records: &[TickRecord]| -> (usize, usize, usize) {
        let mut detected = 0;
        let mut violations = 0;
        let mut blocked = 0;
        for r in records {
            match r.detect_event {
                DetectionOutcome::Detected => {
                    detected += 1;
                    let k = r.t / 5.0;
                    if (k - k.round()).abs() > 1e-9 || r.snr < m {
                        violations += 1;
                    }
                }
                DetectionOutcome::Failed => {
                    blocked += 1;
                    if r.snr >= m {
                        violations += 1;
                    }
                }
                DetectionOutcome::OffSchedule => {}
            }
        }
        (detected, blocked, violations)
    };

    let scripted = rollout(&ScenarioConfig::default(), None, None, 10_000, 404).unwrap().records;
    let (d1, b1, v1) = check(&scripted);

    let mut env = Env::new(EnvConfig::default(), 404).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut random = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let joint: Vec<f64> = (0..ALLY_ACTION_DIM + OPPONENT_ACTION_DIM).map(|_| rng.random_range(-MAX_ACTION..MAX_ACTION)).collect();
        let out = env.step_raw(&joint).unwrap();
        if out.done {
            env.reset().unwrap();
        }
        random.push(out.record);
    }
    let (d2, b2, v2) = check(&random);
    Outcome::new(
        v1 + v2 == 0 && d1 > 0 && d2 > 0,
        format!(
            "scripted run: {d1} detections, {b1} blocked; random-action run: {d2} detections, {b2} blocked; {} violations",
            v1 + v2
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn c5_overlap_trend() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for seed in 0..5 {
        let mut s = ScenarioConfig::default();
        s.agents.ally = AllyKind::Kb;
        s.agents.opponent = OpponentKind::Pursuit;
        let r = rollout(&s, None, None, 50_000, seed).unwrap().records;
        let tenth = r.len() / 10;
        let early = overlap_ratio(&r[..tenth]).unwrap();
        let late = overlap_ratio(&r[r.len() - tenth..]).unwrap();
        pass &= late <= early + 0.5;
        notes.push(format!("seed {seed}: {early:.2}% -> {late:.2}%"));
    }
    Outcome::new(pass, notes.join(", "))
}

// ---------------------------------------------------------------- criterion 6

fn c6_single_jam() -> Outcome {
    let cells = ablation_cells(&ScenarioConfig::default());
    let mut means = Vec::new();
    for kind in JamKind::ALL {
        let cell = cells.iter().find(|c| c.scenario.agents.jam_type_lock == Some(kind)).expect("single-jam cell");
        let per_seed: Vec<f64> = (0..10)
            .map(|seed| {
                let r = rollout(&cell.scenario, None, None, 10_000, seed).unwrap().records;
                mean(r.iter().map(|x| x.r_ally))
            })
            .collect();
        means.push((kind, mean(per_seed)));
    }
    let lowest = means.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    let listing: Vec<String> = means.iter().map(|(k, m)| format!("{}: {m:.2}", k.slug())).collect();
    Outcome::new(
        lowest == JamKind::BroadbandBlocking,
        format!("mean ally reward per jam type ({}); lowest is {}", listing.join(", "), lowest.slug()),
    )
}

// ---------------------------------------------------------------- criterion 7

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between `analytic` and central differences of
/// `f` over `probes` randomly chosen parameters.
fn probe_gradient(net: &mut Mlp, analytic: &[f64], f: &dyn Fn(&Mlp) -> f64, probes: usize, rng: &mut impl Rng) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let i = rng.random_range(0..net.num_params());
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = f(net);
        net.params_mut()[i] = orig - h;
        let down = f(net);
        net.params_mut()[i] = orig;
        worst = worst.max(relative_error((up - down) / (2.0 * h), analytic[i]));
    }
    worst
}

fn c7_learning() -> Outcome {
    let hidden = fpg_core::agents::MaddpgConfig::default().hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    let critic_sizes: Vec<usize> = [STATE_DIM + ALLY_ACTION_DIM + OPPONENT_ACTION_DIM].into_iter().chain(hidden.iter().copied()).chain([1]).collect();
    let actor_sizes: Vec<usize> = [STATE_DIM].into_iter().chain(hidden.iter().copied()).chain([ALLY_ACTION_DIM]).collect();
    for trial in 0..100 {
        let batch = 4;
        let states: Vec<Vec<f64>> = (0..batch).map(|_| (0..STATE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let opp: Vec<Vec<f64>> =
            (0..batch).map(|_| (0..OPPONENT_ACTION_DIM).map(|_| rng.random_range(-MAX_ACTION..MAX_ACTION)).collect()).collect();
        let mut critic = Mlp::new(&critic_sizes, OutputActivation::Linear, &mut rng);
        if trial % 2 == 0 {
            let inputs: Vec<Vec<f64>> = (0..batch)
                .map(|i| {
                    let a: Vec<f64> = (0..ALLY_ACTION_DIM).map(|_| rng.random_range(-MAX_ACTION..MAX_ACTION)).collect();
                    critic_input(&states[i], &a, &opp[i])
                })
                .collect();
            let targets: Vec<f64> = (0..batch).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, g) = critic_loss_and_grad(&critic, &inputs, &targets);
            let f = |c: &Mlp| critic_loss_and_grad(c, &inputs, &targets).0;
            worst = worst.max(probe_gradient(&mut critic, &g, &f, 60, &mut rng));
        } else {
            let mut actor = Mlp::new(&actor_sizes, OutputActivation::ScaledTanh(MAX_ACTION), &mut rng);
            let refs: Vec<&[f64]> = states.iter().map(|s| &s[..]).collect();
            let assemble = |i: usize, a: &[f64]| critic_input(&states[i], a, &opp[i]);
            let (_, g) = actor_objective_and_grad(&actor, &critic, &refs, &assemble, STATE_DIM, 1.0 / MAX_ACTION);
            // the gradient is of the negated objective
            let f = |a: &Mlp| -actor_objective_and_grad(a, &critic, &refs, &assemble, STATE_DIM, 1.0 / MAX_ACTION).0;
            worst = worst.max(probe_gradient(&mut actor, &g, &f, 60, &mut rng));
        }
    }
    let grads = worst < 1e-4;
    let mut notes = vec![format!("gradient checks (100 trials) max rel error {worst:.1e}")];

    let mut margins = 0;
    for seed in 0..3 {
        let steps = 10_000;
        let mut s = ScenarioConfig::default();
        s.world.episode_length = 1_000;
        s.agents.ally = AllyKind::Maddpg;
        s.agents.opponent = OpponentKind::Route;
        let trained = train(&s, None, steps, seed, true).unwrap().records;
        let tail = |r: &[TickRecord]| mean(r[r.len() - r.len() / 10..].iter().map(|x| x.r_ally));
        s.agents.ally = AllyKind::RandomHop;
        let baseline = rollout(&s, None, None, steps, seed).unwrap().records;
        let (t, b) = (tail(&trained), tail(&baseline));
        if t > b {
            margins += 1;
        }
        notes.push(format!("seed {seed}: trained {t:.2} vs random-hop {b:.2}"));
    }
    Outcome::new(grads && margins == 3, notes.join("; "))
}

// ---------------------------------------------------------------- criterion 8

const GOLDEN_EMPTY: &str = include_str!("fixtures/prompts/empty_history_n1.txt");
const GOLDEN_TWO: &str = include_str!("fixtures/prompts/two_entries_n10.txt");

fn c8_planner() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let mut h = PositionRewardHistory::new(20);
    let golden_empty = build_prompt(&h, Vec3::ZERO, 1).unwrap() == GOLDEN_EMPTY;
    h.push(Vec3::new(10.0, 20.0, 30.0), 1.5);
    h.push(Vec3::new(-5.126, 0.004, 99.999), -0.5);
    let golden_two = build_prompt(&h, Vec3::new(1.004, 2.0, 3.0), 10).unwrap() == GOLDEN_TWO;
    pass &= golden_empty && golden_two;
    notes.push(format!("golden prompts: {}", ok(golden_empty && golden_two)));

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut round_trip_failures = 0;
    for i in 0..1000 {
        let n = rng.random_range(1..15);
        let pts: Vec<Vec3> = (0..n)
            .map(|_| {
                let mut c = || match rng.random_range(0..3) {
                    0 => f64::from(rng.random_range(-2000..2000)),
                    1 => (rng.random_range(-2000.0..2000.0) * 100.0f64).round() / 100.0,
                    _ => rng.random_range(-1e4..1e4),
                };
                Vec3::new(c(), c(), c())
            })
            .collect();
        let reply = match i % 3 {
            0 => format_directions(&pts),
            1 => format!("Sure, here is the plan.\n{}\nGood luck.", format_directions(&pts)),
            _ => format!("Next directions: [[0, 0, 0]]\nRevised:\n{}", format_directions(&pts)),
        };
        if parse_directions(&reply).ok() != Some(pts) {
            round_trip_failures += 1;
        }
    }
    pass &= round_trip_failures == 0;
    notes.push(format!("1000 reply round-trips, {round_trip_failures} failures"));

    let faults = [
        ("timeout", MockReply::ok(format_directions(&[Vec3::new(1.0, 1.0, 1.0)])).delayed(600)),
        ("5xx", MockReply::status(503)),
        ("garbage body", MockReply::raw("<html>not json</html>")),
        ("garbage content", MockReply::ok("I would rather fly somewhere nice.")),
    ];
    for (name, reply) in faults {
        match fault_case(reply) {
            Ok(()) => notes.push(format!("{name}: heuristic fallback ok")),
            Err(e) => {
                pass = false;
                notes.push(format!("{name}: {e}"));
            }
        }
    }
    Outcome::new(pass, notes.join("; "))
}

fn planner_cfg(endpoint: String) -> PlannerConfig {
    PlannerConfig { mode: PlannerMode::Llm, endpoint, timeout: 0.25, max_retries: 2, ..PlannerConfig::default() }
}

fn fault_case(reply: MockReply) -> Result<(), String> {
    let server = MockLlmServer::start(MockFixture { replies: vec![reply] }).map_err(|e| e.to_string())?;
    let cfg = planner_cfg(server.endpoint());
    let client = HttpChatClient::new(&cfg, Some("test-key".into()));
    let mut planner = Planner::with_transport(cfg.clone(), Box::new(client), 5);
    let mut hist = PositionRewardHistory::new(cfg.history_len);
    hist.push(Vec3::new(100.0, 100.0, 50.0), 0.25);
    let (current, ally) = (Vec3::new(100.0, 100.0, 50.0), Vec3::new(600.0, 400.0, 120.0));
    let (limits, bounds) = (MotionLimits::default(), WorldBounds::default());
    let out = planner.plan(&hist, current, ally, &limits, &bounds);

    let expected_attempts = cfg.max_retries + 1;
    if out.source != PlanSource::Heuristic {
        return Err(format!("source {:?}", out.source));
    }
    if out.attempts != expected_attempts {
        return Err(format!("{} attempts, expected {expected_attempts}", out.attempts));
    }
    let mut offline = Planner::offline(cfg.clone(), 5);
    let reference = offline.plan(&hist, current, ally, &limits, &bounds);
    let direct = plan_heuristic(&hist, current, ally, cfg.n, &limits, &bounds, &mut ChaCha8Rng::seed_from_u64(5));
    if out.path != reference.path || out.path != direct {
        return Err("fallback path differs from the heuristic".into());
    }
    // timed-out requests may still be queued at the server
    let deadline = Instant::now() + Duration::from_secs(5);
    while server.request_count() < expected_attempts as usize && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(20));
    }
    let served = server.request_count();
    if served != expected_attempts as usize {
        return Err(format!("server saw {served} requests"));
    }
    if planner.stats().fallbacks != 1 {
        return Err("fallback not counted".into());
    }
    Ok(())
}

// ---------------------------------------------------------------- criterion 9

fn c9_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = ScenarioConfig::default();
    s.planner.mode = PlannerMode::Heuristic;
    s.world.episode_length = 500;
    let steps = Some(3_000);
    let factory = PlannerFactory::default();
    let a = run_in(&s, &factory, steps, None, &tmp.path().join("a")).unwrap();
    let b = run_in(&s, &factory, steps, None, &tmp.path().join("b")).unwrap();
    let log_a = fs::read(a.dir.join("log.jsonl")).unwrap();
    let identical = log_a == fs::read(b.dir.join("log.jsonl")).unwrap();

    let out = tmp.path().join("replay");
    let tables = replay(&a.dir.join("log.jsonl"), s.costs.snr_threshold_db, &out).unwrap();
    let same_tables = tables == a.tables
        && ["episodes.csv", "stages.csv", "rewards.csv"]
            .iter()
            .all(|f| fs::read(a.dir.join(f)).unwrap() == fs::read(out.join(f)).unwrap());
    let planned = a.planner.map(|p| p.calls).unwrap_or(0);
    Outcome::new(
        identical && same_tables && planned > 0,
        format!(
            "{} log bytes, logs identical: {}, replayed tables identical: {}, {planned} planner calls",
            log_a.len(),
            ok(identical),
            ok(same_tables)
        ),
    )
}
