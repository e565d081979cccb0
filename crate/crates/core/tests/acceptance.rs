//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines always print.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use itr_core::assembler::{assemble_prompt, full_selection};
use itr_core::corpus::{Corpus, InstructionFragment, SafetyOverlay, ToolSpec};
use itr_core::costmodel::{
    consistency_report, episode_totals, max_loops_table, p_correct_itr, p_correct_mono, recall_crossover,
    CostParams, PromptMode, DEFAULT_HISTORY_GROWTH, DEFAULT_WINDOW, ITR_STATIC_TOKENS,
};
use itr_core::engine::{Engine, EngineConfig, StepQuery};
use itr_core::gate::{sufficiency_gate, DiscoveryPolicy, FixedModel, GateConfig, GateDecision, ScriptedModel};
use itr_core::index::{build_indices, DocKind, HashingEmbedder, DEFAULT_DIM};
use itr_core::selector::{greedy_select, knapsack_oracle, SelectionCandidate, SelectionConfig};
use itr_core::sim::{
    derive_seed, make_task, mean_ci, paired_ci, run_benchmark, synthetic_corpus, BenchmarkOutput, CorpusSpec,
    MeanCi, PolicyKind, Scenario,
};
use itr_core::tokenize::{QuarterCharCounter, TokenCounter};

const Z95: f64 = 1.959_963_984_540_054;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Half-up decimal rendering of `num/den` in exact integer arithmetic.
fn decimal(num: i128, den: i128, places: u32) -> String {
    assert!(num >= 0 && den > 0);
    let scale = 10i128.pow(places);
    let scaled = (2 * num * scale + den) / (2 * den);
    if places == 0 {
        return scaled.to_string();
    }
    format!("{}.{:0width$}", scaled / scale, scaled % scale, width = places as usize)
}

fn c1_arithmetic() -> Outcome {
    let checks = consistency_report();
    let find = |name: &str| {
        checks
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| format!("missing check {name}"))
    };
    // (1 - 1500/30000), (82-62)/62, (1 - 0.86/2.90), 390/105
    let expected = [
        ("token_reduction_pct", decimal(100 * (30_000 - 1_500), 30_000, 1), "95.0"),
        ("tool_accuracy_relative_gain_pct", decimal(100 * (82 - 62), 62, 1), "32.3"),
        ("cost_reduction_pct", decimal(100 * (290 - 86), 290, 1), "70.3"),
        ("compounding_l10_ratio", decimal(390, 105, 2), "3.71"),
    ];
    for (name, oracle, paper) in &expected {
        let c = find(name)?;
        check(oracle == paper, || format!("oracle for {name} gives {oracle}, paper {paper}"))?;
        check(&c.computed == oracle && c.pass, || {
            format!("{name}: computed {} vs {oracle} (pass={})", c.computed, c.pass)
        })?;
    }
    let p = CostParams::reference();
    let mono = episode_totals(10, &p, PromptMode::Mono).total;
    let itr = episode_totals(10, &p, PromptMode::Itr).total;
    let summed = |s: u64| (0..10u64).map(|k| s + 2_000 * k).sum::<u64>();
    check(summed(30_000) == 390_000 && mono == 390_000, || format!("mono L=10 {mono}"))?;
    check(summed(1_500) == 105_000 && itr == 105_000, || format!("itr L=10 {itr}"))?;
    check(mono - itr == 285_000, || format!("savings {}", mono - itr))?;
    Ok("95.0 / 32.3 / 70.3 / 390k vs 105k, saves 285k, 3.71x".into())
}

fn c2_max_loops() -> Outcome {
    let rows = max_loops_table(DEFAULT_WINDOW, ITR_STATIC_TOKENS, DEFAULT_HISTORY_GROWTH);
    let paper = [
        (40_000u64, 480u64, 499u64),
        (110_000, 445, 499),
        (220_000, 390, 499),
        (400_000, 300, 499),
        (620_000, 190, 499),
    ];
    check(rows.len() == 5, || format!("{} rows", rows.len()))?;
    for (r, (s, mono, itr)) in rows.iter().zip(paper) {
        let oracle_mono = (1_000_000 - s) / 2_000;
        let oracle_itr = (1_000_000 - 1_500) / 2_000;
        check(oracle_mono == mono && oracle_itr == itr, || format!("oracle disagrees with paper at {s}"))?;
        check(
            (r.static_tokens, r.mono_max_loops, r.itr_max_loops) == (s, mono, itr),
            || format!("row {}: {}/{}/{}", r.corpus, r.static_tokens, r.mono_max_loops, r.itr_max_loops),
        )?;
    }
    Ok("480/445/390/300/190 vs 499".into())
}

fn c3_compounding() -> Outcome {
    let b0 = [30.0, 62.0, 96.0, 132.0, 170.0, 210.0, 252.0, 296.0, 342.0, 390.0, 440.0, 492.0, 546.0, 602.0, 660.0];
    let itr = [1.5, 5.0, 10.5, 18.0, 27.5, 39.0, 52.5, 68.0, 85.5, 105.0, 126.5, 150.0, 175.5, 203.0, 232.5];
    let p = CostParams {
        u1: 0,
        h: 2_000,
        ..CostParams::reference()
    };
    check(
        p.static_tokens(PromptMode::Mono) == 30_000 && p.static_tokens(PromptMode::Itr) == 1_500,
        || "reference statics are not 30k | 1.5k".into(),
    )?;
    for l in 1..=15u64 {
        let m = episode_totals(l, &p, PromptMode::Mono);
        let i = episode_totals(l, &p, PromptMode::Itr);
        let k = (l - 1) as usize;
        check(m.total as f64 == b0[k] * 1000.0 && i.total as f64 == itr[k] * 1000.0, || {
            format!("L={l}: {} / {} vs ({}, {})", m.total, i.total, b0[k], itr[k])
        })?;
        check(m.per_step[k] - i.per_step[k] == 28_500, || format!("step {l} savings {}", m.per_step[k] - i.per_step[k]))?;
        check(m.total - i.total == 28_500 * l, || format!("L={l} cumulative savings"))?;
    }
    Ok("L=1..15 matches both curves; 28.5k saved per step".into())
}

fn c4_hazard() -> Outcome {
    let grid = [(0.5, 0.01), (1.0, 0.1), (3.0, 0.1), (3.0, 0.5), (10.0, 2.0), (0.2, 5.0)];
    let mut crossings = 0usize;
    for &(alpha, beta) in &grid {
        for n in 1..500u64 {
            let (a, b) = (p_correct_mono(n, alpha, beta), p_correct_mono(n + 1, alpha, beta));
            check(b < a, || format!("not decreasing at N={n} (alpha {alpha}, beta {beta})"))?;
        }
        for n in 2..=500u64 {
            let mono = p_correct_mono(n, alpha, beta);
            for m in 1..n {
                check(p_correct_itr(m, 1.0, alpha, beta) > mono, || {
                    format!("perfect recall loses at m={m}, N={n}")
                })?;
            }
        }
    }
    // Locate r* by bisection on p_itr(m, r) − p_mono(N) and probe below it.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..2_000 {
        let alpha = rng.random_range(0.1..10.0);
        let beta = rng.random_range(0.001..3.0);
        let n = rng.random_range(2..=500u64);
        let m = rng.random_range(1..n);
        let f = |r: f64| p_correct_itr(m, r, alpha, beta) - p_correct_mono(n, alpha, beta);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        check(f(lo) < 0.0 && f(hi) > 0.0, || format!("no sign change m={m} N={n}"))?;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r_star = 0.5 * (lo + hi);
        check((r_star - recall_crossover(m, n, alpha, beta)).abs() < 1e-9, || {
            format!("crossover {r_star} vs closed form {}", recall_crossover(m, n, alpha, beta))
        })?;
        for k in 0..20 {
            let r = lo * k as f64 / 20.0;
            check(f(r) < 0.0, || format!("retrieval not worse at r={r} < r*={r_star}"))?;
        }
        crossings += 1;
    }
    Ok(format!("N=1..500 over {} (alpha, beta); {crossings} crossovers located", grid.len()))
}

struct Instance {
    a: Vec<SelectionCandidate>,
    b: Vec<SelectionCandidate>,
    cfg: SelectionConfig,
    pinned: BTreeSet<String>,
}

fn instance(rng: &mut ChaCha8Rng, equal_cost: Option<u64>) -> Instance {
    let na = rng.random_range(0..=6usize);
    let nb = rng.random_range(0..=6usize);
    let mut pool = |n: usize, kind: DocKind, p: &str| -> Vec<SelectionCandidate> {
        (0..n)
            .map(|i| {
                let cost = equal_cost.unwrap_or_else(|| rng.random_range(1..=300));
                SelectionCandidate::new(format!("{p}{i}"), kind, rng.random_range(0.0..1.0), cost)
            })
            .collect()
    };
    let a = pool(na, DocKind::Instruction, "a");
    let b = pool(nb, DocKind::Tool, "b");
    let pinned = b
        .iter()
        .chain(&a)
        .filter(|_| rng.random_bool(0.1))
        .map(|c| c.id.clone())
        .collect();
    let cfg = SelectionConfig {
        budget: rng.random_range(0..=1_200),
        max_instructions: rng.random_range(0..=4),
        max_tools: rng.random_range(0..=3),
        recall_first: rng.random_bool(0.5),
    };
    Instance { a, b, cfg, pinned }
}

/// Best objective over all feasible subsets, or None when no subset holds
/// every pinned item.
fn enumerate(inst: &Instance) -> Option<f64> {
    let items: Vec<&SelectionCandidate> = inst.a.iter().chain(&inst.b).collect();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << items.len()) {
        let chosen: Vec<&SelectionCandidate> =
            items.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, c)| *c).collect();
        let cost: u64 = chosen.iter().map(|c| c.token_cost).sum();
        let na = chosen.iter().filter(|c| c.kind == DocKind::Instruction).count();
        let nb = chosen.len() - na;
        let pins_ok = inst.pinned.iter().all(|p| chosen.iter().any(|c| &c.id == p));
        if cost <= inst.cfg.budget && na <= inst.cfg.max_instructions && nb <= inst.cfg.max_tools && pins_ok {
            let obj: f64 = chosen.iter().map(|c| c.gain).sum();
            best = Some(best.map_or(obj, |b: f64| b.max(obj)));
        }
    }
    best
}

fn c5_selector() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut solved, mut strict_gaps, mut equal_cases) = (0, 0, 0);
    for round in 0..2_000 {
        let equal = if round >= 1_000 { Some(rng.random_range(1..=200)) } else { None };
        let inst = instance(&mut rng, equal);
        let greedy = greedy_select(&inst.a, &inst.b, &inst.cfg, &inst.pinned);
        let oracle = knapsack_oracle(&inst.a, &inst.b, &inst.cfg, &inst.pinned);
        let brute = enumerate(&inst);
        let (g, o) = match (greedy, oracle, brute) {
            (Ok(g), Ok(o), Some(_)) => (g, o),
            (Err(_), Err(_), None) => continue,
            (g, o, b) => {
                return Err(format!(
                    "round {round}: feasibility disagrees (greedy ok={}, oracle ok={}, brute={b:?})",
                    g.is_ok(),
                    o.is_ok()
                ))
            }
        };
        let best = brute.unwrap();
        let cost: u64 = inst
            .a
            .iter()
            .chain(&inst.b)
            .filter(|c| g.contains(&c.id))
            .map(|c| c.token_cost)
            .sum();
        check(cost <= inst.cfg.budget && cost == g.spent_tokens, || format!("round {round}: spent {cost}"))?;
        check(
            g.instructions.len() <= inst.cfg.max_instructions && g.tools.len() <= inst.cfg.max_tools,
            || format!("round {round}: caps"),
        )?;
        check(inst.pinned.iter().all(|p| g.contains(p)), || format!("round {round}: pin dropped"))?;
        check((o.objective - best).abs() < 1e-9, || format!("round {round}: oracle {} vs {best}", o.objective))?;
        check(g.objective <= best + 1e-9, || format!("round {round}: greedy {} beats {best}", g.objective))?;
        if equal.is_some() {
            check((g.objective - best).abs() < 1e-9, || {
                format!("round {round}: equal costs but greedy {} < {best}", g.objective)
            })?;
            equal_cases += 1;
        } else if g.objective < best - 1e-9 {
            strict_gaps += 1;
        }
        solved += 1;
    }
    check(solved >= 1_000, || format!("only {solved} feasible instances"))?;
    Ok(format!(
        "{solved} feasible instances; greedy below optimum on {strict_gaps}, optimal on all {equal_cases} equal-cost"
    ))
}

fn c6_footprint() -> Outcome {
    let counter = QuarterCharCounter;
    let synth = synthetic_corpus(&CorpusSpec {
        tools: 40,
        total_tokens: Some(30_000),
        ..Default::default()
    });
    let corpus = Arc::new(synth.corpus.clone());
    let full = corpus.total_instruction_tokens() + corpus.total_tool_tokens();
    check((29_700..=30_300).contains(&full), || format!("corpus renders to {full} tokens"))?;
    let overlay = corpus.safety_overlay.as_ref().ok_or("no overlay")?;
    let b0 = assemble_prompt(overlay, &full_selection(&corpus), &corpus, &corpus.routing_note, &counter)
        .map_err(|e| e.to_string())?
        .total_tokens;
    let config = EngineConfig::default();
    check(config.selection.budget == 1_500, || "default budget is not 1500".into())?;
    let bound = 1_500 + overlay.token_cost + counter.count(&corpus.routing_note);
    check(bound <= 1_700, || format!("budget + overlay + note = {bound}"))?;
    let index = Arc::new(build_indices(&corpus, Arc::new(HashingEmbedder::default()), DEFAULT_DIM).map_err(|e| e.to_string())?);
    let engine = Engine::new(corpus, index, config);
    let scenario = Scenario::default();
    let mut worst = 0;
    for e in 0..40 {
        let task = make_task(&scenario, &synth, e);
        let mut model = FixedModel { confidence: 0.9 };
        let r = engine
            .step(&StepQuery::new(task.queries[0].clone()), &mut model, "footprint")
            .map_err(|e| e.to_string())?;
        worst = worst.max(r.prompt_tokens[0]);
    }
    check(worst <= bound, || format!("ITR prompt {worst} exceeds {bound}"))?;
    let reduction = 1.0 - worst as f64 / b0 as f64;
    check(reduction >= 0.94, || format!("reduction {reduction:.4}"))?;
    Ok(format!(
        "corpus {full} tok; B0 prompt {b0}; worst ITR prompt {worst} <= {bound}; reduction {:.1}%",
        100.0 * reduction
    ))
}

fn standard_error(ci: &MeanCi) -> f64 {
    (ci.high - ci.low) / (2.0 * Z95)
}

fn per_episode(out: &BenchmarkOutput, policy: PolicyKind, n: usize, f: impl Fn(&itr_core::sim::EpisodeTrace) -> f64) -> Vec<f64> {
    out.traces_for(policy, n).into_iter().map(f).collect()
}

fn c7_orderings() -> Outcome {
    let sizes = [8usize, 40, 120];
    let scenario = Scenario {
        name: "orderings".into(),
        episodes: 1_000,
        catalog_sizes: sizes.to_vec(),
        ..Default::default()
    };
    let out = run_benchmark(&scenario).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();

    // (a) ITR beats B0 and the gap widens with N.
    let mut gaps = Vec::new();
    for &n in &sizes {
        let itr = per_episode(&out, PolicyKind::Itr, n, |t| 100.0 * t.tools_correct());
        let b0 = per_episode(&out, PolicyKind::B0Monolithic, n, |t| 100.0 * t.tools_correct());
        check(itr.len() == 1_000 && b0.len() == 1_000, || "missing episodes".into())?;
        let d = paired_ci(&itr, &b0);
        check(d.low > 0.0, || format!("(a) N={n}: ITR−B0 {:.1} [{:.1}, {:.1}]", d.mean, d.low, d.high))?;
        gaps.push(d);
    }
    for w in 0..sizes.len() - 1 {
        let (g0, g1) = (&gaps[w], &gaps[w + 1]);
        let se = (standard_error(g0).powi(2) + standard_error(g1).powi(2)).sqrt();
        let widen = g1.mean - g0.mean;
        check(widen - Z95 * se > 0.0, || {
            format!("(a) gap does not widen {}→{}: {widen:.1} ± {:.1}", sizes[w], sizes[w + 1], Z95 * se)
        })?;
    }
    notes.push(format!(
        "(a) gap {:.1}/{:.1}/{:.1} pp",
        gaps[0].mean, gaps[1].mean, gaps[2].mean
    ));

    // (b) Discovery fallback lowers the hidden-tool miss rate at K_B = 1.
    let mut narrow = Scenario {
        name: "k_b1".into(),
        policies: vec![PolicyKind::Itr],
        ..scenario.clone()
    };
    narrow.engine.selection.max_tools = 1;
    let with = run_benchmark(&narrow).map_err(|e| e.to_string())?;
    narrow.fallback = false;
    let without = run_benchmark(&narrow).map_err(|e| e.to_string())?;
    let mut misses = Vec::new();
    for &n in &sizes {
        let a = per_episode(&with, PolicyKind::Itr, n, |t| 100.0 * t.hidden_tool_miss as u8 as f64);
        let b = per_episode(&without, PolicyKind::Itr, n, |t| 100.0 * t.hidden_tool_miss as u8 as f64);
        let d = paired_ci(&a, &b);
        check(d.high < 0.0, || format!("(b) N={n}: miss with−without {:.1} [{:.1}, {:.1}]", d.mean, d.low, d.high))?;
        misses.push(format!("{:.1}→{:.1}", mean_ci(&b).mean, mean_ci(&a).mean));
    }
    notes.push(format!("(b) miss {}", misses.join(", ")));

    // (c) B0 static context is constant across steps; ITR's is capped by the
    // budget whatever the catalog size.
    let synth_overlay = itr_core::sim::synthetic_overlay().token_cost;
    let note = QuarterCharCounter.count(itr_core::corpus::DEFAULT_ROUTING_NOTE);
    let cap = scenario.engine.selection.budget + synth_overlay + note;
    let mut b0_static = Vec::new();
    for &n in &sizes {
        for t in out.traces_for(PolicyKind::B0Monolithic, n) {
            let s0 = t.steps[0].static_tokens;
            for s in &t.steps {
                let history = itr_core::costmodel::history_at(s.step as u64, 0, scenario.history_growth);
                check(s.static_tokens == s0 && s.ctx_tokens == s0 + history, || {
                    format!("(c) B0 step {} of {} is not static + history", s.step, t.task)
                })?;
            }
        }
        for t in out.traces_for(PolicyKind::Itr, n) {
            for s in &t.steps {
                check(s.static_tokens <= cap, || format!("(c) ITR static {} > {cap} at N={n}", s.static_tokens))?;
            }
        }
        let b0 = per_episode(&out, PolicyKind::B0Monolithic, n, |t| t.steps[0].static_tokens as f64);
        let itr = per_episode(&out, PolicyKind::Itr, n, |t| {
            t.steps.iter().map(|s| s.static_tokens as f64).sum::<f64>() / t.steps.len() as f64
        });
        let d = paired_ci(&b0, &itr);
        check(d.low > 0.0, || format!("(c) N={n}: B0−ITR static {:.0} [{:.0}, {:.0}]", d.mean, d.low, d.high))?;
        b0_static.push((mean_ci(&b0).mean, mean_ci(&itr)));
    }
    check(b0_static.windows(2).all(|w| w[1].0 > w[0].0), || "(c) B0 static does not grow with N".into())?;
    notes.push(format!(
        "(c) B0 static {:.0}/{:.0}/{:.0}, ITR static {:.0}/{:.0}/{:.0} (cap {cap})",
        b0_static[0].0, b0_static[1].0, b0_static[2].0, b0_static[0].1.mean, b0_static[1].1.mean, b0_static[2].1.mean
    ));
    Ok(notes.join("; "))
}

fn c8_determinism() -> Outcome {
    let scenario = Scenario {
        name: "replay".into(),
        episodes: 150,
        catalog_sizes: vec![8, 40],
        seed: derive_seed(&[8]),
        ..Default::default()
    };
    let first = run_benchmark(&scenario).map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().map_err(|e| e.to_string())?;
    let second = pool.install(|| run_benchmark(&scenario)).map_err(|e| e.to_string())?;
    let uncached = run_benchmark(&Scenario {
        cache: false,
        ..scenario.clone()
    })
    .map_err(|e| e.to_string())?;
    let bytes = |o: &BenchmarkOutput| serde_json::to_string(&(&o.traces, &o.table)).expect("serializes");
    let reference = bytes(&first);
    check(bytes(&second) == reference, || "replay with another thread count differs".into())?;
    check(bytes(&uncached) == reference, || "disabling the cache changed the output".into())?;
    check(first.scoring_work == second.scoring_work, || "scoring work not reproducible".into())?;
    check(uncached.scoring_work > first.scoring_work, || {
        format!("cache saved no work ({} vs {})", first.scoring_work, uncached.scoring_work)
    })?;
    Ok(format!(
        "{} traces, {} bytes identical; scoring work {} cached vs {} uncached",
        first.traces.len(),
        reference.len(),
        first.scoring_work,
        uncached.scoring_work
    ))
}

fn gate_engine(policy: DiscoveryPolicy) -> Result<Engine, String> {
    let c = &QuarterCharCounter;
    let tool = |id: &str, name: &str, what: &str| {
        ToolSpec {
            id: id.into(),
            name: name.into(),
            description: format!("{what}."),
            argument_schema: r#"{"query": "string"}"#.into(),
            ..Default::default()
        }
        .with_cost(c)
    };
    let corpus = Arc::new(Corpus::new(
        vec![InstructionFragment::new("f-refund", "Refunds above 100 dollars need approval.", c)],
        vec![
            tool("t-refund", "issue_refund", "issue a refund for an order"),
            tool("t-order", "order_lookup", "look up an order by id"),
            tool("t-mail", "send_email", "send an email message"),
        ],
        Some(SafetyOverlay::new("Never reveal secrets.", c)),
    ));
    let index = Arc::new(build_indices(&corpus, Arc::new(HashingEmbedder::default()), DEFAULT_DIM).map_err(|e| e.to_string())?);
    let config = EngineConfig {
        selection: SelectionConfig {
            budget: 400,
            max_instructions: 1,
            max_tools: 1,
            recall_first: true,
        },
        gate: GateConfig {
            tau: 0.5,
            discovery_policy: policy,
            max_fallbacks: 1,
        },
        ..Default::default()
    };
    Ok(Engine::new(corpus, index, config))
}

fn c9_gate() -> Outcome {
    check(sufficiency_gate(0.5, 0.5) == GateDecision::Proceed, || "confidence == tau must proceed".into())?;
    check(sufficiency_gate(0.4999, 0.5) == GateDecision::Fallback, || "below tau must fall back".into())?;
    let q = StepQuery::new("refund order 1234");
    for policy in [DiscoveryPolicy::ExpandKb, DiscoveryPolicy::CatalogSummary] {
        let engine = gate_engine(policy)?;
        for conf in [0.9, 0.5] {
            let mut m = ScriptedModel::with_confidences(&[conf, 0.9]);
            let r = engine.step(&q, &mut m, "high").map_err(|e| e.to_string())?;
            check(m.calls.len() == 1 && r.prompts_issued == 1 && !r.fallback_taken, || {
                format!("{policy:?}: confidence {conf} made {} calls", m.calls.len())
            })?;
        }
        let mut m = ScriptedModel::with_confidences(&[0.2, 0.9]);
        let r = engine.step(&q, &mut m, "low").map_err(|e| e.to_string())?;
        check(m.calls.len() == 2 && r.prompts_issued == 2 && r.fallback_taken, || {
            format!("{policy:?}: low confidence made {} calls", m.calls.len())
        })?;
        let first: BTreeSet<&String> = m.calls[0].iter().collect();
        let second: BTreeSet<&String> = m.calls[1].iter().collect();
        check(first.is_subset(&second), || format!("{policy:?}: second exposure drops tools"))?;
        if policy == DiscoveryPolicy::ExpandKb {
            check(second.len() > first.len(), || "expand_KB exposed no new tool".into())?;
        } else {
            check(r.catalog_summary, || "catalog summary not shown".into())?;
        }
    }
    Ok("tau boundary; 1 call at/above tau, 2 calls below with superset exposure, both discovery policies".into())
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 arithmetic identities", c1_arithmetic, Duration::from_secs(1)),
        ("2 max-loops table", c2_max_loops, Duration::from_secs(1)),
        ("3 compounding series", c3_compounding, Duration::from_secs(1)),
        ("4 hazard properties", c4_hazard, Duration::from_secs(5)),
        ("5 selector vs oracle", c5_selector, Duration::from_secs(30)),
        ("6 end-to-end token footprint", c6_footprint, Duration::from_secs(10)),
        ("7 simulation orderings", c7_orderings, Duration::from_secs(300)),
        ("8 determinism and cache transparency", c8_determinism, Duration::from_secs(60)),
        ("9 gate conformance", c9_gate, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > limit => Err(format!("{msg}; took {elapsed:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS  criterion {name} ({elapsed:.2?}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  criterion {name} ({elapsed:.2?}): {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
