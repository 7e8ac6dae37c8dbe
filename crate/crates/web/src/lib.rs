//! Browser bindings: check a word against a formula, compile a formula, and
//! run a short simulation of the shipped scenario. Every entry point returns
//! a JSON string; errors become exceptions on the JS side.

use serde_json::json;
use twtl_fleet::allocation::SolverOptions;
use twtl_fleet::automata::{compile_dfa_with, CompileOptions};
use twtl_fleet::harness::RunConfig;
use twtl_fleet::orchestrator::{BoundMode, Fleet};
use twtl_fleet::scenario::Scenario;
use twtl_fleet::twtl::{check_satisfaction, parse_with_alphabet, time_bound, Symbol};
use wasm_bindgen::prelude::*;

/// Longest simulation the page will run; each episode replans the whole fleet.
pub const MAX_EPISODES: usize = 400;

/// `word` is a JSON array of steps, each listing the propositions that hold.
pub fn check_json(formula: &str, word: &str) -> Result<String, String> {
    let (f, mut ap) = parse_with_alphabet(formula).map_err(|e| e.to_string())?;
    let steps: Vec<Vec<String>> = serde_json::from_str(word).map_err(|e| format!("word: {e}"))?;
    let symbols: Vec<Symbol> = steps
        .iter()
        .map(|step| {
            step.iter()
                .fold(Symbol::default(), |sym, name| sym.with(ap.insert(name.clone())))
        })
        .collect();
    let dfa = compile_dfa_with(&f, &CompileOptions::default()).map_err(|e| e.to_string())?;
    let states: Vec<usize> = dfa.run(&symbols).into_iter().map(|q| q as usize).collect();
    Ok(json!({
        "formula": f.display(&ap).to_string(),
        "time_bound": time_bound(&f),
        "satisfied": check_satisfaction(&f, &symbols),
        "dfa_accepts": dfa.accepts(&symbols),
        "states": states,
    })
    .to_string())
}

pub fn compile_json(formula: &str, minimize: bool) -> Result<String, String> {
    let (f, ap) = parse_with_alphabet(formula).map_err(|e| e.to_string())?;
    let options = CompileOptions {
        minimize,
        ..CompileOptions::default()
    };
    let dfa = compile_dfa_with(&f, &options).map_err(|e| e.to_string())?;
    serde_json::to_string(&dfa.to_json(&ap)).map_err(|e| e.to_string())
}

/// Runs the shipped scenario for `episodes` episodes and summarises the run.
pub fn simulate_json(episodes: usize, seed: u64, adaptive: bool) -> Result<String, String> {
    if episodes == 0 || episodes > MAX_EPISODES {
        return Err(format!("episodes must lie in 1..={MAX_EPISODES}"));
    }
    let scn = Scenario::default_scenario();
    let cfg = RunConfig {
        episodes,
        iterations: 1,
        seed,
        mode: if adaptive { BoundMode::Adaptive } else { BoundMode::StaticOnly },
        record_bounds: false,
    };
    let mut params = cfg.params(&scn, 0);
    // Fewer restarts keep the page responsive.
    params.solver = SolverOptions {
        starts: 4,
        ..params.solver
    };
    let mut fleet = Fleet::new(&scn.grid, &scn.tasks, &params).map_err(|e| e.to_string())?;
    let log = fleet.run(&params).map_err(|e| e.to_string())?;
    let summary = log.summary();
    Ok(json!({
        "tasks": summary.tasks,
        "thresholds": summary.thresholds,
        "rates": summary.satisfaction_rates,
        "total_reward": summary.total_reward,
        "shares": summary.assignment_shares,
        "cumulative_reward": log.cumulative_reward(),
        "static_fallbacks": summary.static_fallbacks,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn check(formula: &str, word: &str) -> Result<String, JsValue> {
    check_json(formula, word).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compile(formula: &str, minimize: bool) -> Result<String, JsValue> {
    compile_json(formula, minimize).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(episodes: usize, seed: u32, adaptive: bool) -> Result<String, JsValue> {
    simulate_json(episodes, u64::from(seed), adaptive).map_err(|e| JsValue::from_str(&e))
}
