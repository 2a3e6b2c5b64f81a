//! Subcommand bodies. Each returns a machine-readable value plus optional
//! CSV and human-readable renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use qskat_core::encoding::{
    deal_count, full_deck, full_spec, initial_state, toy_spec, Constraint, Deal, DealSpec, Holder,
};
use qskat_core::gates::{EvolutionMode, GameCircuit};
use qskat_core::oracle::{showcase_scenario, solve_deal, Advisor, PlayState, Scenario};
use qskat_core::qsim::measure_histogram_over;
use qskat_core::scoring::{
    break_even, count_error_bound, default_choices, payoff_csv, payoff_curve, quantum_count, PayoffParams,
};
use qskat_core::{BasisIndex, CardLayout, GameType, Suit};

use crate::session::{Session, SessionMode, SessionView};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Engine(String),
}

fn engine<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Engine(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug)]
pub struct Output {
    pub json: Value,
    pub csv: Option<String>,
    pub pretty: String,
}

impl Output {
    pub fn render(&self, format: Format, pretty: bool) -> Result<String, CliError> {
        if pretty {
            return Ok(self.pretty.clone());
        }
        match format {
            Format::Json => Ok(serde_json::to_string_pretty(&self.json)? + "\n"),
            Format::Csv => self
                .csv
                .clone()
                .ok_or_else(|| CliError::Usage("this command has no CSV output".into())),
        }
    }
}

pub const TOY_STAGES: [&str; 5] = ["initial", "a-played", "b-played", "trick1", "final"];

pub fn toy(shots: u64, seed: u64, stage: &str, mode: EvolutionMode) -> Result<Output, CliError> {
    let spec = toy_spec();
    let layout = CardLayout::for_spec(&spec).map_err(engine)?;
    let circuit = GameCircuit::new(layout.clone(), mode);
    let run = circuit
        .run_game(&initial_state(&spec, &layout).map_err(engine)?, None)
        .map_err(engine)?;
    let state = match stage {
        "initial" => &run.stages[0].state,
        "a-played" => &run.stages[1].state,
        "b-played" => &run.stages[2].state,
        "final" => run.final_state(),
        other => run
            .stage(other)
            .ok_or_else(|| CliError::Usage(format!("unknown stage {other:?}; try one of {TOY_STAGES:?}")))?,
    };
    let probs = state.probabilities_prefix(layout.visible_width);
    let hist = measure_histogram_over(state, &layout.visible_qubits(), shots, seed).map_err(engine)?;
    let amplitudes: Vec<Value> = state
        .iter()
        .map(|(k, a)| json!({"label": k.label(layout.width), "re": a.re, "im": a.im}))
        .collect();
    let marginal: BTreeMap<String, f64> = probs.iter().map(|(k, p)| (k.label(layout.visible_width), *p)).collect();
    let mut pretty = format!("stage {stage}: {} visible configurations\n", probs.len());
    for (label, p) in &marginal {
        let n = hist.counts.get(label).copied().unwrap_or(0);
        let _ = writeln!(pretty, "{label}  {p:.6}  {n:>6}");
    }
    Ok(Output {
        json: json!({
            "stage": stage,
            "mode": mode,
            "support": probs.len(),
            "width": layout.width,
            "visible_width": layout.visible_width,
            "probabilities": marginal,
            "amplitudes": amplitudes,
            "histogram": hist,
        }),
        csv: Some(hist.to_csv()),
        pretty,
    })
}

fn reduced_spec(x: usize) -> DealSpec {
    DealSpec::new(full_deck()[..3 * x + 2].to_vec(), 3, x, 2, GameType::Suit(Suit::Spades))
}

fn known_hand_spec() -> DealSpec {
    let mut spec = full_spec(GameType::Suit(Suit::Spades));
    for card in spec.deck.clone().into_iter().take(10) {
        spec = spec.with_constraint(Constraint::Fixed {
            card,
            holder: Holder::Player(0),
        });
    }
    spec
}

pub fn deals(spec: Option<DealSpec>) -> Result<Output, CliError> {
    let rows: Vec<(String, DealSpec)> = match spec {
        Some(s) => vec![("spec".into(), s)],
        None => {
            let mut rows = vec![
                ("full".to_string(), full_spec(GameType::Suit(Suit::Spades))),
                ("known-hand".to_string(), known_hand_spec()),
                ("toy".to_string(), toy_spec()),
            ];
            rows.extend((3..=10).map(|x| (format!("reduced-{x}"), reduced_spec(x))));
            rows
        }
    };
    let mut table = Vec::new();
    for (name, spec) in rows {
        let n = deal_count(&spec).map_err(engine)?;
        table.push((name, n.to_string()));
    }
    let mut csv = String::from("name,deals\n");
    let mut pretty = String::new();
    for (name, n) in &table {
        let _ = writeln!(csv, "{name},{n}");
        let _ = writeln!(pretty, "{name:<12} {n:>20}");
    }
    let json: Vec<Value> = table
        .iter()
        .map(|(name, n)| json!({"name": name, "deals": n}))
        .collect();
    Ok(Output {
        json: Value::Array(json),
        csv: Some(csv),
        pretty,
    })
}

fn quality_table(view: &SessionView) -> String {
    let mut out = String::from("card   Q    deals  p_win   random\n");
    for q in &view.report.qualities {
        let mark = if view.report.recommended.as_deref() == Some(q.card.as_str()) {
            " *"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{:<5} {:>3} {:>6}  {:.4}  {:.4}{mark}",
            q.card, q.q_bar, q.deals_total, q.p_win, q.random_play_p_win
        );
    }
    out
}

fn qualities_csv(view: &SessionView) -> String {
    let mut csv = String::from("card,q_bar,deals_total,p_win,random_play_p_win\n");
    for q in &view.report.qualities {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            q.card, q.q_bar, q.deals_total, q.p_win, q.random_play_p_win
        );
    }
    csv
}

pub fn showcase() -> Result<Output, CliError> {
    let advisor = Advisor::new(showcase_scenario()).map_err(engine)?;
    let session = Session::new(showcase_scenario(), SessionMode::Oracle).map_err(engine)?;
    let view = session.view().map_err(engine)?;
    let unbeatable: Vec<BTreeMap<String, Vec<String>>> = advisor
        .unbeatable_deals()
        .map_err(engine)?
        .into_iter()
        .map(|d| {
            d.into_iter()
                .map(|(seat, hand)| (seat.to_string(), hand.iter().map(|c| c.code()).collect()))
                .collect()
        })
        .collect();
    let mut pretty = quality_table(&view);
    for d in &unbeatable {
        let _ = writeln!(pretty, "lost whatever we play: {d:?}");
    }
    Ok(Output {
        json: json!({
            "qualities": view.report.qualities,
            "recommended": view.report.recommended,
            "deals_total": view.report.deals_total,
            "unbeatable_deals": unbeatable,
        }),
        csv: Some(qualities_csv(&view)),
        pretty,
    })
}

pub fn recommend(scenario: Scenario, mode: SessionMode) -> Result<Output, CliError> {
    let view = Session::new(scenario, mode).map_err(engine)?.view().map_err(engine)?;
    Ok(Output {
        json: serde_json::to_value(&view)?,
        csv: Some(qualities_csv(&view)),
        pretty: quality_table(&view),
    })
}

/// Counts the 6 two-bit strings among all 16 four-bit strings.
pub fn qcount(t: usize) -> Result<Output, CliError> {
    let prep: Vec<BasisIndex> = (0..16u128).map(BasisIndex).collect();
    let est = quantum_count(|k| k.0.count_ones() == 2, &prep, 4, t).map_err(engine)?;
    let mut csv = String::from("y,probability\n");
    for (y, p) in est.distribution.iter().enumerate() {
        let _ = writeln!(csv, "{y},{p}");
    }
    let pretty = format!(
        "t={t}: modal y={} (p={:.4}), phase {:.6}, estimate {:.4} of 16 (true 6, bound {:.4})\n",
        est.y,
        est.mode_probability,
        est.phase,
        est.estimate,
        count_error_bound(16, t)
    );
    Ok(Output {
        json: json!({
            "t": t,
            "population": est.population,
            "true_count": 6,
            "y": est.y,
            "phase": est.phase,
            "estimate": est.estimate,
            "mode_probability": est.mode_probability,
            "error_bound": count_error_bound(16, t),
            "distribution": est.distribution,
        }),
        csv: Some(csv),
        pretty,
    })
}

pub fn payoff(seeger_fabian: bool, points: usize) -> Result<Output, CliError> {
    let params = PayoffParams::with_seeger_fabian(seeger_fabian);
    let choices = default_choices();
    let rows = payoff_curve(&choices, points, &params);
    let be: BTreeMap<String, f64> = choices
        .iter()
        .map(|(name, v)| (name.clone(), break_even(*v, *v, &params)))
        .collect();
    let mut pretty = String::from("choice  value  break-even\n");
    for (name, v) in &choices {
        let _ = writeln!(pretty, "{name:<7} {v:>5}  {:.4}", be[name]);
    }
    Ok(Output {
        json: json!({"seeger_fabian": seeger_fabian, "break_even": be, "rows": rows}),
        csv: Some(payoff_csv(&rows)),
        pretty,
    })
}

fn random_deal(spec: &DealSpec, rng: &mut ChaCha8Rng) -> Deal {
    let mut holders: Vec<Holder> = (0..spec.players)
        .flat_map(|s| std::iter::repeat_n(Holder::Player(s as u8), spec.hand_size))
        .chain(std::iter::repeat_n(Holder::Skat, spec.skat_size))
        .collect();
    holders.shuffle(rng);
    Deal { holders }
}

/// Times double-dummy solves on sampled deals of reduced decks.
pub fn bench(min_cards: usize, max_cards: usize, samples: usize, seed: u64) -> Result<Output, CliError> {
    if min_cards == 0 || min_cards > max_cards || max_cards > 10 {
        return Err(CliError::Usage("need 1 <= min-cards <= max-cards <= 10".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("cards,deals,samples,time_per_game_s,total_s\n");
    let mut rows = Vec::new();
    let mut pretty = String::from("cards                 deals   time/game        total\n");
    for x in min_cards..=max_cards {
        let spec = reduced_spec(x);
        let deals = deal_count(&spec).map_err(engine)?;
        let start = Instant::now();
        for _ in 0..samples {
            let deal = random_deal(&spec, &mut rng);
            let st = PlayState::from_deal(&spec, &deal, 0, 0);
            solve_deal(&st).map_err(engine)?;
        }
        let per = start.elapsed().as_secs_f64() / samples.max(1) as f64;
        let total = per * deals.to_string().parse::<f64>().unwrap_or(f64::INFINITY);
        let _ = writeln!(csv, "{x},{deals},{samples},{per:.6e},{total:.6e}");
        let _ = writeln!(pretty, "{x:>5} {deals:>21} {per:>10.3e}s {total:>11.3e}s");
        rows.push(json!({"cards": x, "deals": deals.to_string(), "samples": samples, "time_per_game_s": per, "total_s": total}));
    }
    Ok(Output {
        json: Value::Array(rows),
        csv: Some(csv),
        pretty,
    })
}
