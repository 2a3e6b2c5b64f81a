//! Advisor sessions: a scenario plus the cards recorded since.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use qskat_core::encoding::initial_state;
use qskat_core::gates::{EvolutionMode, GameCircuit};
use qskat_core::oracle::{Advisor, AdvisorReport, OracleError, Party, PlayedCard, Scenario};
use qskat_core::scoring::{win_probability, FavorableProjector, ScoreOperator};
use qskat_core::{Card, CardLayout};

/// Largest position the session will also evolve as a circuit.
const QUANTUM_MAX_DEALS: usize = 2_000;
const QUANTUM_MAX_HAND: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionMode {
    #[default]
    Oracle,
    PaperExact,
    Hybrid,
}

impl SessionMode {
    fn evolution(self) -> Option<EvolutionMode> {
        match self {
            SessionMode::Oracle => None,
            SessionMode::PaperExact => Some(EvolutionMode::PaperExact),
            SessionMode::Hybrid => Some(EvolutionMode::HybridLegal),
        }
    }
}

impl std::str::FromStr for SessionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(SessionMode::Oracle),
            other => match other.parse::<EvolutionMode>()? {
                EvolutionMode::PaperExact => Ok(SessionMode::PaperExact),
                EvolutionMode::HybridLegal => Ok(SessionMode::Hybrid),
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct Session {
    pub id: Uuid,
    pub mode: SessionMode,
    pub advisor: Advisor,
}

/// What gets written to the state directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: Uuid,
    pub mode: SessionMode,
    pub scenario: Scenario,
    pub history: Vec<PlayedCard>,
}

/// Random-play outcome of the position evolved as a circuit.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct QuantumView {
    pub mode: EvolutionMode,
    pub random_play_p_win: Option<f64>,
    pub support: Option<usize>,
    pub qubits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SessionView {
    pub id: Uuid,
    pub mode: SessionMode,
    pub scenario: Scenario,
    #[serde(flatten)]
    pub report: AdvisorReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantum: Option<QuantumView>,
}

impl Session {
    pub fn new(scenario: Scenario, mode: SessionMode) -> Result<Self, OracleError> {
        Ok(Session {
            id: Uuid::new_v4(),
            mode,
            advisor: Advisor::new(scenario)?,
        })
    }

    pub fn restore(snapshot: Snapshot) -> Result<Self, OracleError> {
        let mut session = Session::new(snapshot.scenario, snapshot.mode)?;
        session.id = snapshot.id;
        for p in snapshot.history {
            let card: Card = p.card.parse()?;
            session.advisor.play(p.seat, card)?;
        }
        Ok(session)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            id: self.id,
            mode: self.mode,
            scenario: self.advisor.scenario.clone(),
            history: self
                .advisor
                .history
                .iter()
                .map(|&(seat, card)| PlayedCard {
                    seat,
                    card: card.code(),
                })
                .collect(),
        }
    }

    pub fn view(&self) -> Result<SessionView, OracleError> {
        view_of(self.id, self.mode, &self.advisor)
    }

    /// The view after `seat` plays `card`, leaving the session untouched.
    pub fn what_if(&self, seat: usize, card: Card) -> Result<SessionView, OracleError> {
        view_of(self.id, self.mode, &self.advisor.after(seat, card)?)
    }

    pub fn play(&mut self, seat: usize, card: Card) -> Result<(), OracleError> {
        self.advisor.play(seat, card)
    }
}

fn view_of(id: Uuid, mode: SessionMode, advisor: &Advisor) -> Result<SessionView, OracleError> {
    Ok(SessionView {
        id,
        mode,
        scenario: advisor.scenario.clone(),
        report: advisor.report()?,
        quantum: mode.evolution().map(|m| quantum_view(advisor, m)),
    })
}

fn quantum_view(advisor: &Advisor, mode: EvolutionMode) -> QuantumView {
    let skip = |why: String| QuantumView {
        mode,
        random_play_p_win: None,
        support: None,
        qubits: None,
        skipped: Some(why),
    };
    if advisor.spec.hand_size > QUANTUM_MAX_HAND || advisor.deals_total() > QUANTUM_MAX_DEALS {
        return skip("position too large to evolve".into());
    }
    match evolve(advisor, mode) {
        Ok(v) => v,
        Err(e) => skip(e),
    }
}

fn evolve(advisor: &Advisor, mode: EvolutionMode) -> Result<QuantumView, String> {
    let sc = &advisor.scenario;
    let layout = CardLayout::for_spec(&advisor.spec).map_err(|e| e.to_string())?;
    let circuit = GameCircuit::new(layout.clone(), mode).with_leader(sc.leader());
    let mut state = initial_state(&advisor.spec, &layout).map_err(|e| e.to_string())?;
    for &(seat, card) in &advisor.history {
        state = circuit.observe_play(&state, seat, card).map_err(|e| e.to_string())?;
    }
    let fin = circuit.finish_game(&state).map_err(|e| e.to_string())?;
    let total = layout.total_points() + sc.declarer_points + sc.defender_points;
    let score = ScoreOperator::for_seat(&layout, sc.declarer())
        .map_err(|e| e.to_string())?
        .with_head_start(sc.declarer_points);
    let declarer = win_probability(&fin, &FavorableProjector::more_than_half(score, total)).p_win;
    let ours = match sc.our_party() {
        Party::Declarer => declarer,
        Party::Defenders => 1.0 - declarer,
    };
    Ok(QuantumView {
        mode,
        random_play_p_win: Some(ours),
        support: Some(fin.len()),
        qubits: Some(layout.width),
        skipped: None,
    })
}
