//! Game evolution as controlled gates on the card register.
//!
//! Every operator here is assembled from conditioned blocks: a condition
//! pattern fixes the qubits the operator reads, and the block (an SP gate or a
//! handful of X gates) fires only on branches matching it. Only patterns that
//! occur in the current support are materialized.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{Card, CardLayout, EncodingError, Holder, Location};
use crate::oracle::legal_subset;
use crate::qsim::{BasisIndex, ControlSpec, GateOp, SimError, SparseState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("card {0} is not in the layout")]
    UnknownCard(Card),
    #[error("seat {0} does not exist")]
    BadSeat(usize),
    #[error("branch {branch}: seat {seat} holds {found} cards, expected {expected}")]
    HandCount {
        seat: usize,
        expected: usize,
        found: usize,
        branch: String,
    },
    #[error("branch {branch}: {found} cards on the table, expected {expected}")]
    TableCount {
        expected: usize,
        found: usize,
        branch: String,
    },
    #[error("branch {branch}: seat {seat} does not hold {card}")]
    CardAbsent { seat: usize, card: Card, branch: String },
    #[error("branch {branch}: seat {seat} has no card to play")]
    EmptyHand { seat: usize, branch: String },
    #[error("branch {0}: no card has been led")]
    NoLedCard(String),
    #[error("branch {branch}: seat {seat} already played to this trick")]
    AlreadyPlayed { seat: usize, branch: String },
    #[error("branches disagree about the current round")]
    InconsistentRound,
    #[error("round {0} is outside the game")]
    RoundOutOfRange(usize),
    #[error("no branch is consistent with seat {seat} playing {card}")]
    Unobservable { seat: usize, card: Card },
    #[error("bad round plan: {0}")]
    BadPlan(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvolutionMode {
    /// Fixed seat order, every hand card playable.
    PaperExact,
    /// Winner leads, and each player splits only over its legal cards.
    #[serde(alias = "hybrid")]
    HybridLegal,
}

impl std::str::FromStr for EvolutionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "paper" | "paper-exact" | "exact" => Ok(EvolutionMode::PaperExact),
            "hybrid" | "hybrid-legal" | "legal" => Ok(EvolutionMode::HybridLegal),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundPlan {
    pub round: usize,
    pub order: Vec<usize>,
    pub hand_count: usize,
}

impl RoundPlan {
    pub fn new(round: usize, order: Vec<usize>, hand_size: usize) -> Result<Self, GateError> {
        if round == 0 || round > hand_size {
            return Err(GateError::RoundOutOfRange(round));
        }
        Ok(RoundPlan {
            round,
            order,
            hand_count: hand_size + 1 - round,
        })
    }
}

/// One step of a recorded gate sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum ScriptStep {
    Cp {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        player: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
    },
    Reset,
    Tt {
        k: usize,
    },
    Fixed {
        player: usize,
        #[serde(with = "card_code")]
        card: Card,
    },
    Play {
        #[serde(with = "card_code")]
        card: Card,
    },
}

mod card_code {
    use crate::encoding::Card;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &Card, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&c.code())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Card, D::Error> {
        Card::deserialize(d)
    }
}

/// Condition pattern: a key matches iff `key & mask == value`.
type PatternOps = BTreeMap<Pins, Vec<(GateOp, Vec<(usize, bool)>)>>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
struct Pins {
    mask: u128,
    value: u128,
}

impl Pins {
    fn pin(&mut self, key: BasisIndex, qubits: &[usize]) {
        for &q in qubits {
            self.mask |= 1u128 << q;
            if key.bit(q) {
                self.value |= 1u128 << q;
            }
        }
    }

    /// Adds extra conditions; `None` if they contradict the pattern.
    fn with(&self, extra: &[(usize, bool)]) -> Option<ControlSpec> {
        let mut out = *self;
        for &(q, v) in extra {
            let bit = 1u128 << q;
            if out.mask & bit != 0 {
                if (out.value & bit != 0) != v {
                    return None;
                }
            } else {
                out.mask |= bit;
                if v {
                    out.value |= bit;
                }
            }
        }
        Some(out.controls())
    }

    fn controls(&self) -> ControlSpec {
        ControlSpec::from_pairs(
            (0..128usize)
                .filter(|q| self.mask >> q & 1 == 1)
                .map(|q| (q, self.value >> q & 1 == 1)),
        )
    }
}

/// Decoded view of one branch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BranchView {
    pub round: usize,
    pub leader: usize,
    pub hands: BTreeMap<usize, Vec<Card>>,
    /// Cards on the table in play order.
    pub table: Vec<(usize, Card)>,
    pub stacks: BTreeMap<usize, Vec<Card>>,
    pub skat: Vec<Card>,
}

/// The gate set for one layout and evolution mode.
#[derive(Clone, Debug, PartialEq)]
pub struct GameCircuit {
    pub layout: CardLayout,
    pub mode: EvolutionMode,
    /// Seat leading the first trick.
    pub first_leader: usize,
    /// Seat order within a round for [`EvolutionMode::PaperExact`].
    pub order: Vec<usize>,
}

/// Snapshot after a gate step.
#[derive(Clone, Debug)]
pub struct Stage {
    pub name: String,
    pub state: SparseState,
}

#[derive(Clone, Debug)]
pub struct GameRun {
    pub stages: Vec<Stage>,
    pub script: Vec<ScriptStep>,
}

impl GameRun {
    pub fn final_state(&self) -> &SparseState {
        &self.stages.last().expect("a run has at least its initial stage").state
    }

    pub fn stage(&self, name: &str) -> Option<&SparseState> {
        self.stages.iter().find(|s| s.name == name).map(|s| &s.state)
    }
}

fn branch(key: BasisIndex, layout: &CardLayout) -> String {
    layout.visible_label(key)
}

impl GameCircuit {
    pub fn new(layout: CardLayout, mode: EvolutionMode) -> Self {
        let order = (0..layout.players).collect();
        GameCircuit {
            layout,
            mode,
            first_leader: 0,
            order,
        }
    }

    pub fn with_leader(mut self, leader: usize) -> Self {
        self.first_leader = leader;
        self.order = (0..self.layout.players)
            .map(|i| (leader + i) % self.layout.players)
            .collect();
        self
    }

    fn card_index(&self, card: Card) -> Result<usize, GateError> {
        self.layout.index_of(card).ok_or(GateError::UnknownCard(card))
    }

    fn check_seat(&self, seat: usize) -> Result<(), GateError> {
        if seat >= self.layout.players {
            Err(GateError::BadSeat(seat))
        } else {
            Ok(())
        }
    }

    fn holds(&self, key: BasisIndex, i: usize, seat: usize) -> bool {
        self.layout.player_code(key, i) as usize == seat && !key.bit(self.layout.cards[i].ancilla)
    }

    fn max_tag(&self, key: BasisIndex) -> usize {
        (0..self.layout.cards.len())
            .map(|i| self.layout.tag(key, i))
            .max()
            .unwrap_or(0)
    }

    /// Leader of the trick in progress on `key`.
    fn leader_of(&self, key: BasisIndex) -> usize {
        let last = self.max_tag(key);
        match self.mode {
            EvolutionMode::PaperExact => self.order[0],
            EvolutionMode::HybridLegal if last == 0 => self.first_leader,
            EvolutionMode::HybridLegal => {
                let i = (0..self.layout.cards.len())
                    .find(|&i| self.layout.tag(key, i) == last)
                    .expect("some card carries the latest tag");
                self.layout.player_code(key, i) as usize
            }
        }
    }

    /// Seats of the current trick in play order.
    fn play_order(&self, key: BasisIndex) -> Vec<usize> {
        let n = self.layout.players;
        match self.mode {
            EvolutionMode::PaperExact => self.order.clone(),
            EvolutionMode::HybridLegal => {
                let leader = self.leader_of(key);
                (0..n).map(|i| (leader + i) % n).collect()
            }
        }
    }

    fn apply_patterns(&self, state: &mut SparseState, patterns: PatternOps) -> Result<(), GateError> {
        let programs: Vec<(ControlSpec, Vec<(GateOp, ControlSpec)>)> = patterns
            .into_iter()
            .map(|(pins, ops)| {
                let body = ops
                    .into_iter()
                    .filter_map(|(gate, extra)| pins.with(&extra).map(|c| (gate, c)))
                    .collect();
                (pins.controls(), body)
            })
            .collect();
        state.apply_by_pattern(&programs)?;
        Ok(())
    }

    /// Moves `card` from hand to table on every branch where its ancilla is 0.
    pub fn play_single_card(&self, state: &SparseState, card: Card) -> Result<SparseState, GateError> {
        let cq = &self.layout.cards[self.card_index(card)?];
        let mut out = state.clone();
        out.apply(&GateOp::PauliX(cq.table), &ControlSpec::new().on(cq.ancilla, false))?;
        Ok(out)
    }

    /// `seat` plays each of its `k` hand cards with equal amplitude.
    pub fn cp_gate(&self, state: &SparseState, seat: usize, k: usize) -> Result<SparseState, GateError> {
        self.check_seat(seat)?;
        let mut patterns: PatternOps = BTreeMap::new();
        for key in state.keys() {
            let alpha: Vec<usize> = (0..self.layout.cards.len())
                .filter(|&i| self.holds(key, i, seat))
                .collect();
            if alpha.len() != k {
                return Err(GateError::HandCount {
                    seat,
                    expected: k,
                    found: alpha.len(),
                    branch: branch(key, &self.layout),
                });
            }
            let mut pins = Pins::default();
            for cq in &self.layout.cards {
                pins.pin(key, &cq.player);
                pins.pin(key, &[cq.ancilla]);
            }
            let targets = alpha.iter().map(|&i| self.layout.cards[i].table).collect();
            patterns.entry(pins).or_insert_with(|| {
                vec![(
                    GateOp::Sp {
                        targets,
                        scratch: self.layout.scratch,
                    },
                    Vec::new(),
                )]
            });
        }
        let mut out = state.clone();
        self.apply_patterns(&mut out, patterns)?;
        Ok(out)
    }

    /// The player at `position` in the current trick (0 = leader) plays each
    /// of its legal cards with equal amplitude.
    pub fn cp_legal(&self, state: &SparseState, position: usize) -> Result<SparseState, GateError> {
        if position >= self.layout.players {
            return Err(GateError::BadSeat(position));
        }
        let n = self.layout.cards.len();
        let mut patterns: PatternOps = BTreeMap::new();
        for key in state.keys() {
            let seat = self.play_order(key)[position];
            let leader = self.leader_of(key);
            let hand: Vec<usize> = (0..n).filter(|&i| self.holds(key, i, seat)).collect();
            if hand.is_empty() {
                return Err(GateError::EmptyHand {
                    seat,
                    branch: branch(key, &self.layout),
                });
            }
            let mut pins = Pins::default();
            for (i, cq) in self.layout.cards.iter().enumerate() {
                pins.pin(key, &cq.player);
                pins.pin(key, &[cq.ancilla, cq.stack]);
                pins.pin(key, &cq.tag);
                if hand.contains(&i) {
                    if key.bit(cq.table) || key.bit(cq.stack) {
                        return Err(GateError::AlreadyPlayed {
                            seat,
                            branch: branch(key, &self.layout),
                        });
                    }
                } else {
                    pins.pin(key, &[cq.table]);
                }
            }
            let led = if position == 0 {
                None
            } else {
                let found = (0..n).find(|&i| {
                    self.layout.location(key, i).ok() == Some(Location::Table)
                        && self.layout.tag(key, i) == 0
                        && self.layout.player_code(key, i) as usize == leader
                });
                match found {
                    Some(i) => Some(self.layout.cards[i].card),
                    None => return Err(GateError::NoLedCard(branch(key, &self.layout))),
                }
            };
            let cards: Vec<Card> = hand.iter().map(|&i| self.layout.cards[i].card).collect();
            let legal = legal_subset(&cards, led, self.layout.game);
            let targets = legal
                .iter()
                .map(|c| self.layout.cards[self.layout.index_of(*c).unwrap()].table)
                .collect();
            patterns.entry(pins).or_insert_with(|| {
                vec![(
                    GateOp::Sp {
                        targets,
                        scratch: self.layout.scratch,
                    },
                    Vec::new(),
                )]
            });
        }
        let mut out = state.clone();
        self.apply_patterns(&mut out, patterns)?;
        Ok(out)
    }

    /// `seat` plays `card`, which it must hold on every branch.
    pub fn fixed_first_card(&self, state: &SparseState, seat: usize, card: Card) -> Result<SparseState, GateError> {
        self.check_seat(seat)?;
        let i = self.card_index(card)?;
        for key in state.keys() {
            let in_hand = self.layout.location(key, i)? == Location::Hand;
            if !(in_hand && self.holds(key, i, seat)) {
                return Err(GateError::CardAbsent {
                    seat,
                    card,
                    branch: branch(key, &self.layout),
                });
            }
        }
        let cq = &self.layout.cards[i];
        let mut controls = ControlSpec::from_pairs(CardLayout::code_pattern(&cq.player, seat as u8));
        controls.push(cq.ancilla, false);
        let mut out = state.clone();
        out.apply(&GateOp::PauliX(cq.table), &controls)?;
        Ok(out)
    }

    /// Marks every card that has reached the table as played.
    pub fn reset_ancillas(&self, state: &SparseState) -> Result<SparseState, GateError> {
        let cards = &self.layout.cards;
        Ok(state.relabel(|key| {
            cards
                .iter()
                .filter(|cq| key.bit(cq.table))
                .fold(key, |k, cq| k.with_bit(cq.ancilla, true))
        })?)
    }

    /// Sweeps the `k` table cards onto the stack of the trick winner.
    pub fn tt_gate(&self, state: &SparseState, k: usize) -> Result<SparseState, GateError> {
        let n = self.layout.cards.len();
        let mut round = None;
        for key in state.keys() {
            let table: Vec<usize> = (0..n)
                .filter(|&i| self.layout.location(key, i).ok() == Some(Location::Table))
                .collect();
            if table.len() != k {
                return Err(GateError::TableCount {
                    expected: k,
                    found: table.len(),
                    branch: branch(key, &self.layout),
                });
            }
            let r = self.max_tag(key) + 1;
            match round {
                None => round = Some(r),
                Some(x) if x != r => return Err(GateError::InconsistentRound),
                _ => {}
            }
        }
        let Some(r) = round else {
            return Ok(state.clone());
        };
        let tag_capacity = (1usize << self.layout.cards[0].tag.len()) - 1;
        if r > self.layout.rounds || r > tag_capacity {
            return Err(GateError::RoundOutOfRange(r));
        }
        let mut out = state.clone();

        // Tag the trick with its round number and copy the holders aside.
        for cq in &self.layout.cards {
            let on_table = ControlSpec::new().on(cq.table, true).on(cq.stack, false);
            for (b, &q) in cq.tag.iter().enumerate() {
                if r >> b & 1 == 1 {
                    out.apply(&GateOp::PauliX(q), &on_table)?;
                }
            }
        }
        for (i, cq) in self.layout.cards.iter().enumerate() {
            let tagged = ControlSpec::from_pairs(self.layout.tag_pattern(i, r));
            for (&p, &h) in cq.player.iter().zip(&cq.holder_copy) {
                out.apply(&GateOp::PauliX(h), &tagged.clone().on(p, true))?;
            }
        }

        // Rewrite the losers' player bits to the winner's.
        let order = self.layout.order();
        let mut patterns: PatternOps = BTreeMap::new();
        for key in out.keys() {
            let trick: Vec<usize> = (0..n).filter(|&i| self.layout.tag(key, i) == r).collect();
            let mut pins = Pins::default();
            for cq in &self.layout.cards {
                pins.pin(key, &cq.tag);
            }
            let cards: Vec<Card> = trick.iter().map(|&i| self.layout.cards[i].card).collect();
            let winner = match order.supremum(&cards) {
                Some(top) => trick[cards.iter().position(|&c| c == top).unwrap()],
                None => {
                    for &i in &trick {
                        pins.pin(key, &self.layout.cards[i].holder_copy);
                    }
                    if self.mode == EvolutionMode::HybridLegal && r > 1 {
                        for (i, cq) in self.layout.cards.iter().enumerate() {
                            if self.layout.tag(key, i) == r - 1 {
                                pins.pin(key, &cq.player);
                            }
                        }
                    }
                    let maximal = order.maximal(&cards);
                    let seat_of = |i: usize| CardLayout::read_code(key, &self.layout.cards[i].holder_copy) as usize;
                    let by_play = self.play_order_for_round(key, r);
                    *by_play
                        .iter()
                        .find_map(|&s| {
                            trick
                                .iter()
                                .find(|&&i| seat_of(i) == s && maximal.contains(&self.layout.cards[i].card))
                        })
                        .expect("some maximal card was played")
                }
            };
            let w = &self.layout.cards[winner];
            let mut ops = Vec::new();
            for &l in trick.iter().filter(|&&i| i != winner) {
                let lq = &self.layout.cards[l];
                for b in 0..lq.player.len() {
                    ops.push((GateOp::PauliX(lq.player[b]), vec![(w.player[b], true)]));
                    ops.push((GateOp::PauliX(lq.player[b]), vec![(lq.holder_copy[b], true)]));
                }
            }
            patterns.entry(pins).or_insert(ops);
        }
        self.apply_patterns(&mut out, patterns)?;

        // Move the trick to the stack.
        for (i, cq) in self.layout.cards.iter().enumerate() {
            let tagged = ControlSpec::from_pairs(self.layout.tag_pattern(i, r));
            out.apply(&GateOp::PauliX(cq.stack), &tagged)?;
        }
        Ok(out)
    }

    /// Play order of trick `round` on a branch where that trick is tagged but
    /// not yet swept.
    fn play_order_for_round(&self, key: BasisIndex, round: usize) -> Vec<usize> {
        let n = self.layout.players;
        let leader = match self.mode {
            EvolutionMode::PaperExact => return self.order.clone(),
            EvolutionMode::HybridLegal if round == 1 => self.first_leader,
            EvolutionMode::HybridLegal => {
                let i = (0..self.layout.cards.len())
                    .find(|&i| self.layout.tag(key, i) == round - 1)
                    .expect("previous trick is tagged");
                self.layout.player_code(key, i) as usize
            }
        };
        (0..n).map(|i| (leader + i) % n).collect()
    }

    pub fn round_operator(&self, state: &SparseState, plan: &RoundPlan) -> Result<SparseState, GateError> {
        let mut s = state.clone();
        match self.mode {
            EvolutionMode::PaperExact => {
                if plan.order.len() != self.layout.players {
                    return Err(GateError::BadPlan(format!("order {:?}", plan.order)));
                }
                for &seat in &plan.order {
                    s = self.cp_gate(&s, seat, plan.hand_count)?;
                }
            }
            EvolutionMode::HybridLegal => {
                for pos in 0..self.layout.players {
                    s = self.cp_legal(&s, pos)?;
                }
            }
        }
        s = self.reset_ancillas(&s)?;
        self.tt_gate(&s, self.layout.players)
    }

    /// Runs every round, optionally forcing the first card of the game.
    pub fn run_game(&self, initial: &SparseState, fixed: Option<(usize, Card)>) -> Result<GameRun, GateError> {
        let players = self.layout.players;
        let mut stages = vec![Stage {
            name: "initial".into(),
            state: initial.clone(),
        }];
        let mut script = Vec::new();
        let mut s = initial.clone();
        for round in 1..=self.layout.rounds {
            let plan = RoundPlan::new(round, self.order.clone(), self.layout.rounds)?;
            for pos in 0..players {
                let (next, step, name) = match (round, pos, fixed, self.mode) {
                    (1, 0, Some((seat, card)), _) => (
                        self.fixed_first_card(&s, seat, card)?,
                        ScriptStep::Fixed { player: seat, card },
                        format!("r{round}-fixed"),
                    ),
                    (_, _, _, EvolutionMode::PaperExact) => {
                        let seat = plan.order[pos];
                        (
                            self.cp_gate(&s, seat, plan.hand_count)?,
                            ScriptStep::Cp {
                                player: Some(seat),
                                position: None,
                                k: Some(plan.hand_count),
                            },
                            format!("r{round}-seat{seat}"),
                        )
                    }
                    (_, _, _, EvolutionMode::HybridLegal) => (
                        self.cp_legal(&s, pos)?,
                        ScriptStep::Cp {
                            player: None,
                            position: Some(pos),
                            k: None,
                        },
                        format!("r{round}-pos{pos}"),
                    ),
                };
                s = next;
                script.push(step);
                stages.push(Stage { name, state: s.clone() });
            }
            s = self.reset_ancillas(&s)?;
            script.push(ScriptStep::Reset);
            s = self.tt_gate(&s, players)?;
            script.push(ScriptStep::Tt { k: players });
            stages.push(Stage {
                name: format!("trick{round}"),
                state: s.clone(),
            });
        }
        Ok(GameRun { stages, script })
    }

    /// Keeps the branches on which `seat` is to move and may play `card`,
    /// then plays it.
    pub fn observe_play(&self, state: &SparseState, seat: usize, card: Card) -> Result<SparseState, GateError> {
        self.check_seat(seat)?;
        let i = self.card_index(card)?;
        let n = self.layout.cards.len();
        let kept = state.postselect(|key| {
            if !self.holds(key, i, seat) || self.layout.location(key, i).ok() != Some(Location::Hand) {
                return false;
            }
            let on_table: Vec<usize> = (0..n)
                .filter(|&j| self.layout.location(key, j).ok() == Some(Location::Table))
                .collect();
            if self.play_order(key).get(on_table.len()) != Some(&seat) {
                return false;
            }
            if self.mode == EvolutionMode::PaperExact || on_table.is_empty() {
                return true;
            }
            let leader = self.leader_of(key);
            let led = on_table
                .iter()
                .find(|&&j| self.layout.player_code(key, j) as usize == leader)
                .map(|&j| self.layout.cards[j].card);
            let hand: Vec<Card> = (0..n)
                .filter(|&j| self.holds(key, j, seat))
                .map(|j| self.layout.cards[j].card)
                .collect();
            legal_subset(&hand, led, self.layout.game).contains(&card)
        });
        let kept = match kept {
            Ok(s) => s,
            Err(SimError::EmptyPostselection) => return Err(GateError::Unobservable { seat, card }),
            Err(e) => return Err(e.into()),
        };
        self.fixed_first_card(&kept, seat, card)
    }

    /// Evolves a position, possibly in the middle of a trick, to the end of
    /// the game.
    pub fn finish_game(&self, state: &SparseState) -> Result<SparseState, GateError> {
        let n = self.layout.cards.len();
        let players = self.layout.players;
        let mut s = state.clone();
        loop {
            let Some(key) = s.keys().next() else {
                return Ok(s);
            };
            let in_hand = (0..n)
                .filter(|&j| {
                    self.layout.location(key, j).ok() == Some(Location::Hand)
                        && (self.layout.player_code(key, j) as usize) < players
                })
                .count();
            let on_table = (0..n)
                .filter(|&j| self.layout.location(key, j).ok() == Some(Location::Table))
                .count();
            if in_hand == 0 && on_table == 0 {
                return Ok(s);
            }
            let round = self.max_tag(key) + 1;
            for pos in on_table..players {
                s = match self.mode {
                    EvolutionMode::PaperExact => self.cp_gate(&s, self.order[pos], self.layout.rounds + 1 - round)?,
                    EvolutionMode::HybridLegal => self.cp_legal(&s, pos)?,
                };
            }
            s = self.reset_ancillas(&s)?;
            s = self.tt_gate(&s, players)?;
        }
    }

    /// Applies a recorded script.
    pub fn replay(&self, initial: &SparseState, script: &[ScriptStep]) -> Result<SparseState, GateError> {
        let mut s = initial.clone();
        for step in script {
            s = match step {
                ScriptStep::Cp {
                    player: Some(seat),
                    k: Some(k),
                    ..
                } => self.cp_gate(&s, *seat, *k)?,
                ScriptStep::Cp {
                    position: Some(pos), ..
                } => self.cp_legal(&s, *pos)?,
                ScriptStep::Cp { .. } => {
                    return Err(GateError::BadPlan("cp step needs player and k, or position".into()))
                }
                ScriptStep::Reset => self.reset_ancillas(&s)?,
                ScriptStep::Tt { k } => self.tt_gate(&s, *k)?,
                ScriptStep::Fixed { player, card } => self.fixed_first_card(&s, *player, *card)?,
                ScriptStep::Play { card } => self.play_single_card(&s, *card)?,
            };
        }
        Ok(s)
    }

    /// Hands, table and stacks of one branch.
    pub fn branch_view(&self, key: BasisIndex) -> Result<BranchView, GateError> {
        let decoded = self.layout.decode_basis(key)?;
        let mut view = BranchView {
            round: self.max_tag(key) + 1,
            leader: self.leader_of(key),
            hands: (0..self.layout.players).map(|s| (s, Vec::new())).collect(),
            table: Vec::new(),
            stacks: (0..self.layout.players).map(|s| (s, Vec::new())).collect(),
            skat: Vec::new(),
        };
        for d in decoded {
            match (d.location, d.holder) {
                (_, Holder::Skat) => view.skat.push(d.card),
                (Location::Hand, Holder::Player(s)) => view.hands.entry(s as usize).or_default().push(d.card),
                (Location::Table, Holder::Player(s)) => view.table.push((s as usize, d.card)),
                (Location::Stack, Holder::Player(s)) => view.stacks.entry(s as usize).or_default().push(d.card),
            }
        }
        let order = self.play_order(key);
        view.table
            .sort_by_key(|(s, _)| order.iter().position(|x| x == s).unwrap_or(usize::MAX));
        Ok(view)
    }
}
