//! Classical ground truth: rules, double-dummy minimax, path counting and
//! card quality over a belief set of deals.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{
    enumerate_deals, Card, Constraint, Deal, DealSpec, EffectiveSuit, EncodingError, GameType, Holder, Suit,
    TrickOrder, DEFAULT_DEAL_CAP,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("seat {seat} is not to move (seat {expected} is)")]
    NotToMove { seat: usize, expected: usize },
    #[error("seat {seat} does not hold {card}")]
    CardNotHeld { seat: usize, card: Card },
    #[error("{card} is not a legal play for seat {seat}")]
    IllegalMove { seat: usize, card: Card },
    #[error("the trick is empty")]
    EmptyTrick,
    #[error("the game is over")]
    GameOver,
    #[error("search visited more than {0} nodes")]
    CapExceeded(u64),
    #[error("inconsistent play state: {0}")]
    Inconsistent(String),
    #[error("empty input")]
    EmptyInput,
    #[error("bad scenario: {0}")]
    BadScenario(String),
    #[error("no deal is consistent with the recorded play")]
    NoConsistentDeal,
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

/// Party index into [`PlayState::points`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Declarer,
    Defenders,
}

impl Party {
    fn index(self) -> usize {
        match self {
            Party::Declarer => 0,
            Party::Defenders => 1,
        }
    }
}

/// Play rules. Full rules are the default; the literal circuit model uses
/// neither suit-following nor winner-leads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rules {
    pub follow_suit: bool,
    pub winner_leads: bool,
}

impl Default for Rules {
    fn default() -> Self {
        Rules {
            follow_suit: true,
            winner_leads: true,
        }
    }
}

impl Rules {
    pub const CIRCUIT: Rules = Rules {
        follow_suit: false,
        winner_leads: false,
    };
}

/// Cards of `hand` that may be played onto a trick led by `led`.
pub fn legal_subset(hand: &[Card], led: Option<Card>, game: GameType) -> Vec<Card> {
    let Some(led) = led else {
        return hand.to_vec();
    };
    let want: EffectiveSuit = game.effective_suit(led);
    let follow: Vec<Card> = hand
        .iter()
        .copied()
        .filter(|&c| game.effective_suit(c) == want)
        .collect();
    if follow.is_empty() {
        hand.to_vec()
    } else {
        follow
    }
}

/// Seat taking the trick: the supremum if one exists, otherwise the
/// earliest-played maximal card.
pub fn trick_winner(played: &[(usize, Card)], order: &TrickOrder) -> Result<usize, OracleError> {
    if played.is_empty() {
        return Err(OracleError::EmptyTrick);
    }
    let cards: Vec<Card> = played.iter().map(|p| p.1).collect();
    if let Some(top) = order.supremum(&cards) {
        return Ok(played.iter().find(|p| p.1 == top).unwrap().0);
    }
    let maximal = order.maximal(&cards);
    Ok(played.iter().find(|p| maximal.contains(&p.1)).unwrap().0)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayState {
    pub game: GameType,
    pub rules: Rules,
    pub hands: Vec<Vec<Card>>,
    pub trick: Vec<(usize, Card)>,
    pub leader: usize,
    pub declarer: usize,
    /// Points banked by declarer and defenders.
    pub points: [u32; 2],
    pub swept: Vec<Card>,
    pub history: Vec<(usize, Card)>,
}

impl PlayState {
    pub fn new(game: GameType, hands: Vec<Vec<Card>>, leader: usize, declarer: usize) -> Self {
        let order = TrickOrder::new(game);
        let hands = hands
            .into_iter()
            .map(|mut h| {
                order.sort_canonical(&mut h);
                h
            })
            .collect();
        PlayState {
            game,
            rules: Rules::default(),
            hands,
            trick: Vec::new(),
            leader,
            declarer,
            points: [0, 0],
            swept: Vec::new(),
            history: Vec::new(),
        }
    }

    pub fn with_rules(mut self, rules: Rules) -> Self {
        self.rules = rules;
        self
    }

    pub fn with_points(mut self, declarer: u32, defenders: u32) -> Self {
        self.points = [declarer, defenders];
        self
    }

    /// Builds the opening position of `deal`; Skat cards stay out of play.
    pub fn from_deal(spec: &DealSpec, deal: &Deal, leader: usize, declarer: usize) -> Self {
        let hands = (0..spec.players)
            .map(|s| deal.hand(&spec.deck, Holder::Player(s as u8)))
            .collect();
        PlayState::new(spec.game, hands, leader, declarer)
    }

    pub fn players(&self) -> usize {
        self.hands.len()
    }

    pub fn order(&self) -> TrickOrder {
        TrickOrder::new(self.game)
    }

    pub fn party_of(&self, seat: usize) -> Party {
        if seat == self.declarer {
            Party::Declarer
        } else {
            Party::Defenders
        }
    }

    pub fn to_move(&self) -> usize {
        (self.leader + self.trick.len()) % self.players()
    }

    pub fn is_terminal(&self) -> bool {
        self.trick.is_empty() && self.hands.iter().all(|h| h.is_empty())
    }

    /// Banked points plus everything still in hands or on the table.
    pub fn total_points(&self) -> u32 {
        self.points[0]
            + self.points[1]
            + self.hands.iter().flatten().map(|c| c.points()).sum::<u32>()
            + self.trick.iter().map(|t| t.1.points()).sum::<u32>()
    }

    pub fn party_points(&self, party: Party) -> u32 {
        self.points[party.index()]
    }

    /// Declarer needs strictly more than half; defenders win otherwise.
    pub fn winner(&self) -> Party {
        if 2 * self.points[0] > self.total_points() {
            Party::Declarer
        } else {
            Party::Defenders
        }
    }

    pub fn led_card(&self) -> Option<Card> {
        self.trick.first().map(|t| t.1)
    }

    pub fn legal_moves(&self, seat: usize) -> Result<Vec<Card>, OracleError> {
        if self.is_terminal() {
            return Err(OracleError::GameOver);
        }
        let expected = self.to_move();
        if seat != expected {
            return Err(OracleError::NotToMove { seat, expected });
        }
        let hand = &self.hands[seat];
        if !self.rules.follow_suit {
            return Ok(hand.clone());
        }
        Ok(legal_subset(hand, self.led_card(), self.game))
    }

    pub fn play(&mut self, seat: usize, card: Card) -> Result<(), OracleError> {
        let legal = self.legal_moves(seat)?;
        if !self.hands[seat].contains(&card) {
            return Err(OracleError::CardNotHeld { seat, card });
        }
        if !legal.contains(&card) {
            return Err(OracleError::IllegalMove { seat, card });
        }
        self.hands[seat].retain(|&c| c != card);
        self.trick.push((seat, card));
        self.history.push((seat, card));
        if self.trick.len() == self.players() {
            let winner = trick_winner(&self.trick, &self.order())?;
            let gained: u32 = self.trick.iter().map(|t| t.1.points()).sum();
            self.points[self.party_of(winner).index()] += gained;
            self.swept.extend(self.trick.iter().map(|t| t.1));
            self.trick.clear();
            if self.rules.winner_leads {
                self.leader = winner;
            }
        }
        Ok(())
    }

    fn child(&self, seat: usize, card: Card) -> PlayState {
        let mut next = self.clone();
        next.play(seat, card).expect("move taken from legal_moves");
        next
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveResult {
    pub declarer_points: u32,
    pub defender_points: u32,
    pub line: Vec<(usize, Card)>,
}

/// Double-dummy value: declarer maximizes its points, both defenders jointly
/// minimize them. Among equally good moves the first in canonical order wins.
pub fn solve_deal(state: &PlayState) -> Result<SolveResult, OracleError> {
    if state.is_terminal() {
        return Err(OracleError::GameOver);
    }
    let (value, mut line) = minimax(state)?;
    line.reverse();
    let total = state.total_points();
    Ok(SolveResult {
        declarer_points: value,
        defender_points: total - value,
        line,
    })
}

fn minimax(state: &PlayState) -> Result<(u32, Vec<(usize, Card)>), OracleError> {
    if state.is_terminal() {
        return Ok((state.points[0], Vec::new()));
    }
    let seat = state.to_move();
    let maximize = state.party_of(seat) == Party::Declarer;
    let mut best: Option<(u32, Vec<(usize, Card)>)> = None;
    for card in state.legal_moves(seat)? {
        let (v, mut line) = minimax(&state.child(seat, card))?;
        let better = match &best {
            None => true,
            Some((b, _)) => (maximize && v > *b) || (!maximize && v < *b),
        };
        if better {
            line.push((seat, card));
            best = Some((v, line));
        }
    }
    Ok(best.expect("non-terminal state has a legal move"))
}

/// Same value as [`solve_deal`], with alpha-beta pruning.
pub fn solve_value_alpha_beta(state: &PlayState) -> Result<u32, OracleError> {
    if state.is_terminal() {
        return Err(OracleError::GameOver);
    }
    alpha_beta(state, 0, u32::MAX)
}

fn alpha_beta(state: &PlayState, mut alpha: u32, mut beta: u32) -> Result<u32, OracleError> {
    if state.is_terminal() {
        return Ok(state.points[0]);
    }
    let seat = state.to_move();
    let maximize = state.party_of(seat) == Party::Declarer;
    let mut best = if maximize { 0 } else { u32::MAX };
    for card in state.legal_moves(seat)? {
        let v = alpha_beta(&state.child(seat, card), alpha, beta)?;
        if maximize {
            best = best.max(v);
            alpha = alpha.max(v);
        } else {
            best = best.min(v);
            beta = beta.min(v);
        }
        if alpha >= beta {
            break;
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathCounts {
    pub all: BigUint,
    pub winning: BigUint,
}

/// Counts complete legal play sequences, and those ending in a win for `party`.
pub fn count_paths(state: &PlayState, party: Party, cap: u64) -> Result<PathCounts, OracleError> {
    let mut visited = 0u64;
    count_rec(state, party, cap, &mut visited)
}

fn count_rec(state: &PlayState, party: Party, cap: u64, visited: &mut u64) -> Result<PathCounts, OracleError> {
    *visited += 1;
    if *visited > cap {
        return Err(OracleError::CapExceeded(cap));
    }
    if state.is_terminal() {
        let win = state.winner() == party;
        return Ok(PathCounts {
            all: BigUint::one(),
            winning: if win { BigUint::one() } else { BigUint::zero() },
        });
    }
    let seat = state.to_move();
    let mut acc = PathCounts {
        all: BigUint::zero(),
        winning: BigUint::zero(),
    };
    for card in state.legal_moves(seat)? {
        let sub = count_rec(&state.child(seat, card), party, cap, visited)?;
        acc.all += sub.all;
        acc.winning += sub.winning;
    }
    Ok(acc)
}

/// Exact probability that `party` wins when every player picks uniformly
/// among its legal moves.
pub fn random_play_win_probability(state: &PlayState, party: Party) -> Result<f64, OracleError> {
    if state.is_terminal() {
        return Ok(if state.winner() == party { 1.0 } else { 0.0 });
    }
    let seat = state.to_move();
    let moves = state.legal_moves(seat)?;
    let mut sum = 0.0;
    for &card in &moves {
        sum += random_play_win_probability(&state.child(seat, card), party)?;
    }
    Ok(sum / moves.len() as f64)
}

/// Branching factors seen along one uniformly random playout.
pub fn random_playout<R: Rng + ?Sized>(state: &PlayState, rng: &mut R) -> Result<Vec<u32>, OracleError> {
    let mut s = state.clone();
    let mut factors = Vec::new();
    while !s.is_terminal() {
        let seat = s.to_move();
        let moves = s.legal_moves(seat)?;
        factors.push(moves.len() as u32);
        let card = *moves.choose(rng).expect("legal moves are never empty");
        s.play(seat, card)?;
    }
    Ok(factors)
}

/// Mean over games of the geometric mean of each game's branching factors.
pub fn branching_geomean(games: &[Vec<u32>]) -> Result<f64, OracleError> {
    if games.is_empty() || games.iter().any(|g| g.is_empty()) {
        return Err(OracleError::EmptyInput);
    }
    if games.iter().flatten().any(|&b| b < 1) {
        return Err(OracleError::Inconsistent("branching factor below 1".into()));
    }
    let sum: f64 = games
        .iter()
        .map(|g| (g.iter().map(|&b| (b as f64).ln()).sum::<f64>() / g.len() as f64).exp())
        .sum();
    Ok(sum / games.len() as f64)
}

/// What one player knows at a decision point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(with = "game_code")]
    pub trump: GameType,
    #[serde(default = "three")]
    pub players: usize,
    pub our_seat: usize,
    /// Defaults to the seat to the right of ours (the one playing last).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declarer_seat: Option<usize>,
    /// Defaults to our seat.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader: Option<usize>,
    pub our_hand: Vec<Card>,
    pub unseen: Vec<Card>,
    #[serde(default)]
    pub constraints: Knowledge,
    #[serde(default)]
    pub declarer_points: u32,
    #[serde(default)]
    pub defender_points: u32,
}

fn three() -> usize {
    3
}

mod game_code {
    use super::GameType;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(g: &GameType, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&g.code())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<GameType, D::Error> {
        GameType::deserialize(d)
    }
}

/// Knowledge about the unseen cards: a preset such as
/// `"2-trumps-1-heart-each"` or an explicit constraint list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Knowledge {
    Preset(String),
    Explicit(Vec<Constraint>),
}

impl Default for Knowledge {
    fn default() -> Self {
        Knowledge::Explicit(Vec::new())
    }
}

impl Scenario {
    pub fn declarer(&self) -> usize {
        self.declarer_seat
            .unwrap_or((self.our_seat + self.players - 1) % self.players)
    }

    pub fn leader(&self) -> usize {
        self.leader.unwrap_or(self.our_seat)
    }

    pub fn our_party(&self) -> Party {
        if self.our_seat == self.declarer() {
            Party::Declarer
        } else {
            Party::Defenders
        }
    }

    pub fn deal_spec(&self) -> Result<DealSpec, OracleError> {
        let bad = |m: String| Err(OracleError::BadScenario(m));
        if !(2..=3).contains(&self.players) {
            return bad(format!("{} players", self.players));
        }
        if self.our_seat >= self.players || self.declarer() >= self.players || self.leader() >= self.players {
            return bad("seat out of range".into());
        }
        if self.our_hand.is_empty() {
            return bad("empty hand".into());
        }
        if self.unseen.len() != (self.players - 1) * self.our_hand.len() {
            return bad(format!(
                "{} unseen cards do not fill {} hands of {}",
                self.unseen.len(),
                self.players - 1,
                self.our_hand.len()
            ));
        }
        let mut deck = self.our_hand.clone();
        deck.extend(&self.unseen);
        let mut spec = DealSpec::new(deck, self.players, self.our_hand.len(), 0, self.trump);
        for &card in &self.our_hand {
            spec.constraints.push(Constraint::Fixed {
                card,
                holder: Holder::Player(self.our_seat as u8),
            });
        }
        match &self.constraints {
            Knowledge::Explicit(list) => spec.constraints.extend(list.iter().cloned()),
            Knowledge::Preset(p) => spec.constraints.extend(self.preset_constraints(p)?),
        }
        spec.validate()?;
        Ok(spec)
    }

    fn preset_constraints(&self, preset: &str) -> Result<Vec<Constraint>, OracleError> {
        let p = preset.trim().to_ascii_lowercase();
        if p.is_empty() || p == "none" {
            return Ok(Vec::new());
        }
        let bad = || OracleError::BadScenario(format!("unknown constraint preset {preset:?}"));
        let tokens: Vec<&str> = p.split('-').collect();
        if tokens.len() < 3 || tokens.len().is_multiple_of(2) || *tokens.last().unwrap() != "each" {
            return Err(bad());
        }
        let mut out = Vec::new();
        for pair in tokens[..tokens.len() - 1].chunks(2) {
            let count: usize = pair[0].parse().map_err(|_| bad())?;
            let word = pair[1].trim_end_matches('s');
            let cards: Vec<Card> = match word {
                "trump" => self
                    .unseen
                    .iter()
                    .copied()
                    .filter(|c| self.trump.is_trump(*c))
                    .collect(),
                _ => {
                    let suit = match word {
                        "club" => Suit::Clubs,
                        "spade" => Suit::Spades,
                        "heart" => Suit::Hearts,
                        "diamond" => Suit::Diamonds,
                        _ => return Err(bad()),
                    };
                    self.unseen
                        .iter()
                        .copied()
                        .filter(|c| c.suit == suit && !self.trump.is_trump(*c))
                        .collect()
                }
            };
            for seat in (0..self.players).filter(|&s| s != self.our_seat) {
                out.push(Constraint::Group {
                    cards: cards.clone(),
                    holder: Holder::Player(seat as u8),
                    count,
                });
            }
        }
        Ok(out)
    }

    pub fn start_state(&self, spec: &DealSpec, deal: &Deal) -> PlayState {
        PlayState::from_deal(spec, deal, self.leader(), self.declarer())
            .with_points(self.declarer_points, self.defender_points)
    }
}

/// Evaluation of one candidate card.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualityReport {
    pub card: String,
    /// Deals our party wins under double-dummy play after this card.
    pub q_bar: usize,
    pub deals_total: usize,
    pub p_win: f64,
    /// Winning share when everyone plays uniformly at random after this card.
    pub random_play_p_win: f64,
    pub paths_won: String,
    pub paths_total: String,
}

/// Full position for a [`Scenario`] plus the cards played since.
#[derive(Clone, Debug)]
pub struct Advisor {
    pub scenario: Scenario,
    pub spec: DealSpec,
    deals: Vec<Deal>,
    pub history: Vec<(usize, Card)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdvisorReport {
    pub to_move: Option<usize>,
    pub our_seat: usize,
    pub declarer_seat: usize,
    pub our_hand: Vec<String>,
    pub history: Vec<PlayedCard>,
    pub deals_total: usize,
    pub qualities: Vec<QualityReport>,
    pub recommended: Option<String>,
    /// Share of consistent deals our party wins under double-dummy play.
    pub p_win: f64,
    pub terminal: bool,
    pub points: [u32; 2],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayedCard {
    pub seat: usize,
    pub card: String,
}

const PATH_CAP: u64 = 50_000_000;

impl Advisor {
    pub fn new(scenario: Scenario) -> Result<Self, OracleError> {
        let spec = scenario.deal_spec()?;
        let deals = enumerate_deals(&spec, DEFAULT_DEAL_CAP)?;
        if deals.is_empty() {
            return Err(OracleError::BadScenario("no deal satisfies the constraints".into()));
        }
        Ok(Advisor {
            scenario,
            spec,
            deals,
            history: Vec::new(),
        })
    }

    fn replay(&self, deal: &Deal, extra: Option<(usize, Card)>) -> Option<PlayState> {
        let mut st = self.scenario.start_state(&self.spec, deal);
        for &(seat, card) in self.history.iter().chain(extra.iter()) {
            st.play(seat, card).ok()?;
        }
        Some(st)
    }

    /// Positions of every deal consistent with the recorded play.
    pub fn positions(&self) -> Vec<(&Deal, PlayState)> {
        self.deals
            .iter()
            .filter_map(|d| self.replay(d, None).map(|s| (d, s)))
            .collect()
    }

    pub fn deals_total(&self) -> usize {
        self.positions().len()
    }

    pub fn to_move(&self) -> Option<usize> {
        self.positions()
            .first()
            .filter(|(_, s)| !s.is_terminal())
            .map(|(_, s)| s.to_move())
    }

    pub fn our_hand(&self) -> Vec<Card> {
        let mut hand = self.scenario.our_hand.clone();
        hand.retain(|c| !self.history.iter().any(|h| h.1 == *c));
        hand
    }

    /// Accepts a play iff some consistent deal allows it.
    pub fn check_play(&self, seat: usize, card: Card) -> Result<(), OracleError> {
        let positions = self.positions();
        let Some((_, first)) = positions.first() else {
            return Err(OracleError::NoConsistentDeal);
        };
        if first.is_terminal() {
            return Err(OracleError::GameOver);
        }
        let expected = first.to_move();
        if seat != expected {
            return Err(OracleError::NotToMove { seat, expected });
        }
        let mut held = false;
        for (_, st) in &positions {
            if st.hands[seat].contains(&card) {
                held = true;
                if st.legal_moves(seat)?.contains(&card) {
                    return Ok(());
                }
            }
        }
        if held {
            Err(OracleError::IllegalMove { seat, card })
        } else {
            Err(OracleError::CardNotHeld { seat, card })
        }
    }

    pub fn play(&mut self, seat: usize, card: Card) -> Result<(), OracleError> {
        self.check_play(seat, card)?;
        self.history.push((seat, card));
        Ok(())
    }

    pub fn after(&self, seat: usize, card: Card) -> Result<Advisor, OracleError> {
        let mut next = self.clone();
        next.play(seat, card)?;
        Ok(next)
    }

    /// Quality of playing `card` from our hand now.
    pub fn card_quality(&self, card: Card) -> Result<QualityReport, OracleError> {
        let seat = self.scenario.our_seat;
        let party = self.scenario.our_party();
        self.check_play(seat, card)?;
        let mut wins = 0usize;
        let mut total = 0usize;
        let mut random = 0.0;
        let mut paths_won = BigUint::zero();
        let mut paths_total = BigUint::zero();
        for deal in &self.deals {
            let Some(st) = self.replay(deal, Some((seat, card))) else {
                continue;
            };
            total += 1;
            let value = if st.is_terminal() {
                st.points[0]
            } else {
                solve_deal(&st)?.declarer_points
            };
            let declarer_wins = 2 * value > st.total_points();
            if declarer_wins == (party == Party::Declarer) {
                wins += 1;
            }
            random += random_play_win_probability(&st, party)?;
            let paths = count_paths(&st, party, PATH_CAP)?;
            paths_won += paths.winning;
            paths_total += paths.all;
        }
        if total == 0 {
            return Err(OracleError::NoConsistentDeal);
        }
        Ok(QualityReport {
            card: card.code(),
            q_bar: wins,
            deals_total: total,
            p_win: wins as f64 / total as f64,
            random_play_p_win: random / total as f64,
            paths_won: paths_won.to_string(),
            paths_total: paths_total.to_string(),
        })
    }

    /// Qualities of all our legal cards, empty unless we are to move.
    pub fn qualities(&self) -> Result<Vec<QualityReport>, OracleError> {
        if self.to_move() != Some(self.scenario.our_seat) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for card in self.our_hand() {
            match self.card_quality(card) {
                Ok(q) => out.push(q),
                Err(OracleError::IllegalMove { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    /// Share of consistent deals our party wins from the current position.
    pub fn p_win(&self) -> Result<f64, OracleError> {
        let party = self.scenario.our_party();
        let positions = self.positions();
        if positions.is_empty() {
            return Err(OracleError::NoConsistentDeal);
        }
        let mut wins = 0usize;
        for (_, st) in &positions {
            let value = if st.is_terminal() {
                st.points[0]
            } else {
                solve_deal(st)?.declarer_points
            };
            if (2 * value > st.total_points()) == (party == Party::Declarer) {
                wins += 1;
            }
        }
        Ok(wins as f64 / positions.len() as f64)
    }

    /// Consistent deals that no card of ours wins, as seat -> hand.
    pub fn unbeatable_deals(&self) -> Result<Vec<BTreeMap<usize, Vec<Card>>>, OracleError> {
        let seat = self.scenario.our_seat;
        let party = self.scenario.our_party();
        let mut out = Vec::new();
        for (deal, st) in self.positions() {
            if st.is_terminal() || st.to_move() != seat {
                continue;
            }
            let mut beatable = false;
            for card in st.legal_moves(seat)? {
                let next = st.child(seat, card);
                let value = if next.is_terminal() {
                    next.points[0]
                } else {
                    solve_deal(&next)?.declarer_points
                };
                if (2 * value > next.total_points()) == (party == Party::Declarer) {
                    beatable = true;
                    break;
                }
            }
            if !beatable {
                out.push(
                    (0..self.spec.players)
                        .map(|s| (s, deal.hand(&self.spec.deck, Holder::Player(s as u8))))
                        .collect(),
                );
            }
        }
        Ok(out)
    }

    pub fn report(&self) -> Result<AdvisorReport, OracleError> {
        let positions = self.positions();
        let Some((_, first)) = positions.first() else {
            return Err(OracleError::NoConsistentDeal);
        };
        let qualities = self.qualities()?;
        let recommended = qualities
            .iter()
            .fold(None::<&QualityReport>, |best, q| match best {
                Some(b) if b.q_bar >= q.q_bar => Some(b),
                _ => Some(q),
            })
            .map(|q| q.card.clone());
        Ok(AdvisorReport {
            to_move: self.to_move(),
            our_seat: self.scenario.our_seat,
            declarer_seat: self.scenario.declarer(),
            our_hand: self.our_hand().iter().map(|c| c.code()).collect(),
            history: self
                .history
                .iter()
                .map(|&(seat, card)| PlayedCard {
                    seat,
                    card: card.code(),
                })
                .collect(),
            deals_total: positions.len(),
            qualities,
            recommended,
            p_win: self.p_win()?,
            terminal: first.is_terminal(),
            points: first.points,
        })
    }
}

/// The shipped end-game example: we hold ♥10 ♥Q ♥7 in a spades game, our
/// party has 48 points, the declarer (to our right) 42, and each opponent
/// holds two of the four unseen trumps and one of the two unseen hearts.
pub fn showcase_scenario() -> Scenario {
    let cards = |s: &str| crate::encoding::parse_cards(s).expect("static card list");
    Scenario {
        trump: GameType::Suit(Suit::Spades),
        players: 3,
        our_seat: 0,
        declarer_seat: Some(2),
        leader: Some(0),
        our_hand: cards("H10 HQ H7"),
        unseen: cards("CJ SJ HJ S7 HA H8"),
        constraints: Knowledge::Preset("2-trumps-1-heart-each".into()),
        declarer_points: 42,
        defender_points: 48,
    }
}
