//! Readout: score expectation, favorable projection, quantum counting and the
//! payoff model.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{Card, CardLayout, GameType, Location, Rank};
use crate::qsim::{
    synthesize_preparation, BasisIndex, Circuit, ControlSpec, GateOp, SimError, SmallUnitary, SparseState, MAX_QUBITS,
};

/// Largest supported counting register.
pub const MAX_COUNTING_QUBITS: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("seat {0} is not in the layout")]
    UnknownSeat(usize),
    #[error("need at least one counting qubit")]
    NoCountingQubits,
    #[error("{0} counting qubits exceed the simulator budget")]
    TooManyCountingQubits(usize),
    #[error("probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Point value of each rank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardValues {
    pub points: BTreeMap<String, u32>,
}

impl Default for CardValues {
    fn default() -> Self {
        CardValues {
            points: Rank::ALL.iter().map(|r| (r.token().to_string(), r.points())).collect(),
        }
    }
}

impl CardValues {
    pub fn value(&self, card: Card) -> u32 {
        self.points.get(card.rank.token()).copied().unwrap_or(0)
    }

    pub fn total(&self, cards: &[Card]) -> u32 {
        cards.iter().map(|&c| self.value(c)).sum()
    }
}

/// Diagonal operator: points on the stacks of a set of seats.
#[derive(Clone, Debug)]
pub struct ScoreOperator<'a> {
    layout: &'a CardLayout,
    seats: BTreeSet<usize>,
    values: CardValues,
    head_start: u32,
}

impl<'a> ScoreOperator<'a> {
    pub fn for_seat(layout: &'a CardLayout, seat: usize) -> Result<Self, ScoringError> {
        Self::for_party(layout, &[seat])
    }

    pub fn for_party(layout: &'a CardLayout, seats: &[usize]) -> Result<Self, ScoringError> {
        if let Some(&bad) = seats.iter().find(|&&s| s >= layout.players) {
            return Err(ScoringError::UnknownSeat(bad));
        }
        Ok(ScoreOperator {
            layout,
            seats: seats.iter().copied().collect(),
            values: CardValues::default(),
            head_start: 0,
        })
    }

    /// Points already banked before the modelled cards are played.
    pub fn with_head_start(mut self, points: u32) -> Self {
        self.head_start = points;
        self
    }

    pub fn layout(&self) -> &CardLayout {
        self.layout
    }

    pub fn value(&self, key: BasisIndex) -> u32 {
        let stacked: u32 = (0..self.layout.cards.len())
            .filter(|&i| {
                self.layout.location(key, i).ok() == Some(Location::Stack)
                    && self.seats.contains(&(self.layout.player_code(key, i) as usize))
            })
            .map(|i| self.values.value(self.layout.cards[i].card))
            .sum();
        stacked + self.head_start
    }

    pub fn diagonal(&self, state: &SparseState) -> BTreeMap<BasisIndex, f64> {
        state.keys().map(|k| (k, self.value(k) as f64)).collect()
    }
}

pub fn expected_score(state: &SparseState, op: &ScoreOperator) -> f64 {
    state.iter().map(|(k, a)| a.norm_sqr() * op.value(k) as f64).sum()
}

/// Projector onto branches where a party has enough points.
#[derive(Clone, Debug)]
pub struct FavorableProjector<'a> {
    pub score: ScoreOperator<'a>,
    /// Points contested, including any head starts.
    pub total: u32,
    /// Whether exactly half counts as favorable.
    pub half_wins: bool,
}

impl<'a> FavorableProjector<'a> {
    pub fn more_than_half(score: ScoreOperator<'a>, total: u32) -> Self {
        FavorableProjector {
            score,
            total,
            half_wins: false,
        }
    }

    pub fn at_least_half(score: ScoreOperator<'a>, total: u32) -> Self {
        FavorableProjector {
            score,
            total,
            half_wins: true,
        }
    }

    pub fn contains(&self, key: BasisIndex) -> bool {
        let twice = 2 * self.score.value(key);
        if self.half_wins {
            twice >= self.total
        } else {
            twice > self.total
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WinProbability {
    pub p_win: f64,
    /// Distinct visible configurations inside the favorable subspace.
    pub favorable_dimension: usize,
}

pub fn win_probability(state: &SparseState, projector: &FavorableProjector) -> WinProbability {
    win_probability_by(state, projector.score.layout.visible_width, |k| projector.contains(k))
}

/// [`win_probability`] for an arbitrary predicate; dimension is counted on
/// the lowest `visible_width` qubits.
pub fn win_probability_by(
    state: &SparseState,
    visible_width: usize,
    favorable: impl Fn(BasisIndex) -> bool,
) -> WinProbability {
    let mask = if visible_width >= 128 {
        u128::MAX
    } else {
        (1u128 << visible_width) - 1
    };
    let mut p = 0.0;
    let mut seen = BTreeSet::new();
    for (k, a) in state.iter() {
        if favorable(k) {
            p += a.norm_sqr();
            seen.insert(k.0 & mask);
        }
    }
    WinProbability {
        p_win: p,
        favorable_dimension: seen.len(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountEstimate {
    pub t: usize,
    pub population: usize,
    /// Modal readout of the counting register.
    pub y: usize,
    pub phase: f64,
    pub estimate: f64,
    pub mode_probability: f64,
    pub distribution: Vec<f64>,
}

/// Worst-case readout error accepted for `population` items and `t` qubits.
pub fn count_error_bound(population: usize, t: usize) -> f64 {
    let r = (1u64 << t) as f64;
    population as f64 * (2.0 * PI / r + PI * PI / (r * r))
}

/// Search register on `0..width`, phase-kickback ancilla at `width`.
struct GroverSetup {
    width: usize,
    iterate: Circuit,
    start: SparseState,
}

fn grover_setup(
    marked: &impl Fn(BasisIndex) -> bool,
    prep_set: &[BasisIndex],
    width: usize,
) -> Result<GroverSetup, ScoringError> {
    let a = synthesize_preparation(width, prep_set)?.expanded()?;
    let a_inv = a.inverse()?;
    let anc = width;
    let mut g = Circuit::new(width + 1);
    for &m in prep_set.iter().filter(|&&k| marked(k)) {
        let pattern = ControlSpec::from_pairs((0..width).map(|q| (q, m.bit(q))));
        g.push(GateOp::PauliX(anc), pattern);
    }
    g.ops.extend(a_inv.ops);
    g.push(
        GateOp::PauliX(anc),
        ControlSpec::from_pairs((0..width).map(|q| (q, false))),
    );
    let minus_one = Complex64::new(-1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    g.push(
        GateOp::SmallUnitary(SmallUnitary::new(vec![anc], vec![minus_one, zero, zero, minus_one])?),
        ControlSpec::new(),
    );
    g.ops.extend(a.ops.iter().cloned());

    let mut start = SparseState::new(width + 1)?;
    start.apply(&GateOp::PauliX(anc), &ControlSpec::new())?;
    start.apply(&GateOp::Hadamard(anc), &ControlSpec::new())?;
    a.run(&mut start)?;
    Ok(GroverSetup {
        width,
        iterate: g,
        start,
    })
}

fn check_count_args(prep_set: &[BasisIndex], width: usize, t: usize) -> Result<(), ScoringError> {
    if t == 0 {
        return Err(ScoringError::NoCountingQubits);
    }
    if t > MAX_COUNTING_QUBITS || width + 1 + t > MAX_QUBITS {
        return Err(ScoringError::TooManyCountingQubits(t));
    }
    if prep_set.is_empty() {
        return Err(SimError::EmptyBasisSet.into());
    }
    Ok(())
}

/// `G^c |psi>` for every `c < 2^t`, as amplitude maps.
fn powers_direct(setup: &GroverSetup, t: usize) -> Result<Vec<BTreeMap<BasisIndex, Complex64>>, ScoringError> {
    let mut out = Vec::with_capacity(1 << t);
    let mut s = setup.start.clone();
    for _ in 0..(1usize << t) {
        out.push(s.iter().collect());
        setup.iterate.run(&mut s)?;
    }
    Ok(out)
}

/// Same vectors obtained from a full QPE register driven by controlled powers.
fn powers_controlled(setup: &GroverSetup, t: usize) -> Result<Vec<BTreeMap<BasisIndex, Complex64>>, ScoringError> {
    let base = setup.width + 1;
    let mut s = SparseState::from_amplitudes(base + t, setup.start.iter())?;
    for j in 0..t {
        s.apply(&GateOp::Hadamard(base + j), &ControlSpec::new())?;
    }
    for j in 0..t {
        let cg = setup.iterate.controlled_by(base + j, true);
        for _ in 0..(1usize << j) {
            cg.run(&mut s)?;
        }
    }
    let scale = ((1usize << t) as f64).sqrt();
    let mut out = vec![BTreeMap::new(); 1 << t];
    let low = (1u128 << base) - 1;
    for (k, a) in s.iter() {
        out[(k.0 >> base) as usize].insert(BasisIndex(k.0 & low), a * scale);
    }
    Ok(out)
}

/// Readout distribution after the inverse Fourier transform.
fn readout(powers: &[BTreeMap<BasisIndex, Complex64>]) -> Vec<f64> {
    let r = powers.len();
    let keys: BTreeSet<BasisIndex> = powers.iter().flat_map(|m| m.keys().copied()).collect();
    let twiddle: Vec<Complex64> = (0..r)
        .map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / r as f64))
        .collect();
    let mut dist = vec![0.0; r];
    for key in keys {
        let a: Vec<Complex64> = powers
            .iter()
            .map(|m| m.get(&key).copied().unwrap_or_default())
            .collect();
        for (y, d) in dist.iter_mut().enumerate() {
            let mut acc = Complex64::default();
            for (c, ac) in a.iter().enumerate() {
                acc += ac * twiddle[(c * y) % r];
            }
            *d += (acc / r as f64).norm_sqr();
        }
    }
    dist
}

fn estimate_from(dist: Vec<f64>, t: usize, population: usize) -> CountEstimate {
    let mut y = 0;
    for (i, &d) in dist.iter().enumerate() {
        if d > dist[y] + 1e-12 {
            y = i;
        }
    }
    let p = dist[y];
    let phase = 2.0 * PI * y as f64 / (1usize << t) as f64;
    CountEstimate {
        t,
        population,
        y,
        phase,
        estimate: population as f64 * (phase / 2.0).sin().powi(2),
        mode_probability: p,
        distribution: dist,
    }
}

/// Estimates how many elements of `prep_set` satisfy `marked` by phase
/// estimation on the Grover iterate.
pub fn quantum_count(
    marked: impl Fn(BasisIndex) -> bool,
    prep_set: &[BasisIndex],
    width: usize,
    t: usize,
) -> Result<CountEstimate, ScoringError> {
    check_count_args(prep_set, width, t)?;
    let setup = grover_setup(&marked, prep_set, width)?;
    let powers = powers_direct(&setup, t)?;
    Ok(estimate_from(readout(&powers), t, prep_set.len()))
}

/// [`quantum_count`] computed from an explicit controlled-power circuit.
pub fn quantum_count_by_circuit(
    marked: impl Fn(BasisIndex) -> bool,
    prep_set: &[BasisIndex],
    width: usize,
    t: usize,
) -> Result<CountEstimate, ScoringError> {
    check_count_args(prep_set, width, t)?;
    let setup = grover_setup(&marked, prep_set, width)?;
    let powers = powers_controlled(&setup, t)?;
    Ok(estimate_from(readout(&powers), t, prep_set.len()))
}

/// Consecutive top trumps held (`true`) or missing (`false`), from the top.
pub fn matadors(declarer_cards: &[Card], game: GameType) -> (usize, bool) {
    let seq = game.trump_sequence();
    let with = declarer_cards.contains(&seq[0]);
    let run = seq.iter().take_while(|c| declarer_cards.contains(c) == with).count();
    (run, with)
}

pub fn game_value(declarer_cards: &[Card], game: GameType) -> u32 {
    let (run, _) = matadors(declarer_cards, game);
    (run as u32 + 1) * game.base_value()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffParams {
    /// Adds 50 to a win and subtracts 50 from a loss.
    pub seeger_fabian: bool,
    pub loss_multiplier: f64,
}

impl Default for PayoffParams {
    fn default() -> Self {
        PayoffParams {
            seeger_fabian: false,
            loss_multiplier: 2.0,
        }
    }
}

impl PayoffParams {
    pub fn with_seeger_fabian(on: bool) -> Self {
        PayoffParams {
            seeger_fabian: on,
            ..Self::default()
        }
    }

    fn bonus(&self) -> f64 {
        if self.seeger_fabian {
            50.0
        } else {
            0.0
        }
    }
}

pub fn payoff(p_win: f64, value_won: u32, value_lost: u32, params: &PayoffParams) -> Result<f64, ScoringError> {
    if !(0.0..=1.0).contains(&p_win) {
        return Err(ScoringError::BadProbability(p_win));
    }
    let b = params.bonus();
    let win = value_won as f64 + b;
    let loss = params.loss_multiplier * value_lost as f64 + b;
    Ok(p_win * win - (1.0 - p_win) * loss)
}

/// Probability at which the expected payoff is zero.
pub fn break_even(value_won: u32, value_lost: u32, params: &PayoffParams) -> f64 {
    let b = params.bonus();
    let loss = params.loss_multiplier * value_lost as f64 + b;
    loss / (value_won as f64 + b + loss)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PayoffRow {
    pub p: f64,
    pub choice: String,
    pub payoff: f64,
}

/// Payoff for each `(label, value)` choice on `points` evenly spaced
/// probabilities in `[0, 1]`.
pub fn payoff_curve(choices: &[(String, u32)], points: usize, params: &PayoffParams) -> Vec<PayoffRow> {
    let steps = points.max(2) - 1;
    let mut rows = Vec::new();
    for (label, value) in choices {
        for i in 0..=steps {
            let p = i as f64 / steps as f64;
            rows.push(PayoffRow {
                p,
                choice: label.clone(),
                payoff: payoff(p, *value, *value, params).expect("grid stays in [0, 1]"),
            });
        }
    }
    rows
}

/// Suit games and Grand at their lowest value (one matador).
pub fn default_choices() -> Vec<(String, u32)> {
    ["D", "H", "S", "C", "G"]
        .iter()
        .map(|code| {
            let g: GameType = code.parse().expect("valid game code");
            (code.to_string(), 2 * g.base_value())
        })
        .collect()
}

pub fn payoff_csv(rows: &[PayoffRow]) -> String {
    let mut out = String::from("p,choice,payoff\n");
    for r in rows {
        out.push_str(&format!("{:.2},{},{:.4}\n", r.p, r.choice, r.payoff));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{initial_state, parse_cards, toy_spec, Suit};
    use crate::gates::{EvolutionMode, GameCircuit};

    fn toy_final() -> (CardLayout, SparseState) {
        let spec = toy_spec();
        let layout = CardLayout::for_spec(&spec).unwrap();
        let init = initial_state(&spec, &layout).unwrap();
        let c = GameCircuit::new(layout.clone(), EvolutionMode::PaperExact);
        let fin = c.run_game(&init, None).unwrap().final_state().clone();
        (layout, fin)
    }

    #[test]
    fn card_values_total() {
        let v = CardValues::default();
        assert_eq!(v.total(&crate::encoding::full_deck()), 120);
    }

    #[test]
    fn toy_expected_score_and_win() {
        let (layout, fin) = toy_final();
        let a = ScoreOperator::for_seat(&layout, 0).unwrap();
        let b = ScoreOperator::for_seat(&layout, 1).unwrap();
        assert!((expected_score(&fin, &a) - 14.0).abs() < 1e-12);
        for k in fin.keys() {
            assert_eq!(a.value(k) + b.value(k), 28);
        }
        let w = win_probability(&fin, &FavorableProjector::more_than_half(a, 28));
        assert!((w.p_win - 5.0 / 12.0).abs() < 1e-12);
        assert_eq!(w.favorable_dimension, 3);
        assert!(matches!(
            ScoreOperator::for_seat(&layout, 2),
            Err(ScoringError::UnknownSeat(2))
        ));
    }

    #[test]
    fn trivial_projectors() {
        let (layout, fin) = toy_final();
        assert!((win_probability_by(&fin, layout.visible_width, |_| true).p_win - 1.0).abs() < 1e-12);
        assert_eq!(win_probability_by(&fin, layout.visible_width, |_| false).p_win, 0.0);
    }

    #[test]
    fn counting_demonstrator() {
        let all: Vec<BasisIndex> = (0..16u128).map(BasisIndex).collect();
        let est = quantum_count(|k| k.0.count_ones() == 2, &all, 4, 7).unwrap();
        assert!(est.y == 27 || est.y == 101, "y = {}", est.y);
        assert!((est.estimate - 6.0).abs() < 0.5);
    }

    #[test]
    fn counting_backends_agree() {
        let all: Vec<BasisIndex> = (0..8u128).map(BasisIndex).collect();
        let marked = |k: BasisIndex| k.0.is_multiple_of(3);
        let setup = grover_setup(&marked, &all, 3).unwrap();
        let direct = powers_direct(&setup, 4).unwrap();
        let circ = powers_controlled(&setup, 4).unwrap();
        for (d, c) in direct.iter().zip(&circ) {
            let keys: BTreeSet<_> = d.keys().chain(c.keys()).collect();
            for k in keys {
                let x = d.get(k).copied().unwrap_or_default();
                let y = c.get(k).copied().unwrap_or_default();
                assert!((x - y).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn counting_extremes() {
        let set: Vec<BasisIndex> = (0..8u128).map(BasisIndex).collect();
        assert!(quantum_count(|_| false, &set, 3, 5).unwrap().estimate.abs() < 1e-9);
        assert!((quantum_count(|_| true, &set, 3, 5).unwrap().estimate - 8.0).abs() < 1e-9);
        assert!(matches!(
            quantum_count(|_| true, &set, 3, 0),
            Err(ScoringError::NoCountingQubits)
        ));
        assert!(matches!(
            quantum_count(|_| true, &set, 3, 40),
            Err(ScoringError::TooManyCountingQubits(40))
        ));
    }

    #[test]
    fn game_values() {
        let spades = GameType::Suit(Suit::Spades);
        assert_eq!(game_value(&parse_cards("CJ SJ").unwrap(), spades), 33);
        assert_eq!(game_value(&parse_cards("SA S10").unwrap(), spades), 55);
        assert_eq!(GameType::Grand.base_value(), 24);
        assert_eq!(matadors(&parse_cards("CJ SJ HJ").unwrap(), GameType::Grand), (3, true));
    }

    #[test]
    fn payoff_closed_forms() {
        let p = PayoffParams::default();
        assert_eq!(payoff(1.0, 33, 33, &p).unwrap(), 33.0);
        assert_eq!(payoff(0.0, 33, 33, &p).unwrap(), -66.0);
        assert!((break_even(33, 33, &p) - 2.0 / 3.0).abs() < 1e-12);
        let sf = PayoffParams::with_seeger_fabian(true);
        assert!(break_even(33, 33, &sf) < 2.0 / 3.0);
        assert!(payoff(1.5, 1, 1, &p).is_err());
    }

    #[test]
    fn curve_csv_shape() {
        let rows = payoff_curve(&default_choices(), 101, &PayoffParams::default());
        assert_eq!(rows.len(), 505);
        let csv = payoff_csv(&rows);
        assert!(csv.starts_with("p,choice,payoff\n0.00,D,-36.0000"));
    }
}
