//! Cards, the trick-taking order, deal enumeration and the qubit layout that
//! turns a deal into a basis state.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::de::{self, Deserializer};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qsim::{prepare_superposition, BasisIndex, SimError, SparseState, MAX_QUBITS};

/// Default ceiling for [`enumerate_deals`].
pub const DEFAULT_DEAL_CAP: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("cannot parse card {0:?}")]
    BadCard(String),
    #[error("cannot parse game type {0:?}")]
    BadGame(String),
    #[error("card {0} appears more than once")]
    DuplicateCard(Card),
    #[error("card {0} is not in the deck")]
    UnknownCard(Card),
    #[error("inconsistent deal spec: {0}")]
    InconsistentSpec(String),
    #[error("{count} deals exceed the enumeration cap of {cap}")]
    CapExceeded { count: BigUint, cap: u64 },
    #[error("basis state carries the unused location code 01 on card {0}")]
    MalformedLocation(Card),
    #[error("basis state assigns card {0} to a holder code that does not exist")]
    BadHolderCode(Card),
    #[error("layout needs {0} qubits, more than the simulator supports")]
    LayoutTooWide(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suit {
    Diamonds,
    Hearts,
    Spades,
    Clubs,
}

impl Suit {
    pub const ALL: [Suit; 4] = [Suit::Diamonds, Suit::Hearts, Suit::Spades, Suit::Clubs];

    pub fn letter(self) -> char {
        match self {
            Suit::Diamonds => 'D',
            Suit::Hearts => 'H',
            Suit::Spades => 'S',
            Suit::Clubs => 'C',
        }
    }

    pub fn from_letter(c: char) -> Option<Suit> {
        match c.to_ascii_uppercase() {
            'D' => Some(Suit::Diamonds),
            'H' => Some(Suit::Hearts),
            'S' => Some(Suit::Spades),
            'C' => Some(Suit::Clubs),
            _ => None,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Suit::Diamonds => '♦',
            Suit::Hearts => '♥',
            Suit::Spades => '♠',
            Suit::Clubs => '♣',
        }
    }

    /// Base game value when this suit is trump.
    pub fn base_value(self) -> u32 {
        match self {
            Suit::Diamonds => 9,
            Suit::Hearts => 10,
            Suit::Spades => 11,
            Suit::Clubs => 12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rank {
    Seven,
    Eight,
    Nine,
    Ten,
    Jack,
    Queen,
    King,
    Ace,
}

impl Rank {
    pub const ALL: [Rank; 8] = [
        Rank::Seven,
        Rank::Eight,
        Rank::Nine,
        Rank::Ten,
        Rank::Jack,
        Rank::Queen,
        Rank::King,
        Rank::Ace,
    ];

    pub fn points(self) -> u32 {
        match self {
            Rank::Seven | Rank::Eight | Rank::Nine => 0,
            Rank::Ten => 10,
            Rank::Jack => 2,
            Rank::Queen => 3,
            Rank::King => 4,
            Rank::Ace => 11,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Rank::Seven => "7",
            Rank::Eight => "8",
            Rank::Nine => "9",
            Rank::Ten => "10",
            Rank::Jack => "J",
            Rank::Queen => "Q",
            Rank::King => "K",
            Rank::Ace => "A",
        }
    }

    pub fn from_token(s: &str) -> Option<Rank> {
        match s.to_ascii_uppercase().as_str() {
            "7" => Some(Rank::Seven),
            "8" => Some(Rank::Eight),
            "9" => Some(Rank::Nine),
            "10" | "T" => Some(Rank::Ten),
            "J" => Some(Rank::Jack),
            "Q" => Some(Rank::Queen),
            "K" => Some(Rank::King),
            "A" => Some(Rank::Ace),
            _ => None,
        }
    }

    /// Position in the non-Jack chain A > 10 > K > Q > 9 > 8 > 7 (higher is stronger).
    fn chain_strength(self) -> u8 {
        match self {
            Rank::Seven => 0,
            Rank::Eight => 1,
            Rank::Nine => 2,
            Rank::Queen => 3,
            Rank::King => 4,
            Rank::Ten => 5,
            Rank::Ace => 6,
            Rank::Jack => 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Card {
    pub suit: Suit,
    pub rank: Rank,
}

impl Card {
    pub const fn new(suit: Suit, rank: Rank) -> Self {
        Card { suit, rank }
    }

    pub fn points(self) -> u32 {
        self.rank.points()
    }

    /// Shorthand such as `"H10"` or `"CJ"`.
    pub fn code(self) -> String {
        format!("{}{}", self.suit.letter(), self.rank.token())
    }

    /// Display form such as `"♥10"`.
    pub fn pretty(self) -> String {
        format!("{}{}", self.suit.symbol(), self.rank.token())
    }
}

impl fmt::Display for Card {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.suit.letter(), self.rank.token())
    }
}

impl FromStr for Card {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let mut chars = t.chars();
        let suit = chars
            .next()
            .and_then(Suit::from_letter)
            .ok_or_else(|| EncodingError::BadCard(s.to_string()))?;
        let rank = Rank::from_token(chars.as_str()).ok_or_else(|| EncodingError::BadCard(s.to_string()))?;
        Ok(Card { suit, rank })
    }
}

impl Serialize for Card {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("Card", 2)?;
        st.serialize_field("suit", &self.suit.letter().to_string())?;
        st.serialize_field("rank", self.rank.token())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Card {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Short(String),
            Full { suit: String, rank: String },
        }
        match Repr::deserialize(deserializer)? {
            Repr::Short(s) => s.parse().map_err(de::Error::custom),
            Repr::Full { suit, rank } => format!("{suit}{rank}").parse().map_err(de::Error::custom),
        }
    }
}

/// Parses a comma- or space-separated card list.
pub fn parse_cards(s: &str) -> Result<Vec<Card>, EncodingError> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

pub fn full_deck() -> Vec<Card> {
    let mut deck = Vec::with_capacity(32);
    for suit in Suit::ALL {
        for rank in Rank::ALL {
            deck.push(Card::new(suit, rank));
        }
    }
    deck
}

pub fn deck_points(deck: &[Card]) -> u32 {
    deck.iter().map(|c| c.points()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GameType {
    Suit(Suit),
    Grand,
}

impl GameType {
    pub fn base_value(self) -> u32 {
        match self {
            GameType::Suit(s) => s.base_value(),
            GameType::Grand => 24,
        }
    }

    pub fn code(self) -> String {
        match self {
            GameType::Suit(s) => s.letter().to_string(),
            GameType::Grand => "G".to_string(),
        }
    }

    pub fn is_trump(self, card: Card) -> bool {
        card.rank == Rank::Jack || matches!(self, GameType::Suit(t) if card.suit == t)
    }

    /// Suit a card counts as when following: Jacks belong to the trump block.
    pub fn effective_suit(self, card: Card) -> EffectiveSuit {
        if self.is_trump(card) {
            EffectiveSuit::Trump
        } else {
            EffectiveSuit::Side(card.suit)
        }
    }

    /// Trumps from the top down, as used for counting matadors.
    pub fn trump_sequence(self) -> Vec<Card> {
        let mut seq: Vec<Card> = [Suit::Clubs, Suit::Spades, Suit::Hearts, Suit::Diamonds]
            .iter()
            .map(|&s| Card::new(s, Rank::Jack))
            .collect();
        if let GameType::Suit(t) = self {
            for r in [
                Rank::Ace,
                Rank::Ten,
                Rank::King,
                Rank::Queen,
                Rank::Nine,
                Rank::Eight,
                Rank::Seven,
            ] {
                seq.push(Card::new(t, r));
            }
        }
        seq
    }
}

impl FromStr for GameType {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "G" | "GRAND" => Ok(GameType::Grand),
            "C" | "CLUBS" => Ok(GameType::Suit(Suit::Clubs)),
            "S" | "SPADES" => Ok(GameType::Suit(Suit::Spades)),
            "H" | "HEARTS" => Ok(GameType::Suit(Suit::Hearts)),
            "D" | "DIAMONDS" => Ok(GameType::Suit(Suit::Diamonds)),
            _ => Err(EncodingError::BadGame(s.to_string())),
        }
    }
}

impl fmt::Display for GameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl Serialize for GameType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            GameType::Suit(s) => {
                let mut st = serializer.serialize_struct("GameType", 2)?;
                st.serialize_field("variant", "suit")?;
                st.serialize_field("trump", &s.letter().to_string())?;
                st.end()
            }
            GameType::Grand => {
                let mut st = serializer.serialize_struct("GameType", 1)?;
                st.serialize_field("variant", "grand")?;
                st.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for GameType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Short(String),
            Full {
                variant: String,
                #[serde(default)]
                trump: Option<String>,
            },
        }
        match Repr::deserialize(deserializer)? {
            Repr::Short(s) => s.parse().map_err(de::Error::custom),
            Repr::Full { variant, trump } => match (variant.to_ascii_lowercase().as_str(), trump) {
                ("grand", _) => Ok(GameType::Grand),
                ("suit", Some(t)) => t.parse().map_err(de::Error::custom),
                _ => Err(de::Error::custom(format!("bad game variant {variant:?}"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EffectiveSuit {
    Trump,
    Side(Suit),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Beats {
    Yes,
    No,
    Incomparable,
}

/// The trick-taking partial order for one game type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrickOrder {
    pub game: GameType,
}

pub fn build_order(deck: &[Card], game: GameType) -> Result<TrickOrder, EncodingError> {
    check_unique(deck)?;
    Ok(TrickOrder { game })
}

fn check_unique(cards: &[Card]) -> Result<(), EncodingError> {
    let mut seen = std::collections::HashSet::new();
    for &c in cards {
        if !seen.insert(c) {
            return Err(EncodingError::DuplicateCard(c));
        }
    }
    Ok(())
}

const SIDE_SUIT_ORDER: [Suit; 4] = [Suit::Clubs, Suit::Spades, Suit::Hearts, Suit::Diamonds];

impl TrickOrder {
    pub fn new(game: GameType) -> Self {
        TrickOrder { game }
    }

    fn trump_strength(&self, card: Card) -> u8 {
        if card.rank == Rank::Jack {
            10 + match card.suit {
                Suit::Diamonds => 0,
                Suit::Hearts => 1,
                Suit::Spades => 2,
                Suit::Clubs => 3,
            }
        } else {
            card.rank.chain_strength()
        }
    }

    pub fn beats(&self, a: Card, b: Card) -> Beats {
        if a == b {
            return Beats::No;
        }
        match (self.game.effective_suit(a), self.game.effective_suit(b)) {
            (EffectiveSuit::Trump, EffectiveSuit::Trump) => {
                if self.trump_strength(a) > self.trump_strength(b) {
                    Beats::Yes
                } else {
                    Beats::No
                }
            }
            (EffectiveSuit::Trump, EffectiveSuit::Side(_)) => Beats::Yes,
            (EffectiveSuit::Side(_), EffectiveSuit::Trump) => Beats::No,
            (EffectiveSuit::Side(x), EffectiveSuit::Side(y)) if x == y => {
                if a.rank.chain_strength() > b.rank.chain_strength() {
                    Beats::Yes
                } else {
                    Beats::No
                }
            }
            _ => Beats::Incomparable,
        }
    }

    pub fn comparable(&self, a: Card, b: Card) -> bool {
        a == b || self.beats(a, b) != Beats::Incomparable
    }

    /// Canonical linear extension: trump block first, then side suits in the
    /// order clubs, spades, hearts, diamonds, each from the top down.
    pub fn canonical_cmp(&self, a: Card, b: Card) -> Ordering {
        self.sort_key(a).cmp(&self.sort_key(b))
    }

    fn sort_key(&self, card: Card) -> (u8, u8) {
        match self.game.effective_suit(card) {
            EffectiveSuit::Trump => (0, 255 - self.trump_strength(card)),
            EffectiveSuit::Side(s) => {
                let block = SIDE_SUIT_ORDER.iter().position(|&x| x == s).unwrap() as u8 + 1;
                (block, 255 - card.rank.chain_strength())
            }
        }
    }

    pub fn sort_canonical(&self, cards: &mut [Card]) {
        cards.sort_by(|a, b| self.canonical_cmp(*a, *b));
    }

    /// Elements of `cards` not beaten by any other element.
    pub fn maximal(&self, cards: &[Card]) -> Vec<Card> {
        cards
            .iter()
            .copied()
            .filter(|&c| !cards.iter().any(|&o| self.beats(o, c) == Beats::Yes))
            .collect()
    }

    /// The element beating every other, if one exists.
    pub fn supremum(&self, cards: &[Card]) -> Option<Card> {
        cards
            .iter()
            .copied()
            .find(|&c| cards.iter().all(|&o| o == c || self.beats(c, o) == Beats::Yes))
    }
}

/// Who holds a card in a deal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Holder {
    Player(u8),
    Skat,
}

impl Holder {
    /// Ordering code: seats first, Skat last.
    pub fn code(self) -> u8 {
        match self {
            Holder::Player(s) => s,
            Holder::Skat => 3,
        }
    }
}

impl fmt::Display for Holder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Holder::Player(s) => write!(f, "{s}"),
            Holder::Skat => f.write_str("skat"),
        }
    }
}

impl Serialize for Holder {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Holder::Player(s) => serializer.serialize_u8(*s),
            Holder::Skat => serializer.serialize_str("skat"),
        }
    }
}

impl<'de> Deserialize<'de> for Holder {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Seat(u8),
            Name(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Seat(s) => Ok(Holder::Player(s)),
            Repr::Name(n) if n.eq_ignore_ascii_case("skat") => Ok(Holder::Skat),
            Repr::Name(n) => n
                .parse::<u8>()
                .map(Holder::Player)
                .map_err(|_| de::Error::custom(format!("bad holder {n:?}"))),
        }
    }
}

/// Knowledge about a deal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Constraint {
    /// `card` is held by `holder`.
    Fixed { card: Card, holder: Holder },
    /// Exactly `count` of `cards` are held by `holder`.
    Group {
        cards: Vec<Card>,
        holder: Holder,
        count: usize,
    },
}

type CardGroup = (Vec<usize>, Holder, usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DealSpec {
    pub deck: Vec<Card>,
    pub players: usize,
    pub hand_size: usize,
    #[serde(default)]
    pub skat_size: usize,
    #[serde(default = "default_game")]
    pub game: GameType,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

fn default_game() -> GameType {
    GameType::Suit(Suit::Spades)
}

impl DealSpec {
    pub fn new(deck: Vec<Card>, players: usize, hand_size: usize, skat_size: usize, game: GameType) -> Self {
        DealSpec {
            deck,
            players,
            hand_size,
            skat_size,
            game,
            constraints: Vec::new(),
        }
    }

    pub fn with_constraint(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    /// Holders in code order.
    pub fn holders(&self) -> Vec<Holder> {
        let mut h: Vec<Holder> = (0..self.players as u8).map(Holder::Player).collect();
        if self.skat_size > 0 {
            h.push(Holder::Skat);
        }
        h
    }

    pub fn capacity(&self, holder: Holder) -> usize {
        match holder {
            Holder::Player(s) if (s as usize) < self.players => self.hand_size,
            Holder::Skat => self.skat_size,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<(), EncodingError> {
        let bad = |m: String| Err(EncodingError::InconsistentSpec(m));
        check_unique(&self.deck)?;
        if !(2..=3).contains(&self.players) {
            return bad(format!("{} players (expected 2 or 3)", self.players));
        }
        if self.skat_size != 0 && self.skat_size != 2 {
            return bad(format!("skat size {} (expected 0 or 2)", self.skat_size));
        }
        if self.hand_size == 0 {
            return bad("hand size 0".into());
        }
        if self.players * self.hand_size + self.skat_size != self.deck.len() {
            return bad(format!(
                "{} players x {} cards + {} skat != {} cards",
                self.players,
                self.hand_size,
                self.skat_size,
                self.deck.len()
            ));
        }
        for c in &self.constraints {
            let (cards, holder) = match c {
                Constraint::Fixed { card, holder } => (std::slice::from_ref(card), *holder),
                Constraint::Group { cards, holder, .. } => (cards.as_slice(), *holder),
            };
            if self.capacity(holder) == 0 {
                return bad(format!("holder {holder} does not exist"));
            }
            for card in cards {
                if !self.deck.contains(card) {
                    return Err(EncodingError::UnknownCard(*card));
                }
            }
            if let Constraint::Group { cards, count, .. } = c {
                check_unique(cards)?;
                if *count > cards.len() {
                    return bad(format!("group asks for {count} of {} cards", cards.len()));
                }
            }
        }
        Ok(())
    }

    /// Expands constraints into per-card fixed holders and counted groups.
    fn normalized(&self) -> Result<(Vec<Option<Holder>>, Vec<CardGroup>), EncodingError> {
        self.validate()?;
        let index: HashMap<Card, usize> = self.deck.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut fixed: Vec<Option<Holder>> = vec![None; self.deck.len()];
        let mut groups = Vec::new();
        for c in &self.constraints {
            match c {
                Constraint::Fixed { card, holder } => {
                    let i = index[card];
                    match fixed[i] {
                        Some(h) if h != *holder => {
                            return Err(EncodingError::InconsistentSpec(format!(
                                "card {card} fixed to both {h} and {holder}"
                            )))
                        }
                        _ => fixed[i] = Some(*holder),
                    }
                }
                Constraint::Group { cards, holder, count } => {
                    groups.push((cards.iter().map(|c| index[c]).collect(), *holder, *count));
                }
            }
        }
        Ok((fixed, groups))
    }
}

/// One holder per deck card, aligned with `DealSpec::deck`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Deal {
    pub holders: Vec<Holder>,
}

impl Deal {
    pub fn hand(&self, deck: &[Card], holder: Holder) -> Vec<Card> {
        deck.iter()
            .zip(&self.holders)
            .filter(|(_, h)| **h == holder)
            .map(|(c, _)| *c)
            .collect()
    }

    pub fn holder_of(&self, deck: &[Card], card: Card) -> Option<Holder> {
        deck.iter().position(|&c| c == card).map(|i| self.holders[i])
    }
}

fn factorial(n: usize) -> BigUint {
    (1..=n as u64).fold(BigUint::one(), |acc, k| acc * k)
}

fn multinomial(parts: &[usize]) -> BigUint {
    let n: usize = parts.iter().sum();
    parts.iter().fold(factorial(n), |acc, &p| acc / factorial(p))
}

/// Compositions of `m` into `caps.len()` parts bounded by `caps`.
fn compositions(m: usize, caps: &[usize], out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>) {
    if cur.len() == caps.len() {
        if m == 0 {
            out.push(cur.clone());
        }
        return;
    }
    let rest: usize = caps[cur.len() + 1..].iter().sum();
    let cap = caps[cur.len()].min(m);
    for a in m.saturating_sub(rest)..=cap {
        cur.push(a);
        compositions(m - a, caps, out, cur);
        cur.pop();
    }
}

/// Exact number of deals satisfying `spec`.
pub fn deal_count(spec: &DealSpec) -> Result<BigUint, EncodingError> {
    let (fixed, groups) = spec.normalized()?;
    let holders = spec.holders();
    let mut caps: Vec<usize> = holders.iter().map(|h| spec.capacity(*h)).collect();
    let mut remaining: Vec<i64> = groups.iter().map(|g| g.2 as i64).collect();
    // Fixed cards use up capacity and group quota up front.
    for (i, f) in fixed.iter().enumerate() {
        if let Some(h) = f {
            let hi = holders.iter().position(|x| x == h).unwrap();
            if caps[hi] == 0 {
                return Ok(BigUint::zero());
            }
            caps[hi] -= 1;
            for (g, (cards, gh, _)) in groups.iter().enumerate() {
                if gh == h && cards.contains(&i) {
                    remaining[g] -= 1;
                }
            }
        }
    }
    if remaining.iter().any(|&r| r < 0) {
        return Ok(BigUint::zero());
    }
    // Free cards fall into classes by the set of groups that mention them.
    let mut classes: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for (i, f) in fixed.iter().enumerate() {
        if f.is_none() {
            let sig: Vec<usize> = groups
                .iter()
                .enumerate()
                .filter(|(_, g)| g.0.contains(&i))
                .map(|(g, _)| g)
                .collect();
            *classes.entry(sig).or_insert(0) += 1;
        }
    }
    let classes: Vec<(Vec<usize>, usize)> = classes.into_iter().collect();
    let group_holder: Vec<usize> = groups
        .iter()
        .map(|g| holders.iter().position(|x| *x == g.1).unwrap())
        .collect();
    let mut memo = HashMap::new();
    Ok(count_classes(0, &classes, &caps, &remaining, &group_holder, &mut memo))
}

type Memo = HashMap<(usize, Vec<usize>, Vec<i64>), BigUint>;

fn count_classes(
    idx: usize,
    classes: &[(Vec<usize>, usize)],
    caps: &[usize],
    remaining: &[i64],
    group_holder: &[usize],
    memo: &mut Memo,
) -> BigUint {
    if idx == classes.len() {
        return if caps.iter().all(|&c| c == 0) && remaining.iter().all(|&r| r == 0) {
            BigUint::one()
        } else {
            BigUint::zero()
        };
    }
    let key = (idx, caps.to_vec(), remaining.to_vec());
    if let Some(v) = memo.get(&key) {
        return v.clone();
    }
    let (sig, m) = &classes[idx];
    let mut parts = Vec::new();
    compositions(*m, caps, &mut parts, &mut Vec::new());
    let mut total = BigUint::zero();
    for a in parts {
        let mut rem = remaining.to_vec();
        let mut ok = true;
        for &g in sig {
            rem[g] -= a[group_holder[g]] as i64;
            if rem[g] < 0 {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let next_caps: Vec<usize> = caps.iter().zip(&a).map(|(c, x)| c - x).collect();
        let sub = count_classes(idx + 1, classes, &next_caps, &rem, group_holder, memo);
        if !sub.is_zero() {
            total += multinomial(&a) * sub;
        }
    }
    memo.insert(key, total.clone());
    total
}

/// All deals satisfying `spec`, ordered by card index then holder code.
pub fn enumerate_deals(spec: &DealSpec, cap: u64) -> Result<Vec<Deal>, EncodingError> {
    let count = deal_count(spec)?;
    if count > BigUint::from(cap) {
        return Err(EncodingError::CapExceeded { count, cap });
    }
    let (fixed, groups) = spec.normalized()?;
    let holders = spec.holders();
    let n = spec.deck.len();
    let mut st = Enumerator {
        fixed: &fixed,
        groups: &groups,
        holders: &holders,
        caps: holders.iter().map(|h| spec.capacity(*h)).collect(),
        taken: vec![0; groups.len()],
        // open[g][i]: members of group g at card index >= i
        open: groups
            .iter()
            .map(|(cards, _, _)| {
                let mut v = vec![0usize; n + 1];
                for i in (0..n).rev() {
                    v[i] = v[i + 1] + cards.contains(&i) as usize;
                }
                v
            })
            .collect(),
        cur: Vec::with_capacity(n),
        out: Vec::with_capacity(count.to_usize().unwrap_or(0)),
    };
    st.walk(0);
    Ok(st.out)
}

struct Enumerator<'a> {
    fixed: &'a [Option<Holder>],
    groups: &'a [(Vec<usize>, Holder, usize)],
    holders: &'a [Holder],
    caps: Vec<usize>,
    taken: Vec<usize>,
    open: Vec<Vec<usize>>,
    cur: Vec<Holder>,
    out: Vec<Deal>,
}

impl Enumerator<'_> {
    fn walk(&mut self, i: usize) {
        if i == self.fixed.len() {
            if self.taken.iter().zip(self.groups).all(|(t, g)| *t == g.2) {
                self.out.push(Deal {
                    holders: self.cur.clone(),
                });
            }
            return;
        }
        for hi in 0..self.holders.len() {
            let h = self.holders[hi];
            if self.caps[hi] == 0 || self.fixed[i].is_some_and(|f| f != h) {
                continue;
            }
            let mut ok = true;
            for (g, (cards, gh, count)) in self.groups.iter().enumerate() {
                if !cards.contains(&i) {
                    continue;
                }
                let add = (*gh == h) as usize;
                let taken = self.taken[g] + add;
                // quota can neither be exceeded nor become unreachable
                if taken > *count || taken + self.open[g][i + 1] < *count {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            self.caps[hi] -= 1;
            for (g, (cards, gh, _)) in self.groups.iter().enumerate() {
                if *gh == h && cards.contains(&i) {
                    self.taken[g] += 1;
                }
            }
            self.cur.push(h);
            self.walk(i + 1);
            self.cur.pop();
            for (g, (cards, gh, _)) in self.groups.iter().enumerate() {
                if *gh == h && cards.contains(&i) {
                    self.taken[g] -= 1;
                }
            }
            self.caps[hi] += 1;
        }
    }
}

/// Where a card sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Hand,
    Table,
    Stack,
}

/// Qubit indices of one card.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CardQubits {
    pub card: Card,
    /// Holder code, most significant bit first.
    pub player: Vec<usize>,
    pub table: usize,
    pub stack: usize,
    pub suit_follow: Option<usize>,
    pub ancilla: usize,
    /// Index of the trick that swept the card (0 while in play), least significant bit first.
    pub tag: Vec<usize>,
    /// Copy of the player bits taken when the trick is swept.
    pub holder_copy: Vec<usize>,
}

/// Qubit layout for a deck.
///
/// Card blocks come first (player bits, table, stack and for three players a
/// suit-follow qubit), then one shared scratch qubit, then one play ancilla
/// per card. Everything up to here is the visible register. The trick history
/// used to keep trick taking reversible follows.
#[derive(Clone, Debug, PartialEq)]
pub struct CardLayout {
    pub cards: Vec<CardQubits>,
    pub players: usize,
    pub has_skat: bool,
    pub rounds: usize,
    pub game: GameType,
    pub scratch: usize,
    pub visible_width: usize,
    pub width: usize,
}

impl CardLayout {
    pub fn for_spec(spec: &DealSpec) -> Result<Self, EncodingError> {
        spec.validate()?;
        Self::build(&spec.deck, spec.players, spec.skat_size > 0, spec.hand_size, spec.game)
    }

    pub fn build(
        deck: &[Card],
        players: usize,
        has_skat: bool,
        rounds: usize,
        game: GameType,
    ) -> Result<Self, EncodingError> {
        let order = build_order(deck, game)?;
        let mut sorted = deck.to_vec();
        order.sort_canonical(&mut sorted);
        let player_bits = if players == 2 && !has_skat { 1 } else { 2 };
        let tag_bits = usize::BITS as usize - rounds.leading_zeros() as usize;
        let mut next = 0usize;
        let mut alloc = |n: usize| {
            let v: Vec<usize> = (next..next + n).collect();
            next += n;
            v
        };
        let mut cards: Vec<CardQubits> = sorted
            .iter()
            .map(|&card| {
                let player = alloc(player_bits);
                let table = alloc(1)[0];
                let stack = alloc(1)[0];
                let suit_follow = if players >= 3 { Some(alloc(1)[0]) } else { None };
                CardQubits {
                    card,
                    player,
                    table,
                    stack,
                    suit_follow,
                    ancilla: 0,
                    tag: Vec::new(),
                    holder_copy: Vec::new(),
                }
            })
            .collect();
        let scratch = alloc(1)[0];
        for cq in cards.iter_mut() {
            cq.ancilla = alloc(1)[0];
        }
        let visible_width = cards.last().map_or(scratch + 1, |c| c.ancilla + 1);
        for cq in cards.iter_mut() {
            cq.tag = alloc(tag_bits);
            cq.holder_copy = alloc(player_bits);
        }
        let width = cards.last().map_or(visible_width, |c| {
            c.holder_copy.last().copied().unwrap_or(visible_width) + 1
        });
        if width > MAX_QUBITS {
            return Err(EncodingError::LayoutTooWide(width));
        }
        Ok(CardLayout {
            cards,
            players,
            has_skat,
            rounds,
            game,
            scratch,
            visible_width,
            width,
        })
    }

    pub fn order(&self) -> TrickOrder {
        TrickOrder::new(self.game)
    }

    pub fn index_of(&self, card: Card) -> Option<usize> {
        self.cards.iter().position(|c| c.card == card)
    }

    pub fn qubits(&self, card: Card) -> Option<&CardQubits> {
        self.cards.iter().find(|c| c.card == card)
    }

    pub fn deck(&self) -> Vec<Card> {
        self.cards.iter().map(|c| c.card).collect()
    }

    pub fn total_points(&self) -> u32 {
        self.cards.iter().map(|c| c.card.points()).sum()
    }

    pub fn holder_code(&self, holder: Holder) -> u8 {
        holder.code()
    }

    pub fn holder_from_code(&self, code: u8) -> Option<Holder> {
        if (code as usize) < self.players {
            Some(Holder::Player(code))
        } else if code == 3 && self.has_skat {
            Some(Holder::Skat)
        } else {
            None
        }
    }

    /// Control pairs fixing `bits` to `code` (first listed qubit is the high bit).
    pub fn code_pattern(bits: &[usize], code: u8) -> Vec<(usize, bool)> {
        let n = bits.len();
        bits.iter()
            .enumerate()
            .map(|(j, &q)| (q, (code >> (n - 1 - j)) & 1 == 1))
            .collect()
    }

    pub fn read_code(key: BasisIndex, bits: &[usize]) -> u8 {
        bits.iter().fold(0u8, |acc, &q| (acc << 1) | key.bit(q) as u8)
    }

    pub fn player_code(&self, key: BasisIndex, card_idx: usize) -> u8 {
        Self::read_code(key, &self.cards[card_idx].player)
    }

    /// Trick index stored in the history tag (least significant bit first).
    pub fn tag(&self, key: BasisIndex, card_idx: usize) -> usize {
        self.cards[card_idx]
            .tag
            .iter()
            .enumerate()
            .fold(0usize, |acc, (b, &q)| acc | ((key.bit(q) as usize) << b))
    }

    pub fn tag_pattern(&self, card_idx: usize, round: usize) -> Vec<(usize, bool)> {
        self.cards[card_idx]
            .tag
            .iter()
            .enumerate()
            .map(|(b, &q)| (q, (round >> b) & 1 == 1))
            .collect()
    }

    pub fn location(&self, key: BasisIndex, card_idx: usize) -> Result<Location, EncodingError> {
        let c = &self.cards[card_idx];
        match (key.bit(c.table), key.bit(c.stack)) {
            (false, false) => Ok(Location::Hand),
            (true, false) => Ok(Location::Table),
            (true, true) => Ok(Location::Stack),
            (false, true) => Err(EncodingError::MalformedLocation(c.card)),
        }
    }

    pub fn encode_deal(&self, spec: &DealSpec, deal: &Deal) -> Result<BasisIndex, EncodingError> {
        let mut key = BasisIndex::ZERO;
        for (card, holder) in spec.deck.iter().zip(&deal.holders) {
            let idx = self.index_of(*card).ok_or(EncodingError::UnknownCard(*card))?;
            for (q, v) in Self::code_pattern(&self.cards[idx].player, holder.code()) {
                key = key.with_bit(q, v);
            }
        }
        Ok(key)
    }

    pub fn decode_basis(&self, key: BasisIndex) -> Result<Vec<DecodedCard>, EncodingError> {
        if !key.fits(self.width) {
            return Err(SimError::BasisOutOfRange(self.width).into());
        }
        (0..self.cards.len())
            .map(|i| {
                let card = self.cards[i].card;
                let holder = self
                    .holder_from_code(self.player_code(key, i))
                    .ok_or(EncodingError::BadHolderCode(card))?;
                Ok(DecodedCard {
                    card,
                    holder,
                    location: self.location(key, i)?,
                    played: key.bit(self.cards[i].ancilla),
                    trick: self.tag(key, i),
                })
            })
            .collect()
    }

    /// Visible-register label of a key.
    pub fn visible_label(&self, key: BasisIndex) -> String {
        key.label(self.visible_width)
    }

    pub fn visible_qubits(&self) -> Vec<usize> {
        (0..self.visible_width).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DecodedCard {
    pub card: Card,
    pub holder: Holder,
    pub location: Location,
    pub played: bool,
    pub trick: usize,
}

/// Equal superposition over every deal allowed by `spec`.
pub fn initial_state(spec: &DealSpec, layout: &CardLayout) -> Result<SparseState, EncodingError> {
    let deals = enumerate_deals(spec, DEFAULT_DEAL_CAP)?;
    let keys = deals
        .iter()
        .map(|d| layout.encode_deal(spec, d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(prepare_superposition(layout.width, &keys)?)
}

/// Deck of the four-card two-player example: clubs A, 10, K, Q.
pub fn toy_spec() -> DealSpec {
    let deck = [Rank::Ace, Rank::Ten, Rank::King, Rank::Queen]
        .iter()
        .map(|&r| Card::new(Suit::Clubs, r))
        .collect();
    DealSpec::new(deck, 2, 2, 0, GameType::Suit(Suit::Spades))
}

/// Full 32-card deal: three hands of ten plus a two-card Skat.
pub fn full_spec(game: GameType) -> DealSpec {
    DealSpec::new(full_deck(), 3, 10, 2, game)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> Card {
        s.parse().unwrap()
    }

    #[test]
    fn card_parsing() {
        assert_eq!(c("H10"), Card::new(Suit::Hearts, Rank::Ten));
        assert_eq!(c("ht"), Card::new(Suit::Hearts, Rank::Ten));
        assert_eq!(c("CJ").to_string(), "CJ");
        assert!("X7".parse::<Card>().is_err());
        assert!("H1".parse::<Card>().is_err());
        let v: Card = serde_json::from_str(r#"{"suit":"C","rank":"A"}"#).unwrap();
        assert_eq!(v, c("CA"));
        let v: Card = serde_json::from_str(r#""SJ""#).unwrap();
        assert_eq!(v, c("SJ"));
        assert_eq!(serde_json::to_string(&c("H10")).unwrap(), r#"{"suit":"H","rank":"10"}"#);
    }

    #[test]
    fn deck_totals() {
        let deck = full_deck();
        assert_eq!(deck.len(), 32);
        assert_eq!(deck_points(&deck), 120);
        for s in Suit::ALL {
            let suit: Vec<Card> = deck.iter().copied().filter(|c| c.suit == s).collect();
            assert_eq!(deck_points(&suit), 30);
        }
    }

    #[test]
    fn order_examples() {
        let o = TrickOrder::new(GameType::Suit(Suit::Spades));
        assert_eq!(o.beats(c("CJ"), c("SJ")), Beats::Yes);
        assert_eq!(o.beats(c("S7"), c("HA")), Beats::Yes);
        assert_eq!(o.beats(c("HA"), c("CA")), Beats::Incomparable);
        assert_eq!(o.beats(c("DJ"), c("SA")), Beats::Yes);
        assert_eq!(o.beats(c("H10"), c("HK")), Beats::Yes);
        assert_eq!(o.beats(c("HK"), c("H10")), Beats::No);
    }

    #[test]
    fn order_is_a_strict_partial_order() {
        let deck = full_deck();
        for game in [
            GameType::Suit(Suit::Spades),
            GameType::Suit(Suit::Diamonds),
            GameType::Grand,
        ] {
            let o = TrickOrder::new(game);
            for &a in &deck {
                assert_eq!(o.beats(a, a), Beats::No);
                for &b in &deck {
                    let ab = o.beats(a, b);
                    let ba = o.beats(b, a);
                    if ab == Beats::Yes {
                        assert_eq!(ba, Beats::No);
                        for &x in &deck {
                            if o.beats(b, x) == Beats::Yes {
                                assert_eq!(o.beats(a, x), Beats::Yes, "{a} {b} {x}");
                            }
                        }
                    }
                    assert_eq!(ab == Beats::Incomparable, ba == Beats::Incomparable);
                }
            }
        }
    }

    #[test]
    fn canonical_order_respects_beats() {
        let o = TrickOrder::new(GameType::Suit(Suit::Spades));
        let mut deck = full_deck();
        o.sort_canonical(&mut deck);
        assert_eq!(deck[0], c("CJ"));
        assert_eq!(deck[4], c("SA"));
        assert_eq!(deck[10], c("S7"));
        for i in 0..deck.len() {
            for j in i + 1..deck.len() {
                assert_ne!(o.beats(deck[j], deck[i]), Beats::Yes);
            }
        }
    }

    #[test]
    fn golden_counts() {
        let full = full_spec(GameType::Suit(Suit::Spades));
        assert_eq!(deal_count(&full).unwrap().to_string(), "2753294408504640");
        assert_eq!(deal_count(&toy_spec()).unwrap(), BigUint::from(6u32));
    }

    #[test]
    fn count_with_known_hand() {
        let mut spec = full_spec(GameType::Suit(Suit::Spades));
        for card in spec.deck.clone().into_iter().take(10) {
            spec.constraints.push(Constraint::Fixed {
                card,
                holder: Holder::Player(0),
            });
        }
        assert_eq!(deal_count(&spec).unwrap(), BigUint::from(42_678_636u64));
    }

    #[test]
    fn enumeration_order_and_count() {
        let deals = enumerate_deals(&toy_spec(), DEFAULT_DEAL_CAP).unwrap();
        assert_eq!(deals.len(), 6);
        assert!(deals.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(deals[0].holders[0], Holder::Player(0));
        assert_eq!(deals[0].holders[1], Holder::Player(0));
    }

    #[test]
    fn fully_constrained_spec() {
        let mut spec = toy_spec();
        for (card, s) in spec.deck.clone().into_iter().zip([0u8, 1, 1, 0]) {
            spec.constraints.push(Constraint::Fixed {
                card,
                holder: Holder::Player(s),
            });
        }
        assert_eq!(enumerate_deals(&spec, 10).unwrap().len(), 1);
        let layout = CardLayout::for_spec(&spec).unwrap();
        assert_eq!(initial_state(&spec, &layout).unwrap().len(), 1);
    }

    #[test]
    fn cap_is_enforced() {
        let spec = full_spec(GameType::Grand);
        assert!(matches!(
            enumerate_deals(&spec, 1000),
            Err(EncodingError::CapExceeded { .. })
        ));
    }

    #[test]
    fn inconsistent_specs() {
        let mut spec = toy_spec();
        spec.hand_size = 3;
        assert!(deal_count(&spec).is_err());
        let mut spec = toy_spec();
        spec.players = 4;
        assert!(deal_count(&spec).is_err());
        let spec = toy_spec().with_constraint(Constraint::Fixed {
            card: c("SA"),
            holder: Holder::Player(0),
        });
        assert!(matches!(deal_count(&spec), Err(EncodingError::UnknownCard(_))));
    }

    #[test]
    fn toy_layout_matches_register_plan() {
        let layout = CardLayout::for_spec(&toy_spec()).unwrap();
        assert_eq!(layout.visible_width, 17);
        assert_eq!(layout.scratch, 12);
        assert_eq!(layout.cards[0].player, vec![0]);
        assert_eq!(layout.cards[1].table, 4);
        assert_eq!(layout.cards[3].ancilla, 16);
        assert_eq!(layout.cards[0].card, c("CA"));
    }

    #[test]
    fn toy_encoding_worked_example() {
        let spec = toy_spec();
        let layout = CardLayout::for_spec(&spec).unwrap();
        let deal = Deal {
            holders: vec![
                Holder::Player(0),
                Holder::Player(0),
                Holder::Player(1),
                Holder::Player(1),
            ],
        };
        let key = layout.encode_deal(&spec, &deal).unwrap();
        assert_eq!(layout.visible_label(key), "00000010010000000");
        for d in enumerate_deals(&spec, 100).unwrap() {
            let key = layout.encode_deal(&spec, &d).unwrap();
            let decoded = layout.decode_basis(key).unwrap();
            let back: Vec<Holder> = spec
                .deck
                .iter()
                .map(|card| decoded.iter().find(|x| x.card == *card).unwrap().holder)
                .collect();
            assert_eq!(back, d.holders);
            assert!(decoded.iter().all(|x| x.location == Location::Hand && !x.played));
        }
    }

    #[test]
    fn three_player_skat_code() {
        let spec = DealSpec::new(
            parse_cards("CJ SJ HJ DJ SA S10 S7 H7").unwrap(),
            3,
            2,
            2,
            GameType::Suit(Suit::Spades),
        );
        let layout = CardLayout::for_spec(&spec).unwrap();
        let idx = layout.index_of(c("H7")).unwrap();
        let mut key = BasisIndex::ZERO;
        for &q in &layout.cards[idx].player {
            key = key.with_bit(q, true);
        }
        let decoded = layout.decode_basis(key).unwrap();
        assert_eq!(decoded[idx].holder, Holder::Skat);
        assert_eq!(decoded[idx].location, Location::Hand);
        assert!(layout.cards[idx].suit_follow.is_some());
    }

    #[test]
    fn malformed_location_rejected() {
        let layout = CardLayout::for_spec(&toy_spec()).unwrap();
        let key = BasisIndex::ZERO.with_bit(layout.cards[0].stack, true);
        assert!(matches!(
            layout.decode_basis(key),
            Err(EncodingError::MalformedLocation(_))
        ));
    }

    #[test]
    fn spec_json_roundtrip() {
        let json = r#"{"deck":["CA","C10",{"suit":"C","rank":"K"},"CQ"],"players":2,"hand_size":2,
            "skat_size":0,"game":{"variant":"suit","trump":"S"},
            "constraints":[{"card":{"suit":"C","rank":"A"},"holder":0}]}"#;
        let spec: DealSpec = serde_json::from_str(json).unwrap();
        assert_eq!(deal_count(&spec).unwrap(), BigUint::from(3u32));
        let back: DealSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
