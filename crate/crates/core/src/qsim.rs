//! Sparse statevector simulator.
//!
//! A [`SparseState`] stores only the basis states that carry a non-negligible
//! amplitude. Game dynamics populate a few thousand keys at most while the
//! registers span up to a hundred qubits, so a map keyed by the bit pattern is
//! the only practical representation.
//!
//! Gates act on the state in place through [`SparseState::apply`]; every gate
//! takes an additional [`ControlSpec`] (a conjunction of required qubit values)
//! and is the identity on branches where the controls do not match.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Amplitudes with magnitude below this are dropped after every gate.
pub const PRUNE_THRESHOLD: f64 = 1e-12;
/// Allowed deviation of the squared norm from one.
pub const NORM_TOLERANCE: f64 = 1e-9;
/// Widest register a [`BasisIndex`] can address.
pub const MAX_QUBITS: usize = 128;
/// Largest dense block accepted by [`GateOp::SmallUnitary`].
pub const MAX_SMALL_UNITARY_QUBITS: usize = 6;

pub type Amplitude = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("qubit {qubit} is out of range for a {width}-qubit register")]
    QubitOutOfRange { qubit: usize, width: usize },
    #[error("register width {0} exceeds the supported maximum of {MAX_QUBITS}")]
    WidthTooLarge(usize),
    #[error("qubit {0} appears more than once")]
    DuplicateQubit(usize),
    #[error("qubit {0} is used both as control and as target")]
    ControlTargetOverlap(usize),
    #[error("matrix has {got} entries, expected {expected}")]
    MatrixShape { got: usize, expected: usize },
    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("a dense block may act on at most {MAX_SMALL_UNITARY_QUBITS} qubits, got {0}")]
    TooManyTargets(usize),
    #[error("SP gate needs at least one target")]
    EmptySp,
    #[error("SP targets are not all |0> on active branch {0}")]
    SpTargetsNotZero(String),
    #[error("scratch qubit {0} is not |0> on every branch")]
    ScratchDirty(usize),
    #[error("basis set is empty")]
    EmptyBasisSet,
    #[error("basis index {0} appears more than once")]
    DuplicateBasis(String),
    #[error("basis index does not fit in {0} qubits")]
    BasisOutOfRange(usize),
    #[error("shot count must be positive")]
    ZeroShots,
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("amplitude is not finite")]
    NonFinite,
    #[error("relabeling maps two branches onto basis state {0}")]
    RelabelCollision(String),
    #[error("post-selection removed every branch")]
    EmptyPostselection,
    #[error("gate program moved branch {0} out of its pattern")]
    PatternLeak(String),
}

/// A computational-basis ket; bit `q` holds the value of qubit `q`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasisIndex(pub u128);

impl BasisIndex {
    pub const ZERO: BasisIndex = BasisIndex(0);

    #[inline]
    pub fn bit(self, qubit: usize) -> bool {
        (self.0 >> qubit) & 1 == 1
    }

    #[inline]
    pub fn with_bit(self, qubit: usize, value: bool) -> Self {
        if value {
            BasisIndex(self.0 | (1u128 << qubit))
        } else {
            BasisIndex(self.0 & !(1u128 << qubit))
        }
    }

    #[inline]
    pub fn flipped(self, qubit: usize) -> Self {
        BasisIndex(self.0 ^ (1u128 << qubit))
    }

    /// `true` if no bit at or above `width` is set.
    pub fn fits(self, width: usize) -> bool {
        width >= MAX_QUBITS || self.0 >> width == 0
    }

    /// Packs the listed qubits into a small integer, bit `j` taken from `qubits[j]`.
    pub fn gather(self, qubits: &[usize]) -> u128 {
        qubits
            .iter()
            .enumerate()
            .fold(0u128, |acc, (j, &q)| acc | ((self.bit(q) as u128) << j))
    }

    /// ASCII label with character `i` showing qubit `i`.
    pub fn label(self, width: usize) -> String {
        (0..width).map(|q| if self.bit(q) { '1' } else { '0' }).collect()
    }

    /// Inverse of [`BasisIndex::label`].
    pub fn from_label(label: &str) -> Option<Self> {
        if label.len() > MAX_QUBITS {
            return None;
        }
        let mut bits = 0u128;
        for (q, c) in label.chars().enumerate() {
            match c {
                '0' => {}
                '1' => bits |= 1u128 << q,
                _ => return None,
            }
        }
        Some(BasisIndex(bits))
    }
}

fn qubit_mask(qubits: &[usize]) -> u128 {
    qubits.iter().fold(0u128, |m, &q| m | (1u128 << q))
}

/// Conjunction of required qubit values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ControlSpec {
    conditions: Vec<(usize, bool)>,
}

impl ControlSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, bool)>) -> Self {
        ControlSpec {
            conditions: pairs.into_iter().collect(),
        }
    }

    /// Builder form of [`ControlSpec::push`].
    pub fn on(mut self, qubit: usize, value: bool) -> Self {
        self.push(qubit, value);
        self
    }

    pub fn push(&mut self, qubit: usize, value: bool) {
        self.conditions.push((qubit, value));
    }

    pub fn extend(&mut self, other: &ControlSpec) {
        self.conditions.extend_from_slice(&other.conditions);
    }

    pub fn joined(&self, other: &ControlSpec) -> ControlSpec {
        let mut out = self.clone();
        out.extend(other);
        out
    }

    pub fn conditions(&self) -> &[(usize, bool)] {
        &self.conditions
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.conditions.iter().map(|&(q, _)| q)
    }

    /// `(mask, value)` such that a key matches iff `key & mask == value`.
    pub fn masks(&self) -> (u128, u128) {
        self.conditions.iter().fold((0u128, 0u128), |(m, v), &(q, b)| {
            (m | (1u128 << q), if b { v | (1u128 << q) } else { v })
        })
    }

    pub fn matches(&self, key: BasisIndex) -> bool {
        let (mask, value) = self.masks();
        key.0 & mask == value
    }

    fn validate(&self, width: usize) -> Result<(), SimError> {
        let mut seen = 0u128;
        for &(q, _) in &self.conditions {
            check_qubit(q, width)?;
            if seen & (1u128 << q) != 0 {
                return Err(SimError::DuplicateQubit(q));
            }
            seen |= 1u128 << q;
        }
        Ok(())
    }
}

fn check_qubit(q: usize, width: usize) -> Result<(), SimError> {
    if q >= width {
        Err(SimError::QubitOutOfRange { qubit: q, width })
    } else {
        Ok(())
    }
}

/// Dense unitary on up to six qubits. Local basis index bit `j` is `targets[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallUnitary {
    targets: Vec<usize>,
    matrix: Vec<Complex64>,
}

impl SmallUnitary {
    /// Row-major `2^k x 2^k` matrix; checked for unitarity within [`NORM_TOLERANCE`].
    pub fn new(targets: Vec<usize>, matrix: Vec<Complex64>) -> Result<Self, SimError> {
        let k = targets.len();
        if k == 0 || k > MAX_SMALL_UNITARY_QUBITS {
            return Err(SimError::TooManyTargets(k));
        }
        check_distinct(&targets)?;
        let dim = 1usize << k;
        if matrix.len() != dim * dim {
            return Err(SimError::MatrixShape {
                got: matrix.len(),
                expected: dim * dim,
            });
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SimError::NonFinite);
        }
        let mut worst = 0.0f64;
        for r in 0..dim {
            for c in 0..dim {
                let dot: Complex64 = (0..dim).map(|i| matrix[i * dim + r].conj() * matrix[i * dim + c]).sum();
                let expected = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((dot - Complex64::new(expected, 0.0)).norm());
            }
        }
        if worst > NORM_TOLERANCE {
            return Err(SimError::NotUnitary(worst));
        }
        Ok(SmallUnitary { targets, matrix })
    }

    /// Real rotation `[[cos, -sin], [sin, cos]]` taking |0> to `cos|0> + sin|1>`.
    pub fn ry(target: usize, cos: f64, sin: f64) -> Result<Self, SimError> {
        let c = Complex64::new(cos, 0.0);
        let s = Complex64::new(sin, 0.0);
        Self::new(vec![target], vec![c, -s, s, c])
    }

    /// `diag(1, e^{i angle})`.
    pub fn phase(target: usize, angle: f64) -> Result<Self, SimError> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self::new(vec![target], vec![one, zero, zero, Complex64::from_polar(1.0, angle)])
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    pub fn adjoint(&self) -> SmallUnitary {
        let dim = 1usize << self.targets.len();
        let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                m[c * dim + r] = self.matrix[r * dim + c].conj();
            }
        }
        SmallUnitary {
            targets: self.targets.clone(),
            matrix: m,
        }
    }
}

fn check_distinct(qubits: &[usize]) -> Result<(), SimError> {
    let mut seen = 0u128;
    for &q in qubits {
        if q >= MAX_QUBITS {
            return Err(SimError::QubitOutOfRange {
                qubit: q,
                width: MAX_QUBITS,
            });
        }
        if seen & (1u128 << q) != 0 {
            return Err(SimError::DuplicateQubit(q));
        }
        seen |= 1u128 << q;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum GateOp {
    PauliX(usize),
    Hadamard(usize),
    Cnot {
        control: usize,
        target: usize,
    },
    MultiControlledX {
        controls: Vec<usize>,
        target: usize,
    },
    /// Maps |0...0> on `targets` to the equal one-hot superposition.
    Sp {
        targets: Vec<usize>,
        scratch: usize,
    },
    SmallUnitary(SmallUnitary),
}

impl GateOp {
    /// Qubits whose value the gate may change.
    pub fn targets(&self) -> Vec<usize> {
        match self {
            GateOp::PauliX(t) | GateOp::Hadamard(t) => vec![*t],
            GateOp::Cnot { target, .. } | GateOp::MultiControlledX { target, .. } => vec![*target],
            GateOp::Sp { targets, .. } => targets.clone(),
            GateOp::SmallUnitary(u) => u.targets.clone(),
        }
    }

    /// Control qubits that belong to the gate itself (always required to be 1).
    fn own_controls(&self) -> Vec<usize> {
        match self {
            GateOp::Cnot { control, .. } => vec![*control],
            GateOp::MultiControlledX { controls, .. } => controls.clone(),
            _ => Vec::new(),
        }
    }

    fn validate(&self, width: usize) -> Result<(), SimError> {
        let targets = self.targets();
        check_distinct(&targets)?;
        for &t in &targets {
            check_qubit(t, width)?;
        }
        for c in self.own_controls() {
            check_qubit(c, width)?;
            if targets.contains(&c) {
                return Err(SimError::ControlTargetOverlap(c));
            }
        }
        check_distinct(&self.own_controls())?;
        if let GateOp::Sp { targets, scratch } = self {
            if targets.is_empty() {
                return Err(SimError::EmptySp);
            }
            check_qubit(*scratch, width)?;
            if targets.contains(scratch) {
                return Err(SimError::ControlTargetOverlap(*scratch));
            }
        }
        Ok(())
    }

    /// Adjoint for the self-contained gates. `Sp` has no closed-form adjoint;
    /// expand it with [`Circuit::expanded`] first.
    pub fn adjoint(&self) -> Option<GateOp> {
        match self {
            GateOp::Sp { .. } => None,
            GateOp::SmallUnitary(u) => Some(GateOp::SmallUnitary(u.adjoint())),
            other => Some(other.clone()),
        }
    }
}

/// Sparse quantum state: basis key -> amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseState {
    width: usize,
    amps: BTreeMap<BasisIndex, Amplitude>,
}

impl SparseState {
    /// |0...0> on `width` qubits.
    pub fn new(width: usize) -> Result<Self, SimError> {
        Self::basis(width, BasisIndex::ZERO)
    }

    pub fn basis(width: usize, key: BasisIndex) -> Result<Self, SimError> {
        if width > MAX_QUBITS {
            return Err(SimError::WidthTooLarge(width));
        }
        if !key.fits(width) {
            return Err(SimError::BasisOutOfRange(width));
        }
        let mut amps = BTreeMap::new();
        amps.insert(key, Complex64::new(1.0, 0.0));
        Ok(SparseState { width, amps })
    }

    /// Builds a state from explicit amplitudes; must be normalized within [`NORM_TOLERANCE`].
    pub fn from_amplitudes(
        width: usize,
        entries: impl IntoIterator<Item = (BasisIndex, Amplitude)>,
    ) -> Result<Self, SimError> {
        if width > MAX_QUBITS {
            return Err(SimError::WidthTooLarge(width));
        }
        let mut amps = BTreeMap::new();
        for (k, a) in entries {
            if !k.fits(width) {
                return Err(SimError::BasisOutOfRange(width));
            }
            if !a.re.is_finite() || !a.im.is_finite() {
                return Err(SimError::NonFinite);
            }
            if a.norm() >= PRUNE_THRESHOLD {
                *amps.entry(k).or_insert(Complex64::new(0.0, 0.0)) += a;
            }
        }
        let state = SparseState { width, amps };
        let n = state.norm_sqr();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(SimError::NotNormalized(n));
        }
        Ok(state)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of stored basis states.
    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BasisIndex, Amplitude)> + '_ {
        self.amps.iter().map(|(k, a)| (*k, *a))
    }

    pub fn keys(&self) -> impl Iterator<Item = BasisIndex> + '_ {
        self.amps.keys().copied()
    }

    pub fn amplitude(&self, key: BasisIndex) -> Amplitude {
        self.amps.get(&key).copied().unwrap_or_default()
    }

    pub fn probability(&self, key: BasisIndex) -> f64 {
        self.amplitude(key).norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    /// Largest |Im(amplitude)| over the support.
    pub fn max_imag(&self) -> f64 {
        self.amps.values().map(|a| a.im.abs()).fold(0.0, f64::max)
    }

    /// Applies `gate` on every branch where `controls` match.
    pub fn apply(&mut self, gate: &GateOp, controls: &ControlSpec) -> Result<(), SimError> {
        gate.validate(self.width)?;
        controls.validate(self.width)?;
        let targets = gate.targets();
        for q in controls.qubits() {
            if targets.contains(&q) || gate.own_controls().contains(&q) {
                return Err(SimError::ControlTargetOverlap(q));
            }
            if let GateOp::Sp { scratch, .. } = gate {
                if q == *scratch {
                    return Err(SimError::ControlTargetOverlap(q));
                }
            }
        }
        let (mut cmask, mut cval) = controls.masks();
        for c in gate.own_controls() {
            cmask |= 1u128 << c;
            cval |= 1u128 << c;
        }
        match gate {
            GateOp::PauliX(t) | GateOp::Cnot { target: t, .. } | GateOp::MultiControlledX { target: t, .. } => {
                self.flip_where(1u128 << t, cmask, cval);
            }
            GateOp::Hadamard(t) => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                self.apply_dense(&[*t], &[h, h, h, -h], cmask, cval);
            }
            GateOp::SmallUnitary(u) => {
                self.apply_dense(&u.targets, &u.matrix, cmask, cval);
            }
            GateOp::Sp { targets, scratch } => {
                self.apply_sp_controlled(targets, *scratch, controls)?;
            }
        }
        Ok(())
    }

    fn flip_where(&mut self, tmask: u128, cmask: u128, cval: u128) {
        let active: Vec<BasisIndex> = self.amps.keys().filter(|k| k.0 & cmask == cval).copied().collect();
        let moved: Vec<(BasisIndex, Amplitude)> = active
            .into_iter()
            .map(|k| (BasisIndex(k.0 ^ tmask), self.amps.remove(&k).unwrap()))
            .collect();
        self.amps.extend(moved);
    }

    fn apply_dense(&mut self, targets: &[usize], matrix: &[Complex64], cmask: u128, cval: u128) {
        let tmask = qubit_mask(targets);
        let dim = 1usize << targets.len();
        let mut groups: BTreeMap<u128, Vec<Complex64>> = BTreeMap::new();
        let active: Vec<BasisIndex> = self.amps.keys().filter(|k| k.0 & cmask == cval).copied().collect();
        for k in active {
            let amp = self.amps.remove(&k).unwrap();
            let local = k.gather(targets) as usize;
            groups
                .entry(k.0 & !tmask)
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); dim])[local] = amp;
        }
        for (base, v) in groups {
            for r in 0..dim {
                let out: Complex64 = (0..dim).map(|c| matrix[r * dim + c] * v[c]).sum();
                if out.norm() >= PRUNE_THRESHOLD {
                    let mut key = base;
                    for (j, &q) in targets.iter().enumerate() {
                        if (r >> j) & 1 == 1 {
                            key |= 1u128 << q;
                        }
                    }
                    self.amps.insert(BasisIndex(key), out);
                }
            }
        }
    }

    fn apply_sp_controlled(
        &mut self,
        targets: &[usize],
        scratch: usize,
        controls: &ControlSpec,
    ) -> Result<(), SimError> {
        let tmask = qubit_mask(targets);
        if let Some(k) = self.amps.keys().find(|k| controls.matches(**k) && k.0 & tmask != 0) {
            return Err(SimError::SpTargetsNotZero(k.label(self.width)));
        }
        if self.amps.keys().any(|k| k.bit(scratch)) {
            return Err(SimError::ScratchDirty(scratch));
        }
        for (gate, ctrl) in sp_expansion(targets, scratch, controls)? {
            self.apply(&gate, &ctrl)?;
        }
        Ok(())
    }

    /// Runs each program only on the branches matching its pattern.
    ///
    /// Patterns must be disjoint, and every program must map its own branches
    /// back into its pattern; this is checked. Branches matching no pattern
    /// are left alone.
    pub fn apply_by_pattern(&mut self, programs: &[(ControlSpec, Vec<(GateOp, ControlSpec)>)]) -> Result<(), SimError> {
        let mut by_mask: BTreeMap<u128, BTreeMap<u128, usize>> = BTreeMap::new();
        for (i, (pattern, _)) in programs.iter().enumerate() {
            let (m, v) = pattern.masks();
            by_mask.entry(m).or_default().insert(v, i);
        }
        let mut parts: Vec<BTreeMap<BasisIndex, Amplitude>> = vec![BTreeMap::new(); programs.len()];
        let mut rest = BTreeMap::new();
        for (k, a) in std::mem::take(&mut self.amps) {
            let hit = by_mask.iter().find_map(|(m, vals)| vals.get(&(k.0 & m)).copied());
            match hit {
                Some(i) => {
                    parts[i].insert(k, a);
                }
                None => {
                    rest.insert(k, a);
                }
            }
        }
        self.amps = rest;
        for ((pattern, ops), amps) in programs.iter().zip(parts) {
            if amps.is_empty() {
                continue;
            }
            let mut sub = SparseState {
                width: self.width,
                amps,
            };
            for (g, c) in ops {
                sub.apply(g, c)?;
            }
            for (k, a) in sub.amps {
                if !pattern.matches(k) {
                    return Err(SimError::PatternLeak(k.label(self.width)));
                }
                *self.amps.entry(k).or_insert(Complex64::new(0.0, 0.0)) += a;
            }
        }
        self.amps.retain(|_, a| a.norm() >= PRUNE_THRESHOLD);
        Ok(())
    }

    /// Applies a classical reversible relabeling of basis states. Fails if two
    /// stored branches land on the same key, so the norm is always preserved.
    pub fn relabel(&self, f: impl Fn(BasisIndex) -> BasisIndex) -> Result<SparseState, SimError> {
        let mut amps = BTreeMap::new();
        for (k, a) in self.iter() {
            let nk = f(k);
            if !nk.fits(self.width) {
                return Err(SimError::BasisOutOfRange(self.width));
            }
            if amps.insert(nk, a).is_some() {
                return Err(SimError::RelabelCollision(nk.label(self.width)));
            }
        }
        Ok(SparseState {
            width: self.width,
            amps,
        })
    }

    /// Projects onto the branches accepted by `keep` and renormalizes.
    pub fn postselect(&self, keep: impl Fn(BasisIndex) -> bool) -> Result<SparseState, SimError> {
        let kept: BTreeMap<BasisIndex, Amplitude> = self.iter().filter(|(k, _)| keep(*k)).collect();
        let n = kept.values().map(|a| a.norm_sqr()).sum::<f64>();
        if kept.is_empty() || n <= 0.0 {
            return Err(SimError::EmptyPostselection);
        }
        let scale = 1.0 / n.sqrt();
        Ok(SparseState {
            width: self.width,
            amps: kept.into_iter().map(|(k, a)| (k, a * scale)).collect(),
        })
    }

    /// Marginal distribution over `qubits`; result keys are packed with bit `j` = `qubits[j]`.
    pub fn probabilities_over(&self, qubits: &[usize]) -> BTreeMap<BasisIndex, f64> {
        let mut out = BTreeMap::new();
        for (k, a) in self.iter() {
            *out.entry(BasisIndex(k.gather(qubits))).or_insert(0.0) += a.norm_sqr();
        }
        out
    }

    /// Marginal over the lowest `width` qubits, keyed without repacking.
    pub fn probabilities_prefix(&self, width: usize) -> BTreeMap<BasisIndex, f64> {
        let mask = if width >= MAX_QUBITS {
            u128::MAX
        } else {
            (1u128 << width) - 1
        };
        let mut out = BTreeMap::new();
        for (k, a) in self.iter() {
            *out.entry(BasisIndex(k.0 & mask)).or_insert(0.0) += a.norm_sqr();
        }
        out
    }
}

impl fmt::Display for SparseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, a) in self.iter() {
            writeln!(f, "{:+.6}{:+.6}i |{}>", a.re, a.im, k.label(self.width))?;
        }
        Ok(())
    }
}

/// Free-function form of [`SparseState::apply`].
pub fn apply_gate(state: &SparseState, gate: &GateOp, controls: &ControlSpec) -> Result<SparseState, SimError> {
    let mut out = state.clone();
    out.apply(gate, controls)?;
    Ok(out)
}

/// Places the equal one-hot superposition on `targets` (which must be |0...0>).
pub fn apply_sp(
    state: &SparseState,
    targets: &[usize],
    scratch: usize,
    controls: &ControlSpec,
) -> Result<SparseState, SimError> {
    apply_gate(
        state,
        &GateOp::Sp {
            targets: targets.to_vec(),
            scratch,
        },
        controls,
    )
}

/// Primitive gate sequence realizing a (possibly controlled) SP gate.
///
/// With outer controls, their conjunction is computed into `scratch`, the
/// one-hot cascade runs controlled on `scratch`, and `scratch` is uncomputed.
fn sp_expansion(
    targets: &[usize],
    scratch: usize,
    controls: &ControlSpec,
) -> Result<Vec<(GateOp, ControlSpec)>, SimError> {
    if targets.is_empty() {
        return Err(SimError::EmptySp);
    }
    let local: Vec<u128> = (0..targets.len()).map(|j| 1u128 << j).collect();
    let cascade = uniform_cascade(targets, &local)?;
    if controls.is_empty() {
        return Ok(cascade);
    }
    let mut ops = Vec::with_capacity(cascade.len() + 2);
    ops.push((GateOp::PauliX(scratch), controls.clone()));
    for (g, c) in cascade {
        ops.push((g, c.on(scratch, true)));
    }
    ops.push((GateOp::PauliX(scratch), controls.clone()));
    Ok(ops)
}

/// Prefix-controlled rotation cascade preparing the uniform superposition over
/// `set` (keys local to `qubits`, bit `j` on `qubits[j]`) from |0...0>.
///
/// For each qubit in turn and each prefix occurring in the set, a rotation
/// controlled on the prefix splits the branch in proportion to how many set
/// members continue with 0 and with 1.
fn uniform_cascade(qubits: &[usize], set: &[u128]) -> Result<Vec<(GateOp, ControlSpec)>, SimError> {
    let mut ops = Vec::new();
    for j in 0..qubits.len() {
        let prefix_mask = (1u128 << j) - 1;
        let mut counts: BTreeMap<u128, (usize, usize)> = BTreeMap::new();
        for &x in set {
            let e = counts.entry(x & prefix_mask).or_insert((0, 0));
            if (x >> j) & 1 == 1 {
                e.1 += 1;
            } else {
                e.0 += 1;
            }
        }
        for (prefix, (n0, n1)) in counts {
            if n1 == 0 {
                continue;
            }
            let controls = ControlSpec::from_pairs((0..j).map(|i| (qubits[i], (prefix >> i) & 1 == 1)));
            if n0 == 0 {
                ops.push((GateOp::PauliX(qubits[j]), controls));
            } else {
                let total = (n0 + n1) as f64;
                let u = SmallUnitary::ry(qubits[j], (n0 as f64 / total).sqrt(), (n1 as f64 / total).sqrt())?;
                ops.push((GateOp::SmallUnitary(u), controls));
            }
        }
    }
    Ok(ops)
}

/// Ordered list of controlled gates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Circuit {
    pub width: usize,
    pub ops: Vec<(GateOp, ControlSpec)>,
}

impl Circuit {
    pub fn new(width: usize) -> Self {
        Circuit { width, ops: Vec::new() }
    }

    pub fn push(&mut self, gate: GateOp, controls: ControlSpec) {
        self.ops.push((gate, controls));
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn run(&self, state: &mut SparseState) -> Result<(), SimError> {
        for (g, c) in &self.ops {
            state.apply(g, c)?;
        }
        Ok(())
    }

    /// Same circuit with every SP gate replaced by its primitive expansion.
    pub fn expanded(&self) -> Result<Circuit, SimError> {
        let mut out = Circuit::new(self.width);
        for (g, c) in &self.ops {
            match g {
                GateOp::Sp { targets, scratch } => out.ops.extend(sp_expansion(targets, *scratch, c)?),
                _ => out.ops.push((g.clone(), c.clone())),
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Circuit, SimError> {
        let expanded = self.expanded()?;
        let ops = expanded
            .ops
            .iter()
            .rev()
            .map(|(g, c)| (g.adjoint().expect("expanded circuit has no SP"), c.clone()))
            .collect();
        Ok(Circuit { width: self.width, ops })
    }

    /// Adds `(qubit, value)` to the controls of every gate.
    pub fn controlled_by(&self, qubit: usize, value: bool) -> Circuit {
        Circuit {
            width: self.width,
            ops: self
                .ops
                .iter()
                .map(|(g, c)| (g.clone(), c.clone().on(qubit, value)))
                .collect(),
        }
    }
}

fn check_basis_set(width: usize, basis_set: &[BasisIndex]) -> Result<(), SimError> {
    if width > MAX_QUBITS {
        return Err(SimError::WidthTooLarge(width));
    }
    if basis_set.is_empty() {
        return Err(SimError::EmptyBasisSet);
    }
    let mut seen = std::collections::BTreeSet::new();
    for k in basis_set {
        if !k.fits(width) {
            return Err(SimError::BasisOutOfRange(width));
        }
        if !seen.insert(*k) {
            return Err(SimError::DuplicateBasis(k.label(width)));
        }
    }
    Ok(())
}

/// Equal superposition over `basis_set` by direct injection.
pub fn prepare_superposition(width: usize, basis_set: &[BasisIndex]) -> Result<SparseState, SimError> {
    check_basis_set(width, basis_set)?;
    let a = Complex64::new(1.0 / (basis_set.len() as f64).sqrt(), 0.0);
    Ok(SparseState {
        width,
        amps: basis_set.iter().map(|k| (*k, a)).collect(),
    })
}

/// Circuit mapping |0...0> to the equal superposition over `basis_set`.
pub fn synthesize_preparation(width: usize, basis_set: &[BasisIndex]) -> Result<Circuit, SimError> {
    check_basis_set(width, basis_set)?;
    let qubits: Vec<usize> = (0..width).collect();
    let set: Vec<u128> = basis_set.iter().map(|k| k.0).collect();
    Ok(Circuit {
        width,
        ops: uniform_cascade(&qubits, &set)?,
    })
}

/// Runs [`synthesize_preparation`] on |0...0>.
pub fn prepare_superposition_by_circuit(width: usize, basis_set: &[BasisIndex]) -> Result<SparseState, SimError> {
    let circuit = synthesize_preparation(width, basis_set)?;
    let mut state = SparseState::new(width)?;
    circuit.run(&mut state)?;
    Ok(state)
}

/// Sampled measurement counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub width: usize,
    pub shots: u64,
    pub seed: u64,
    pub counts: BTreeMap<String, u64>,
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,count\n");
        for (label, c) in &self.counts {
            out.push_str(&format!("{label},{c}\n"));
        }
        out
    }
}

/// Samples `shots` full-register measurements.
pub fn measure_histogram(state: &SparseState, shots: u64, seed: u64) -> Result<Histogram, SimError> {
    let qubits: Vec<usize> = (0..state.width).collect();
    measure_histogram_over(state, &qubits, shots, seed)
}

/// Samples measurements of `qubits` only; label character `j` is `qubits[j]`.
pub fn measure_histogram_over(
    state: &SparseState,
    qubits: &[usize],
    shots: u64,
    seed: u64,
) -> Result<Histogram, SimError> {
    if shots == 0 {
        return Err(SimError::ZeroShots);
    }
    for &q in qubits {
        check_qubit(q, state.width)?;
    }
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(SimError::NotNormalized(norm));
    }
    let dist: Vec<(BasisIndex, f64)> = state.probabilities_over(qubits).into_iter().collect();
    let mut cumulative = Vec::with_capacity(dist.len());
    let mut acc = 0.0;
    for (_, p) in &dist {
        acc += p;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; dist.len()];
    for _ in 0..shots {
        let r: f64 = rng.random::<f64>() * acc;
        let i = cumulative.partition_point(|&c| c <= r).min(dist.len() - 1);
        counts[i] += 1;
    }
    let width = qubits.len();
    Ok(Histogram {
        width,
        shots,
        seed,
        counts: dist
            .iter()
            .zip(counts)
            .filter(|(_, c)| *c > 0)
            .map(|((k, _), c)| (k.label(width), c))
            .collect(),
    })
}

/// `<psi| D |psi>` for a diagonal observable given as a map; absent keys read as 0.
pub fn expectation(state: &SparseState, diag: &BTreeMap<BasisIndex, f64>) -> f64 {
    state
        .iter()
        .map(|(k, a)| a.norm_sqr() * diag.get(&k).copied().unwrap_or(0.0))
        .sum()
}

/// Same as [`expectation`] with the diagonal given as a function.
pub fn expectation_fn(state: &SparseState, diag: impl Fn(BasisIndex) -> f64) -> f64 {
    state.iter().map(|(k, a)| a.norm_sqr() * diag(k)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(label: &str) -> BasisIndex {
        BasisIndex::from_label(label).unwrap()
    }

    #[test]
    fn cnot_flips_target_when_control_set() {
        let mut s = SparseState::basis(2, key("10")).unwrap();
        s.apply(&GateOp::Cnot { control: 0, target: 1 }, &ControlSpec::new())
            .unwrap();
        assert_eq!(s.keys().collect::<Vec<_>>(), vec![key("11")]);
    }

    #[test]
    fn unmet_control_is_identity() {
        let mut s = SparseState::new(2).unwrap();
        s.apply(&GateOp::PauliX(1), &ControlSpec::new().on(0, true)).unwrap();
        assert_eq!(s.keys().collect::<Vec<_>>(), vec![key("00")]);
    }

    #[test]
    fn negative_control_fires_on_zero() {
        let mut s = SparseState::new(2).unwrap();
        s.apply(&GateOp::PauliX(1), &ControlSpec::new().on(0, false)).unwrap();
        assert_eq!(s.keys().collect::<Vec<_>>(), vec![key("01")]);
    }

    #[test]
    fn trick_rewrite_on_card_states() {
        // Card 1 on qubits 0..3, card 2 on qubits 3..6; a lost trick flips 3, 5 and 2.
        let mut s = SparseState::basis(6, key("010110")).unwrap();
        for q in [3, 5, 2] {
            s.apply(&GateOp::PauliX(q), &ControlSpec::new()).unwrap();
        }
        assert_eq!(s.keys().collect::<Vec<_>>(), vec![key("011011")]);
    }

    #[test]
    fn overlapping_control_and_target_rejected() {
        let mut s = SparseState::new(2).unwrap();
        let err = s
            .apply(&GateOp::PauliX(1), &ControlSpec::new().on(1, true))
            .unwrap_err();
        assert_eq!(err, SimError::ControlTargetOverlap(1));
        let err = s
            .apply(&GateOp::Cnot { control: 0, target: 0 }, &ControlSpec::new())
            .unwrap_err();
        assert!(matches!(
            err,
            SimError::ControlTargetOverlap(0) | SimError::DuplicateQubit(0)
        ));
    }

    #[test]
    fn out_of_range_rejected() {
        let mut s = SparseState::new(2).unwrap();
        assert!(matches!(
            s.apply(&GateOp::PauliX(2), &ControlSpec::new()),
            Err(SimError::QubitOutOfRange { qubit: 2, width: 2 })
        ));
        assert!(matches!(
            s.apply(&GateOp::PauliX(0), &ControlSpec::new().on(5, true)),
            Err(SimError::QubitOutOfRange { .. })
        ));
    }

    #[test]
    fn non_unitary_matrix_rejected() {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        assert!(matches!(
            SmallUnitary::new(vec![0], vec![one, one, zero, one]),
            Err(SimError::NotUnitary(_))
        ));
        assert!(matches!(
            SmallUnitary::new(vec![0], vec![one, zero, zero]),
            Err(SimError::MatrixShape { .. })
        ));
    }

    #[test]
    fn hadamard_twice_is_identity() {
        let mut s = SparseState::basis(1, key("1")).unwrap();
        s.apply(&GateOp::Hadamard(0), &ControlSpec::new()).unwrap();
        assert_eq!(s.len(), 2);
        s.apply(&GateOp::Hadamard(0), &ControlSpec::new()).unwrap();
        assert_eq!(s.keys().collect::<Vec<_>>(), vec![key("1")]);
        assert!((s.amplitude(key("1")).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sp_two_targets() {
        let s = apply_sp(&SparseState::new(3).unwrap(), &[0, 1], 2, &ControlSpec::new()).unwrap();
        assert_eq!(s.len(), 2);
        for k in [key("100"), key("010")] {
            assert!((s.probability(k) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sp_single_target_is_forced() {
        let s = apply_sp(&SparseState::new(2).unwrap(), &[0], 1, &ControlSpec::new()).unwrap();
        assert_eq!(s.keys().collect::<Vec<_>>(), vec![key("10")]);
    }

    #[test]
    fn sp_three_targets_is_uniform_one_hot() {
        let s = apply_sp(&SparseState::new(4).unwrap(), &[0, 1, 2], 3, &ControlSpec::new()).unwrap();
        let keys: Vec<_> = s.keys().collect();
        assert_eq!(keys.len(), 3);
        for k in keys {
            assert_eq!(k.0.count_ones(), 1);
            assert!(!k.bit(3));
            assert!((s.probability(k) - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn controlled_sp_restores_scratch() {
        // Branches |00000> and |10000>; SP fires only where qubit 0 is set.
        let half = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let s = SparseState::from_amplitudes(5, [(key("00000"), half), (key("10000"), half)]).unwrap();
        let out = apply_sp(&s, &[1, 2, 3], 4, &ControlSpec::new().on(0, true)).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.keys().all(|k| !k.bit(4)));
        assert!((out.probability(key("00000")) - 0.5).abs() < 1e-12);
        assert!((out.probability(key("11000")) - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn sp_errors() {
        let s = SparseState::basis(3, key("100")).unwrap();
        assert_eq!(
            apply_sp(&s, &[], 2, &ControlSpec::new()).unwrap_err(),
            SimError::EmptySp
        );
        assert!(matches!(
            apply_sp(&s, &[0, 1], 2, &ControlSpec::new()),
            Err(SimError::SpTargetsNotZero(_))
        ));
        // inactive branch may carry anything
        let s = SparseState::basis(4, key("1000")).unwrap();
        assert!(apply_sp(&s, &[0, 1], 3, &ControlSpec::new().on(2, true)).is_ok());
    }

    #[test]
    fn superposition_edge_cases() {
        let s = prepare_superposition(2, &[key("00")]).unwrap();
        assert!((s.amplitude(key("00")).re - 1.0).abs() < 1e-15);
        assert_eq!(prepare_superposition(2, &[]).unwrap_err(), SimError::EmptyBasisSet);
        assert!(matches!(
            prepare_superposition(2, &[key("01"), key("01")]),
            Err(SimError::DuplicateBasis(_))
        ));
        let all: Vec<_> = (0..8u128).map(BasisIndex).collect();
        let s = prepare_superposition_by_circuit(3, &all).unwrap();
        for k in &all {
            assert!((s.amplitude(*k).re - 1.0 / 8f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_of_basis_state_is_deterministic() {
        let s = SparseState::basis(1, key("1")).unwrap();
        let h = measure_histogram(&s, 1000, 3).unwrap();
        assert_eq!(h.counts.len(), 1);
        assert_eq!(h.counts["1"], 1000);
        assert_eq!(measure_histogram(&s, 0, 3).unwrap_err(), SimError::ZeroShots);
    }

    #[test]
    fn histogram_json_shape() {
        let s = SparseState::basis(2, key("01")).unwrap();
        let h = measure_histogram(&s, 5, 9).unwrap();
        let v = serde_json::to_value(&h).unwrap();
        assert_eq!(v["width"], 2);
        assert_eq!(v["shots"], 5);
        assert_eq!(v["seed"], 9);
        assert_eq!(v["counts"]["01"], 5);
    }

    #[test]
    fn expectation_constant_diagonals() {
        let s = prepare_superposition(3, &[key("000"), key("101"), key("011")]).unwrap();
        assert!((expectation_fn(&s, |_| 1.0) - 1.0).abs() < 1e-12);
        assert_eq!(expectation(&s, &BTreeMap::new()), 0.0);
    }

    #[test]
    fn relabel_detects_collisions() {
        let s = prepare_superposition(2, &[key("00"), key("10")]).unwrap();
        assert!(matches!(
            s.relabel(|k| k.with_bit(0, true)),
            Err(SimError::RelabelCollision(_))
        ));
        let moved = s.relabel(|k| k.flipped(1)).unwrap();
        assert_eq!(moved.keys().collect::<Vec<_>>(), vec![key("01"), key("11")]);
    }

    #[test]
    fn circuit_inverse_undoes_preparation() {
        let set = vec![key("101"), key("011"), key("110")];
        let c = synthesize_preparation(3, &set).unwrap();
        let mut s = SparseState::new(3).unwrap();
        c.run(&mut s).unwrap();
        c.inverse().unwrap().run(&mut s).unwrap();
        assert_eq!(s.keys().collect::<Vec<_>>(), vec![BasisIndex::ZERO]);
        assert!((s.amplitude(BasisIndex::ZERO).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn label_roundtrip() {
        let k = key("0110001");
        assert_eq!(k.label(7), "0110001");
        assert!(k.bit(1) && k.bit(2) && k.bit(6) && !k.bit(0));
        assert_eq!(k.gather(&[6, 0, 2]), 0b101);
    }
}
