//! Sparse three-register state representation and primitive operations.
//!
//! States map basis labels to complex amplitudes. Labels carry the three
//! protocol qubits plus two optional registers: a tally counter and an
//! environment mode index. Post-selected states are kept un-normalised so
//! that the squared norm tracks the joint probability of the selected
//! outcomes.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math;

/// Complex amplitude.
pub type Amplitude = Complex64;

/// The three protocol qubits.
///
/// `Q1` is the subroutine switch, `Q2` the computer switch, `Q3` the
/// computer output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Register {
    Q1,
    Q2,
    Q3,
}

/// A computational-basis label `|q1 q2 q3⟩` with optional tally and
/// environment registers. `tally` and `env` stay zero unless the
/// corresponding feature is in use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisLabel {
    pub q1: bool,
    pub q2: bool,
    pub q3: bool,
    pub tally: u64,
    pub env: u64,
}

impl BasisLabel {
    pub const fn new(q1: bool, q2: bool, q3: bool) -> Self {
        BasisLabel {
            q1,
            q2,
            q3,
            tally: 0,
            env: 0,
        }
    }

    /// Label from the conventional three-bit string, e.g. `bits(1,1,0)` for
    /// `|110⟩`.
    pub const fn bits(q1: u8, q2: u8, q3: u8) -> Self {
        BasisLabel::new(q1 != 0, q2 != 0, q3 != 0)
    }

    pub const fn with_tally(mut self, tally: u64) -> Self {
        self.tally = tally;
        self
    }

    pub const fn with_env(mut self, env: u64) -> Self {
        self.env = env;
        self
    }

    pub fn bit(&self, register: Register) -> bool {
        match register {
            Register::Q1 => self.q1,
            Register::Q2 => self.q2,
            Register::Q3 => self.q3,
        }
    }

    pub fn with_bit(mut self, register: Register, value: bool) -> Self {
        match register {
            Register::Q1 => self.q1 = value,
            Register::Q2 => self.q2 = value,
            Register::Q3 => self.q3 = value,
        }
        self
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "|{}{}{}",
            self.q1 as u8, self.q2 as u8, self.q3 as u8
        )?;
        if self.tally != 0 {
            write!(f, ";t={}", self.tally)?;
        }
        if self.env != 0 {
            write!(f, ";e={}", self.env)?;
        }
        write!(f, "\u{27e9}")
    }
}

/// A sparse, possibly sub-normalised pure state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PureState {
    terms: BTreeMap<BasisLabel, Amplitude>,
}

impl PureState {
    /// The zero vector.
    pub fn zero() -> Self {
        PureState::default()
    }

    /// A normalised basis state.
    pub fn basis(label: BasisLabel) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(label, Amplitude::new(1.0, 0.0));
        PureState { terms }
    }

    /// The protocol's initial state `|000⟩`.
    pub fn initial() -> Self {
        PureState::basis(BasisLabel::new(false, false, false))
    }

    pub fn from_terms<I: IntoIterator<Item = (BasisLabel, Amplitude)>>(iter: I) -> Self {
        let mut state = PureState::zero();
        for (label, amp) in iter {
            state.add_term(label, amp);
        }
        state
    }

    /// Adds `amp` to the coefficient of `label`, dropping exact zeros.
    pub fn add_term(&mut self, label: BasisLabel, amp: Amplitude) {
        let entry = self.terms.entry(label).or_insert(Amplitude::new(0.0, 0.0));
        *entry += amp;
        if entry.norm_sqr() == 0.0 {
            self.terms.remove(&label);
        }
    }

    pub fn amplitude(&self, label: &BasisLabel) -> Amplitude {
        self.terms
            .get(label)
            .copied()
            .unwrap_or(Amplitude::new(0.0, 0.0))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BasisLabel, &Amplitude)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    /// Drops every term with `|amplitude|² <= threshold²`. The default
    /// behaviour of all operations is equivalent to `prune(0.0)`.
    pub fn prune(&mut self, threshold: f64) {
        self.terms.retain(|_, a| a.norm_sqr() > threshold * threshold);
    }

    pub fn scaled(&self, factor: Amplitude) -> PureState {
        PureState::from_terms(self.terms.iter().map(|(l, a)| (*l, *a * factor)))
    }

    /// Coherent sum of two states.
    pub fn sum(&self, other: &PureState) -> PureState {
        let mut out = self.clone();
        for (label, amp) in other.terms() {
            out.add_term(*label, *amp);
        }
        out
    }

    /// Applies a single-qubit unitary to `target` on the labels selected by
    /// `control`; all other labels pass through unchanged.
    ///
    /// The predicate must not read the target bit (that would make the
    /// controlled action non-linear); this is checked per label.
    pub fn apply_one_qubit<F>(
        &self,
        target: Register,
        u: &Unitary2,
        control: F,
    ) -> Result<PureState>
    where
        F: Fn(&BasisLabel) -> bool,
    {
        let mut out = PureState::zero();
        for (&label, &amp) in &self.terms {
            let l0 = label.with_bit(target, false);
            let l1 = label.with_bit(target, true);
            let selected = control(&label);
            if control(&l0) != control(&l1) {
                return Err(Error::ControlReadsTarget);
            }
            if !selected {
                out.add_term(label, amp);
                continue;
            }
            if !label.bit(target) {
                out.add_term(l0, u.m[0][0] * amp);
                out.add_term(l1, u.m[1][0] * amp);
            } else {
                out.add_term(l0, u.m[0][1] * amp);
                out.add_term(l1, u.m[1][1] * amp);
            }
        }
        Ok(out)
    }

    /// Projects onto `register = outcome` without renormalising.
    pub fn project(&self, register: Register, outcome: bool) -> PureState {
        PureState {
            terms: self
                .terms
                .iter()
                .filter(|(l, _)| l.bit(register) == outcome)
                .map(|(l, a)| (*l, *a))
                .collect(),
        }
    }

    /// Measures `register`, returning the un-renormalised projected state
    /// and the outcome probability relative to the input norm.
    pub fn measure(&self, register: Register, outcome: bool) -> Result<(PureState, f64)> {
        let norm = self.norm_sqr();
        if norm == 0.0 {
            return Err(Error::ZeroNormState);
        }
        let projected = self.project(register, outcome);
        let prob = projected.norm_sqr() / norm;
        Ok((projected, prob))
    }

    /// Inner product `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &PureState) -> Amplitude {
        let mut acc = Amplitude::new(0.0, 0.0);
        for (label, amp) in &self.terms {
            acc += amp.conj() * other.amplitude(label);
        }
        acc
    }

    /// Largest absolute amplitude difference between two states.
    pub fn max_term_distance(&self, other: &PureState) -> f64 {
        let mut labels: Vec<BasisLabel> = self.terms.keys().copied().collect();
        labels.extend(other.terms.keys().copied());
        labels.sort_unstable();
        labels.dedup();
        labels
            .into_iter()
            .map(|l| (self.amplitude(&l) - other.amplitude(&l)).norm())
            .fold(0.0, f64::max)
    }
}

/// A 2x2 complex matrix validated to be unitary on construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary2 {
    pub m: [[Amplitude; 2]; 2],
}

impl Unitary2 {
    const TOLERANCE: f64 = 1e-12;

    pub fn new(m: [[Amplitude; 2]; 2]) -> Result<Self> {
        let mut defect: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                // (U† U)_{ij}
                let mut entry = Amplitude::new(0.0, 0.0);
                for k in 0..2 {
                    entry += m[k][i].conj() * m[k][j];
                }
                let expected = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((entry - expected).norm());
            }
        }
        if defect > Self::TOLERANCE {
            return Err(Error::NotUnitary { defect });
        }
        Ok(Unitary2 { m })
    }

    /// The protocol rotation `R(θ) = [[cos θ, −sin θ], [sin θ, cos θ]]` in
    /// the computational basis.
    pub fn rotation(theta: f64) -> Self {
        let (c, s) = (math::cos(theta), math::sin(theta));
        Unitary2 {
            m: [
                [Amplitude::new(c, 0.0), Amplitude::new(-s, 0.0)],
                [Amplitude::new(s, 0.0), Amplitude::new(c, 0.0)],
            ],
        }
    }

    pub fn hadamard() -> Self {
        let h = 1.0 / math::sqrt(2.0);
        Unitary2 {
            m: [
                [Amplitude::new(h, 0.0), Amplitude::new(h, 0.0)],
                [Amplitude::new(h, 0.0), Amplitude::new(-h, 0.0)],
            ],
        }
    }

    pub fn identity() -> Self {
        Unitary2 {
            m: [
                [Amplitude::new(1.0, 0.0), Amplitude::new(0.0, 0.0)],
                [Amplitude::new(0.0, 0.0), Amplitude::new(1.0, 0.0)],
            ],
        }
    }
}
