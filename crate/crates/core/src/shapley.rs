//! Exact Shapley attribution over a black-box value function by full
//! coalition enumeration, plus a permutation oracle for cross-checking.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Hard ceiling on enumerable players; 2^20 value evaluations.
pub const ENUMERATION_CAP: usize = 20;

/// On/off bit per player, packed little-endian (player 0 = bit 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoalitionMask {
    bits: u32,
    players: usize,
}

impl CoalitionMask {
    pub fn new(bits: u32, players: usize) -> Self {
        debug_assert!(players <= 32 && (players == 32 || bits < (1u32 << players)));
        CoalitionMask { bits, players }
    }

    pub fn empty(players: usize) -> Self {
        CoalitionMask::new(0, players)
    }

    pub fn full(players: usize) -> Self {
        CoalitionMask::new(((1u64 << players) - 1) as u32, players)
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn players(&self) -> usize {
        self.players
    }

    #[inline]
    pub fn contains(&self, player: usize) -> bool {
        self.bits >> player & 1 == 1
    }

    #[inline]
    pub fn with(&self, player: usize) -> Self {
        CoalitionMask::new(self.bits | 1 << player, self.players)
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Players whose bit is on, ascending.
    pub fn on_players(&self) -> Vec<usize> {
        (0..self.players).filter(|&j| self.contains(j)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightingMode {
    /// Factorial coalition weights |S|!(P-|S|-1)!/P!.
    #[default]
    Shapley,
    /// Plain mean of marginal contributions over all subsets.
    UniformAverage,
}

/// Per-player attributions for one explained instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyReport {
    pub player_names: Vec<String>,
    pub attributions: Vec<f64>,
    /// Value of the empty coalition (prediction on the reference row).
    pub base_value: f64,
    /// Value of the full coalition (prediction on the instance itself).
    pub full_value: f64,
}

/// Factorials through 20! all fit in u64.
fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// The coalition weight s!(P-s-1)!/P! from the Shapley formula, computed
/// from exact integer factorials.
pub fn coalition_weight(s: usize, players: usize) -> Result<f64> {
    if players == 0 {
        return Err(Error::NoPlayers);
    }
    if players > ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            players,
            cap: ENUMERATION_CAP,
        });
    }
    if s >= players {
        return Err(Error::Partition(format!(
            "coalition size {s} must be below player count {players}"
        )));
    }
    let num = (factorial(s) as u128) * (factorial(players - 1 - s) as u128);
    Ok(num as f64 / factorial(players) as f64)
}

/// Game description: player count, names, and marginal weighting rule.
/// The value function is supplied at evaluation time.
#[derive(Debug, Clone)]
pub struct ShapleyGame {
    pub players: usize,
    pub mode: WeightingMode,
    pub player_names: Vec<String>,
}

impl ShapleyGame {
    pub fn new(players: usize, mode: WeightingMode) -> Result<Self> {
        let names = (0..players).map(|j| format!("P{j}")).collect();
        ShapleyGame::with_names(names, mode)
    }

    pub fn with_names(player_names: Vec<String>, mode: WeightingMode) -> Result<Self> {
        let players = player_names.len();
        if players == 0 {
            return Err(Error::NoPlayers);
        }
        if players > ENUMERATION_CAP {
            return Err(Error::CapExceeded {
                players,
                cap: ENUMERATION_CAP,
            });
        }
        Ok(ShapleyGame {
            players,
            mode,
            player_names,
        })
    }

    pub fn n_masks(&self) -> usize {
        1usize << self.players
    }

    /// Evaluates the value function once per mask, sequentially in
    /// ascending mask order, then derives attributions.
    pub fn evaluate<F>(&self, mut value_fn: F) -> Result<ShapleyReport>
    where
        F: FnMut(CoalitionMask) -> Result<f64>,
    {
        let mut table = Vec::with_capacity(self.n_masks());
        for bits in 0..self.n_masks() as u32 {
            table.push(value_fn(CoalitionMask::new(bits, self.players))?);
        }
        self.from_table(&table)
    }

    /// Same as `evaluate` with mask evaluations spread across threads.
    /// The value table, and therefore the report, is identical to the
    /// sequential result.
    pub fn evaluate_par<F>(&self, value_fn: F) -> Result<ShapleyReport>
    where
        F: Fn(CoalitionMask) -> Result<f64> + Sync,
    {
        let table: Vec<f64> = (0..self.n_masks() as u32)
            .into_par_iter()
            .map(|bits| value_fn(CoalitionMask::new(bits, self.players)))
            .collect::<Result<_>>()?;
        self.from_table(&table)
    }

    /// Derives the report from a precomputed value table indexed by mask
    /// bits. This is the single accumulation path shared by every
    /// evaluation mode, so equal tables produce bit-identical reports.
    pub fn from_table(&self, table: &[f64]) -> Result<ShapleyReport> {
        if table.len() != self.n_masks() {
            return Err(Error::DimensionMismatch {
                expected: self.n_masks(),
                got: table.len(),
            });
        }
        if let Some(bad) = table.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { mask: bad as u32 });
        }
        let p = self.players;
        let weights: Vec<f64> = match self.mode {
            WeightingMode::Shapley => (0..p)
                .map(|s| coalition_weight(s, p))
                .collect::<Result<_>>()?,
            WeightingMode::UniformAverage => {
                let inv = 1.0 / (1u64 << (p - 1)) as f64;
                vec![inv; p]
            }
        };
        let mut attributions = vec![0.0f64; p];
        for (j, phi) in attributions.iter_mut().enumerate() {
            let bit = 1u32 << j;
            let mut acc = 0.0;
            for bits in 0..table.len() as u32 {
                if bits & bit != 0 {
                    continue;
                }
                let s = bits.count_ones() as usize;
                let diff = table[(bits | bit) as usize] - table[bits as usize];
                acc += weights[s] * diff;
            }
            *phi = acc;
        }
        Ok(ShapleyReport {
            player_names: self.player_names.clone(),
            attributions,
            base_value: table[0],
            full_value: *table.last().unwrap(),
        })
    }
}

/// Independent oracle: mean marginal contribution over all P! player
/// orderings. Factorial cost; refuse above 8 players.
pub fn brute_force_shapley<F>(players: usize, mut value_fn: F) -> Result<Vec<f64>>
where
    F: FnMut(CoalitionMask) -> Result<f64>,
{
    if players == 0 {
        return Err(Error::NoPlayers);
    }
    if players > 8 {
        return Err(Error::CapExceeded { players, cap: 8 });
    }
    let n_masks = 1usize << players;
    let mut table = Vec::with_capacity(n_masks);
    for bits in 0..n_masks as u32 {
        let v = value_fn(CoalitionMask::new(bits, players))?;
        if !v.is_finite() {
            return Err(Error::NonFinite { mask: bits });
        }
        table.push(v);
    }
    let mut sums = vec![0.0f64; players];
    let order: Vec<usize> = (0..players).collect();
    let mut count = 0u64;
    for perm in itertools::Itertools::permutations(order.into_iter(), players) {
        let mut bits = 0u32;
        for &j in &perm {
            let next = bits | 1 << j;
            sums[j] += table[next as usize] - table[bits as usize];
            bits = next;
        }
        count += 1;
    }
    Ok(sums.iter().map(|s| s / count as f64).collect())
}

/// Copy of `x` with columns outside `on_columns` replaced by the
/// reference value.
pub fn masked_instance(x: &[f64], reference: &[f64], on_columns: &[usize]) -> Result<Vec<f64>> {
    if x.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: reference.len(),
        });
    }
    let mut out = reference.to_vec();
    for &c in on_columns {
        if c >= x.len() {
            return Err(Error::IndexOutOfRange {
                index: c,
                columns: x.len(),
            });
        }
        out[c] = x[c];
    }
    Ok(out)
}

/// Builds a coalition value function from a model predictor: the value of
/// a mask is the prediction on the instance with every off-player's
/// columns replaced by reference values. Player column sets must be
/// disjoint. The expectation term of the classic formulation is omitted;
/// it is constant across masks and cancels in every marginal difference.
pub fn model_value_fn<'a, P>(
    predict: P,
    x: &'a [f64],
    reference: &'a [f64],
    player_columns: &'a [Vec<usize>],
) -> Result<impl Fn(CoalitionMask) -> Result<f64> + Sync + 'a>
where
    P: Fn(&[f64]) -> Result<f64> + Sync + 'a,
{
    if x.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: reference.len(),
        });
    }
    let mut seen = vec![false; x.len()];
    for cols in player_columns {
        for &c in cols {
            if c >= x.len() {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    columns: x.len(),
                });
            }
            if seen[c] {
                return Err(Error::OverlappingGroups { column: c });
            }
            seen[c] = true;
        }
    }
    Ok(move |mask: CoalitionMask| {
        let mut on_columns = Vec::new();
        for (j, cols) in player_columns.iter().enumerate() {
            if mask.contains(j) {
                on_columns.extend_from_slice(cols);
            }
        }
        predict(&masked_instance(x, reference, &on_columns)?)
    })
}
