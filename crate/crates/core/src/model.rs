//! Reaction networks, system state and mass-action propensities.
//!
//! A network is immutable once built. All derived metadata (reactant
//! species, highest order of reaction per species, sparse stoichiometry
//! columns) is computed in [`ReactionNetwork::new`] so the solvers never
//! have to rescan reactions in their inner loops.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::sampling::RngStream;

/// Highest mass-action order accepted by the parser and the propensity code.
pub const MAX_ORDER: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown species `{name}`")]
    UnknownSpecies { line: usize, name: String },
    #[error("unknown reaction `{0}`")]
    UnknownReaction(String),
    #[error("inconsistent reversible pair ({0}, {1}): {2}")]
    InvalidReversiblePair(String, String, &'static str),
    #[error("reaction `{name}` has order {order}, the maximum supported is {MAX_ORDER}")]
    OrderTooHigh { name: String, order: u32 },
    #[error("reaction `{name}`: {message}")]
    InvalidReaction { name: String, message: String },
    #[error("network has no species")]
    NoSpecies,
    #[error("network has no reactions")]
    NoReactions,
    #[error("initial state has {got} entries, expected {expected}")]
    InitialLength { got: usize, expected: usize },
    #[error("invalid hook: {0}")]
    InvalidHook(String),
}

/// One reaction channel under the law of mass action.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub name: String,
    /// `(species, multiplicity)` pairs, sorted by species, multiplicities > 0.
    pub reactants: Vec<(usize, u32)>,
    /// `(species, multiplicity)` pairs, sorted by species, multiplicities > 0.
    pub products: Vec<(usize, u32)>,
    /// Nonzero entries of the state-change vector, sorted by species.
    pub nu: Vec<(usize, i64)>,
    pub rate: f64,
    /// Divide the propensity by `volume^(order - 1)` for orders of two or more.
    pub volume_scaled: bool,
}

impl Reaction {
    /// Builds a reaction, deriving the state-change vector from both sides.
    pub fn new(
        name: impl Into<String>,
        reactants: &[(usize, u32)],
        products: &[(usize, u32)],
        rate: f64,
    ) -> Self {
        let reactants = merge_terms(reactants);
        let products = merge_terms(products);
        let mut net: Vec<(usize, i64)> = Vec::new();
        for &(s, m) in &reactants {
            net.push((s, -i64::from(m)));
        }
        for &(s, m) in &products {
            match net.iter_mut().find(|(i, _)| *i == s) {
                Some(entry) => entry.1 += i64::from(m),
                None => net.push((s, i64::from(m))),
            }
        }
        net.retain(|&(_, v)| v != 0);
        net.sort_unstable_by_key(|&(s, _)| s);
        Reaction {
            name: name.into(),
            reactants,
            products,
            nu: net,
            rate,
            volume_scaled: false,
        }
    }

    /// Total reactant order.
    pub fn order(&self) -> u32 {
        self.reactants.iter().map(|&(_, m)| m).sum()
    }

    pub fn reactant_multiplicity(&self, species: usize) -> u32 {
        self.reactants
            .iter()
            .find(|&&(s, _)| s == species)
            .map_or(0, |&(_, m)| m)
    }

    pub fn nu_of(&self, species: usize) -> i64 {
        self.nu
            .iter()
            .find(|&&(s, _)| s == species)
            .map_or(0, |&(_, v)| v)
    }

    /// Species consumed by this channel: `(species, |nu|)` for every `nu < 0`.
    pub fn consumed(&self) -> impl Iterator<Item = (usize, i64)> + '_ {
        self.nu.iter().filter(|&&(_, v)| v < 0).map(|&(s, v)| (s, -v))
    }
}

fn merge_terms(terms: &[(usize, u32)]) -> Vec<(usize, u32)> {
    let mut out: Vec<(usize, u32)> = Vec::with_capacity(terms.len());
    for &(s, m) in terms {
        if m == 0 {
            continue;
        }
        match out.iter_mut().find(|(i, _)| *i == s) {
            Some(entry) => entry.1 += m,
            None => out.push((s, m)),
        }
    }
    out.sort_unstable_by_key(|&(s, _)| s);
    out
}

/// Time-dependent modifications applied before every accepted step.
#[derive(Debug, Clone, PartialEq)]
pub enum Hook {
    /// Cell growth: volume `1 + t / generation_time`.
    Volume { generation_time: f64 },
    /// Redraw a species from `N(mean_base * growth, stddev_base^2)`.
    Resample {
        species: usize,
        mean_base: f64,
        stddev_base: f64,
    },
}

/// Highest order of reaction `h` for a reactant species together with the
/// largest multiplicity `n` it has in any reaction of that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HighestOrder {
    pub order: u32,
    pub multiplicity: u32,
}

/// Integer population vector and time. Counts are signed so that leap
/// proposals can be checked for negativity before they are committed.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub x: Vec<i64>,
    pub t: f64,
}

impl SystemState {
    pub fn new(x: Vec<i64>) -> Self {
        SystemState { x, t: 0.0 }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.x.iter().all(|&v| v >= 0)
    }
}

/// Per-reaction propensities and their total at one state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PropensityView {
    pub a: Vec<f64>,
    pub a0: f64,
}

impl PropensityView {
    pub fn zeros(m: usize) -> Self {
        PropensityView {
            a: vec![0.0; m],
            a0: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
    reversible_pairs: Vec<(usize, usize)>,
    hooks: Vec<Hook>,
    initial: Vec<i64>,
    // derived
    highest_order: Vec<Option<HighestOrder>>,
    reactant_species: Vec<usize>,
    /// For each species, the `(reaction, nu_ij)` entries with `nu_ij != 0`.
    columns: Vec<Vec<(usize, i64)>>,
}

impl ReactionNetwork {
    pub fn new(
        species: Vec<String>,
        reactions: Vec<Reaction>,
        reversible_pairs: Vec<(usize, usize)>,
        hooks: Vec<Hook>,
        initial: Vec<i64>,
    ) -> Result<Self, ModelError> {
        let n = species.len();
        if n == 0 {
            return Err(ModelError::NoSpecies);
        }
        if reactions.is_empty() {
            return Err(ModelError::NoReactions);
        }
        if initial.len() != n {
            return Err(ModelError::InitialLength {
                got: initial.len(),
                expected: n,
            });
        }
        if initial.iter().any(|&v| v < 0) {
            return Err(ModelError::InvalidHook(
                "initial populations must be nonnegative".into(),
            ));
        }
        for r in &reactions {
            let bad_index = r
                .reactants
                .iter()
                .chain(&r.products)
                .any(|&(s, _)| s >= n);
            if bad_index {
                return Err(ModelError::InvalidReaction {
                    name: r.name.clone(),
                    message: "species index out of range".into(),
                });
            }
            if !(r.rate >= 0.0 && r.rate.is_finite()) {
                return Err(ModelError::InvalidReaction {
                    name: r.name.clone(),
                    message: format!("rate must be finite and nonnegative, got {}", r.rate),
                });
            }
            if r.order() > MAX_ORDER {
                return Err(ModelError::OrderTooHigh {
                    name: r.name.clone(),
                    order: r.order(),
                });
            }
        }
        let mut seen = vec![false; reactions.len()];
        for &(p, m) in &reversible_pairs {
            let name = |j: usize| {
                reactions
                    .get(j)
                    .map_or_else(|| j.to_string(), |r| r.name.clone())
            };
            if p >= reactions.len() || m >= reactions.len() {
                return Err(ModelError::InvalidReversiblePair(
                    name(p),
                    name(m),
                    "reaction index out of range",
                ));
            }
            if p == m || seen[p] || seen[m] {
                return Err(ModelError::InvalidReversiblePair(
                    name(p),
                    name(m),
                    "a reaction may appear in at most one pair",
                ));
            }
            let opposite = reactions[p].nu.len() == reactions[m].nu.len()
                && reactions[p]
                    .nu
                    .iter()
                    .zip(&reactions[m].nu)
                    .all(|(a, b)| a.0 == b.0 && a.1 == -b.1);
            if !opposite || reactions[p].nu.is_empty() {
                return Err(ModelError::InvalidReversiblePair(
                    name(p),
                    name(m),
                    "state-change vectors are not opposite",
                ));
            }
            seen[p] = true;
            seen[m] = true;
        }
        for hook in &hooks {
            match *hook {
                Hook::Volume { generation_time } => {
                    if !(generation_time > 0.0 && generation_time.is_finite()) {
                        return Err(ModelError::InvalidHook(format!(
                            "generation time must be positive, got {generation_time}"
                        )));
                    }
                }
                Hook::Resample {
                    species: s,
                    mean_base,
                    stddev_base,
                } => {
                    if s >= n {
                        return Err(ModelError::InvalidHook("species index out of range".into()));
                    }
                    if !(stddev_base >= 0.0) || !mean_base.is_finite() {
                        return Err(ModelError::InvalidHook(format!(
                            "resample parameters must satisfy sd >= 0, got mean={mean_base} sd={stddev_base}"
                        )));
                    }
                }
            }
        }

        let mut highest_order: Vec<Option<HighestOrder>> = vec![None; n];
        let mut columns: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
        for (j, r) in reactions.iter().enumerate() {
            let order = r.order();
            for &(s, m) in &r.reactants {
                let entry = &mut highest_order[s];
                *entry = match *entry {
                    None => Some(HighestOrder {
                        order,
                        multiplicity: m,
                    }),
                    Some(h) if order > h.order => Some(HighestOrder {
                        order,
                        multiplicity: m,
                    }),
                    Some(h) if order == h.order => Some(HighestOrder {
                        order,
                        multiplicity: h.multiplicity.max(m),
                    }),
                    keep => keep,
                };
            }
            for &(s, v) in &r.nu {
                columns[s].push((j, v));
            }
        }
        let reactant_species = (0..n).filter(|&i| highest_order[i].is_some()).collect();

        Ok(ReactionNetwork {
            species,
            reactions,
            reversible_pairs,
            hooks,
            initial,
            highest_order,
            reactant_species,
            columns,
        })
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn species_names(&self) -> &[String] {
        &self.species
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn reaction(&self, j: usize) -> &Reaction {
        &self.reactions[j]
    }

    pub fn reversible_pairs(&self) -> &[(usize, usize)] {
        &self.reversible_pairs
    }

    pub fn hooks(&self) -> &[Hook] {
        &self.hooks
    }

    pub fn initial_populations(&self) -> &[i64] {
        &self.initial
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState::new(self.initial.clone())
    }

    /// Indices of all species that appear as a reactant somewhere.
    pub fn reactant_species(&self) -> &[usize] {
        &self.reactant_species
    }

    pub fn highest_order(&self, species: usize) -> Option<HighestOrder> {
        self.highest_order[species]
    }

    /// `(reaction, nu_ij)` for every reaction that changes species `i`.
    pub fn column(&self, species: usize) -> &[(usize, i64)] {
        &self.columns[species]
    }

    /// Returns a copy with every rate replaced; used to derive the stiff
    /// dimerization from the non-stiff one.
    pub fn with_rates(&self, rates: &[f64]) -> Result<Self, ModelError> {
        let mut reactions = self.reactions.clone();
        for (r, &c) in reactions.iter_mut().zip(rates) {
            r.rate = c;
        }
        ReactionNetwork::new(
            self.species.clone(),
            reactions,
            self.reversible_pairs.clone(),
            self.hooks.clone(),
            self.initial.clone(),
        )
    }

    pub fn with_initial(&self, initial: Vec<i64>) -> Result<Self, ModelError> {
        ReactionNetwork::new(
            self.species.clone(),
            self.reactions.clone(),
            self.reversible_pairs.clone(),
            self.hooks.clone(),
            initial,
        )
    }

    /// Mass-action propensity of reaction `j`.
    pub fn propensity(&self, j: usize, x: &[i64], volume: f64) -> f64 {
        let r = &self.reactions[j];
        let mut a = r.rate;
        for &(s, m) in &r.reactants {
            let xi = x[s];
            if xi < i64::from(m) {
                return 0.0;
            }
            for k in 0..i64::from(m) {
                a *= (xi - k) as f64;
            }
        }
        scale_by_volume(r, a, volume)
    }

    /// Fills `out` with every propensity and their total, summed in index order.
    pub fn fill_propensities(&self, x: &[i64], volume: f64, out: &mut PropensityView) {
        out.a.resize(self.reactions.len(), 0.0);
        let mut a0 = 0.0;
        for j in 0..self.reactions.len() {
            let a = self.propensity(j, x, volume);
            out.a[j] = a;
            a0 += a;
        }
        out.a0 = a0;
    }

    pub fn all_propensities(&self, x: &[i64], volume: f64) -> PropensityView {
        let mut view = PropensityView::zeros(self.reactions.len());
        self.fill_propensities(x, volume, &mut view);
        view
    }

    /// Propensity at a relaxed, real-valued state. Each falling-factorial
    /// factor is clamped at zero so the value stays nonnegative.
    pub fn propensity_relaxed(&self, j: usize, y: &[f64], volume: f64) -> f64 {
        let r = &self.reactions[j];
        let mut a = r.rate;
        for &(s, m) in &r.reactants {
            for k in 0..m {
                a *= (y[s] - f64::from(k)).max(0.0);
            }
        }
        scale_by_volume(r, a, volume)
    }

    /// Partial derivatives of the relaxed propensity of reaction `j`,
    /// reported as `(species, d a_j / d y_species)`.
    pub fn propensity_gradient(
        &self,
        j: usize,
        y: &[f64],
        volume: f64,
        out: &mut Vec<(usize, f64)>,
    ) {
        out.clear();
        let r = &self.reactions[j];
        // factors[s] = falling factorial of species s, dfactors[s] its derivative
        let mut factors = [0.0_f64; MAX_ORDER as usize];
        let mut dfactors = [0.0_f64; MAX_ORDER as usize];
        for (idx, &(s, m)) in r.reactants.iter().enumerate() {
            let mut f = 1.0;
            let mut df = 0.0;
            for k in 0..m {
                let term = y[s] - f64::from(k);
                let (v, dv) = if term > 0.0 { (term, 1.0) } else { (0.0, 0.0) };
                df = df * v + f * dv;
                f *= v;
            }
            factors[idx] = f;
            dfactors[idx] = df;
        }
        let scale = scale_by_volume(r, r.rate, volume);
        for (idx, &(s, _)) in r.reactants.iter().enumerate() {
            let mut g = scale * dfactors[idx];
            for (other, f) in factors.iter().enumerate().take(r.reactants.len()) {
                if other != idx {
                    g *= f;
                }
            }
            out.push((s, g));
        }
    }

    /// The `g_i` factor of the leap-size formula for reactant species `i`.
    /// Returns `None` for species that never appear as a reactant.
    pub fn g_factor(&self, x: &[i64], i: usize) -> Option<f64> {
        self.highest_order[i].map(|h| g_factor(h.order, h.multiplicity, x[i]))
    }

    /// Applies the time-dependent hooks at time `state.t` and returns the
    /// system volume to use for propensity evaluation.
    pub fn apply_hooks(&self, state: &mut SystemState, rng: &mut RngStream) -> f64 {
        if self.hooks.is_empty() {
            return 1.0;
        }
        let growth = self.growth_factor(state.t);
        for hook in &self.hooks {
            if let Hook::Resample {
                species,
                mean_base,
                stddev_base,
            } = *hook
            {
                let v = rng.normal(mean_base * growth, stddev_base).round();
                state.x[species] = if v > 0.0 { v as i64 } else { 0 };
            }
        }
        growth
    }

    /// `1 + t / T_gen` when a volume hook is present, otherwise 1.
    pub fn growth_factor(&self, t: f64) -> f64 {
        self.hooks
            .iter()
            .find_map(|h| match *h {
                Hook::Volume { generation_time } => Some(1.0 + t / generation_time),
                _ => None,
            })
            .unwrap_or(1.0)
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        parse_network(text)
    }
}

fn scale_by_volume(r: &Reaction, a: f64, volume: f64) -> f64 {
    let order = r.order();
    if r.volume_scaled && order >= 2 && volume != 1.0 {
        a / volume.powi(order as i32 - 1)
    } else {
        a
    }
}

/// `h + (h/n) * sum_{j=1}^{n-1} j / (x - j)`, saturating at `100 h` when the
/// sum has a zero or negative denominator.
pub fn g_factor(h: u32, n: u32, x: i64) -> f64 {
    let hf = f64::from(h);
    if n <= 1 {
        return hf;
    }
    if x <= i64::from(n) - 1 {
        return 100.0 * hf;
    }
    let sum: f64 = (1..n)
        .map(|j| f64::from(j) / (x - i64::from(j)) as f64)
        .sum();
    hf + hf / f64::from(n) * sum
}

/// Parses the line-oriented network format:
///
/// ```text
/// species S1 S2 S3
/// init 4150 39565 3445
/// reaction R1 : S1 -> 0        ; rate 1.0
/// reaction R2 : 2 S1 -> S2     ; rate 0.002
/// reversible R2 R3
/// volume tgen=2100
/// resample RNAP mean=35 sd=3.5
/// ```
pub fn parse_network(text: &str) -> Result<ReactionNetwork, ModelError> {
    let mut species: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut initial: Option<Vec<i64>> = None;
    let mut reactions: Vec<Reaction> = Vec::new();
    let mut pair_names: Vec<(usize, String, String)> = Vec::new();
    let mut generation_time: Option<f64> = None;
    let mut resamples: Vec<(usize, String, f64, f64)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |message: String| ModelError::Syntax {
            line: line_no,
            message,
        };
        let (keyword, rest) = line
            .split_once(char::is_whitespace)
            .map_or((line, ""), |(k, r)| (k, r.trim()));
        match keyword {
            "species" => {
                if !species.is_empty() {
                    return Err(syntax("duplicate `species` line".into()));
                }
                for name in rest.split_whitespace() {
                    if !is_identifier(name) {
                        return Err(syntax(format!("invalid species name `{name}`")));
                    }
                    if index.insert(name.to_string(), species.len()).is_some() {
                        return Err(syntax(format!("species `{name}` declared twice")));
                    }
                    species.push(name.to_string());
                }
                if species.is_empty() {
                    return Err(syntax("`species` needs at least one name".into()));
                }
            }
            "init" => {
                let values = rest
                    .split_whitespace()
                    .map(|v| {
                        v.parse::<i64>()
                            .ok()
                            .filter(|&n| n >= 0)
                            .ok_or_else(|| syntax(format!("invalid population `{v}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                initial = Some(values);
            }
            "reaction" => {
                if species.is_empty() {
                    return Err(syntax("`reaction` before `species`".into()));
                }
                reactions.push(parse_reaction(rest, &index, line_no)?);
            }
            "reversible" => {
                let names: Vec<&str> = rest.split_whitespace().collect();
                if names.len() != 2 {
                    return Err(syntax("`reversible` expects two reaction names".into()));
                }
                pair_names.push((line_no, names[0].to_string(), names[1].to_string()));
            }
            "volume" => {
                let value = key_value(rest, "tgen").map_err(syntax)?;
                generation_time = Some(value);
            }
            "resample" => {
                let mut parts = rest.splitn(2, char::is_whitespace);
                let name = parts.next().unwrap_or("");
                let params = parts.next().unwrap_or("");
                let s = *index.get(name).ok_or_else(|| ModelError::UnknownSpecies {
                    line: line_no,
                    name: name.to_string(),
                })?;
                let mean = key_value(params, "mean").map_err(syntax)?;
                let sd = key_value(params, "sd").map_err(syntax)?;
                resamples.push((s, name.to_string(), mean, sd));
            }
            other => return Err(syntax(format!("unknown keyword `{other}`"))),
        }
    }

    if species.is_empty() {
        return Err(ModelError::NoSpecies);
    }
    if reactions.is_empty() {
        return Err(ModelError::NoReactions);
    }
    if generation_time.is_some() {
        for r in &mut reactions {
            r.volume_scaled = r.order() >= 2;
        }
    }
    let mut pairs = Vec::with_capacity(pair_names.len());
    for (_, a, b) in &pair_names {
        let find = |name: &str| {
            reactions
                .iter()
                .position(|r| r.name == name)
                .ok_or_else(|| ModelError::UnknownReaction(name.to_string()))
        };
        pairs.push((find(a)?, find(b)?));
    }
    let mut hooks = Vec::new();
    if let Some(generation_time) = generation_time {
        hooks.push(Hook::Volume { generation_time });
    }
    for (species, _, mean_base, stddev_base) in resamples {
        hooks.push(Hook::Resample {
            species,
            mean_base,
            stddev_base,
        });
    }
    let initial = initial.unwrap_or_else(|| vec![0; species.len()]);
    ReactionNetwork::new(species, reactions, pairs, hooks, initial)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn key_value(text: &str, key: &str) -> Result<f64, String> {
    for token in text.split_whitespace() {
        if let Some((k, v)) = token.split_once('=') {
            if k == key {
                return v
                    .parse::<f64>()
                    .map_err(|_| format!("invalid value for `{key}`: `{v}`"));
            }
        }
    }
    Err(format!("missing `{key}=<value>`"))
}

fn parse_reaction(
    rest: &str,
    index: &HashMap<String, usize>,
    line: usize,
) -> Result<Reaction, ModelError> {
    let syntax = |message: &str| ModelError::Syntax {
        line,
        message: message.to_string(),
    };
    let (head, rate_part) = rest
        .split_once(';')
        .ok_or_else(|| syntax("expected `; rate <value>`"))?;
    let mut rate_tokens = rate_part.split_whitespace();
    if rate_tokens.next() != Some("rate") {
        return Err(syntax("expected `rate` after `;`"));
    }
    let rate: f64 = rate_tokens
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| syntax("invalid rate"))?;
    if rate_tokens.next().is_some() {
        return Err(syntax("trailing tokens after rate"));
    }
    let (name, equation) = head
        .split_once(':')
        .ok_or_else(|| syntax("expected `<name> : <lhs> -> <rhs>`"))?;
    let name = name.trim();
    if !is_identifier(name) {
        return Err(syntax("invalid reaction name"));
    }
    let (lhs, rhs) = equation
        .split_once("->")
        .ok_or_else(|| syntax("expected `->`"))?;
    let reactants = parse_side(lhs, index, line)?;
    let products = parse_side(rhs, index, line)?;
    let reaction = Reaction::new(name, &reactants, &products, rate);
    if reaction.order() > MAX_ORDER {
        return Err(ModelError::OrderTooHigh {
            name: name.to_string(),
            order: reaction.order(),
        });
    }
    Ok(reaction)
}

fn parse_side(
    side: &str,
    index: &HashMap<String, usize>,
    line: usize,
) -> Result<Vec<(usize, u32)>, ModelError> {
    let side = side.trim();
    if side == "0" {
        return Ok(Vec::new());
    }
    let mut terms = Vec::new();
    for term in side.split('+') {
        let tokens: Vec<&str> = term.split_whitespace().collect();
        let (coef, name) = match tokens.as_slice() {
            [name] => split_coefficient(name),
            [coef, name] => match coef.parse::<u32>() {
                Ok(c) => (c, *name),
                Err(_) => {
                    return Err(ModelError::Syntax {
                        line,
                        message: format!("invalid coefficient `{coef}`"),
                    })
                }
            },
            _ => {
                return Err(ModelError::Syntax {
                    line,
                    message: format!("malformed term `{}`", term.trim()),
                })
            }
        };
        if coef == 0 {
            return Err(ModelError::Syntax {
                line,
                message: "zero stoichiometric coefficient".into(),
            });
        }
        let s = *index.get(name).ok_or_else(|| ModelError::UnknownSpecies {
            line,
            name: name.to_string(),
        })?;
        terms.push((s, coef));
    }
    Ok(terms)
}

/// Splits `2S1` into `(2, "S1")`; a bare name has coefficient 1.
fn split_coefficient(token: &str) -> (u32, &str) {
    let digits = token.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 || digits == token.len() {
        return (1, token);
    }
    match token[..digits].parse() {
        Ok(c) => (c, &token[digits..]),
        Err(_) => (1, token),
    }
}

impl fmt::Display for ReactionNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "species {}", self.species.join(" "))?;
        let init: Vec<String> = self.initial.iter().map(i64::to_string).collect();
        writeln!(f, "init {}", init.join(" "))?;
        let side = |terms: &[(usize, u32)]| {
            if terms.is_empty() {
                return "0".to_string();
            }
            terms
                .iter()
                .map(|&(s, m)| {
                    if m == 1 {
                        self.species[s].clone()
                    } else {
                        format!("{m} {}", self.species[s])
                    }
                })
                .collect::<Vec<_>>()
                .join(" + ")
        };
        for r in &self.reactions {
            writeln!(
                f,
                "reaction {} : {} -> {} ; rate {:?}",
                r.name,
                side(&r.reactants),
                side(&r.products),
                r.rate
            )?;
        }
        for &(p, m) in &self.reversible_pairs {
            writeln!(
                f,
                "reversible {} {}",
                self.reactions[p].name, self.reactions[m].name
            )?;
        }
        for hook in &self.hooks {
            match *hook {
                Hook::Volume { generation_time } => writeln!(f, "volume tgen={generation_time:?}")?,
                Hook::Resample {
                    species,
                    mean_base,
                    stddev_base,
                } => writeln!(
                    f,
                    "resample {} mean={mean_base:?} sd={stddev_base:?}",
                    self.species[species]
                )?,
            }
        }
        Ok(())
    }
}
