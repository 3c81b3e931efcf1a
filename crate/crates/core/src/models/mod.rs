//! Model families, parameter layouts and parameter boxes.

mod coeffs;
mod filter;
mod stationarity;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{QmleError, Result};

pub use coeffs::{
    aparch_coefficients, arma_psi, lipschitz_coefficients, polynomial_is_stable, AparchCoefficients,
    CoeffKind, CoeffSequence,
};
pub use filter::{conditional_pair, filter_series, Filter, FilteredSeries};
pub use stationarity::{
    simulation_gate, stationarity_check, stationarity_check_point, StationarityReport,
};

/// Default number of lags kept in series expansions.
pub const DEFAULT_TRUNCATION_LAG: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "arma")]
    Arma,
    #[serde(rename = "arch")]
    Arch,
    #[serde(rename = "garch")]
    Garch,
    #[serde(rename = "aparch")]
    Aparch,
    #[serde(rename = "arma-garch")]
    ArmaGarch,
    #[serde(rename = "arma-archinf")]
    ArmaArchInf,
    #[serde(rename = "arma-aparch")]
    ArmaAparch,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Arma,
        Family::Arch,
        Family::Garch,
        Family::Aparch,
        Family::ArmaGarch,
        Family::ArmaArchInf,
        Family::ArmaAparch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Arma => "arma",
            Family::Arch => "arch",
            Family::Garch => "garch",
            Family::Aparch => "aparch",
            Family::ArmaGarch => "arma-garch",
            Family::ArmaArchInf => "arma-archinf",
            Family::ArmaAparch => "arma-aparch",
        }
    }

    pub fn has_arma(self) -> bool {
        matches!(
            self,
            Family::Arma | Family::ArmaGarch | Family::ArmaArchInf | Family::ArmaAparch
        )
    }

    pub fn volatility(self) -> VolatilityKind {
        match self {
            Family::Arma => VolatilityKind::Constant,
            Family::Arch => VolatilityKind::Arch,
            Family::Garch | Family::ArmaGarch => VolatilityKind::Garch,
            Family::Aparch | Family::ArmaAparch => VolatilityKind::Aparch,
            Family::ArmaArchInf => VolatilityKind::ArchInf,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = QmleError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|fam| fam.name() == s)
            .ok_or_else(|| QmleError::input(format!("unknown model family {s:?}")))
    }
}

/// Shape of the conditional scale recursion driven by the innovations `ε_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolatilityKind {
    Constant,
    Arch,
    Garch,
    Aparch,
    ArchInf,
}

/// Structural orders: `(p, q)` for the ARMA part, `(p_vol, q_vol)` for the
/// volatility part (`p′`, `q′`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Orders {
    #[serde(default)]
    pub p: usize,
    #[serde(default)]
    pub q: usize,
    #[serde(default)]
    pub p_vol: usize,
    #[serde(default)]
    pub q_vol: usize,
}

impl Orders {
    pub fn arma(p: usize, q: usize) -> Self {
        Orders { p, q, p_vol: 0, q_vol: 0 }
    }

    pub fn new(p: usize, q: usize, p_vol: usize, q_vol: usize) -> Self {
        Orders { p, q, p_vol, q_vol }
    }
}

/// Scale of the pure ARMA family: either known, or estimated as the last component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmaScale {
    Fixed(f64),
    Estimated,
}

/// Index ranges of each named block inside θ.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layout {
    pub delta: Option<usize>,
    pub omega: Option<usize>,
    pub alpha: Range<usize>,
    pub gamma: Range<usize>,
    pub beta: Range<usize>,
    pub arch_scale: Option<usize>,
    pub arch_decay: Option<usize>,
    pub a: Range<usize>,
    pub b: Range<usize>,
    pub sigma: Option<usize>,
    pub dim: usize,
}

impl Layout {
    fn build(family: Family, orders: Orders, scale: ArmaScale) -> Self {
        let mut next = 0usize;
        let mut take = |k: usize| {
            let r = next..next + k;
            next += k;
            r
        };
        let mut layout = Layout::default();
        match family.volatility() {
            VolatilityKind::Constant => {}
            VolatilityKind::Arch => {
                layout.omega = Some(take(1).start);
                layout.alpha = take(orders.p_vol);
            }
            VolatilityKind::Garch => {
                layout.omega = Some(take(1).start);
                layout.alpha = take(orders.p_vol);
                layout.beta = take(orders.q_vol);
            }
            VolatilityKind::Aparch => {
                layout.delta = Some(take(1).start);
                layout.omega = Some(take(1).start);
                layout.alpha = take(orders.p_vol);
                layout.gamma = take(orders.p_vol);
                layout.beta = take(orders.q_vol);
            }
            VolatilityKind::ArchInf => {
                layout.omega = Some(take(1).start);
                layout.arch_scale = Some(take(1).start);
                layout.arch_decay = Some(take(1).start);
            }
        }
        if family.has_arma() {
            layout.a = take(orders.p);
            layout.b = take(orders.q);
        }
        if family == Family::Arma && scale == ArmaScale::Estimated {
            layout.sigma = Some(take(1).start);
        }
        // empty ranges still need a sane position for slicing
        let end = next;
        for r in [
            &mut layout.alpha,
            &mut layout.gamma,
            &mut layout.beta,
            &mut layout.a,
            &mut layout.b,
        ] {
            if r.start >= r.end {
                *r = end..end;
            }
        }
        layout.dim = next;
        layout
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.dim];
        if let Some(i) = self.delta {
            names[i] = "delta".into();
        }
        if let Some(i) = self.omega {
            names[i] = "omega".into();
        }
        for (k, i) in self.alpha.clone().enumerate() {
            names[i] = format!("alpha{}", k + 1);
        }
        for (k, i) in self.gamma.clone().enumerate() {
            names[i] = format!("gamma{}", k + 1);
        }
        for (k, i) in self.beta.clone().enumerate() {
            names[i] = format!("beta{}", k + 1);
        }
        if let Some(i) = self.arch_scale {
            names[i] = "arch_scale".into();
        }
        if let Some(i) = self.arch_decay {
            names[i] = "arch_decay".into();
        }
        for (k, i) in self.a.clone().enumerate() {
            names[i] = format!("a{}", k + 1);
        }
        for (k, i) in self.b.clone().enumerate() {
            names[i] = format!("b{}", k + 1);
        }
        if let Some(i) = self.sigma {
            names[i] = "sigma".into();
        }
        names
    }
}

/// Compact box `Θ = Π [lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(QmleError::input("box bounds have different lengths"));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(QmleError::input(format!(
                    "box component {i} is not a finite nonempty interval: [{lo}, {hi}]"
                )));
            }
        }
        Ok(ParamBox { lower, upper })
    }

    /// The degenerate box `{θ}`.
    pub fn point(theta: &[f64]) -> Self {
        ParamBox {
            lower: theta.to_vec(),
            upper: theta.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    pub fn project(&self, theta: &mut [f64]) {
        for (x, (lo, hi)) in theta.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*lo, *hi);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    /// Whether `theta_i` sits on a face of the box.
    pub fn on_boundary(&self, theta: &[f64], i: usize) -> bool {
        self.width(i) > 0.0 && (theta[i] <= self.lower[i] || theta[i] >= self.upper[i])
    }
}

/// A parameter vector with its component names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Self {
        ParamVector { names, values }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Borrowed view of θ split into named blocks.
#[derive(Debug, Clone, Copy)]
pub struct Params<'a> {
    pub delta: f64,
    pub omega: f64,
    pub alpha: &'a [f64],
    pub gamma: &'a [f64],
    pub beta: &'a [f64],
    pub arch_scale: f64,
    pub arch_decay: f64,
    pub a: &'a [f64],
    pub b: &'a [f64],
    pub sigma: f64,
}

/// A model family with its orders, truncation lag and parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub orders: Orders,
    pub truncation_lag: usize,
    pub arma_scale: ArmaScale,
    pub param_box: ParamBox,
    /// Deterministic lower bound of the conditional scale over the box.
    pub scale_floor: f64,
    layout: Layout,
}

impl ModelSpec {
    /// Builds a spec with the family's default box.
    pub fn new(family: Family, orders: Orders, arma_scale: ArmaScale) -> Result<Self> {
        Self::with_box(family, orders, arma_scale, None)
    }

    pub fn with_box(
        family: Family,
        orders: Orders,
        arma_scale: ArmaScale,
        param_box: Option<ParamBox>,
    ) -> Result<Self> {
        validate_orders(family, orders)?;
        if let ArmaScale::Fixed(s) = arma_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(QmleError::input(format!("fixed ARMA scale must be positive, got {s}")));
            }
        }
        let layout = Layout::build(family, orders, arma_scale);
        let param_box = match param_box {
            Some(b) => {
                if b.dim() != layout.dim {
                    return Err(QmleError::input(format!(
                        "parameter box has {} components, family {} with these orders needs {}",
                        b.dim(),
                        family,
                        layout.dim
                    )));
                }
                b
            }
            None => default_box(&layout, orders),
        };
        let mut spec = ModelSpec {
            family,
            orders,
            truncation_lag: DEFAULT_TRUNCATION_LAG,
            arma_scale,
            param_box,
            scale_floor: 0.0,
            layout,
        };
        spec.validate_box()?;
        spec.scale_floor = spec.compute_scale_floor();
        Ok(spec)
    }

    pub fn with_truncation_lag(mut self, lag: usize) -> Result<Self> {
        if lag == 0 {
            return Err(QmleError::input("truncation_lag must be positive"));
        }
        self.truncation_lag = lag;
        Ok(self)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn component_names(&self) -> Vec<String> {
        self.layout.names()
    }

    pub fn param_vector(&self, values: Vec<f64>) -> Result<ParamVector> {
        if values.len() != self.dim() {
            return Err(QmleError::input(format!(
                "θ has {} components, expected {}",
                values.len(),
                self.dim()
            )));
        }
        Ok(ParamVector::new(self.component_names(), values))
    }

    /// Splits θ into named blocks. Panics if the length is wrong.
    pub fn decode<'a>(&self, theta: &'a [f64]) -> Params<'a> {
        assert_eq!(theta.len(), self.dim(), "θ dimension mismatch");
        let l = &self.layout;
        let delta = match (self.family.volatility(), l.delta) {
            (_, Some(i)) => theta[i],
            _ => 2.0,
        };
        Params {
            delta,
            omega: l.omega.map_or(0.0, |i| theta[i]),
            alpha: &theta[l.alpha.clone()],
            gamma: &theta[l.gamma.clone()],
            beta: &theta[l.beta.clone()],
            arch_scale: l.arch_scale.map_or(0.0, |i| theta[i]),
            arch_decay: l.arch_decay.map_or(0.0, |i| theta[i]),
            a: &theta[l.a.clone()],
            b: &theta[l.b.clone()],
            sigma: match (l.sigma, self.arma_scale) {
                (Some(i), _) => theta[i],
                (None, ArmaScale::Fixed(s)) => s,
                (None, ArmaScale::Estimated) => 1.0,
            },
        }
    }

    /// Positivity constraints of the family, independent of the box.
    pub fn check_constraints(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(QmleError::input(format!(
                "θ has {} components, expected {}",
                theta.len(),
                self.dim()
            )));
        }
        if let Some(i) = theta.iter().position(|x| !x.is_finite()) {
            return Err(QmleError::Constraint(format!("component {i} is not finite")));
        }
        let p = self.decode(theta);
        let fail = |msg: String| Err(QmleError::Constraint(msg));
        match self.family.volatility() {
            VolatilityKind::Constant => {
                if p.sigma <= 0.0 {
                    return fail(format!("sigma must be positive, got {}", p.sigma));
                }
            }
            kind => {
                if p.omega <= 0.0 {
                    return fail(format!("omega must be positive, got {}", p.omega));
                }
                if let Some(x) = p.alpha.iter().find(|x| **x < 0.0) {
                    return fail(format!("alpha coefficients must be nonnegative, got {x}"));
                }
                if let Some(x) = p.beta.iter().find(|x| **x < 0.0) {
                    return fail(format!("beta coefficients must be nonnegative, got {x}"));
                }
                let sum_beta: f64 = p.beta.iter().sum();
                if sum_beta >= 1.0 {
                    return fail(format!("sum of beta coefficients must be < 1, got {sum_beta}"));
                }
                if kind == VolatilityKind::Aparch {
                    if p.delta < 1.0 {
                        return fail(format!("delta must be >= 1, got {}", p.delta));
                    }
                    if let Some(g) = p.gamma.iter().find(|g| g.abs() >= 1.0) {
                        return fail(format!("gamma coefficients must lie in (-1, 1), got {g}"));
                    }
                }
                if kind == VolatilityKind::ArchInf {
                    if p.arch_scale < 0.0 {
                        return fail(format!("arch_scale must be nonnegative, got {}", p.arch_scale));
                    }
                    if p.arch_decay <= 1.0 {
                        return fail(format!("arch_decay must be > 1, got {}", p.arch_decay));
                    }
                }
            }
        }
        Ok(())
    }

    /// Box membership plus positivity constraints.
    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        self.check_constraints(theta)?;
        if !self.param_box.contains(theta) {
            let names = self.component_names();
            let i = (0..theta.len())
                .find(|&i| theta[i] < self.param_box.lower[i] || theta[i] > self.param_box.upper[i])
                .unwrap_or(0);
            return Err(QmleError::Constraint(format!(
                "{} = {} lies outside the parameter box [{}, {}]",
                names[i], theta[i], self.param_box.lower[i], self.param_box.upper[i]
            )));
        }
        Ok(())
    }

    fn validate_box(&self) -> Result<()> {
        let b = &self.param_box;
        // every corner-wise extreme must satisfy the constraints
        let mut lo = b.lower.clone();
        let hi = &b.upper;
        let l = &self.layout;
        // Σβ uses the upper corner, everything else the lower one, except γ which is two-sided.
        for i in l.beta.clone() {
            lo[i] = hi[i];
        }
        self.check_constraints(&lo).map_err(|e| match e {
            QmleError::Constraint(m) => QmleError::Constraint(format!("parameter box: {m}")),
            other => other,
        })?;
        for i in l.gamma.clone() {
            if hi[i] >= 1.0 || b.lower[i] <= -1.0 {
                return Err(QmleError::Constraint(
                    "parameter box: gamma bounds must lie inside (-1, 1)".into(),
                ));
            }
        }
        Ok(())
    }

    fn compute_scale_floor(&self) -> f64 {
        let b = &self.param_box;
        let l = &self.layout;
        match self.family.volatility() {
            VolatilityKind::Constant => match (l.sigma, self.arma_scale) {
                (Some(i), _) => b.lower[i],
                (None, ArmaScale::Fixed(s)) => s,
                (None, ArmaScale::Estimated) => unreachable!("estimated scale always has a slot"),
            },
            VolatilityKind::Aparch => {
                let omega = b.lower[l.omega.expect("aparch has omega")];
                let d = l.delta.expect("aparch has delta");
                omega.powf(1.0 / b.lower[d]).min(omega.powf(1.0 / b.upper[d]))
            }
            _ => b.lower[l.omega.expect("volatility family has omega")].sqrt(),
        }
    }
}

fn validate_orders(family: Family, o: Orders) -> Result<()> {
    let bad = |what: &str| {
        Err(QmleError::input(format!(
            "family {family} does not use {what}"
        )))
    };
    if !family.has_arma() && (o.p > 0 || o.q > 0) {
        return bad("ARMA orders p/q");
    }
    match family.volatility() {
        VolatilityKind::Constant | VolatilityKind::ArchInf => {
            if o.p_vol > 0 || o.q_vol > 0 {
                return bad("volatility orders p_vol/q_vol");
            }
        }
        VolatilityKind::Arch => {
            if o.q_vol > 0 {
                return bad("q_vol");
            }
            if o.p_vol == 0 {
                return Err(QmleError::input("arch needs p_vol >= 1"));
            }
        }
        VolatilityKind::Garch | VolatilityKind::Aparch => {
            if o.p_vol == 0 {
                return Err(QmleError::input(format!("{family} needs p_vol >= 1")));
            }
        }
    }
    Ok(())
}

fn default_box(l: &Layout, o: Orders) -> ParamBox {
    let mut lower = vec![0.0; l.dim];
    let mut upper = vec![0.0; l.dim];
    let mut set = |i: usize, lo: f64, hi: f64| {
        lower[i] = lo;
        upper[i] = hi;
    };
    if let Some(i) = l.delta {
        set(i, 1.0, 3.0);
    }
    if let Some(i) = l.omega {
        set(i, 0.01, 3.0);
    }
    for i in l.alpha.clone() {
        set(i, 0.0, 2.0);
    }
    for i in l.gamma.clone() {
        set(i, -0.95, 0.95);
    }
    let beta_hi = 0.95 / o.q_vol.max(1) as f64;
    for i in l.beta.clone() {
        set(i, 0.0, beta_hi);
    }
    if let Some(i) = l.arch_scale {
        set(i, 0.0, 2.0);
    }
    if let Some(i) = l.arch_decay {
        set(i, 2.5, 6.0);
    }
    for i in l.a.clone().chain(l.b.clone()) {
        set(i, -0.95, 0.95);
    }
    if let Some(i) = l.sigma {
        set(i, 0.01, 10.0);
    }
    ParamBox { lower, upper }
}
