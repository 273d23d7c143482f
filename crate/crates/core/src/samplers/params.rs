use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::factorial;
use crate::samplers::mcmc::ProposalPrefetch;

/// How the pivot subset `S0` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Exact volume sampling, one pass that buffers the rows.
    ExactVolume,
    /// The lazy swap walk over `k`-subsets, one pass. `p = 2` only.
    McmcVolume,
    /// `k` rounds of single-point adaptive sampling, `k` passes.
    AdaptiveKPass,
}

impl InitMode {
    /// Approximation factor `α` of the volume sampling this mode achieves.
    pub fn alpha(self, k: usize) -> f64 {
        match self {
            InitMode::ExactVolume => 1.0,
            // the walk gives (k + 2) in place of α(k + 1)
            InitMode::McmcVolume => (k as f64 + 2.0) / (k as f64 + 1.0),
            InitMode::AdaptiveKPass => factorial(k),
        }
    }

    pub fn passes(self, k: usize) -> usize {
        match self {
            InitMode::ExactVolume | InitMode::McmcVolume => 1,
            InitMode::AdaptiveKPass => k,
        }
    }
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-volume" => Ok(InitMode::ExactVolume),
            "mcmc-volume" => Ok(InitMode::McmcVolume),
            "adaptive-k-pass" => Ok(InitMode::AdaptiveKPass),
            other => Err(Error::param(format!("unknown init mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for InitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitMode::ExactVolume => "exact-volume",
            InitMode::McmcVolume => "mcmc-volume",
            InitMode::AdaptiveKPass => "adaptive-k-pass",
        })
    }
}

/// Which guarantee the parameters are sized for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ParamMode {
    L2,
    /// `l2` with outliers; `α` is replaced by `α / λ`.
    L2Outlier { lambda: f64 },
    /// `p ≥ 2`; the initial approximation factor is `α (k+1)^p`.
    Lp { p: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamOverrides {
    pub t: Option<usize>,
    pub l: Option<usize>,
    pub m: Option<usize>,
}

impl ParamOverrides {
    pub fn is_empty(&self) -> bool {
        self.t.is_none() && self.l.is_none() && self.m.is_none()
    }

    /// Parses `t=..,l=..,m=..` (any subset, any order).
    pub fn parse(s: &str) -> Result<Self> {
        let mut o = ParamOverrides::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::param(format!("expected key=value, got {part:?}")))?;
            let v: usize = value
                .trim()
                .parse()
                .map_err(|_| Error::param(format!("not a positive integer: {value:?}")))?;
            if v == 0 {
                return Err(Error::param(format!("{key} must be at least 1")));
            }
            match key.trim() {
                "t" => o.t = Some(v),
                "l" => o.l = Some(v),
                "m" => o.m = Some(v),
                other => return Err(Error::param(format!("unknown parameter {other:?}"))),
            }
        }
        Ok(o)
    }
}

/// Sizes of the sampling rounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Points per round.
    pub t: usize,
    /// Rounds.
    pub l: usize,
    /// Random-walk steps per chain, counting the initial draw.
    pub m: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub alpha: f64,
    /// `α (k+1)` or its outlier / `lp` analogue.
    pub factor: f64,
    pub epsilon: f64,
}

impl DerivedParams {
    /// Applies overrides. When `t` or `l` change, `ε2` and (unless
    /// overridden) `m` are recomputed for the new `t·l`.
    pub fn with_overrides(mut self, o: &ParamOverrides) -> Self {
        if let Some(t) = o.t {
            self.t = t;
        }
        if let Some(l) = o.l {
            self.l = l;
        }
        if o.t.is_some() || o.l.is_some() {
            self.eps2 = self.epsilon / (8.0 * (self.t * self.l) as f64 * self.factor);
            self.m = walk_length(self.eps1, self.eps2);
        }
        if let Some(m) = o.m {
            self.m = m;
        }
        self
    }

    /// Proposal slots consumed by one run, `t·l·m`.
    pub fn slots(&self) -> Option<usize> {
        self.t.checked_mul(self.l)?.checked_mul(self.m)
    }
}

/// Ceiling that ignores floating-point excess below `1e-9` relative.
pub(crate) fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Walk length so that both forms of the mixing requirement hold:
/// `m ≥ 1 + (2/ε2) ln(1/ε1)` and `m ≥ 1 + (2/ε1) ln(1/ε2)`.
pub fn walk_length(eps1: f64, eps2: f64) -> usize {
    let a = 2.0 / eps2 * (1.0 / eps1).ln();
    let b = 2.0 / eps1 * (1.0 / eps2).ln();
    let m = ceil_tol(1.0 + a.max(b));
    if m.is_finite() && m < usize::MAX as f64 {
        (m as usize).max(1)
    } else {
        usize::MAX
    }
}

/// Round sizes for a `(1+ε)` guarantee from an `α`-approximate start.
///
/// With `F = α(k+1)` (mode `L2`): `t = ⌈8k/ε⌉`,
/// `l = max(1, ⌈ln(2F/ε) / ln(8/ε)⌉)`, `ε1 = ε/(8F)`, `ε2 = ε/(8 t l F)` and
/// `m` from [`walk_length`].
pub fn derive_params(k: usize, epsilon: f64, alpha: f64, mode: ParamMode) -> Result<DerivedParams> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be >= 1, got {alpha}")));
    }
    let kp1 = k as f64 + 1.0;
    let factor = match mode {
        ParamMode::L2 => alpha * kp1,
        ParamMode::L2Outlier { lambda } => {
            if !(lambda > 0.0 && lambda <= 1.0) {
                return Err(Error::param(format!("lambda must be in (0, 1], got {lambda}")));
            }
            alpha / lambda * kp1
        }
        ParamMode::Lp { p } => {
            if !(p >= 2.0 && p.is_finite()) {
                return Err(Error::param(format!("p must be >= 2, got {p}")));
            }
            alpha * kp1.powf(p)
        }
    };
    let t = ceil_tol(8.0 * k as f64 / epsilon).max(1.0) as usize;
    let l = ceil_tol((2.0 * factor / epsilon).ln() / (8.0 / epsilon).ln()).max(1.0) as usize;
    let eps1 = epsilon / (8.0 * factor);
    let eps2 = epsilon / (8.0 * (t * l) as f64 * factor);
    Ok(DerivedParams {
        t,
        l,
        m: walk_length(eps1, eps2),
        eps1,
        eps2,
        alpha,
        factor,
        epsilon,
    })
}

/// Inputs of the full selection pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub k: usize,
    pub p: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub init: InitMode,
    pub overrides: ParamOverrides,
    /// Steps of the volume walk for `InitMode::McmcVolume`. Defaults to
    /// [`default_walk_steps`].
    pub walk_steps: Option<usize>,
    pub prefetch: ProposalPrefetch,
}

impl SamplingConfig {
    pub fn new(k: usize, epsilon: f64, seed: u64) -> Self {
        SamplingConfig {
            k,
            p: 2.0,
            epsilon,
            seed,
            init: InitMode::ExactVolume,
            overrides: ParamOverrides::default(),
            walk_steps: None,
            prefetch: ProposalPrefetch::Reservoir,
        }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_init(mut self, init: InitMode) -> Self {
        self.init = init;
        self
    }

    pub fn with_overrides(mut self, o: ParamOverrides) -> Self {
        self.overrides = o;
        self
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.k == 0 || self.k > d {
            return Err(Error::param(format!("k must be in 1..={d}, got {}", self.k)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::param(format!(
                "epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::param(format!("p must be >= 2, got {}", self.p)));
        }
        if self.init == InitMode::McmcVolume && self.p != 2.0 {
            return Err(Error::param("mcmc-volume initialization requires p = 2"));
        }
        Ok(())
    }

    pub fn mode(&self) -> ParamMode {
        if self.p == 2.0 {
            ParamMode::L2
        } else {
            ParamMode::Lp { p: self.p }
        }
    }

    pub fn derive(&self) -> Result<DerivedParams> {
        Ok(derive_params(self.k, self.epsilon, self.init.alpha(self.k), self.mode())?
            .with_overrides(&self.overrides))
    }
}

/// `n·k·⌈ln(n·k)⌉`, at least 1000.
pub fn default_walk_steps(n: usize, k: usize) -> usize {
    let nk = (n * k).max(2) as f64;
    ((nk * nk.ln().ceil()) as usize).max(1000)
}
