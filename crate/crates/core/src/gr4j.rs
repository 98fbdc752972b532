//! Daily GR4J rainfall–runoff model.
//!
//! The production store follows the usual GR4J soil-moisture accounting:
//!
//! ```text
//! Pn = max(P − E, 0)          En = max(E − P, 0)
//! Ps = X1 (1 − (S/X1)²) tanh(Pn/X1) / (1 + (S/X1) tanh(Pn/X1))
//! Es = S (2 − S/X1) tanh(En/X1) / (1 + (1 − S/X1) tanh(En/X1))
//! S  ← S + Ps − Es
//! Perc = S (1 − (1 + (4/9 · S/X1)⁴)^(−1/4))
//! S  ← S − Perc
//! ```
//!
//! Routing uses the canonical GR4J formulation. The routed water `Pr = Perc + (Pn − Ps)` is split 90/10 between
//! unit hydrograph UH1 (time base X4) feeding the nonlinear routing store and
//! UH2 (time base 2·X4) feeding the direct branch. Groundwater exchange
//! `F = X2 (R/X3)^(7/2)` acts on both branches.

use serde::{Deserialize, Serialize};

use crate::ingest::ForcingSeries;

/// Exponent of the unit hydrograph S-curves.
const UH_EXPONENT: f64 = 2.5;

pub const DEFAULT_S0_FRAC: f64 = 0.3;
pub const DEFAULT_R0_FRAC: f64 = 0.2;
pub const DEFAULT_WARMUP_DAYS: usize = 365;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Gr4jError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("day {day}: {source}")]
    Step {
        day: usize,
        #[source]
        source: Box<Gr4jError>,
    },
    #[error("forcing series contains missing values")]
    Gaps,
    #[error("warm-up of {warmup} days leaves nothing of a {len}-day series")]
    WarmupTooLong { warmup: usize, len: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gr4jParams {
    /// Production store capacity, mm.
    pub x1: f64,
    /// Groundwater exchange coefficient, mm/day.
    pub x2: f64,
    /// Routing store capacity, mm.
    pub x3: f64,
    /// Unit hydrograph time base, days.
    pub x4: f64,
}

impl Gr4jParams {
    pub fn new(x1: f64, x2: f64, x3: f64, x4: f64) -> Result<Self, Gr4jError> {
        let p = Gr4jParams { x1, x2, x3, x4 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), Gr4jError> {
        if ![self.x1, self.x2, self.x3, self.x4]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Gr4jError::InvalidParams(
                "all parameters must be finite".into(),
            ));
        }
        if self.x1 <= 0.0 || self.x3 <= 0.0 {
            return Err(Gr4jError::InvalidParams(format!(
                "store capacities must be positive (x1 = {}, x3 = {})",
                self.x1, self.x3
            )));
        }
        if self.x4 < 0.5 {
            return Err(Gr4jError::InvalidParams(format!("x4 = {} < 0.5", self.x4)));
        }
        Ok(())
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, Gr4jError> {
        match v {
            &[x1, x2, x3, x4] => Gr4jParams::new(x1, x2, x3, x4),
            _ => Err(Gr4jError::InvalidParams(format!(
                "expected 4 values, got {}",
                v.len()
            ))),
        }
    }
}

/// Parameters plus initial-condition and warm-up settings; the on-disk form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gr4jSetup {
    #[serde(flatten)]
    pub params: Gr4jParams,
    pub s0_frac: f64,
    pub r0_frac: f64,
    pub warmup_days: usize,
}

impl Gr4jSetup {
    pub fn new(params: Gr4jParams) -> Self {
        Gr4jSetup {
            params,
            s0_frac: DEFAULT_S0_FRAC,
            r0_frac: DEFAULT_R0_FRAC,
            warmup_days: DEFAULT_WARMUP_DAYS,
        }
    }

    pub fn initial_state(&self) -> Gr4jState {
        Gr4jState::initial(&self.params, self.s0_frac, self.r0_frac)
    }
}

/// Fluxes of one production-store step, mm/day.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProductionFluxes {
    pub pn: f64,
    pub en: f64,
    pub ps: f64,
    pub es: f64,
    pub perc: f64,
}

impl ProductionFluxes {
    /// Water handed to routing: percolation plus the part of `pn` not stored.
    pub fn routed(&self) -> f64 {
        self.perc + (self.pn - self.ps)
    }
}

/// Advances the production store by one day. Returns the fluxes and the new
/// store level.
pub fn production_step(
    s_prev: f64,
    p: f64,
    e: f64,
    x1: f64,
) -> Result<(ProductionFluxes, f64), Gr4jError> {
    if !s_prev.is_finite() || !p.is_finite() || !e.is_finite() || !x1.is_finite() {
        return Err(Gr4jError::NonFinite("production store input"));
    }
    let pn = (p - e).max(0.0);
    let en = (e - p).max(0.0);
    let ratio = s_prev / x1;

    let ps = if pn > 0.0 {
        let t = (pn / x1).tanh();
        (x1 * (1.0 - ratio * ratio) * t / (1.0 + ratio * t)).clamp(0.0, pn)
    } else {
        0.0
    };
    let es = if en > 0.0 {
        let t = (en / x1).tanh();
        (s_prev * (2.0 - ratio) * t / (1.0 + (1.0 - ratio) * t)).clamp(0.0, s_prev.min(en))
    } else {
        0.0
    };
    let s = (s_prev + ps - es).clamp(0.0, x1);
    let perc = (s * (1.0 - (1.0 + (4.0 / 9.0 * s / x1).powi(4)).powf(-0.25))).clamp(0.0, s);
    let s_new = s - perc;
    Ok((
        ProductionFluxes {
            pn,
            en,
            ps,
            es,
            perc,
        },
        s_new,
    ))
}

/// Ordinates of the two unit hydrographs for a given time base.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitHydrographs {
    pub uh1: Vec<f64>,
    pub uh2: Vec<f64>,
}

fn s_curve_1(t: f64, x4: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t < x4 {
        (t / x4).powf(UH_EXPONENT)
    } else {
        1.0
    }
}

fn s_curve_2(t: f64, x4: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t <= x4 {
        0.5 * (t / x4).powf(UH_EXPONENT)
    } else if t < 2.0 * x4 {
        1.0 - 0.5 * (2.0 - t / x4).powf(UH_EXPONENT)
    } else {
        1.0
    }
}

impl UnitHydrographs {
    pub fn new(x4: f64) -> Self {
        let n1 = x4.ceil() as usize;
        let n2 = (2.0 * x4).ceil() as usize;
        let uh1 = (1..=n1)
            .map(|j| s_curve_1(j as f64, x4) - s_curve_1(j as f64 - 1.0, x4))
            .collect();
        let uh2 = (1..=n2)
            .map(|j| s_curve_2(j as f64, x4) - s_curve_2(j as f64 - 1.0, x4))
            .collect();
        UnitHydrographs { uh1, uh2 }
    }
}

/// Evolving model state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gr4jState {
    /// Production store level, mm.
    pub s: f64,
    /// Routing store level, mm.
    pub r: f64,
    /// Pending UH1 outflows, mm; index 0 is released next.
    pub uh1_buf: Vec<f64>,
    pub uh2_buf: Vec<f64>,
}

impl Gr4jState {
    pub fn initial(params: &Gr4jParams, s0_frac: f64, r0_frac: f64) -> Self {
        let uh = UnitHydrographs::new(params.x4);
        Gr4jState {
            s: s0_frac * params.x1,
            r: r0_frac * params.x3,
            uh1_buf: vec![0.0; uh.uh1.len()],
            uh2_buf: vec![0.0; uh.uh2.len()],
        }
    }
}

/// One day of model output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub q: f64,
    pub fluxes: ProductionFluxes,
    /// Outflow of the routing store alone.
    pub qr: f64,
    pub qd: f64,
}

/// A parameterized model with precomputed hydrograph ordinates.
#[derive(Clone, Debug)]
pub struct Gr4j {
    pub params: Gr4jParams,
    pub uh: UnitHydrographs,
}

fn convolve(buf: &mut [f64], ordinates: &[f64], inflow: f64) -> f64 {
    for (b, o) in buf.iter_mut().zip(ordinates) {
        *b += o * inflow;
    }
    let out = buf[0];
    buf.rotate_left(1);
    *buf.last_mut().unwrap() = 0.0;
    out.max(0.0)
}

impl Gr4j {
    pub fn new(params: Gr4jParams) -> Result<Self, Gr4jError> {
        params.validate()?;
        Ok(Gr4j {
            params,
            uh: UnitHydrographs::new(params.x4),
        })
    }

    /// Routes `pr` mm through the hydrographs and stores; returns `(q, qr, qd)`.
    pub fn routing_step(
        &self,
        state: &mut Gr4jState,
        pr: f64,
    ) -> Result<(f64, f64, f64), Gr4jError> {
        if !pr.is_finite() || !state.r.is_finite() {
            return Err(Gr4jError::NonFinite("routing input"));
        }
        let pr = pr.max(0.0);
        let Gr4jParams { x2, x3, .. } = self.params;
        let q9 = convolve(&mut state.uh1_buf, &self.uh.uh1, 0.9 * pr);
        let q1 = convolve(&mut state.uh2_buf, &self.uh.uh2, 0.1 * pr);

        let exchange = x2 * (state.r / x3).powf(3.5);
        state.r = (state.r + q9 + exchange).max(0.0);
        let qr = state.r * (1.0 - (1.0 + (state.r / x3).powi(4)).powf(-0.25));
        state.r -= qr;
        let qd = (q1 + exchange).max(0.0);
        Ok((qr + qd, qr, qd))
    }

    pub fn step(&self, state: &mut Gr4jState, p: f64, e: f64) -> Result<StepOutput, Gr4jError> {
        let (fluxes, s_new) = production_step(state.s, p, e, self.params.x1)?;
        state.s = s_new;
        let (q, qr, qd) = self.routing_step(state, fluxes.routed())?;
        Ok(StepOutput { q, fluxes, qr, qd })
    }

    /// Runs the model over aligned precipitation/evaporation series.
    pub fn run(
        &self,
        precip: &[f64],
        evap: &[f64],
        mut state: Gr4jState,
    ) -> Result<(Vec<StepOutput>, Gr4jState), Gr4jError> {
        let mut out = Vec::with_capacity(precip.len());
        for (day, (&p, &e)) in precip.iter().zip(evap).enumerate() {
            let o = self
                .step(&mut state, p, e)
                .map_err(|source| Gr4jError::Step {
                    day,
                    source: Box::new(source),
                })?;
            out.push(o);
        }
        Ok((out, state))
    }
}

/// Daily streamflow and production fluxes after the warm-up period.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub q: Vec<f64>,
    pub fluxes: Vec<ProductionFluxes>,
}

/// Simulates a gap-free series from `init`, discarding the first
/// `warmup_days` days of output.
pub fn simulate(
    params: &Gr4jParams,
    series: &ForcingSeries,
    init: Gr4jState,
    warmup_days: usize,
) -> Result<Simulation, Gr4jError> {
    if !series
        .precip
        .iter()
        .chain(&series.evap)
        .all(|v| v.is_finite())
    {
        return Err(Gr4jError::Gaps);
    }
    if warmup_days >= series.len() {
        return Err(Gr4jError::WarmupTooLong {
            warmup: warmup_days,
            len: series.len(),
        });
    }
    let model = Gr4j::new(*params)?;
    let (steps, _) = model.run(&series.precip, &series.evap, init)?;
    let kept = &steps[warmup_days..];
    Ok(Simulation {
        q: kept.iter().map(|s| s.q).collect(),
        fluxes: kept.iter().map(|s| s.fluxes).collect(),
    })
}
