//! Built-in problems on `Omega = (0, 1)`, `T = 1`, with `A = -nu d_xx`.

use std::f64::consts::PI;

use crate::assimilation::{field_fn, scalar_fn, FieldFn, ProblemData, ProblemSpec};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example1Variant {
    /// Parabolic background `-(x - 1/2)^2 + 1/4`.
    I,
    /// Background `sin(2 pi x)`.
    II,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid!("{name} must be positive, got {v}"))
    }
}

/// Heat flow `sin(pi x) exp(-nu pi^2 t)` as observation, unforced model.
fn decaying_mode(name: &str, alpha: f64, nu: f64, background: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<ProblemSpec> {
    check_positive("nu", nu)?;
    let k = nu * PI * PI;
    let yd = move |t: f64, x: f64| (PI * x).sin() * (-k * t).exp();
    ProblemSpec::new(ProblemData {
        name: name.into(),
        diffusion: scalar_fn(move |_| nu),
        reaction: scalar_fn(|_| 0.0),
        alpha,
        horizon: 1.0,
        domain: (0.0, 1.0),
        forcing: field_fn(|_, _| 0.0),
        observation: field_fn(yd),
        observation_dt: field_fn(move |t, x| -(k * yd(t, x))),
        observation_op: field_fn(move |t, x| k * yd(t, x)),
        background: scalar_fn(background),
    })
}

pub fn example1(variant: Example1Variant, alpha: f64, nu: f64) -> Result<ProblemSpec> {
    match variant {
        Example1Variant::I => decaying_mode("example1i", alpha, nu, |x| -(x - 0.5) * (x - 0.5) + 0.25),
        Example1Variant::II => decaying_mode("example1ii", alpha, nu, |x| (2.0 * PI * x).sin()),
    }
}

/// Observation is the exact unforced evolution of the background, so the
/// optimal adjoint vanishes.
pub fn consistent(alpha: f64, nu: f64) -> Result<ProblemSpec> {
    decaying_mode("consistent", alpha, nu, |x| (PI * x).sin())
}

/// Model-error setting: the observed system receives a heat inflow that the
/// model does not know about.
#[derive(Clone)]
pub struct Example2 {
    /// The assimilation problem; its model forcing is zero.
    pub problem: ProblemSpec,
    /// Inflow that turns the model into the observed system.
    pub inflow: FieldFn,
}

pub fn example2(alpha: f64, nu: f64, eps: f64) -> Result<Example2> {
    check_positive("nu", nu)?;
    check_positive("eps", eps)?;
    let k = nu * PI * PI;
    let t0 = 1.0 / 6.0;
    let envelope = move |t: f64, x: f64| 2.0 * (PI * x).sin() * (-k * t).exp();
    let yd = move |t: f64, x: f64| envelope(t, x) * (((t - t0) / eps).atan() / PI + 1.0);
    let inflow = move |t: f64, x: f64| envelope(t, x) / PI * eps / (eps * eps + (t - t0) * (t - t0));
    let problem = ProblemSpec::new(ProblemData {
        name: "example2".into(),
        diffusion: scalar_fn(move |_| nu),
        reaction: scalar_fn(|_| 0.0),
        alpha,
        horizon: 1.0,
        domain: (0.0, 1.0),
        forcing: field_fn(|_, _| 0.0),
        observation: field_fn(yd),
        observation_dt: field_fn(move |t, x| -k * yd(t, x) + inflow(t, x)),
        observation_op: field_fn(move |t, x| k * yd(t, x)),
        background: scalar_fn(|x| (PI * x).sin()),
    })?;
    Ok(Example2 {
        problem,
        inflow: field_fn(inflow),
    })
}

/// Smooth step `phi(t)` falling from 1 to 0 on `[m - eps, m + eps]`, built
/// from the cutoff `g(z) = exp(-1/z)` for `z > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub m: f64,
    pub eps: f64,
}

/// `g`, `g'` and `g''` at `z`; exactly zero where `g` underflows.
fn cutoff(z: f64) -> [f64; 3] {
    if z <= 1.0 / 700.0 {
        return [0.0; 3];
    }
    let g = (-1.0 / z).exp();
    let z2 = z * z;
    [g, g / z2, g * (1.0 / (z2 * z2) - 2.0 / (z2 * z))]
}

impl Bump {
    pub fn new(m: f64, eps: f64, horizon: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0 && m.is_finite()) {
            return Err(invalid!("bump needs finite m and eps > 0, got m={m}, eps={eps}"));
        }
        if m - eps < 0.0 || m + eps > horizon {
            return Err(invalid!(
                "bump support [m-eps, m+eps] = [{}, {}] must lie in [0, {horizon}]",
                m - eps,
                m + eps
            ));
        }
        Ok(Self { m, eps })
    }

    /// `[phi, phi', phi'']` at `t`.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let s = (t - self.m) / self.eps;
        let [ga, da, dda] = cutoff(0.5 - s);
        let [gb, db, ddb] = cutoff(0.5 + s);
        let e = self.eps;
        // derivatives in t of the two branches
        let (a0, a1, a2) = (ga, -da / e, dda / (e * e));
        let (b0, b1, b2) = (gb, db / e, ddb / (e * e));
        let s0 = a0 + b0;
        let s1 = a1 + b1;
        let s2 = a2 + b2;
        let phi = a0 / s0;
        let num1 = a1 * s0 - a0 * s1;
        let d1 = num1 / (s0 * s0);
        let d2 = (a2 * s0 - a0 * s2) / (s0 * s0) - 2.0 * s1 * num1 / (s0 * s0 * s0);
        [phi, d1, d2]
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t)[0]
    }
}

/// Manufactured problem whose adjoint is `phi(t) sin(pi x)`.
#[derive(Clone)]
pub struct Example3 {
    pub problem: ProblemSpec,
    pub exact_p: FieldFn,
    pub bump: Bump,
}

pub fn example3(alpha: f64, nu: f64, m: f64, eps: f64) -> Result<Example3> {
    check_positive("nu", nu)?;
    check_positive("alpha", alpha)?;
    let bump = Bump::new(m, eps, 1.0)?;
    let k = nu * PI * PI;
    let sx = |x: f64| (PI * x).sin();
    let phi0 = bump.value(0.0);
    let problem = ProblemSpec::new(ProblemData {
        name: "example3".into(),
        diffusion: scalar_fn(move |_| nu),
        reaction: scalar_fn(|_| 0.0),
        alpha,
        horizon: 1.0,
        domain: (0.0, 1.0),
        forcing: field_fn(move |t, x| {
            let [p, d1, _] = bump.eval(t);
            (k * k * p + k * d1) * sx(x)
        }),
        observation: field_fn(move |t, x| bump.eval(t)[1] * sx(x)),
        observation_dt: field_fn(move |t, x| bump.eval(t)[2] * sx(x)),
        observation_op: field_fn(move |t, x| k * bump.eval(t)[1] * sx(x)),
        background: scalar_fn(move |x| (1.0 / alpha + k) * phi0 * sx(x)),
    })?;
    Ok(Example3 {
        problem,
        exact_p: field_fn(move |t, x| bump.value(t) * sx(x)),
        bump,
    })
}

/// Parameters shared by the catalog constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogParams {
    pub alpha: f64,
    pub nu: f64,
    pub eps: f64,
    pub m: f64,
}

impl Default for CatalogParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            nu: 0.1,
            eps: 0.01,
            m: 0.5,
        }
    }
}

pub const CATALOG_NAMES: [&str; 5] = ["example1i", "example1ii", "example2", "example3", "consistent"];

/// Looks up a catalog problem by its command-line name.
pub fn by_name(name: &str, params: &CatalogParams) -> Result<ProblemSpec> {
    let CatalogParams { alpha, nu, eps, m } = *params;
    match name {
        "example1i" => example1(Example1Variant::I, alpha, nu),
        "example1ii" => example1(Example1Variant::II, alpha, nu),
        "example2" => Ok(example2(alpha, nu, eps)?.problem),
        "example3" => Ok(example3(alpha, nu, m, eps)?.problem),
        "consistent" => consistent(alpha, nu),
        other => Err(invalid!("unknown problem '{other}', expected one of {}", CATALOG_NAMES.join(", "))),
    }
}
