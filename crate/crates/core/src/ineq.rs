//! Functional inequalities on evolution measures and fitted decay rates.

use serde::Serialize;

use crate::engine::{Constants, Coupling, EvolutionEngine, Propagation};
use crate::error::{Error, Result};
use crate::linalg::{mean_stderr, pairwise_sum};
use crate::measures::Measure;
use crate::report::{Row, Verdict};
use crate::testfn::TestFunction;

/// Largest exponent argument in the hypercontractive schedule.
pub const HYPER_EXPONENT_CAP: f64 = 700.0;
/// Standard errors allowed on sampled comparisons.
pub const SIGMA_MULTIPLIER: f64 = 3.0;
/// Relative quadrature allowance on Gaussian comparisons.
pub const QUADRATURE_REL_TOL: f64 = 1e-8;
/// Default tolerance on fitted rates.
pub const RATE_TOL: f64 = 0.1;
/// A decay point is kept while its signal exceeds this many noise units.
pub const NOISE_FLOOR_RATIO: f64 = 3.0;
/// Relative noise floor of quadrature-based propagations.
pub const QUADRATURE_FLOOR: f64 = 1e-9;
/// Smallest gap used by decay fits.
pub const MIN_FIT_GAP: f64 = 1.0;
pub const MIN_FIT_POINTS: usize = 3;
/// Batches used for the error bar of sampled Poincaré quotients.
pub const POINCARE_BATCHES: usize = 20;

const TINY: f64 = 1e-300;

/// Outcome of a one-sided inequality `value ≥ −tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub value: f64,
    pub stderr: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn pass(&self) -> bool {
        self.value >= -self.tolerance
    }
}

fn tolerance_for(sampled: bool, stderr: f64, scale: f64) -> f64 {
    if sampled {
        SIGMA_MULTIPLIER * stderr
    } else {
        QUADRATURE_REL_TOL * scale.max(1.0)
    }
}

fn check_p(p: f64, min: f64, inclusive: bool) -> Result<()> {
    let ok = if inclusive { p >= min } else { p > min };
    if !(ok && p.is_finite()) {
        let rel = if inclusive { "≥" } else { ">" };
        return Err(Error::Domain(format!("p = {p} must be finite and {rel} {min}")));
    }
    Ok(())
}

/// Right side minus left side of the logarithmic Sobolev inequality for
/// `|f|^p` under `mu`:
/// `(1/p)·m(|f|^p)·log m(|f|^p) + (pΛ/2|r₀|)·∫|f|^{p−2}|∇f|²·1{f≠0} dμ − ∫|f|^p log|f| dμ`.
pub fn lsi_deficit(mu: &Measure, f: &TestFunction, p: f64, c: Constants) -> Result<Check> {
    check_p(p, 1.0, false)?;
    if f.dim() != mu.dim() {
        return Err(Error::Dimension { expected: mu.dim(), got: f.dim() });
    }
    let d = f.dim();
    let k = p * c.lambda / (2.0 * c.r0.abs());
    let ints = mu.integrals(3, |x, out| {
        let v = f.value(x).abs();
        if v < TINY {
            out.fill(0.0);
            return;
        }
        let mut g = vec![0.0; d];
        f.gradient_into(x, &mut g);
        let g2: f64 = g.iter().map(|a| a * a).sum();
        let vp = v.powf(p);
        out[0] = vp;
        out[1] = v.powf(p - 2.0) * g2;
        out[2] = vp * v.ln();
    });
    let [a, b, e] = [ints.means[0], ints.means[1], ints.means[2]];
    let entropy_scale = if a > 0.0 { a * a.ln() / p } else { 0.0 };
    let value = entropy_scale + k * b - e;
    let grad = [if a > 0.0 { (a.ln() + 1.0) / p } else { 0.0 }, k, -1.0];
    let stderr = if mu.is_sampled() { ints.stderr(&grad) } else { 0.0 };
    let scale = entropy_scale.abs() + (k * b).abs() + e.abs();
    Ok(Check { value, stderr, tolerance: tolerance_for(mu.is_sampled(), stderr, scale) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quotient {
    pub value: f64,
    pub stderr: f64,
}

fn lp_norm(weights: &[f64], values: impl Iterator<Item = f64>, p: f64) -> f64 {
    let terms: Vec<f64> = values.zip(weights).map(|(v, w)| w * v.abs().powf(p)).collect();
    pairwise_sum(&terms).powf(1.0 / p)
}

/// `‖f − m(f)‖_{L^p(μ)} / ‖|∇f|‖_{L^p(μ)}`.
pub fn poincare_quotient(mu: &Measure, f: &TestFunction, p: f64) -> Result<Quotient> {
    check_p(p, 2.0, true)?;
    if f.dim() != mu.dim() {
        return Err(Error::Dimension { expected: mu.dim(), got: f.dim() });
    }
    let nodes = mu.nodes();
    let n = nodes.len();
    let vals: Vec<f64> = (0..n).map(|i| f.value(nodes.point(i))).collect();
    let grads: Vec<f64> = (0..n).map(|i| f.grad_norm(nodes.point(i))).collect();
    let quotient = |range: std::ops::Range<usize>| -> f64 {
        let w = &nodes.weights[range.clone()];
        let total = pairwise_sum(w);
        let mean = pairwise_sum(&vals[range.clone()].iter().zip(w).map(|(v, w)| v * w).collect::<Vec<_>>()) / total;
        let num = lp_norm(w, vals[range.clone()].iter().map(|v| v - mean), p);
        let den = lp_norm(w, grads[range].iter().copied(), p);
        num / den
    };
    let den = lp_norm(&nodes.weights, grads.iter().copied(), p);
    if !(den > TINY) {
        return Err(Error::Refused(format!("`{}` has vanishing gradient norm under the measure", f.label())));
    }
    let value = quotient(0..n);
    let stderr = if mu.is_sampled() && n >= 2 * POINCARE_BATCHES {
        let size = n / POINCARE_BATCHES;
        let batch: Vec<f64> = (0..POINCARE_BATCHES).map(|b| quotient(b * size..(b + 1) * size)).collect();
        // Batches of size n/B carry B times the variance of the full estimate.
        mean_stderr(&batch).1
    } else {
        0.0
    };
    Ok(Quotient { value, stderr })
}

/// `√(Λ/|r₀|)`.
pub fn poincare_constant(c: Constants) -> f64 {
    (c.lambda / c.r0.abs()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperExponent {
    pub p: f64,
    pub saturated: bool,
}

/// `p = e^{2η₀|r₀|Λ⁻¹(t−s)}·(q − 1) + 1`, with the exponent argument capped.
pub fn hyper_exponent(q: f64, gap: f64, c: Constants) -> Result<HyperExponent> {
    check_p(q, 1.0, false)?;
    if !(gap >= 0.0) {
        return Err(Error::Domain(format!("t − s = {gap} must be non-negative")));
    }
    let arg = 2.0 * c.eta0 * c.r0.abs() / c.lambda * gap;
    let saturated = arg > HYPER_EXPONENT_CAP;
    Ok(HyperExponent { p: arg.min(HYPER_EXPONENT_CAP).exp() * (q - 1.0) + 1.0, saturated })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperCheck {
    pub s: f64,
    pub t: f64,
    pub q: f64,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub skipped: bool,
}

impl HyperCheck {
    pub fn pass(&self) -> bool {
        self.skipped || self.lhs <= self.rhs + self.tolerance
    }

    pub fn verdict(&self) -> Verdict {
        if self.skipped {
            Verdict::Skipped
        } else {
            Verdict::from_pass(self.pass())
        }
    }

    pub fn row(&self, scenario: &str) -> Row {
        Row::new(scenario, "hyper", self.lhs - self.rhs, self.tolerance, self.verdict())
            .with_p(self.p)
            .with_q(self.q)
            .with_times(self.t, self.s)
    }
}

/// `(Σ_j w_j|v_j|^p)^{1/p}` with the standard error of the plug-in estimate.
fn norm_with_stderr(weights: &[f64], values: &[f64], p: f64, sampled: bool) -> (f64, f64) {
    let powers: Vec<f64> = values.iter().map(|v| v.abs().powf(p)).collect();
    let m = pairwise_sum(&powers.iter().zip(weights).map(|(a, w)| a * w).collect::<Vec<_>>());
    let norm = m.powf(1.0 / p);
    if !sampled || m <= 0.0 {
        return (norm, 0.0);
    }
    let se_m = mean_stderr(&powers).1;
    (norm, norm / (p * m) * se_m)
}

/// `‖G(t,s)f‖_{L^{p}(μ_t)}` against `‖f‖_{L^q(μ_s)}` with the
/// hypercontractive exponent `p`, taken from one propagation gap.
pub fn hyper_from_propagation(prop: &Propagation, g: usize, fi: usize, f: &TestFunction, q: f64, c: Constants) -> Result<HyperCheck> {
    let gap = prop.gaps[g];
    let exp = hyper_exponent(q, gap, c)?;
    let (t, s) = (prop.t, prop.t - gap);
    if exp.saturated {
        return Ok(HyperCheck { s, t, q, p: exp.p, lhs: f64::NAN, rhs: f64::NAN, tolerance: 0.0, skipped: true });
    }
    let (lhs, se_l) = norm_with_stderr(&prop.nodes.weights, &prop.values[g][fi], exp.p, prop.sampled);
    let src = prop.sources[g].nodes();
    let fv: Vec<f64> = (0..src.len()).map(|i| f.value(src.point(i))).collect();
    let (rhs, se_r) = norm_with_stderr(&src.weights, &fv, q, prop.sources[g].is_sampled());
    let tolerance = if prop.sampled { SIGMA_MULTIPLIER * se_l.hypot(se_r) } else { QUADRATURE_REL_TOL * rhs.max(1.0) };
    Ok(HyperCheck { s, t, q, p: exp.p, lhs, rhs, tolerance, skipped: false })
}

/// Hypercontractive bound for one `(s, t, f, q)`.
pub fn hyper_check(engine: &dyn EvolutionEngine, s: f64, t: f64, f: &TestFunction, q: f64) -> Result<HyperCheck> {
    if !(t > s) {
        return Err(Error::Domain(format!("need t > s (t = {t}, s = {s})")));
    }
    let exp = hyper_exponent(q, t - s, engine.constants())?;
    if exp.saturated {
        return Ok(HyperCheck { s, t, q, p: exp.p, lhs: f64::NAN, rhs: f64::NAN, tolerance: 0.0, skipped: true });
    }
    let prop = engine.propagate(t, &[t - s], std::slice::from_ref(f), Coupling::Independent)?;
    hyper_from_propagation(&prop, 0, 0, f, q, engine.constants())
}

/// The curve `t ↦ ‖G(t,s)f‖_{L^{p(t)}(μ_t)}` for fixed `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperCurve {
    pub points: Vec<HyperCheck>,
}

impl HyperCurve {
    /// Largest increase between consecutive points beyond their combined
    /// tolerance (non-positive when the curve is non-increasing).
    pub fn worst_increase(&self) -> f64 {
        let live: Vec<&HyperCheck> = self.points.iter().filter(|c| !c.skipped).collect();
        live.windows(2).map(|w| w[1].lhs - w[0].lhs - w[0].tolerance.hypot(w[1].tolerance)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn non_increasing(&self) -> bool {
        self.worst_increase() <= 0.0
    }
}

pub fn hyper_curve(engine: &dyn EvolutionEngine, s: f64, gaps: &[f64], f: &TestFunction, q: f64) -> Result<HyperCurve> {
    let points = gaps.iter().map(|&gap| hyper_check(engine, s, s + gap, f, q)).collect::<Result<_>>()?;
    Ok(HyperCurve { points })
}

/// `‖G(t,s)f‖_{L^p(μ_t)} ≤ ‖f‖_{L^p(μ_s)}`, as `rhs − lhs`.
pub fn lp_contraction(prop: &Propagation, g: usize, fi: usize, f: &TestFunction, p: f64) -> Result<Check> {
    check_p(p, 1.0, true)?;
    let (lhs, se_l) = norm_with_stderr(&prop.nodes.weights, &prop.values[g][fi], p, prop.sampled);
    let src = prop.sources[g].nodes();
    let fv: Vec<f64> = (0..src.len()).map(|i| f.value(src.point(i))).collect();
    let (rhs, se_r) = norm_with_stderr(&src.weights, &fv, p, prop.sources[g].is_sampled());
    let stderr = se_l.hypot(se_r);
    Ok(Check { value: rhs - lhs, stderr, tolerance: tolerance_for(prop.sampled, stderr, rhs) })
}

/// Which quantity a decay fit follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecaySide {
    /// `‖G(t,s)f − m_s(f)‖_{L^p(μ_t)} / ‖f‖_{L^p(μ_s)}`.
    Values,
    /// `‖|∇_x G(t,s)f|‖_{L^p(μ_t)} / ‖f‖_{L^p(μ_s)}`.
    Gradients,
}

/// One gap of a decay curve, averaged over anchors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayPoint {
    pub gap: f64,
    pub log_ratio: f64,
    /// Worst noise-to-signal ratio over anchors.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub side: DecaySide,
    pub p: f64,
    pub omega: f64,
    pub intercept: f64,
    /// Largest absolute deviation of a fitted log-ratio from the line.
    pub residual: f64,
    pub window: (f64, f64),
    pub truncated: bool,
    pub points: Vec<DecayPoint>,
}

impl RateFit {
    /// Constant `M` with `ratio ≤ M·e^{ω·gap}` over the window.
    pub fn constant(&self) -> f64 {
        (self.intercept + self.residual).exp()
    }

    pub fn row(&self, scenario: &str, r0: f64) -> Row {
        let op = match self.side {
            DecaySide::Values => "decay_a",
            DecaySide::Gradients => "decay_b",
        };
        Row::new(scenario, op, self.omega, RATE_TOL, Verdict::from_pass(self.omega <= r0 + RATE_TOL)).with_p(self.p)
    }
}

/// Ratio and noise-to-signal at one (propagation, gap) for the worst member
/// of the family.
fn decay_ratio(prop: &Propagation, g: usize, family: &[TestFunction], p: f64, side: DecaySide) -> Result<(f64, f64)> {
    let w = &prop.nodes.weights;
    let src = prop.sources[g].nodes();
    let mut best = (0.0_f64, f64::INFINITY);
    for (fi, f) in family.iter().enumerate() {
        let (signal, noise2): (Vec<f64>, f64) = match side {
            DecaySide::Values => {
                let m = prop.mean_value(g, fi);
                let h: Vec<f64> = prop.values[g][fi].iter().map(|v| v - m).collect();
                let n2 = pairwise_sum(&prop.centered_se[g][fi].iter().zip(w).map(|(s, w)| w * s * s).collect::<Vec<_>>());
                (h, n2)
            }
            DecaySide::Gradients => {
                let h: Vec<f64> = (0..prop.node_count()).map(|j| prop.grad_norm(g, fi, j)).collect();
                let n2 = pairwise_sum(&prop.grad_se[g][fi].iter().zip(w).map(|(s, w)| w * s * s).collect::<Vec<_>>());
                (h, n2)
            }
        };
        let num = lp_norm(w, signal.iter().copied(), p);
        let rms = lp_norm(w, signal.iter().copied(), 2.0);
        let den = lp_norm(&src.weights, (0..src.len()).map(|i| f.value(src.point(i))), p);
        if !(den > TINY) {
            continue;
        }
        let floor = if prop.sampled { 0.0 } else { QUADRATURE_FLOOR * den };
        let noise = if rms > TINY { (noise2.sqrt() + floor) / rms } else { f64::INFINITY };
        let ratio = num / den;
        if ratio > best.0 {
            best = (ratio, noise);
        }
    }
    if !(best.0 > TINY) {
        return Err(Error::Refused("every member of the family has zero decay norm".into()));
    }
    Ok(best)
}

/// Anchor-averaged decay curve from propagations that share their gaps.
pub fn decay_points(props: &[Propagation], family: &[TestFunction], p: f64, side: DecaySide) -> Result<Vec<DecayPoint>> {
    check_p(p, 1.0, false)?;
    let first = props.first().ok_or_else(|| Error::Domain("no propagations".into()))?;
    if props.iter().any(|pr| pr.gaps != first.gaps) {
        return Err(Error::Domain("propagations must share their gaps".into()));
    }
    let mut out = Vec::with_capacity(first.gaps.len());
    for (g, &gap) in first.gaps.iter().enumerate() {
        let mut logs = Vec::with_capacity(props.len());
        let mut noise = 0.0_f64;
        for pr in props {
            let (ratio, nsr) = decay_ratio(pr, g, family, p, side)?;
            logs.push(ratio.ln());
            noise = noise.max(nsr);
        }
        out.push(DecayPoint { gap, log_ratio: pairwise_sum(&logs) / logs.len() as f64, noise });
    }
    Ok(out)
}

/// Least-squares line through the decay points with gap ≥ 1, stopping at
/// the first point whose signal is within the noise floor.
pub fn fit_rate(points: &[DecayPoint], p: f64, side: DecaySide) -> Result<RateFit> {
    let mut sorted: Vec<DecayPoint> = points.iter().copied().filter(|q| q.gap >= MIN_FIT_GAP).collect();
    sorted.sort_by(|a, b| a.gap.total_cmp(&b.gap));
    let total = sorted.len();
    let kept: Vec<DecayPoint> = sorted.into_iter().take_while(|q| q.log_ratio.is_finite() && q.noise * NOISE_FLOOR_RATIO < 1.0).collect();
    if kept.len() < MIN_FIT_POINTS {
        return Err(Error::Refused(format!(
            "only {} decay points with gap ≥ {MIN_FIT_GAP} lie above the noise floor (need {MIN_FIT_POINTS})",
            kept.len()
        )));
    }
    let n = kept.len() as f64;
    let mx = kept.iter().map(|q| q.gap).sum::<f64>() / n;
    let my = kept.iter().map(|q| q.log_ratio).sum::<f64>() / n;
    let sxx: f64 = kept.iter().map(|q| (q.gap - mx).powi(2)).sum();
    let sxy: f64 = kept.iter().map(|q| (q.gap - mx) * (q.log_ratio - my)).sum();
    let omega = sxy / sxx;
    let intercept = my - omega * mx;
    let residual = kept.iter().map(|q| (q.log_ratio - intercept - omega * q.gap).abs()).fold(0.0, f64::max);
    Ok(RateFit {
        side,
        p,
        omega,
        intercept,
        residual,
        window: (kept[0].gap, kept[kept.len() - 1].gap),
        truncated: kept.len() < total,
        points: kept,
    })
}

fn propagate_anchors(engine: &dyn EvolutionEngine, anchors: &[f64], family: &[TestFunction], gaps: &[f64]) -> Result<Vec<Propagation>> {
    anchors.iter().map(|&t| engine.propagate(t, gaps, family, Coupling::Synchronous)).collect()
}

/// Fitted rate of `‖G(t,s)f − m_s(f)‖_{L^p(μ_t)} / ‖f‖_{L^p(μ_s)}` in `t − s`,
/// with `t` running over `anchors` and `s = t − gap`.
pub fn decay_fit_a(engine: &dyn EvolutionEngine, anchors: &[f64], family: &[TestFunction], p: f64, gaps: &[f64]) -> Result<RateFit> {
    let props = propagate_anchors(engine, anchors, family, gaps)?;
    fit_rate(&decay_points(&props, family, p, DecaySide::Values)?, p, DecaySide::Values)
}

/// Gradient-side counterpart of [`decay_fit_a`]; every gap must be ≥ 1.
pub fn decay_fit_b(engine: &dyn EvolutionEngine, anchors: &[f64], family: &[TestFunction], p: f64, gaps: &[f64]) -> Result<RateFit> {
    if let Some(g) = gaps.iter().find(|g| **g < MIN_FIT_GAP) {
        return Err(Error::Domain(format!("gradient-side fits need t − s ≥ {MIN_FIT_GAP} (got {g})")));
    }
    let props = propagate_anchors(engine, anchors, family, gaps)?;
    fit_rate(&decay_points(&props, family, p, DecaySide::Gradients)?, p, DecaySide::Gradients)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    pub diff: f64,
    pub tol: f64,
}

impl Agreement {
    pub fn pass(&self) -> bool {
        self.diff <= self.tol
    }
}

/// `|ω_A − ω_B| ≤ tol`.
pub fn rate_agreement(a: &RateFit, b: &RateFit, tol: f64) -> Agreement {
    Agreement { diff: (a.omega - b.omega).abs(), tol }
}

/// Spread of fitted rates across exponents.
pub fn cross_p_stability(fits: &[RateFit], tol: f64) -> Agreement {
    let lo = fits.iter().map(|f| f.omega).fold(f64::INFINITY, f64::min);
    let hi = fits.iter().map(|f| f.omega).fold(f64::NEG_INFINITY, f64::max);
    Agreement { diff: hi - lo, tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{MatrixFn, VectorFn};
    use crate::engine::GaussianEngine;
    use crate::ou::{GaussianMeasure, OUModel};
    use crate::testfn::TestFunction;

    fn unit() -> Constants {
        Constants { eta0: 1.0, lambda: 1.0, r0: -1.0 }
    }

    fn std_normal() -> Measure {
        Measure::Gaussian(GaussianMeasure::standard(1))
    }

    #[test]
    fn hyper_exponent_examples() {
        assert_eq!(hyper_exponent(2.0, 0.0, unit()).unwrap().p, 2.0);
        let p = hyper_exponent(2.0, 0.5 * 3f64.ln(), unit()).unwrap().p;
        assert!((p - 4.0).abs() < 1e-12);
        let p = hyper_exponent(2.0, 1.0, unit()).unwrap().p;
        assert!((p - (2f64.exp() + 1.0)).abs() < 1e-12);
        let sat = hyper_exponent(2.0, 1e4, unit()).unwrap();
        assert!(sat.saturated && sat.p.is_finite());
        assert!(hyper_exponent(1.0, 1.0, unit()).is_err());
    }

    #[test]
    fn lsi_of_constants_vanishes() {
        let c = lsi_deficit(&std_normal(), &TestFunction::constant(1, 3.0), 2.0, unit()).unwrap();
        assert!(c.value.abs() < 1e-10, "{}", c.value);
        assert!(lsi_deficit(&std_normal(), &TestFunction::constant(1, 3.0), 1.0, unit()).is_err());
    }

    #[test]
    fn poincare_shift_invariance_and_refusal() {
        let mu = std_normal();
        let a = poincare_quotient(&mu, &TestFunction::linear(&[1.0], 0.0), 2.0).unwrap();
        let b = poincare_quotient(&mu, &TestFunction::linear(&[1.0], 5.0), 2.0).unwrap();
        assert!((a.value - 1.0).abs() < 1e-9);
        assert!((a.value - b.value).abs() < 1e-12);
        assert!(matches!(poincare_quotient(&mu, &TestFunction::constant(1, 1.0), 2.0), Err(Error::Refused(_))));
    }

    #[test]
    fn rate_agreement_verdicts() {
        let fit = |omega| RateFit {
            side: DecaySide::Values,
            p: 2.0,
            omega,
            intercept: 0.0,
            residual: 0.0,
            window: (1.0, 8.0),
            truncated: false,
            points: vec![],
        };
        assert!(rate_agreement(&fit(-1.0), &fit(-1.0), RATE_TOL).pass());
        assert!(!rate_agreement(&fit(-1.0), &fit(-2.0), RATE_TOL).pass());
        assert!((cross_p_stability(&[fit(-1.0), fit(-1.05), fit(-0.97)], RATE_TOL).diff - 0.08).abs() < 1e-12);
    }

    #[test]
    fn ou_decay_fits_recover_the_rate() {
        let model = OUModel::new(MatrixFn::scalar(1, -1.0), MatrixFn::scalar(1, 2f64.sqrt()), VectorFn::zero(1), 0.0).unwrap();
        let engine = GaussianEngine::new(model, unit()).unwrap();
        let family = [TestFunction::linear(&[1.0], 0.0)];
        let gaps: Vec<f64> = (1..=8).map(f64::from).collect();
        let a = decay_fit_a(&engine, &[10.0], &family, 2.0, &gaps).unwrap();
        let b = decay_fit_b(&engine, &[10.0], &family, 2.0, &gaps).unwrap();
        assert!((a.omega + 1.0).abs() < 0.05, "{a:?}");
        assert!((b.omega + 1.0).abs() < 0.05, "{b:?}");
        assert!(decay_fit_b(&engine, &[10.0], &family, 2.0, &[0.5, 1.0]).is_err());
        let constants = [TestFunction::constant(1, 2.0)];
        assert!(matches!(decay_fit_a(&engine, &[10.0], &constants, 2.0, &gaps), Err(Error::Refused(_))));
    }
}
