//! Built-in coefficient families addressable by name.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{Drift, ProblemSpec};
use crate::coeff::{MatrixFn, VectorFn};
use crate::error::{Error, Result};
use crate::ou::OUModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ou,
    General,
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub kind: ModelKind,
    pub summary: &'static str,
    /// Parameter names with their defaults; every entry also accepts
    /// `interval_start` (default 0).
    pub params: &'static [(&'static str, f64)],
}

const ENTRIES: &[CatalogEntry] = &[
    CatalogEntry {
        name: "ou_const",
        kind: ModelKind::Ou,
        summary: "A = -rate*I, B = sqrt(2*diffusion)*I, g = shift",
        params: &[("rate", 1.0), ("diffusion", 1.0), ("shift", 0.0)],
    },
    CatalogEntry {
        name: "ou_periodic",
        kind: ModelKind::Ou,
        summary: "A(t) = -(base + amplitude*sin(freq*t))*I, B = sqrt(2*diffusion)*I, g(t) = forcing*sin(freq*t)",
        params: &[("base", 2.0), ("amplitude", 1.0), ("freq", 1.0), ("diffusion", 1.0), ("forcing", 0.0)],
    },
    CatalogEntry {
        name: "ou_convergent",
        kind: ModelKind::Ou,
        summary: "A(t) = -(rate_inf + transient*exp(-decay*t))*I, B = sqrt(2*diffusion)*I, g(t) = shift_inf*(1 - exp(-decay*t))",
        params: &[("rate_inf", 1.0), ("transient", 1.0), ("decay", 1.0), ("diffusion", 1.0), ("shift_inf", 0.0)],
    },
    CatalogEntry {
        name: "cubic_dissipative",
        kind: ModelKind::General,
        summary: "b_i(x) = -linear*x_i - cubic*x_i^3, Q = diffusion*I",
        params: &[("linear", 1.0), ("cubic", 1.0), ("diffusion", 1.0)],
    },
    CatalogEntry {
        name: "double_well_shifted",
        kind: ModelKind::General,
        summary: "b(t,x) = -kappa*(x - c(t)) + well*tanh(x - c(t)), c(t) = shift_amp*sin(freq*t), Q = diffusion*I",
        params: &[("kappa", 2.0), ("well", 1.0), ("shift_amp", 1.0), ("freq", 1.0), ("diffusion", 1.0)],
    },
];

pub fn catalog() -> &'static [CatalogEntry] {
    ENTRIES
}

pub fn lookup(name: &str) -> Result<&'static CatalogEntry> {
    ENTRIES.iter().find(|e| e.name == name).ok_or_else(|| Error::UnknownCatalogEntry(name.to_string()))
}

/// A catalog instance: the general problem, plus the OU triple when the
/// family is linear.
#[derive(Debug, Clone)]
pub struct CatalogModel {
    pub spec: ProblemSpec,
    pub ou: Option<OUModel>,
}

fn resolve(entry: &CatalogEntry, overrides: &BTreeMap<String, f64>) -> Result<BTreeMap<&'static str, f64>> {
    let mut values: BTreeMap<&'static str, f64> = entry.params.iter().copied().collect();
    values.insert("interval_start", 0.0);
    for (k, v) in overrides {
        let Some(slot) = values.keys().find(|name| **name == k.as_str()).copied() else {
            return Err(Error::Parameter { name: k.clone(), reason: format!("not a parameter of `{}`", entry.name) });
        };
        if !v.is_finite() {
            return Err(Error::Parameter { name: k.clone(), reason: "must be finite".into() });
        }
        values.insert(slot, *v);
    }
    Ok(values)
}

fn positive(values: &BTreeMap<&'static str, f64>, name: &str) -> Result<f64> {
    let v = values[name];
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Parameter { name: name.into(), reason: format!("{v} must be positive") })
    }
}

/// Instantiates a catalog entry in dimension `dim` with parameter overrides.
pub fn build(name: &str, dim: usize, overrides: &BTreeMap<String, f64>) -> Result<CatalogModel> {
    if dim == 0 {
        return Err(Error::Parameter { name: "dim".into(), reason: "must be positive".into() });
    }
    let entry = lookup(name)?;
    let p = resolve(entry, overrides)?;
    let start = p["interval_start"];
    let diffusion = positive(&p, "diffusion")?;
    let noise = MatrixFn::scalar(dim, (2.0 * diffusion).sqrt());
    let ou = |a: MatrixFn, g: VectorFn, r0: f64| -> Result<CatalogModel> {
        let model = OUModel::new(a, noise.clone(), g, start)?;
        let spec = model.to_spec(name, diffusion, diffusion, r0)?;
        Ok(CatalogModel { spec, ou: Some(model) })
    };
    match name {
        "ou_const" => {
            let rate = positive(&p, "rate")?;
            ou(MatrixFn::scalar(dim, -rate), VectorFn::constant(vec![p["shift"]; dim]), -rate)
        }
        "ou_periodic" => {
            let (base, amp, freq) = (p["base"], p["amplitude"], p["freq"]);
            let r0 = -(base - amp.abs());
            let forcing = VectorFn::Trig { freq, constant: vec![0.0; dim], cos: vec![vec![0.0; dim]], sin: vec![vec![p["forcing"]; dim]] };
            ou(MatrixFn::scalar_periodic(dim, -base, -amp, freq), forcing, r0)
        }
        "ou_convergent" => {
            let rate = positive(&p, "rate_inf")?;
            let decay = positive(&p, "decay")?;
            let shift = p["shift_inf"];
            let a = MatrixFn::scalar_convergent(dim, -rate, -p["transient"], decay);
            let g = VectorFn::ExpConvergent { limit: vec![shift; dim], transient: vec![-shift; dim], rate: decay };
            // sup_t λ_max(A(t)) is −rate when the transient only adds damping.
            let r0 = -rate + p["transient"].min(0.0).abs();
            ou(a, g, r0)
        }
        "cubic_dissipative" => {
            let linear = positive(&p, "linear")?;
            let cubic = p["cubic"];
            if cubic < 0.0 {
                return Err(Error::Parameter { name: "cubic".into(), reason: "must be non-negative".into() });
            }
            let spec = ProblemSpec::new(
                name,
                dim,
                start,
                MatrixFn::scalar(dim, diffusion),
                Drift::Cubic { linear, cubic },
                diffusion,
                diffusion,
                -linear,
            )?;
            Ok(CatalogModel { spec, ou: None })
        }
        "double_well_shifted" => {
            let (kappa, well) = (p["kappa"], p["well"]);
            let center = VectorFn::Trig {
                freq: p["freq"],
                constant: vec![0.0; dim],
                cos: vec![vec![0.0; dim]],
                sin: vec![vec![p["shift_amp"]; dim]],
            };
            // ∂_y(−κy + w·tanh y) ∈ [−κ, −κ + w] for w ≥ 0.
            let r0 = -(kappa - well.max(0.0));
            let spec = ProblemSpec::new(
                name,
                dim,
                start,
                MatrixFn::scalar(dim, diffusion),
                Drift::SoftWell { kappa, well, center },
                diffusion,
                diffusion,
                r0,
            )?;
            Ok(CatalogModel { spec, ou: None })
        }
        _ => unreachable!("catalog entry without a builder"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{audit_hypotheses, AuditGrid};

    #[test]
    fn listing_contains_required_entries() {
        let names: Vec<_> = catalog().iter().map(|e| e.name).collect();
        for n in ["ou_const", "ou_periodic", "ou_convergent", "cubic_dissipative", "double_well_shifted"] {
            assert!(names.contains(&n), "{n}");
        }
    }

    #[test]
    fn every_default_entry_passes_its_audit() {
        for entry in catalog() {
            for dim in [1, 2] {
                let m = build(entry.name, dim, &BTreeMap::new()).unwrap();
                let grid = AuditGrid::standard(&m.spec, 5.0);
                let audit = audit_hypotheses(&m.spec, &grid).unwrap();
                assert!(audit.pass, "{} d={dim}: {audit:?}", entry.name);
                assert!(audit.dissipativity.value.abs() < 1e-6 || audit.dissipativity.value > 0.0);
            }
        }
    }

    #[test]
    fn periodic_declares_its_worst_rate() {
        let m = build("ou_periodic", 1, &BTreeMap::new()).unwrap();
        assert_eq!(m.spec.r0, -1.0);
        let a = m.ou.unwrap().a.eval(std::f64::consts::FRAC_PI_2);
        assert!((a[(0, 0)] + 3.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_names_and_parameters_are_rejected() {
        assert!(matches!(build("nope", 1, &BTreeMap::new()), Err(Error::UnknownCatalogEntry(_))));
        let bad = BTreeMap::from([("speed".to_string(), 1.0)]);
        assert!(matches!(build("ou_const", 1, &bad), Err(Error::Parameter { .. })));
        let neg = BTreeMap::from([("rate".to_string(), -1.0)]);
        assert!(build("ou_const", 1, &neg).is_err());
    }

    #[test]
    fn overrides_apply() {
        let m = build("ou_const", 1, &BTreeMap::from([("shift".to_string(), 1.0), ("rate".to_string(), 2.0)])).unwrap();
        assert_eq!(m.spec.r0, -2.0);
        assert_eq!(m.spec.b(1.0, &[0.0]), vec![1.0]);
    }
}
