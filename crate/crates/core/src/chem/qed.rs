//! Drug-likeness as a weighted geometric mean of asymmetric double-sigmoid
//! desirabilities.

use std::path::Path;
use std::sync::OnceLock;

use super::descriptors::DescriptorVector;
use super::tables::{parse_f64_table, QED_TXT};
use super::ChemError;

pub const QED_PROPERTIES: [&str; 8] = ["mw", "logp", "hba", "hbd", "psa", "rotb", "arom", "alerts"];

/// Coefficients of one asymmetric double sigmoid plus its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Desirability {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub dmax: f64,
    pub weight: f64,
}

impl Desirability {
    /// Value in (0, 1] for finite `x` (capped at 1).
    pub fn eval(&self, x: f64) -> f64 {
        let rise = 1.0 / (1.0 + (-(x - self.c + self.d / 2.0) / self.e).exp());
        let fall = 1.0 - 1.0 / (1.0 + (-(x - self.c - self.d / 2.0) / self.f).exp());
        ((self.a + self.b * rise * fall) / self.dmax).min(1.0)
    }
}

/// Desirability parameters in [`QED_PROPERTIES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct QedParams {
    pub props: [Desirability; 8],
}

impl QedParams {
    pub fn parse(text: &str) -> Result<Self, ChemError> {
        let map = parse_f64_table(text)?;
        let get = |p: &str, f: &str| {
            map.get(&format!("{p}.{f}"))
                .copied()
                .ok_or_else(|| ChemError::Table {
                    line: 0,
                    msg: format!("missing `{p}.{f}`"),
                })
        };
        let mut props = [Desirability {
            a: 0.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            e: 1.0,
            f: 1.0,
            dmax: 1.0,
            weight: 0.0,
        }; 8];
        for (slot, p) in props.iter_mut().zip(QED_PROPERTIES) {
            *slot = Desirability {
                a: get(p, "a")?,
                b: get(p, "b")?,
                c: get(p, "c")?,
                d: get(p, "d")?,
                e: get(p, "e")?,
                f: get(p, "f")?,
                dmax: get(p, "dmax")?,
                weight: get(p, "weight")?,
            };
        }
        let params = Self { props };
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self, ChemError> {
        let text = std::fs::read_to_string(path).map_err(|e| ChemError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn builtin() -> &'static QedParams {
        static P: OnceLock<QedParams> = OnceLock::new();
        P.get_or_init(|| QedParams::parse(QED_TXT).expect("shipped QED parameters are well-formed"))
    }

    pub fn validate(&self) -> Result<(), ChemError> {
        for (d, name) in self.props.iter().zip(QED_PROPERTIES) {
            let finite = [d.a, d.b, d.c, d.d, d.e, d.f, d.dmax, d.weight].iter().all(|x| x.is_finite());
            if !finite || d.weight < 0.0 || d.dmax <= 0.0 || d.e == 0.0 || d.f == 0.0 {
                return Err(ChemError::Table {
                    line: 0,
                    msg: format!("invalid desirability parameters for `{name}`"),
                });
            }
        }
        if self.props.iter().all(|d| d.weight == 0.0) {
            return Err(ChemError::DegenerateParams);
        }
        Ok(())
    }
}

/// Raw descriptor values in [`QED_PROPERTIES`] order.
pub fn qed_inputs(d: &DescriptorVector) -> [f64; 8] {
    [
        d.mw,
        d.logp_proxy,
        f64::from(d.hba),
        f64::from(d.hbd),
        d.psa_proxy,
        f64::from(d.rot_bonds),
        f64::from(d.arom_rings),
        f64::from(d.alerts),
    ]
}

/// `exp(Σ w_i ln d_i / Σ w_i)`.
pub fn qed(d: &DescriptorVector, p: &QedParams) -> Result<f64, ChemError> {
    qed_from_desirabilities(
        &qed_inputs(d)
            .iter()
            .zip(&p.props)
            .map(|(&x, prm)| (prm.eval(x), prm.weight))
            .collect::<Vec<_>>(),
    )
}

/// Weighted geometric mean over `(desirability, weight)` pairs.
pub fn qed_from_desirabilities(pairs: &[(f64, f64)]) -> Result<f64, ChemError> {
    let total_w: f64 = pairs.iter().map(|&(_, w)| w).sum();
    if total_w <= 0.0 {
        return Err(ChemError::DegenerateParams);
    }
    let mut acc = 0.0;
    for &(d, w) in pairs {
        if w == 0.0 {
            continue;
        }
        if !(d > 0.0) {
            return Ok(0.0);
        }
        acc += w * d.min(1.0).ln();
    }
    Ok((acc / total_w).exp().clamp(0.0, 1.0))
}
