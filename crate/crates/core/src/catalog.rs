//! Named parametric curves used by scenario configuration files.
//!
//! ```toml
//! gamma_s = { kind = "linear", k = 4.0 }
//! g_tilde = { kind = "power", k = 6.2, p = 0.5 }
//! alpha   = { kind = "sum", terms = [{ kind = "linear", k = 4.0 }, { kind = "power", k = 1.0, p = 3.0 }] }
//! ```

use serde::{Deserialize, Serialize};

use crate::comparison::{compose, ComparisonCurve, CurveClass};
use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    /// `k·r`
    Linear { k: f64 },
    /// `k·r^p`
    Power { k: f64, p: f64 },
    /// `k·min(1, r)`
    Saturation {
        #[serde(default = "one")]
        k: f64,
    },
    /// `c` for every r
    Constant { c: f64 },
    Zero,
    Sum { terms: Vec<CurveSpec> },
    Product { factors: Vec<CurveSpec> },
    Compose {
        outer: Box<CurveSpec>,
        inner: Box<CurveSpec>,
    },
}

impl CurveSpec {
    pub fn build(&self) -> Result<ComparisonCurve> {
        let bad = |msg: String| Err(Error::Precondition(msg));
        match self {
            CurveSpec::Linear { k } if *k > 0.0 => Ok(ComparisonCurve::linear(*k)),
            CurveSpec::Linear { k } => bad(format!("linear curve needs k > 0, got {k}")),
            CurveSpec::Power { k, p } if *k > 0.0 && *p > 0.0 => Ok(ComparisonCurve::power(*k, *p)),
            CurveSpec::Power { k, p } => bad(format!("power curve needs k, p > 0, got k = {k}, p = {p}")),
            CurveSpec::Saturation { k } if *k > 0.0 => {
                Ok(ComparisonCurve::saturation().scaled(*k).with_label(format!("{k}*sat")))
            }
            CurveSpec::Saturation { k } => bad(format!("saturation needs k > 0, got {k}")),
            CurveSpec::Constant { c } if *c >= 0.0 => Ok(ComparisonCurve::constant(*c)),
            CurveSpec::Constant { c } => bad(format!("constant curve must be nonnegative, got {c}")),
            CurveSpec::Zero => Ok(ComparisonCurve::zero()),
            CurveSpec::Sum { terms } => fold(terms, "sum", |a, b| a.plus(b)),
            CurveSpec::Product { factors } => fold(factors, "product", |a, b| a.times(b)),
            CurveSpec::Compose { outer, inner } => Ok(compose(&outer.build()?, &inner.build()?)),
        }
    }

    /// Catalog curves that are not K∞ by construction but are used as gains
    /// can be re-tagged explicitly.
    pub fn build_as(&self, class: CurveClass) -> Result<ComparisonCurve> {
        Ok(self.build()?.with_class(class))
    }
}

fn fold(
    parts: &[CurveSpec],
    what: &str,
    op: impl Fn(&ComparisonCurve, &ComparisonCurve) -> ComparisonCurve,
) -> Result<ComparisonCurve> {
    let mut iter = parts.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Precondition(format!("empty {what}")))?
        .build()?;
    iter.try_fold(first, |acc, spec| Ok(op(&acc, &spec.build()?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_specs() {
        #[derive(Deserialize)]
        struct Doc {
            curve: CurveSpec,
        }
        let doc: Doc = toml::from_str(
            r#"curve = { kind = "sum", terms = [{ kind = "linear", k = 4.0 }, { kind = "power", k = 1.0, p = 3.0 }] }"#,
        )
        .unwrap();
        let c = doc.curve.build().unwrap();
        assert_eq!(c.eval(1.0), 5.0);
        assert_eq!(c.class(), CurveClass::KInf);
    }

    #[test]
    fn composite_saturation() {
        let spec = CurveSpec::Compose {
            outer: Box::new(CurveSpec::Saturation { k: 1.0 }),
            inner: Box::new(CurveSpec::Power { k: 2.0, p: 0.5 }),
        };
        let c = spec.build().unwrap();
        assert!((c.eval(0.125) - 2.0 * 0.125f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.eval(50.0), 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CurveSpec::Linear { k: -1.0 }.build().is_err());
        assert!(CurveSpec::Sum { terms: vec![] }.build().is_err());
    }
}
