//! JSON problem files: the map as monomial terms with exact rational
//! coefficients, the curve as plain Taylor coefficients, and run options.

use std::path::Path;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::analysis::Field;
use crate::continuation::{default_grid, default_grid_spec, geometric_grid, ContinuationOptions};
use crate::error::KconeError;
use crate::linalg::Q;
use crate::multijet::{CurveJet, MapJet, Monomial};

/// One monomial `coef · z^exp` of an output component.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coef: String,
    pub exp: Vec<u32>,
}

/// Optional run settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemOptions {
    /// `hi:lo:points` geometric grid in `|ε|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    /// Mirror the grid to `ε < 0`; defaults to true for the real field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub both_signs: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton: Option<ContinuationOptions>,
    /// Parameters `p ∈ P_{k+1}` to continue in addition to `p = 0`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_samples: Vec<Vec<String>>,
}

impl ProblemOptions {
    fn is_default(&self) -> bool {
        *self == ProblemOptions::default()
    }
}

/// A problem `G[z] = 0` with a candidate curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub field: Field,
    pub n: usize,
    pub m: usize,
    /// `map[i]` lists the terms of output component `i`.
    pub map: Vec<Vec<TermSpec>>,
    /// Taylor coefficients `c_1, c_2, …` of `z₀(ε) = Σ c_i ε^i`.
    pub curve: Vec<Vec<String>>,
    pub k_max: usize,
    #[serde(default, skip_serializing_if = "ProblemOptions::is_default")]
    pub options: ProblemOptions,
}

/// Parse `a`, `a/b` or a plain decimal `a.b` exactly.
pub fn parse_rational(s: &str) -> Result<Q, KconeError> {
    let t = s.trim();
    let bad = || KconeError::Input(format!("not an exact rational: {s:?}"));
    if t.is_empty() {
        return Err(bad());
    }
    if let Some((int, frac)) = t.split_once('.') {
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let num = BigInt::from_str(&digits).map_err(|_| bad())?;
        let den = num_traits::pow(BigInt::from(10), frac.len());
        let q = Q::new(num, den);
        return Ok(if neg { -q } else { q });
    }
    let q = Q::from_str(t).map_err(|_| bad())?;
    Ok(q)
}

/// Canonical text of a rational: `a` or `a/b` in lowest terms.
pub fn format_rational(q: &Q) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Parse `hi:lo:points`.
pub fn parse_grid(spec: &str, both_signs: bool) -> Result<Vec<f64>, KconeError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || KconeError::Input(format!("grid must look like hi:lo:points, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let hi: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let lo: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let points: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(hi > 0.0 && lo > 0.0 && hi > lo && points >= 2) {
        return Err(KconeError::Input(format!("grid needs hi > lo > 0 and at least 2 points, got {spec:?}")));
    }
    Ok(geometric_grid(hi, lo, points, both_signs))
}

impl ProblemFile {
    /// Parse JSON text, reporting the line and column of syntax errors.
    pub fn parse(text: &str) -> Result<Self, KconeError> {
        let p: ProblemFile = serde_json::from_str(text)
            .map_err(|e| KconeError::Input(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, KconeError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    fn validate(&self) -> Result<(), KconeError> {
        if self.n == 0 || self.m == 0 {
            return Err(KconeError::Input("n and m must be positive".into()));
        }
        if self.map.len() != self.m {
            return Err(KconeError::Input(format!("map has {} components, m = {}", self.map.len(), self.m)));
        }
        for (i, comp) in self.map.iter().enumerate() {
            for t in comp {
                if t.exp.len() != self.n {
                    return Err(KconeError::Input(format!(
                        "component {i}: exponent {:?} has length {}, n = {}",
                        t.exp,
                        t.exp.len(),
                        self.n
                    )));
                }
                parse_rational(&t.coef)?;
            }
        }
        for (i, c) in self.curve.iter().enumerate() {
            if c.len() != self.n {
                return Err(KconeError::Input(format!("curve coefficient {} has length {}, n = {}", i + 1, c.len(), self.n)));
            }
        }
        if let Some(g) = &self.options.grid {
            parse_grid(g, true)?;
        }
        Ok(())
    }

    pub fn to_map(&self) -> Result<MapJet, KconeError> {
        let terms = self
            .map
            .iter()
            .map(|comp| {
                comp.iter().map(|t| Ok(Monomial::new(parse_rational(&t.coef)?, t.exp.clone()))).collect::<Result<Vec<_>, KconeError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        MapJet::from_polynomial(self.n, self.m, terms)
    }

    pub fn to_curve(&self) -> Result<CurveJet, KconeError> {
        let taylor = self
            .curve
            .iter()
            .map(|c| c.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        CurveJet::from_taylor(self.n, taylor)
    }

    /// Rebuild a problem file from internal objects.
    pub fn from_parts(
        name: Option<String>,
        field: Field,
        g: &MapJet,
        curve: &CurveJet,
        k_max: usize,
        options: ProblemOptions,
    ) -> Result<Self, KconeError> {
        let terms = g.terms().ok_or_else(|| KconeError::Input("only polynomial maps serialize to problem files".into()))?;
        let map = terms
            .iter()
            .map(|comp| comp.iter().map(|t| TermSpec { coef: format_rational(&t.coef), exp: t.exp.clone() }).collect())
            .collect();
        let curve = (1..=curve.len()).map(|i| curve.taylor(i).iter().map(format_rational).collect()).collect();
        Ok(ProblemFile { name, field, n: g.n(), m: g.m(), map, curve, k_max, options })
    }

    /// Grid from the options, or the default for order `k`; the second value is its description.
    pub fn grid(&self, k: usize) -> Result<(Vec<f64>, String), KconeError> {
        let both = self.options.both_signs.unwrap_or(self.field == Field::Real);
        match &self.options.grid {
            Some(spec) if !spec.trim().is_empty() => Ok((parse_grid(spec, both)?, format!("grid {spec}"))),
            _ => {
                Ok((default_grid(k, both), format!("grid {} (default)", default_grid_spec(k))))
            }
        }
    }

    pub fn continuation_options(&self) -> ContinuationOptions {
        self.options.newton.clone().unwrap_or_default()
    }

    pub fn p_samples(&self) -> Result<Vec<Vec<Q>>, KconeError> {
        self.options
            .p_samples
            .iter()
            .map(|p| {
                if p.len() != self.n {
                    return Err(KconeError::Input(format!("p sample has length {}, n = {}", p.len(), self.n)));
                }
                p.iter().map(|s| parse_rational(s)).collect()
            })
            .collect()
    }

    /// Whether the problem has any nonzero curve coefficient.
    pub fn has_curve(&self) -> bool {
        self.curve.iter().flatten().any(|s| parse_rational(s).map(|q| !q.is_zero()).unwrap_or(false))
    }
}

/// Names of the bundled problems.
pub const BUNDLED: [&str; 4] = ["sextic", "sextic-secondary", "pitchfork", "regular"];

/// A bundled problem by name.
pub fn bundled(name: &str) -> Result<ProblemFile, KconeError> {
    let text = match name {
        "sextic" => include_str!("../problems/sextic.json"),
        "sextic-secondary" => include_str!("../problems/sextic-secondary.json"),
        "pitchfork" => include_str!("../problems/pitchfork.json"),
        "regular" => include_str!("../problems/regular.json"),
        other => return Err(KconeError::Input(format!("unknown example {other:?}; choose one of {}", BUNDLED.join(", ")))),
    };
    ProblemFile::parse(text)
}
