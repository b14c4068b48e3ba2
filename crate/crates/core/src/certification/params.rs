//! The constants of the convergence argument for Volterra RDS and their validity conditions.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{Error, Result};
use crate::vpso::binomial;

/// Relative agreement at which an override counts as equal to its formula value. Table
/// values carry six significant digits.
pub const PRINTED_REL_TOL: f64 = 5e-6;

/// Every named constant of a [`ParameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Param {
    Alpha1,
    Kappa,
    P,
    Mu2,
    Lambda,
    L1,
    L0,
    M,
    Q,
    Mu,
    A,
    B,
    C,
    D,
    E,
    Gamma,
    Alpha2,
    Alpha3,
    CBall,
    Beta,
}

impl Param {
    pub const ALL: [Param; 20] = [
        Param::Alpha1,
        Param::Kappa,
        Param::P,
        Param::Mu2,
        Param::Lambda,
        Param::L1,
        Param::L0,
        Param::M,
        Param::Q,
        Param::Mu,
        Param::A,
        Param::B,
        Param::C,
        Param::D,
        Param::E,
        Param::Gamma,
        Param::Alpha2,
        Param::Alpha3,
        Param::CBall,
        Param::Beta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Alpha1 => "alpha1",
            Param::Kappa => "kappa",
            Param::P => "p",
            Param::Mu2 => "mu2",
            Param::Lambda => "lambda",
            Param::L1 => "l1",
            Param::L0 => "l0",
            Param::M => "M",
            Param::Q => "q",
            Param::Mu => "mu",
            Param::A => "A",
            Param::B => "B",
            Param::C => "C",
            Param::D => "D",
            Param::E => "E",
            Param::Gamma => "gamma",
            Param::Alpha2 => "alpha2",
            Param::Alpha3 => "alpha3",
            Param::CBall => "c",
            Param::Beta => "beta",
        }
    }

    pub fn from_name(s: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn is_integer(self) -> bool {
        matches!(self, Param::L0 | Param::M)
    }

    /// Constants the construction leaves open inside an interval.
    pub fn is_free_choice(self) -> bool {
        matches!(
            self,
            Param::Alpha1 | Param::Mu2 | Param::Lambda | Param::L1 | Param::Mu | Param::Gamma
        )
    }

    /// `E` is always `max{A, B, C, D}`.
    pub fn is_overridable(self) -> bool {
        self != Param::E
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Provenance {
    /// Determined by its formula.
    Formula,
    /// A free choice filled with the built-in default.
    Default,
    Override,
}

/// One strict inequality of the construction, evaluated.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Check {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// An override that disagrees with the formula evaluated on the effective upstream values.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Discrepancy {
    pub param: Param,
    pub value: f64,
    pub formula: f64,
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {} overrides formula value {}",
            self.param, self.value, self.formula
        )
    }
}

/// Overrides keyed by parameter.
pub type Overrides = BTreeMap<Param, f64>;

/// The overrides of the parameter table for `m = d = 2`, `ν = (1/2, 1/2)`.
pub fn reference_overrides() -> Overrides {
    [
        (Param::Alpha1, 0.99),
        (Param::P, 0.5),
        (Param::Mu2, 0.0),
        (Param::Lambda, 0.4),
        (Param::L1, 1.8),
        (Param::L0, 2.0),
        (Param::M, 7.0),
        (Param::Q, 2f64.powi(-8)),
        (Param::Mu, 0.0027),
        (Param::Gamma, 1e-10),
        (Param::A, 0.999846),
        (Param::B, 0.999791),
        (Param::D, 0.989288),
        (Param::Beta, 1.54011e-4),
    ]
    .into_iter()
    .collect()
}

/// The same table without the printed values of `A`, `B`, `D` and `β`.
pub fn reference_choices() -> Overrides {
    let mut o = reference_overrides();
    for p in [Param::A, Param::B, Param::D, Param::Beta] {
        o.remove(&p);
    }
    o
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ParameterSet {
    pub m: usize,
    pub d: usize,
    pub nu_lower: f64,
    pub alpha1: f64,
    pub kappa: f64,
    pub p: f64,
    pub mu2: f64,
    pub lambda: f64,
    pub l1: f64,
    pub l0: u32,
    pub big_m: u32,
    pub q: f64,
    pub mu: f64,
    pub big_a: f64,
    pub big_b: f64,
    pub big_c: f64,
    pub big_d: f64,
    pub big_e: f64,
    /// `log E`, exact even when `E` rounds to one.
    pub ln_e: f64,
    pub gamma: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub c: f64,
    pub beta: f64,
    pub overrides: Overrides,
    pub provenance: BTreeMap<Param, Provenance>,
    pub validity: Vec<Check>,
    pub warnings: Vec<Discrepancy>,
}

struct Builder<'a> {
    overrides: &'a Overrides,
    provenance: BTreeMap<Param, Provenance>,
    validity: Vec<Check>,
    warnings: Vec<Discrepancy>,
}

impl Builder<'_> {
    /// A free choice: the override or the default.
    fn choose(&mut self, p: Param, default: f64) -> f64 {
        match self.overrides.get(&p) {
            Some(&v) => {
                self.provenance.insert(p, Provenance::Override);
                v
            }
            None => {
                self.provenance.insert(p, Provenance::Default);
                default
            }
        }
    }

    /// A determined constant: the override (with a warning on mismatch) or the formula.
    fn derive(&mut self, p: Param, formula: f64) -> f64 {
        match self.overrides.get(&p) {
            Some(&v) => {
                self.provenance.insert(p, Provenance::Override);
                let agree = if p.is_integer() {
                    v == formula
                } else {
                    (v - formula).abs() <= PRINTED_REL_TOL * v.abs().max(formula.abs())
                };
                if !agree {
                    self.warnings.push(Discrepancy {
                        param: p,
                        value: v,
                        formula,
                    });
                }
                v
            }
            None => {
                self.provenance.insert(p, Provenance::Formula);
                formula
            }
        }
    }

    /// `derive` for a constant given through its logarithm; returns the value and its log.
    fn derive_ln(&mut self, p: Param, ln_formula: f64) -> (f64, f64) {
        let v = self.derive(p, ln_formula.exp());
        // an override equal to the rounded formula value keeps the exact logarithm
        if self.overrides.contains_key(&p) && v != ln_formula.exp() {
            (v, v.ln())
        } else {
            (v, ln_formula)
        }
    }

    /// `value < 1`, decided on `ln_value < 0` so that values within an ulp of one are
    /// still resolved.
    fn less_ln(&mut self, name: &'static str, value: f64, ln_value: f64) {
        self.validity.push(Check {
            name,
            lhs: value,
            rhs: 1.0,
            pass: ln_value < 0.0,
        });
    }

    fn less(&mut self, name: &'static str, lhs: f64, rhs: f64) {
        self.validity.push(Check {
            name,
            lhs,
            rhs,
            pass: lhs < rhs,
        });
    }
}

fn ceil_u32(v: f64) -> u32 {
    if v.is_nan() || v <= 0.0 {
        0
    } else if v >= u32::MAX as f64 {
        u32::MAX
    } else {
        v.ceil() as u32
    }
}

/// `M = (m−1)·⌈(2/log 2)·log((2 log d/(log 2)²)·max{m, l0+1})⌉ − 1`.
pub fn m_formula(m: usize, d: usize, l0: u32) -> u32 {
    let ln2 = core::f64::consts::LN_2;
    let inner = 2.0 * (d as f64).ln() / (ln2 * ln2) * (m as f64).max(l0 as f64 + 1.0);
    let k = ceil_u32(2.0 / ln2 * inner.ln());
    ((m as u32 - 1) * k).saturating_sub(1)
}

impl ParameterSet {
    /// Derives every constant, then requires all validity inequalities to hold.
    pub fn derive(m: usize, d: usize, nu_lower: f64, overrides: &Overrides) -> Result<Self> {
        let set = Self::evaluate(m, d, nu_lower, overrides)?;
        match set.validity.iter().find(|c| !c.pass) {
            Some(c) => Err(Error::ConditionViolated {
                name: c.name,
                lhs: c.lhs,
                rhs: c.rhs,
            }),
            None => Ok(set),
        }
    }

    /// Derives every constant and records the validity inequalities without failing on them.
    /// Only malformed inputs are errors.
    pub fn evaluate(m: usize, d: usize, nu_lower: f64, overrides: &Overrides) -> Result<Self> {
        if m < 2 || d < 2 {
            return Err(Error::InvalidArgument(format!("need m >= 2 and d >= 2, got m={m}, d={d}")));
        }
        if !(nu_lower > 0.0 && nu_lower <= 1.0) {
            return Err(Error::InvalidArgument(format!("ν̲ = {nu_lower} outside (0, 1]")));
        }
        for (&p, &v) in overrides {
            if !p.is_overridable() {
                return Err(Error::InvalidArgument(format!("{p} cannot be overridden")));
            }
            if !v.is_finite() || (p.is_integer() && (v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64)) {
                return Err(Error::InvalidArgument(format!("override {p} = {v} is not admissible")));
            }
        }
        let mut b = Builder {
            overrides,
            provenance: BTreeMap::new(),
            validity: Vec::new(),
            warnings: Vec::new(),
        };
        let (mf, df) = (m as f64, d as f64);
        let ln_d = df.ln();
        let c2 = binomial(d as u32, 2);

        let alpha1_max = -(1.0 - nu_lower).ln() / ln_d;
        let alpha1 = b.choose(Param::Alpha1, 0.99 * alpha1_max);
        b.less("α1 > 0", 0.0, alpha1);
        b.less("α1 < −log(1−ν̲)/log(d)", alpha1, alpha1_max);

        let kappa_f = ((1.0 - (1.0 - nu_lower) * df.powf(alpha1)) / (nu_lower * c2.powf(alpha1)))
            .powf(1.0 / alpha1)
            .min(1.0 / df);
        let kappa = b.derive(Param::Kappa, kappa_f);
        b.less("κ > 0", 0.0, kappa);

        let p = b.derive(Param::P, nu_lower.powi(m as i32 - 1));
        b.less("p > 0", 0.0, p);

        let mu2 = b.choose(Param::Mu2, if m == 2 { 0.0 } else { 0.5 });
        if m == 2 {
            b.validity.push(Check {
                name: "μ2 = 0 when m = 2",
                lhs: mu2,
                rhs: 0.0,
                pass: mu2 == 0.0,
            });
        } else {
            b.less("μ2 > 0", 0.0, mu2);
            b.less("μ2 < 1", mu2, 1.0);
        }

        let span = mf - 1.0 + mu2;
        let lambda = b.choose(Param::Lambda, 0.5 * (-(1.0 - p).ln() / span));
        b.less("λ > 0", 0.0, lambda);
        let lam_lhs = (lambda * span).exp() * (1.0 - p);
        b.less("e^{λ(m−1+μ2)}(1−p) < 1", lam_lhs, 1.0);

        let l1_min = -((1.0 - lam_lhs) / p).ln() / lambda;
        let l1 = b.choose(Param::L1, 1.1 * l1_min);
        let d_val = lam_lhs + (-lambda * l1).exp() * p;
        b.less("e^{λ(m−1+μ2)}(1−p) + e^{−λ l1}p < 1", d_val, 1.0);

        let l0 = b.derive(Param::L0, ceil_u32(l1 - 1.0 + mu2 + 2.0 * (mf - 1.0)) as f64) as u32;
        let big_m = b.derive(Param::M, m_formula(m, d, l0) as f64) as u32;
        b.less("M > 0", 0.0, big_m as f64);
        let q = b.derive(Param::Q, nu_lower.powi((big_m as i32).saturating_add(1)));
        b.less("q > 0", 0.0, q);

        // 1 − q + e^{−λ}q = 1 + q(e^{−λ} − 1), kept accurate for tiny q
        let ln_b_core = (q * (-lambda).exp_m1()).ln_1p();
        let mu_max = -ln_b_core / lambda;
        let mu = b.choose(Param::Mu, 0.5 * mu_max);
        b.less("μ > 0", 0.0, mu);
        let ln_b_val = lambda * mu + ln_b_core;
        b.less_ln("e^{λμ}(1−q) + e^{−λ(1−μ)}q < 1", ln_b_val.exp(), ln_b_val);

        let (big_a, ln_a) = b.derive_ln(Param::A, -lambda * mu / big_m as f64);
        let (big_b, ln_b) = b.derive_ln(Param::B, ln_b_val);
        let ln_c_val = if m == 2 { f64::NEG_INFINITY } else { -lambda * mu2 / (mf - 2.0) };
        let (big_c, ln_c) = b.derive_ln(Param::C, ln_c_val);
        let (big_d, ln_dd) = b.derive_ln(Param::D, d_val.ln());
        let big_e = big_a.max(big_b).max(big_c).max(big_d);
        let ln_e = ln_a.max(ln_b).max(ln_c).max(ln_dd);
        b.provenance.insert(Param::E, Provenance::Formula);
        b.less_ln("A < 1", big_a, ln_a);
        b.less_ln("B < 1", big_b, ln_b);
        b.less_ln("C < 1", big_c, ln_c);
        b.less_ln("D < 1", big_d, ln_dd);
        b.less_ln("E < 1", big_e, ln_e);

        let gamma_max = -ln_e / lambda;
        let gamma = b.choose(Param::Gamma, 1e-10f64.min(0.5 * gamma_max));
        b.less("γ > 0", 0.0, gamma);
        b.less("γ < −log(E)/λ", gamma, gamma_max);

        let alpha2 = b.derive(Param::Alpha2, -(lambda * gamma + ln_e));
        let alpha3 = b.derive(Param::Alpha3, alpha1.min(alpha2));
        let denom = 1.0 + gamma + mf.ln() / ln_d;
        let c = b.derive(Param::CBall, (-alpha3 * l0 as f64 * ln_d / denom).exp());
        let beta = b.derive(Param::Beta, alpha3 / denom);
        b.less("α2 > 0", 0.0, alpha2);
        b.less("α3 > 0", 0.0, alpha3);
        b.less("β > 0", 0.0, beta);

        Ok(Self {
            m,
            d,
            nu_lower,
            alpha1,
            kappa,
            p,
            mu2,
            lambda,
            l1,
            l0,
            big_m,
            q,
            mu,
            big_a,
            big_b,
            big_c,
            big_d,
            big_e,
            ln_e,
            gamma,
            alpha2,
            alpha3,
            c,
            beta,
            overrides: overrides.clone(),
            provenance: b.provenance,
            validity: b.validity,
            warnings: b.warnings,
        })
    }

    /// The parameter table for `m = d = 2`, `ν̲ = 1/2`, with its printed `A`, `B`, `D`, `β`.
    pub fn reference_table() -> Result<Self> {
        Self::derive(2, 2, 0.5, &reference_overrides())
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Alpha1 => self.alpha1,
            Param::Kappa => self.kappa,
            Param::P => self.p,
            Param::Mu2 => self.mu2,
            Param::Lambda => self.lambda,
            Param::L1 => self.l1,
            Param::L0 => self.l0 as f64,
            Param::M => self.big_m as f64,
            Param::Q => self.q,
            Param::Mu => self.mu,
            Param::A => self.big_a,
            Param::B => self.big_b,
            Param::C => self.big_c,
            Param::D => self.big_d,
            Param::E => self.big_e,
            Param::Gamma => self.gamma,
            Param::Alpha2 => self.alpha2,
            Param::Alpha3 => self.alpha3,
            Param::CBall => self.c,
            Param::Beta => self.beta,
        }
    }

    pub fn provenance(&self, p: Param) -> Provenance {
        self.provenance.get(&p).copied().unwrap_or(Provenance::Formula)
    }

    pub fn all_valid(&self) -> bool {
        self.validity.iter().all(|c| c.pass)
    }

    /// Every overridable value as an override; deriving from it reproduces the values.
    pub fn as_overrides(&self) -> Overrides {
        Param::ALL
            .into_iter()
            .filter(|p| p.is_overridable())
            .map(|p| (p, self.get(p)))
            .collect()
    }

    /// `ν̲·C(d,2)^{α1}·s^{α1} + (1−ν̲)·d^{α1}`, the one-step factor of `v(H̃)`.
    pub fn h_factor(&self, s: f64) -> f64 {
        let c2 = binomial(self.d as u32, 2);
        self.nu_lower * c2.powf(self.alpha1) * s.powf(self.alpha1)
            + (1.0 - self.nu_lower) * (self.d as f64).powf(self.alpha1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn reference_table_values() {
        let ps = ParameterSet::reference_table().unwrap();
        assert!((ps.big_a - 0.999846).abs() <= 5e-7);
        assert!((ps.big_b - 0.999791).abs() <= 5e-6);
        assert!((ps.big_d - 0.989288).abs() <= 5e-7);
        assert!((ps.alpha2 - 1.54012e-4).abs() <= 1e-9);
        assert_eq!(ps.alpha3, ps.alpha2);
        assert_eq!(ps.big_e, ps.big_a);
        let mut w: Vec<Param> = ps.warnings.iter().map(|w| w.param).collect();
        w.sort();
        assert_eq!(w, vec![Param::L0, Param::M, Param::Beta]);
        let m = ps.warnings.iter().find(|w| w.param == Param::M).unwrap();
        assert_eq!(m.formula, 6.0);
        let l0 = ps.warnings.iter().find(|w| w.param == Param::L0).unwrap();
        assert_eq!(l0.formula, 3.0);
        let beta = ps.warnings.iter().find(|w| w.param == Param::Beta).unwrap();
        assert!((beta.formula - 7.70e-5).abs() < 1e-7);
    }

    #[test]
    fn kappa_oracle() {
        // first branch of the min: ((1 − 0.5·2^0.99)/(0.5·1))^{1/0.99}
        let ps = ParameterSet::reference_table().unwrap();
        let oracle = ((1.0 - 0.5 * 2f64.powf(0.99)) / 0.5).powf(1.0 / 0.99);
        assert!((ps.kappa - oracle).abs() < 1e-15);
        assert!((ps.kappa - 0.01322).abs() < 1e-4);
    }

    #[test]
    fn choices_alone_give_unrounded_alpha2() {
        let ps = ParameterSet::derive(2, 2, 0.5, &reference_choices()).unwrap();
        let ln_a = -0.4f64 * 0.0027 / 7.0;
        assert_eq!(ps.big_a, ln_a.exp());
        assert_eq!(ps.ln_e, ln_a);
        assert!((ps.alpha2 - (-(0.4 * 1e-10 + ln_a))).abs() < 1e-18);
        assert!((ps.alpha2 - 1.54012e-4).abs() > 1e-7);
    }

    #[test]
    fn lambda_violation_named() {
        let mut o = reference_choices();
        o.insert(Param::Lambda, 0.70);
        match ParameterSet::derive(2, 2, 0.5, &o) {
            Err(Error::ConditionViolated { name, lhs, rhs }) => {
                assert_eq!(name, "e^{λ(m−1+μ2)}(1−p) < 1");
                assert!(lhs > 1.0 && rhs == 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_valid_across_shapes() {
        for m in 2..=5 {
            for d in 2..=5 {
                for nu in [1.0 / m as f64, 0.5 / m as f64, 0.05] {
                    let ps = ParameterSet::derive(m, d, nu, &Overrides::new()).unwrap();
                    assert!(ps.warnings.is_empty());
                    assert_eq!(ps.big_e, ps.big_a.max(ps.big_b).max(ps.big_c).max(ps.big_d));
                    assert_eq!(ps.l0 as f64, (ps.l1 - 1.0 + ps.mu2 + 2.0 * (m as f64 - 1.0)).ceil());
                }
            }
        }
    }

    #[test]
    fn rederive_is_stable() {
        for ps in [
            ParameterSet::reference_table().unwrap(),
            ParameterSet::derive(3, 2, 0.2, &Overrides::new()).unwrap(),
            ParameterSet::derive(4, 3, 0.25, &Overrides::new()).unwrap(),
        ] {
            let again = ParameterSet::derive(ps.m, ps.d, ps.nu_lower, &ps.overrides).unwrap();
            assert_eq!(again, ps);
            let full = ParameterSet::derive(ps.m, ps.d, ps.nu_lower, &ps.as_overrides()).unwrap();
            for p in Param::ALL {
                assert_eq!(full.get(p).to_bits(), ps.get(p).to_bits(), "{p}");
            }
        }
    }

    #[test]
    fn malformed_overrides() {
        let mut o = Overrides::new();
        o.insert(Param::E, 0.5);
        assert!(ParameterSet::evaluate(2, 2, 0.5, &o).is_err());
        let mut o = Overrides::new();
        o.insert(Param::L0, 2.5);
        assert!(ParameterSet::evaluate(2, 2, 0.5, &o).is_err());
        assert!(ParameterSet::evaluate(1, 2, 0.5, &Overrides::new()).is_err());
        assert!(ParameterSet::evaluate(2, 2, 0.0, &Overrides::new()).is_err());
        for p in Param::ALL {
            assert_eq!(Param::from_name(p.name()), Some(p));
        }
    }
}
