//! Interaction kernel, per-level edge probabilities and closed-form level sums.
//!
//! Every kernel here is described per distance class: `J_k` is the value of
//! `J` at distance `L^k`. Internally the table is stored normalised as
//! `ĵ_k = J_k L^{(d+α)k}`, which stays `O(1)` at every level and keeps the
//! annulus weights `|Λ_k \ Λ_{k-1}| J_k = (1 - L^{-d}) L^{-αk} ĵ_k` free of
//! overflow.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::lattice::LatticeParams;
use crate::real::{one_minus_exp_ratio, Real};

/// Relative truncation tolerance for [`ModelParams::tail_sum`].
pub const TAIL_TOLERANCE: f64 = 1e-14;

const MAX_TAIL_TERMS: u32 = 200_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Kernel<R> {
    /// `J(x) = ⟨x⟩^{-d-α}`.
    PowerLaw,
    /// Radially symmetric kernel with explicit per-level values `J_1, J_2, ...`
    /// and declared bounds `c L^{-(d+α)k} <= J_k <= C L^{-(d+α)k}`.
    /// Levels past the table continue the last entry's power law.
    LevelTable {
        /// `J_k` as given.
        values: Vec<R>,
        /// `J_k L^{(d+α)k}`.
        normalized: Vec<R>,
        lower: R,
        upper: R,
    },
    /// Non-radial kernel known only through per-level lower and upper
    /// envelopes. Supports the closed-form bounds but not exact sampling.
    Envelope {
        lower_normalized: Vec<R>,
        upper_normalized: Vec<R>,
        lower: R,
        upper: R,
    },
}

impl<R: Real> Kernel<R> {
    pub fn is_radial(&self) -> bool {
        !matches!(self, Kernel::Envelope { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::PowerLaw => "power",
            Kernel::LevelTable { .. } => "table",
            Kernel::Envelope { .. } => "envelope",
        }
    }
}

/// Tail sum `T_n(β)` together with its linearised upper bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailSum<R> {
    pub value: R,
    pub linear_upper_bound: R,
}

/// Lattice, exponent, inverse temperature and kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<R: Real = f64> {
    lattice: LatticeParams,
    alpha: R,
    beta: R,
    kernel: Kernel<R>,
}

impl<R: Real> ModelParams<R> {
    /// Power-law kernel `J(x) = ⟨x⟩^{-d-α}`.
    pub fn power_law(lattice: LatticeParams, alpha: R, beta: R) -> Result<Self> {
        Self::new(lattice, alpha, beta, Kernel::PowerLaw)
    }

    /// Level table from raw values `J_1, J_2, ...` and declared bounds `(c, C)`.
    pub fn level_table(
        lattice: LatticeParams,
        alpha: R,
        beta: R,
        values: &[R],
        lower: R,
        upper: R,
    ) -> Result<Self> {
        let normalized = normalize(&lattice, alpha, values);
        Self::new(
            lattice,
            alpha,
            beta,
            Kernel::LevelTable {
                values: values.to_vec(),
                normalized,
                lower,
                upper,
            },
        )
    }

    pub fn envelope(
        lattice: LatticeParams,
        alpha: R,
        beta: R,
        lower_values: &[R],
        upper_values: &[R],
        lower: R,
        upper: R,
    ) -> Result<Self> {
        let kernel = Kernel::Envelope {
            lower_normalized: normalize(&lattice, alpha, lower_values),
            upper_normalized: normalize(&lattice, alpha, upper_values),
            lower,
            upper,
        };
        Self::new(lattice, alpha, beta, kernel)
    }

    pub fn new(lattice: LatticeParams, alpha: R, beta: R, kernel: Kernel<R>) -> Result<Self> {
        let d = R::from_count(lattice.dim() as u64);
        if !(alpha > R::zero() && alpha < d) {
            return Err(Error::InvalidParams(format!(
                "alpha must lie in (0, d) = (0, {d}), got {alpha}"
            )));
        }
        if !(beta >= R::zero()) || !beta.is_finite() {
            return Err(Error::InvalidParams(format!(
                "beta must be finite and nonnegative, got {beta}"
            )));
        }
        let slack = R::lit(1e-12);
        let check = |table: &[R], lower: R, upper: R| -> Result<()> {
            if table.is_empty() {
                return Err(Error::InvalidParams("kernel table is empty".into()));
            }
            if !(lower > R::zero()) || !(upper >= lower) {
                return Err(Error::InvalidParams(format!(
                    "kernel bounds need 0 < c <= C, got c={lower} C={upper}"
                )));
            }
            for (i, &v) in table.iter().enumerate() {
                if !(v >= lower * (R::one() - slack) && v <= upper * (R::one() + slack)) {
                    return Err(Error::InvalidParams(format!(
                        "J_{} = {} L^-(d+α)k violates the declared bounds [{lower}, {upper}]",
                        i + 1,
                        v
                    )));
                }
            }
            Ok(())
        };
        match &kernel {
            Kernel::PowerLaw => {}
            Kernel::LevelTable {
                values,
                normalized,
                lower,
                upper,
            } => {
                if values.len() != normalized.len() {
                    return Err(Error::InvalidParams("level table and its normalisation differ in length".into()));
                }
                check(normalized, *lower, *upper)?
            }
            Kernel::Envelope {
                lower_normalized,
                upper_normalized,
                lower,
                upper,
            } => {
                check(lower_normalized, *lower, *upper)?;
                check(upper_normalized, *lower, *upper)?;
                if lower_normalized.len() != upper_normalized.len()
                    || lower_normalized
                        .iter()
                        .zip(upper_normalized)
                        .any(|(lo, hi)| lo > hi)
                {
                    return Err(Error::InvalidParams(
                        "envelope tables must have equal length and lower <= upper".into(),
                    ));
                }
            }
        }
        Ok(Self {
            lattice,
            alpha,
            beta,
            kernel,
        })
    }

    pub fn lattice(&self) -> &LatticeParams {
        &self.lattice
    }

    pub fn alpha(&self) -> R {
        self.alpha
    }

    pub fn beta(&self) -> R {
        self.beta
    }

    pub fn kernel(&self) -> &Kernel<R> {
        &self.kernel
    }

    pub fn level(&self) -> u32 {
        self.lattice.level()
    }

    pub fn with_beta(&self, beta: R) -> Result<Self> {
        Self::new(self.lattice, self.alpha, beta, self.kernel.clone())
    }

    pub fn with_level(&self, level: u32) -> Self {
        Self {
            lattice: self.lattice.with_level(level),
            ..self.clone()
        }
    }

    fn side(&self) -> R {
        R::from_count(self.lattice.side() as u64)
    }

    fn dim(&self) -> R {
        R::from_count(self.lattice.dim() as u64)
    }

    /// Declared lower constant `c` (1 for the power law).
    pub fn lower_constant(&self) -> R {
        match &self.kernel {
            Kernel::PowerLaw => R::one(),
            Kernel::LevelTable { lower, .. } | Kernel::Envelope { lower, .. } => *lower,
        }
    }

    /// Declared upper constant `C` (1 for the power law).
    pub fn upper_constant(&self) -> R {
        match &self.kernel {
            Kernel::PowerLaw => R::one(),
            Kernel::LevelTable { upper, .. } | Kernel::Envelope { upper, .. } => *upper,
        }
    }

    /// `J_k L^{(d+α)k}`; for envelopes the upper envelope.
    pub fn normalized_level(&self, k: u32) -> R {
        let pick = |t: &[R]| t[(k.max(1) as usize - 1).min(t.len() - 1)];
        match &self.kernel {
            Kernel::PowerLaw => R::one(),
            Kernel::LevelTable { normalized, .. } => pick(normalized),
            Kernel::Envelope {
                upper_normalized, ..
            } => pick(upper_normalized),
        }
    }

    /// `J_k`, the kernel at distance `L^k`; `J_0 = J(0)` is reported as `ĵ_1`.
    pub fn j_level(&self, k: u32) -> R {
        let decay = self.side().powf(-(self.dim() + self.alpha) * R::from_count(k as u64));
        self.normalized_level(k) * decay
    }

    /// `β J_k`, so that the level-`k` edge is closed with probability `e^{-βJ_k}`.
    pub fn edge_rate(&self, k: u32) -> R {
        self.beta * self.j_level(k)
    }

    /// `1 - e^{-β J_k}`, computed through `expm1`.
    pub fn p_level(&self, k: u32) -> R {
        -(-self.edge_rate(k)).exp_m1()
    }

    /// `|Λ_k \ Λ_{k-1}| J_k = (1 - L^{-d}) L^{-αk} ĵ_k`.
    pub fn annulus_weight(&self, k: u32) -> R {
        let l = self.side();
        (R::one() - l.powf(-self.dim()))
            * l.powf(-self.alpha * R::from_count(k as u64))
            * self.normalized_level(k)
    }

    fn table_len(&self) -> u32 {
        match &self.kernel {
            Kernel::PowerLaw => 0,
            Kernel::LevelTable { normalized, .. } => normalized.len() as u32,
            Kernel::Envelope {
                upper_normalized, ..
            } => upper_normalized.len() as u32,
        }
    }

    /// Geometric series `(1 - L^{-d}) Σ_{k > from} L^{-αk}`.
    fn geometric_tail(&self, from: u32) -> R {
        let l = self.side();
        let ratio = l.powf(-self.alpha);
        (R::one() - l.powf(-self.dim())) * ratio.powf(R::from_count(from as u64 + 1))
            / (R::one() - ratio)
    }

    /// `Σ_{k > from} |Λ_k \ Λ_{k-1}| J_k` in closed form.
    pub fn linear_tail(&self, from: u32) -> R {
        let table = self.table_len();
        let mut sum = R::zero();
        for k in (from + 1)..=table {
            sum += self.annulus_weight(k);
        }
        let last = self.normalized_level(table.max(1));
        sum + last * self.geometric_tail(from.max(table))
    }

    /// `T_n(β) = Σ_{r > n} |Λ_r \ Λ_{r-1}| (1 - e^{-β J_r})`, summed until the
    /// linearised remainder drops below [`TAIL_TOLERANCE`] of the partial sum,
    /// plus the bound `C β (1 - L^{-d}) L^{-α(n+1)} / (1 - L^{-α})`.
    pub fn tail_sum(&self, n: u32) -> TailSum<R> {
        let bound = self.upper_constant() * self.beta * self.geometric_tail(n);
        if self.beta == R::zero() {
            return TailSum {
                value: R::zero(),
                linear_upper_bound: R::zero(),
            };
        }
        let tol = R::lit(TAIL_TOLERANCE);
        let mut value = R::zero();
        let mut r = n;
        loop {
            r += 1;
            value += self.beta * self.annulus_weight(r) * one_minus_exp_ratio(self.edge_rate(r));
            let remainder = self.beta * self.linear_tail(r);
            if remainder <= tol * value || r - n >= MAX_TAIL_TERMS {
                break;
            }
        }
        TailSum {
            value,
            linear_upper_bound: bound,
        }
    }

    /// Reads a flat config. Keys: `d, L, n, alpha, beta, kernel` and, for
    /// `kernel=table`, `c, C` with entries `J_1, J_2, ...` (or `table=J_1,J_2,...`).
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d: u32 = kv.parse_required("d")?;
        let side: u32 = kv.parse_required("L")?;
        let n: u32 = kv.parse_opt("n")?.unwrap_or(0);
        let lattice = LatticeParams::new(d, side, n)?;
        let alpha = parse_real::<R>(kv, "alpha")?.ok_or_else(|| missing("alpha"))?;
        let beta = parse_real::<R>(kv, "beta")?.unwrap_or_else(R::zero);
        match kv.get("kernel").unwrap_or("power") {
            "power" => Self::power_law(lattice, alpha, beta),
            "table" => {
                let lower = parse_real::<R>(kv, "c")?.ok_or_else(|| missing("c"))?;
                let upper = parse_real::<R>(kv, "C")?.ok_or_else(|| missing("C"))?;
                let values = table_values::<R>(kv)?;
                Self::level_table(lattice, alpha, beta, &values, lower, upper)
            }
            other => Err(Error::Config {
                line: kv.line_of("kernel"),
                reason: format!("kernel must be \"power\" or \"table\", got {other:?}"),
            }),
        }
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.check_keys(
            &["d", "L", "n", "alpha", "beta", "kernel", "c", "C", "table"],
            &["J_"],
        )?;
        Self::from_key_values(&kv)
    }

    /// Writes the flat config; values use shortest round-trip formatting.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "d={}", self.lattice.dim());
        let _ = writeln!(out, "L={}", self.lattice.side());
        let _ = writeln!(out, "n={}", self.lattice.level());
        let _ = writeln!(out, "alpha={}", self.alpha);
        let _ = writeln!(out, "beta={}", self.beta);
        match &self.kernel {
            Kernel::PowerLaw => {
                let _ = writeln!(out, "kernel=power");
            }
            Kernel::LevelTable {
                values, lower, upper, ..
            } => {
                let _ = writeln!(out, "kernel=table");
                let _ = writeln!(out, "c={lower}");
                let _ = writeln!(out, "C={upper}");
                for (i, v) in values.iter().enumerate() {
                    let _ = writeln!(out, "J_{}={v}", i + 1);
                }
            }
            Kernel::Envelope { .. } => {
                let _ = writeln!(out, "kernel=envelope");
            }
        }
        out
    }
}

fn normalize<R: Real>(lattice: &LatticeParams, alpha: R, values: &[R]) -> Vec<R> {
    let l = R::from_count(lattice.side() as u64);
    let d = R::from_count(lattice.dim() as u64);
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| v * l.powf((d + alpha) * R::from_count(i as u64 + 1)))
        .collect()
}

fn missing(key: &str) -> Error {
    Error::Config {
        line: 0,
        reason: format!("missing key {key:?}"),
    }
}

fn parse_real<R: Real>(kv: &KeyValues, key: &str) -> Result<Option<R>> {
    match kv.get(key) {
        None => Ok(None),
        Some(v) => R::from_str_radix(v, 10).map(Some).map_err(|_| Error::Config {
            line: kv.line_of(key),
            reason: format!("{key}: cannot parse {v:?} as a number"),
        }),
    }
}

fn table_values<R: Real>(kv: &KeyValues) -> Result<Vec<R>> {
    if let Some(list) = kv.get("table") {
        return list
            .split(',')
            .map(|tok| {
                R::from_str_radix(tok.trim(), 10).map_err(|_| Error::Config {
                    line: kv.line_of("table"),
                    reason: format!("table: cannot parse {tok:?}"),
                })
            })
            .collect();
    }
    let mut values = Vec::new();
    while let Some(v) = parse_real::<R>(kv, &format!("J_{}", values.len() + 1))? {
        values.push(v);
    }
    let stray = kv
        .keys()
        .filter(|k| k.starts_with("J_"))
        .count();
    if stray != values.len() {
        return Err(Error::Config {
            line: 0,
            reason: "table entries J_k must be numbered consecutively from J_1".into(),
        });
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(beta: f64) -> ModelParams<f64> {
        ModelParams::power_law(LatticeParams::new(1, 2, 2).unwrap(), 0.5, beta).unwrap()
    }

    #[test]
    fn p_level_values() {
        assert_eq!(params(0.0).p_level(3), 0.0);
        let p = params(0.4);
        assert_relative_eq!(p.j_level(2), 0.125, max_relative = 1e-15);
        assert_relative_eq!(p.p_level(2), 0.048_770_575_499_285_99, max_relative = 1e-14);
        assert_relative_eq!(p.p_level(1), 0.131_876_554_605_415_13, max_relative = 1e-14);
        for k in 1..40 {
            assert!(p.p_level(k + 1) < p.p_level(k));
        }
    }

    #[test]
    fn small_beta_limit() {
        // p / β = J (1 - βJ/2 + O(β²J²)).
        for beta in [1e-6, 1e-8, 1e-12] {
            let p = params(beta);
            for k in [1, 5, 30] {
                let j = p.j_level(k);
                let rel = (p.p_level(k) / beta - j).abs() / j;
                assert!(rel <= 0.5 * beta * j * (1.0 + 1e-6) + 1e-15);
            }
        }
        let p = params(1e-12);
        assert_relative_eq!(p.p_level(1) / 1e-12, p.j_level(1), max_relative = 1e-10);
    }

    #[test]
    fn p_level_is_increasing_in_beta() {
        let mut last = -1.0;
        for i in 0..50 {
            let p = params(i as f64 * 0.05).p_level(2);
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn tail_sum_values() {
        assert_eq!(params(0.0).tail_sum(1).value, 0.0);
        let t = params(0.4).tail_sum(1);
        assert_relative_eq!(t.linear_upper_bound, 0.341_421_356_237_309_5, max_relative = 1e-14);
        // High-precision series evaluation.
        assert_relative_eq!(t.value, 0.338_133_197_090_100_4, max_relative = 1e-13);
        assert_relative_eq!(params(0.4).tail_sum(0).value, 0.470_009_751_695_515_5, max_relative = 1e-13);
        assert_relative_eq!(params(0.4).tail_sum(10).value, 0.015_088_822_049_189_343, max_relative = 1e-13);
    }

    #[test]
    fn tail_sum_below_bound_and_power_law() {
        for beta in [0.1, 0.5, 1.0, 3.0] {
            let p = params(beta);
            for n in 0..30 {
                let t = p.tail_sum(n);
                assert!(t.value <= t.linear_upper_bound);
                if n >= 10 {
                    let ratio = t.value / p.tail_sum(n + 1).value;
                    let target = 2f64.powf(0.5);
                    assert!((ratio / target - 1.0).abs() < 0.05);
                }
            }
        }
    }

    #[test]
    fn linear_tail_matches_series() {
        let p = params(1.0);
        let series: f64 = (4..2000).map(|k| p.annulus_weight(k)).sum();
        assert_relative_eq!(p.linear_tail(3), series, max_relative = 1e-12);
        let lat = LatticeParams::new(1, 2, 2).unwrap();
        let table =
            ModelParams::level_table(lat, 0.5, 1.0, &[0.3, 0.2, 0.05], 0.5, 2.0).unwrap();
        let series: f64 = (2..3000).map(|k| table.annulus_weight(k)).sum();
        assert_relative_eq!(table.linear_tail(1), series, max_relative = 1e-12);
    }

    #[test]
    fn single_precision_agrees() {
        let lat = LatticeParams::new(1, 2, 2).unwrap();
        let p32 = ModelParams::<f32>::power_law(lat, 0.5, 0.4).unwrap();
        assert!((p32.p_level(2) - 0.048_770_58).abs() < 1e-6);
        assert!((p32.tail_sum(1).value - 0.338_133_2).abs() < 1e-5);
    }

    #[test]
    fn validation() {
        let lat = LatticeParams::new(1, 2, 2).unwrap();
        assert!(ModelParams::power_law(lat, 1.0, 0.4).is_err());
        assert!(ModelParams::power_law(lat, 0.0, 0.4).is_err());
        assert!(ModelParams::power_law(lat, 0.5, -0.1).is_err());
        // J_1 = 0.3 normalises to 0.3 * 2^1.5 ~ 0.85, outside [1, 2].
        assert!(ModelParams::level_table(lat, 0.5, 1.0, &[0.3], 1.0, 2.0).is_err());
        assert!(ModelParams::level_table(lat, 0.5, 1.0, &[0.3], 0.5, 2.0).is_ok());
    }

    #[test]
    fn config_round_trip() {
        let text = "d=1\nL=2\nn=3\nalpha=0.5\nbeta=0.4\nkernel=table\nc=0.5\nC=2\nJ_1=0.3\nJ_2=0.1\n";
        let p = ModelParams::<f64>::from_config_str(text).unwrap();
        assert_eq!(p.level(), 3);
        assert_relative_eq!(p.j_level(2), 0.1, max_relative = 1e-15);
        let again = ModelParams::<f64>::from_config_str(&p.to_config_string()).unwrap();
        assert_eq!(again, p);
        assert!(p.to_config_string().contains("J_1=0.3\n"));
        let power = params(0.4);
        assert_eq!(ModelParams::from_config_str(&power.to_config_string()).unwrap(), power);
        assert!(ModelParams::<f64>::from_config_str("d=1\nL=2\nalpha=0.5\nkernel=foo").is_err());
        assert!(ModelParams::<f64>::from_config_str("d=1\nL=2\nalpha=0.5\nbogus=1").is_err());
        assert!(ModelParams::<f64>::from_config_str(
            "d=1\nL=2\nalpha=0.5\nkernel=table\nc=0.5\nC=2\nJ_1=0.3\nJ_3=0.1"
        )
        .is_err());
    }
}
