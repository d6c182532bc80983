//! The hierarchical group: points as finite digit sequences over the torus
//! `(Z/LZ)^d`, carry-free addition, the ultrametric norm, and counting
//! identities for balls, annuli and ordered pairs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Element of the hierarchical lattice.
///
/// `digits[i]` is the level-`(i + 1)` coordinate, an integer in `[0, L^d)`
/// whose base-`L` expansion gives the `d` torus coordinates. Trailing zero
/// digits are never stored, so the zero point has no digits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    digits: Vec<u32>,
}

impl Point {
    pub fn zero() -> Self {
        Self { digits: Vec::new() }
    }

    /// Builds a point from level-1-first digits, trimming trailing zeros.
    pub fn from_digits(mut digits: Vec<u32>) -> Self {
        while digits.last() == Some(&0) {
            digits.pop();
        }
        Self { digits }
    }

    /// The point whose only nonzero digit is `digit` at `level` (>= 1).
    pub fn unit(level: u32, digit: u32) -> Self {
        assert!(level >= 1, "levels start at 1");
        let mut digits = vec![0; level as usize];
        digits[level as usize - 1] = digit;
        Self::from_digits(digits)
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    /// Digit at `level` (1-based); zero above the top level.
    pub fn digit(&self, level: u32) -> u32 {
        if level == 0 {
            return 0;
        }
        self.digits.get(level as usize - 1).copied().unwrap_or(0)
    }

    /// Number of stored digits: the `h` with `||p|| = L^h`, zero for the origin.
    pub fn top_level(&self) -> u32 {
        self.digits.len() as u32
    }

    pub fn is_zero(&self) -> bool {
        self.digits.is_empty()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.digits.is_empty() {
            return f.write_str("0");
        }
        for (i, d) in self.digits.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for Point {
    type Err = Error;

    /// Parses the comma-separated digit encoding. Digit ranges are checked
    /// by [`LatticeParams::parse_point`], which knows `L^d`.
    fn from_str(s: &str) -> Result<Self> {
        let err = |reason: &str| Error::PointParse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let trimmed = s.trim();
        if trimmed.is_empty() {
            return Err(err("empty input"));
        }
        let digits = trimmed
            .split(',')
            .map(|tok| tok.trim().parse::<u32>().map_err(|e| err(&e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Point::from_digits(digits))
    }
}

/// Dimension, side length and the ball level used for finite-volume work.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeParams {
    dim: u32,
    side: u32,
    level: u32,
    /// `L^d`, the number of values one digit can take.
    torus: u32,
}

impl LatticeParams {
    pub fn new(dim: u32, side: u32, level: u32) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidLattice("d must be at least 1".into()));
        }
        if side < 2 {
            return Err(Error::InvalidLattice("L must be at least 2".into()));
        }
        let torus = side
            .checked_pow(dim)
            .ok_or_else(|| Error::Overflow(format!("L^d = {side}^{dim}")))?;
        Ok(Self {
            dim,
            side,
            level,
            torus,
        })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn side(&self) -> u32 {
        self.side
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Same lattice with a different ball level.
    pub fn with_level(&self, level: u32) -> Self {
        Self { level, ..*self }
    }

    /// `L^d`.
    pub fn torus_size(&self) -> u32 {
        self.torus
    }

    /// `|Λ_k| = L^{dk}`.
    pub fn ball_volume(&self, k: u32) -> Result<u128> {
        (self.torus as u128)
            .checked_pow(k)
            .ok_or_else(|| Error::Overflow(format!("|Λ_{k}|")))
    }

    /// `|Λ_n|` at the configured level, as an array length.
    pub fn volume(&self) -> Result<usize> {
        let v = self.ball_volume(self.level)?;
        usize::try_from(v).map_err(|_| Error::Overflow(format!("|Λ_{}| as usize", self.level)))
    }

    /// `|Λ_k \ Λ_{k-1}|`, with `annulus_size(0) = 1` for the origin alone.
    pub fn annulus_size(&self, k: i64) -> Result<u128> {
        if k < 0 {
            return Err(Error::LevelOutOfRange {
                level: k,
                max: u32::MAX,
            });
        }
        let k = k as u32;
        if k == 0 {
            return Ok(1);
        }
        let inner = self.ball_volume(k - 1)?;
        let outer = inner
            .checked_mul(self.torus as u128)
            .ok_or_else(|| Error::Overflow(format!("|Λ_{k}|")))?;
        Ok(outer - inner)
    }

    /// Annulus size as a float, valid at levels where the exact count overflows.
    pub fn annulus_size_f64(&self, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let q = self.torus as f64;
        (q - 1.0) * q.powi(k as i32 - 1)
    }

    /// Checks digit ranges and returns the canonical point.
    pub fn parse_point(&self, s: &str) -> Result<Point> {
        let p: Point = s.parse()?;
        self.validate(&p)?;
        Ok(p)
    }

    pub fn validate(&self, p: &Point) -> Result<()> {
        if let Some(bad) = p.digits.iter().find(|&&d| d >= self.torus) {
            return Err(Error::PointParse {
                input: p.to_string(),
                reason: format!("digit {bad} is not below L^d = {}", self.torus),
            });
        }
        Ok(())
    }

    /// Torus addition of two digits, coordinate-wise modulo `L`.
    pub fn digit_add(&self, a: u32, b: u32) -> u32 {
        if self.dim == 1 {
            return (a + b) % self.side;
        }
        let (mut a, mut b) = (a, b);
        let mut out = 0;
        let mut scale = 1;
        for _ in 0..self.dim {
            out += ((a % self.side + b % self.side) % self.side) * scale;
            a /= self.side;
            b /= self.side;
            scale *= self.side;
        }
        out
    }

    pub fn digit_neg(&self, a: u32) -> u32 {
        if self.dim == 1 {
            return (self.side - a % self.side) % self.side;
        }
        let mut a = a;
        let mut out = 0;
        let mut scale = 1;
        for _ in 0..self.dim {
            out += ((self.side - a % self.side) % self.side) * scale;
            a /= self.side;
            scale *= self.side;
        }
        out
    }

    /// Group addition: digit-wise, no carry between levels.
    pub fn add(&self, p: &Point, q: &Point) -> Point {
        let len = p.digits.len().max(q.digits.len());
        let digits = (1..=len as u32)
            .map(|lvl| self.digit_add(p.digit(lvl), q.digit(lvl)))
            .collect();
        Point::from_digits(digits)
    }

    pub fn neg(&self, p: &Point) -> Point {
        Point::from_digits(p.digits.iter().map(|&d| self.digit_neg(d)).collect())
    }

    pub fn sub(&self, p: &Point, q: &Point) -> Point {
        self.add(p, &self.neg(q))
    }

    /// `||p||`: `L^h` for a nonzero point with top level `h`, zero at the origin.
    pub fn norm<R: Real>(&self, p: &Point) -> R {
        match p.top_level() {
            0 => R::zero(),
            h => R::from_count(self.side as u64).powi(h as i32),
        }
    }

    /// `⟨p⟩ = max(1, ||p||)`.
    pub fn japanese_bracket<R: Real>(&self, p: &Point) -> R {
        self.norm::<R>(p).max(R::one())
    }

    /// Level of `||p - q||`, i.e. the highest level where the digits differ.
    pub fn distance_level(&self, p: &Point, q: &Point) -> u32 {
        let len = p.digits.len().max(q.digits.len()) as u32;
        (1..=len).rev().find(|&l| p.digit(l) != q.digit(l)).unwrap_or(0)
    }

    /// Packs a point of `Λ_n` into `[0, L^{dn})`, level-1 digit least significant.
    pub fn pack(&self, p: &Point) -> Result<u64> {
        if p.top_level() > self.level {
            return Err(Error::OutsideBall(p.to_string()));
        }
        self.validate(p)?;
        let q = self.torus as u64;
        Ok(p.digits.iter().rev().fold(0u64, |acc, &d| acc * q + d as u64))
    }

    pub fn unpack(&self, mut index: u64) -> Point {
        let q = self.torus as u64;
        let mut digits = Vec::new();
        while index > 0 {
            digits.push((index % q) as u32);
            index /= q;
        }
        Point::from_digits(digits)
    }

    /// All points of `Λ_n` in packed-index order.
    pub fn ball_points(&self) -> Result<impl Iterator<Item = Point> + '_> {
        let volume = self.volume()? as u64;
        Ok((0..volume).map(move |i| self.unpack(i)))
    }

    /// Representative of annulus `k`: the unit point with digit 1 at level `k`.
    pub fn annulus_representative(&self, k: u32) -> Point {
        if k == 0 {
            Point::zero()
        } else {
            Point::unit(k, 1)
        }
    }

    /// Uniform point with norm exactly `L^k`, `k >= 1`.
    pub fn sample_uniform_annulus<G: Rng + ?Sized>(&self, k: u32, rng: &mut G) -> Point {
        assert!(k >= 1, "annulus level must be positive");
        let mut digits = Vec::with_capacity(k as usize);
        for _ in 1..k {
            digits.push(rng.random_range(0..self.torus));
        }
        digits.push(rng.random_range(1..self.torus));
        Point { digits }
    }

    /// Number of ordered pairs `(x, y)` in `Λ_n × Λ_n` with `x` at level `j`,
    /// `y` at level `k` and `x - y` at level `m` (level 0 meaning the origin).
    pub fn triple_count(&self, j: u32, k: u32, m: u32) -> Result<u128> {
        for lvl in [j, k, m] {
            if lvl > self.level {
                return Err(Error::LevelOutOfRange {
                    level: lvl as i64,
                    max: self.level,
                });
            }
        }
        let a = |l: u32| self.annulus_size(l as i64);
        let mul = |x: u128, y: u128| {
            x.checked_mul(y)
                .ok_or_else(|| Error::Overflow(format!("triple_count({j},{k},{m})")))
        };
        if j == 0 {
            return if m == k { a(k) } else { Ok(0) };
        }
        if k == 0 {
            return if m == j { a(j) } else { Ok(0) };
        }
        if m == 0 {
            return if j == k { a(j) } else { Ok(0) };
        }
        if j != k {
            return if m == j.max(k) { mul(a(j)?, a(k)?) } else { Ok(0) };
        }
        if m < j {
            return mul(a(j)?, a(m)?);
        }
        if m > j {
            return Ok(0);
        }
        // m = j = k: x and y share the top level but differ there, and y's top digit is nonzero.
        let q = self.torus as u128;
        let lower = self.ball_volume(j - 1)?;
        mul(a(j)?, mul(q - 2, lower)?)
    }
}

/// Packed-index view of a ball, used by the array-backed samplers.
#[derive(Clone, Copy, Debug)]
pub struct PackedBall {
    torus: u64,
    level: u32,
    /// `log2(L^d)` when `L^d` is a power of two.
    shift: Option<u32>,
}

impl PackedBall {
    pub fn new(params: &LatticeParams) -> Self {
        let torus = params.torus_size() as u64;
        let shift = torus.is_power_of_two().then(|| torus.trailing_zeros());
        Self {
            torus,
            level: params.level(),
            shift,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// `L^{dk}` as a packed-index block size.
    pub fn block(&self, k: u32) -> u64 {
        self.torus.pow(k)
    }

    /// Level of the distance between two packed indices.
    pub fn distance_level(&self, a: u64, b: u64) -> u32 {
        let diff = a ^ b;
        if diff == 0 {
            return 0;
        }
        match self.shift {
            Some(s) => (63 - diff.leading_zeros()) / s + 1,
            None => {
                let (mut a, mut b) = (a, b);
                let mut lvl = 0;
                let mut top = 0;
                while a != 0 || b != 0 {
                    lvl += 1;
                    if a % self.torus != b % self.torus {
                        top = lvl;
                    }
                    a /= self.torus;
                    b /= self.torus;
                }
                top
            }
        }
    }

    /// Digit-wise addition of packed indices, using the lattice's torus rule.
    pub fn add(&self, lattice: &LatticeParams, a: u64, b: u64) -> u64 {
        if lattice.dim() == 1 && self.shift == Some(1) {
            return a ^ b;
        }
        let (mut a, mut b) = (a, b);
        let mut out = 0;
        let mut scale = 1u64;
        while a != 0 || b != 0 {
            let d = lattice.digit_add((a % self.torus) as u32, (b % self.torus) as u32) as u64;
            out += d * scale;
            a /= self.torus;
            b /= self.torus;
            scale = scale.saturating_mul(self.torus);
        }
        out
    }

    /// Uniform packed offset with norm exactly `L^k`.
    pub fn sample_annulus_offset<G: Rng + ?Sized>(&self, k: u32, rng: &mut G) -> u64 {
        let lower = self.block(k - 1);
        let top = rng.random_range(1..self.torus);
        top * lower + rng.random_range(0..lower)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lat(d: u32, l: u32, n: u32) -> LatticeParams {
        LatticeParams::new(d, l, n).unwrap()
    }

    #[test]
    fn norms() {
        let p = lat(1, 2, 3);
        assert_eq!(p.norm::<f64>(&Point::zero()), 0.0);
        assert_eq!(p.norm::<f64>(&Point::from_digits(vec![1, 0, 1])), 8.0);
        let p2 = lat(2, 2, 2);
        // ((0,1),(1,1)) encodes to digits 2 and 3 with the first coordinate least significant.
        let q = Point::from_digits(vec![2, 3]);
        assert_eq!(p2.norm::<f64>(&q), 4.0);
        assert_eq!(p.japanese_bracket::<f64>(&Point::zero()), 1.0);
    }

    #[test]
    fn addition_has_no_carry() {
        let p = lat(1, 2, 3);
        let a = Point::from_digits(vec![1, 1]);
        let b = Point::from_digits(vec![1, 0]);
        assert_eq!(p.add(&a, &b), Point::from_digits(vec![0, 1]));
        // Base-2 integer addition would give 3 + 1 = 4 = digits (0,0,1).
        assert_ne!(p.add(&a, &b), Point::from_digits(vec![0, 0, 1]));
        assert_eq!(p.add(&a, &Point::zero()), a);
        let p3 = lat(1, 3, 1);
        assert_eq!(
            p3.add(&Point::from_digits(vec![2]), &Point::from_digits(vec![2])),
            Point::from_digits(vec![1])
        );
        assert!(p3.add(&a, &p3.neg(&a)).is_zero());
    }

    #[test]
    fn annulus_sizes() {
        assert_eq!(lat(1, 2, 3).annulus_size(3).unwrap(), 4);
        assert_eq!(lat(2, 2, 1).annulus_size(1).unwrap(), 3);
        assert_eq!(lat(1, 4, 2).annulus_size(2).unwrap(), 12);
        assert_eq!(lat(1, 4, 2).annulus_size(0).unwrap(), 1);
        assert!(lat(1, 2, 2).annulus_size(-1).is_err());
    }

    #[test]
    fn text_encoding() {
        let p = lat(1, 2, 3);
        assert_eq!(Point::from_digits(vec![1, 0, 1]).to_string(), "1,0,1");
        assert_eq!(Point::zero().to_string(), "0");
        assert_eq!(p.parse_point("1,0,1").unwrap(), Point::from_digits(vec![1, 0, 1]));
        assert_eq!(p.parse_point("0").unwrap(), Point::zero());
        assert_eq!(p.parse_point("1,0").unwrap(), Point::from_digits(vec![1]));
        assert!(p.parse_point("1,2").is_err());
        assert!(p.parse_point("").is_err());
        assert!(p.parse_point("a,1").is_err());
    }

    #[test]
    fn smallest_annulus_has_one_point() {
        let p = lat(1, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(p.sample_uniform_annulus(1, &mut rng), Point::from_digits(vec![1]));
        }
    }

    #[test]
    fn annulus_sampling_is_uniform() {
        let p = lat(1, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 100_000u64;
        for k in [2u32, 3] {
            let cells = p.annulus_size(k as i64).unwrap() as usize;
            let mut counts = vec![0u64; 1usize << k];
            for _ in 0..draws {
                let x = p.sample_uniform_annulus(k, &mut rng);
                assert_eq!(x.top_level(), k);
                counts[p.pack(&x).unwrap() as usize] += 1;
            }
            let expected = draws as f64 / cells as f64;
            let hits: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
            assert_eq!(hits.len(), cells);
            let sigma = (expected * (1.0 - 1.0 / cells as f64)).sqrt();
            for c in hits {
                assert!((c as f64 - expected).abs() < 4.0 * sigma, "{c} vs {expected}");
            }
        }
    }

    fn brute_triples(p: &LatticeParams) -> std::collections::HashMap<(u32, u32, u32), u128> {
        let pts: Vec<Point> = p.ball_points().unwrap().collect();
        let mut out = std::collections::HashMap::new();
        for x in &pts {
            for y in &pts {
                let key = (x.top_level(), y.top_level(), p.sub(x, y).top_level());
                *out.entry(key).or_insert(0) += 1;
            }
        }
        out
    }

    #[test]
    fn triple_count_examples() {
        let p = lat(1, 2, 2);
        assert_eq!(p.triple_count(1, 2, 1).unwrap(), 0);
        assert_eq!(p.triple_count(1, 2, 2).unwrap(), 2);
        assert!(p.triple_count(3, 0, 0).is_err());
    }

    #[test]
    fn triple_count_matches_enumeration() {
        for (d, l, n) in [(1, 2, 1), (1, 2, 2), (1, 2, 3), (1, 2, 4), (1, 3, 2), (1, 4, 2), (2, 2, 2), (1, 2, 8), (2, 2, 4), (1, 16, 2), (2, 3, 2)] {
            let p = lat(d, l, n);
            if p.volume().unwrap() > 256 {
                continue;
            }
            let brute = brute_triples(&p);
            let mut total = 0u128;
            for j in 0..=n {
                for k in 0..=n {
                    for m in 0..=n {
                        let c = p.triple_count(j, k, m).unwrap();
                        total += c;
                        assert_eq!(c, brute.get(&(j, k, m)).copied().unwrap_or(0), "d={d} L={l} n={n} ({j},{k},{m})");
                    }
                }
            }
            assert_eq!(total, p.ball_volume(n).unwrap().pow(2));
        }
    }

    #[test]
    fn ball_enumeration_is_distinct_and_complete() {
        let p = lat(2, 3, 2);
        let pts: std::collections::HashSet<Point> = p.ball_points().unwrap().collect();
        assert_eq!(pts.len(), 81);
        for (i, x) in p.ball_points().unwrap().enumerate() {
            assert_eq!(p.pack(&x).unwrap(), i as u64);
        }
    }

    #[test]
    fn packed_distance_agrees_with_points() {
        for (d, l, n) in [(1, 2, 5), (1, 3, 3), (2, 2, 3)] {
            let p = lat(d, l, n);
            let ball = PackedBall::new(&p);
            let v = p.volume().unwrap() as u64;
            for a in 0..v {
                for b in 0..v {
                    let (pa, pb) = (p.unpack(a), p.unpack(b));
                    assert_eq!(ball.distance_level(a, b), p.distance_level(&pa, &pb));
                    assert_eq!(p.unpack(ball.add(&p, a, b)), p.add(&pa, &pb));
                }
            }
        }
    }

    fn arb_point(q: u32, max_len: usize) -> impl Strategy<Value = Point> {
        prop::collection::vec(0..q, 0..max_len).prop_map(Point::from_digits)
    }

    proptest! {
        #[test]
        fn ultrametric_inequality(x in arb_point(4, 6), y in arb_point(4, 6), z in arb_point(4, 6)) {
            let p = lat(1, 4, 6);
            let dxy = p.sub(&x, &y).top_level();
            let dyz = p.sub(&y, &z).top_level();
            let dxz = p.sub(&x, &z).top_level();
            prop_assert!(dxz <= dxy.max(dyz));
            if dxy != dyz {
                prop_assert_eq!(dxz, dxy.max(dyz));
            }
            prop_assert_eq!(dxy, p.distance_level(&x, &y));
        }

        #[test]
        fn translation_invariance(x in arb_point(9, 5), y in arb_point(9, 5), g in arb_point(9, 5)) {
            let p = lat(2, 3, 5);
            let lhs = p.norm::<f64>(&p.sub(&x, &y));
            let rhs = p.norm::<f64>(&p.sub(&p.add(&x, &g), &p.add(&y, &g)));
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn text_round_trip(x in arb_point(7, 8)) {
            let p = lat(1, 7, 8);
            prop_assert_eq!(p.parse_point(&x.to_string()).unwrap(), x);
        }
    }
}
