//! Radial two-point function `t_k = P(0 ↔ x_k)` with `‖x_k‖ = L^k`, and the
//! triangle sum built from it.

use crate::error::{Error, Result};
use crate::kernel::ModelParams;
use crate::lattice::Point;
use crate::parallel::{try_map_reduce, Merge};
use crate::real::Real;
use crate::rng::{tags, StreamKey};
use crate::samplers::RecursiveSampler;

use super::record::EstimateRecord;
use super::report::CsvTable;

pub const DEFAULT_EMBEDDING: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwoPointMode {
    /// Connections inside `Λ_n`.
    Restricted,
    /// Connections inside `Λ_{n+delta}`, as a proxy for the whole lattice.
    Unrestricted { delta: u32 },
}

/// Two-point estimates for `k = 0..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialTwoPoint<R> {
    pub n: u32,
    pub beta: R,
    pub mode: TwoPointMode,
    /// Inside `Λ_n`.
    pub restricted: Vec<EstimateRecord<R>>,
    /// Inside `Λ_{n+Δ}`.
    pub unrestricted: Option<Vec<EstimateRecord<R>>>,
    /// Inside `Λ_{n+Δ-1}`, to show the sensitivity to the embedding depth.
    pub shallow: Option<Vec<EstimateRecord<R>>>,
}

impl<R: Real> RadialTwoPoint<R> {
    /// Known values `t_0, ..., t_n` used as both variants.
    pub fn exact(beta: R, values: &[R]) -> Self {
        let recs: Vec<_> = values.iter().map(|&v| EstimateRecord::constant(v)).collect();
        Self {
            n: values.len() as u32 - 1,
            beta,
            mode: TwoPointMode::Unrestricted { delta: 1 },
            restricted: recs.clone(),
            unrestricted: Some(recs.clone()),
            shallow: Some(recs),
        }
    }

    /// Unrestricted values where available, restricted otherwise.
    pub fn values(&self) -> Vec<R> {
        self.unrestricted
            .as_ref()
            .unwrap_or(&self.restricted)
            .iter()
            .map(EstimateRecord::mean)
            .collect()
    }

    pub fn to_csv(&self, seed: u64) -> CsvTable {
        let mut t = CsvTable::new();
        let beta = self.beta.to_f64_lossy();
        let mut emit = |name: &str, recs: &[EstimateRecord<R>]| {
            for (k, r) in recs.iter().enumerate() {
                t.row(
                    self.n,
                    beta,
                    &format!("{name}_{k}"),
                    r.mean().to_f64_lossy(),
                    r.stderr().to_f64_lossy(),
                    r.count(),
                    seed,
                );
            }
        };
        emit("t_restricted", &self.restricted);
        if let Some(u) = &self.unrestricted {
            emit("t_unrestricted", u);
        }
        if let Some(s) = &self.shallow {
            emit("t_shallow", s);
        }
        t
    }
}

struct Columns<R>(Vec<Vec<EstimateRecord<R>>>);

impl<R: Real> Merge for Columns<R> {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            for (x, y) in a.iter_mut().zip(&b) {
                x.combine(y);
            }
        }
    }
}

/// Two-point estimates with the first point of each annulus as representative.
pub fn estimate_radial_two_point<R: Real>(
    params: &ModelParams<R>,
    n: u32,
    replicates: u64,
    mode: TwoPointMode,
    key: &StreamKey,
) -> Result<RadialTwoPoint<R>> {
    let lat = params.lattice().with_level(n);
    let reps: Vec<Point> = (1..=n).map(|k| lat.annulus_representative(k)).collect();
    estimate_radial_two_point_at(params, n, replicates, mode, &reps, key)
}

/// Two-point estimates with `representatives[k-1]` in annulus `k`.
pub fn estimate_radial_two_point_at<R: Real>(
    params: &ModelParams<R>,
    n: u32,
    replicates: u64,
    mode: TwoPointMode,
    representatives: &[Point],
    key: &StreamKey,
) -> Result<RadialTwoPoint<R>> {
    if replicates == 0 {
        return Err(Error::Estimator("replicates must be at least 1".into()));
    }
    if representatives.len() != n as usize {
        return Err(Error::Estimator(format!(
            "need one representative per level 1..={n}, got {}",
            representatives.len()
        )));
    }
    for (i, x) in representatives.iter().enumerate() {
        if x.top_level() != i as u32 + 1 {
            return Err(Error::Estimator(format!("representative {x} is not in annulus {}", i + 1)));
        }
    }
    let delta = match mode {
        TwoPointMode::Restricted => 0,
        TwoPointMode::Unrestricted { delta: 0 } => {
            return Err(Error::Estimator("unrestricted mode needs at least one embedding level".into()))
        }
        TwoPointMode::Unrestricted { delta } => delta,
    };
    let sampler = RecursiveSampler::new(params, n + delta)?;
    let mut marks = vec![Point::zero()];
    marks.extend_from_slice(representatives);
    // Column 0: Λ_n, then Λ_{n+Δ} and Λ_{n+Δ-1}.
    let columns = if delta == 0 { 1 } else { 3 };
    let init = || Columns(vec![vec![EstimateRecord::new(); n as usize + 1]; columns]);
    let key = key.child(tags::TWO_POINT);
    let result = try_map_reduce(replicates, &key, init, |acc: &mut Columns<R>, _, rng| {
        let levels = sampler.nested(n, n + delta, &marks, rng)?;
        let picks: &[usize] = if delta == 0 { &[0] } else { &[0, delta as usize, delta as usize - 1] };
        for (col, &lvl) in acc.0.iter_mut().zip(picks) {
            col[0].push(R::one());
            for (k, rec) in col.iter_mut().enumerate().skip(1) {
                rec.push(if levels[lvl].connected(0, k) { R::one() } else { R::zero() });
            }
        }
        Ok::<(), Error>(())
    })?;
    let mut cols = result.0.into_iter();
    let restricted = cols.next().expect("restricted column");
    Ok(RadialTwoPoint {
        n,
        beta: params.beta(),
        mode,
        restricted,
        unrestricted: cols.next(),
        shallow: cols.next(),
    })
}

/// `∇̂_m` for `m = 0..=n` and the increments `∇̂_m - ∇̂_{m-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleSum<R> {
    pub partial: Vec<R>,
    pub increments: Vec<R>,
}

impl<R: Real> TriangleSum<R> {
    pub fn value(&self) -> R {
        *self.partial.last().expect("level 0 present")
    }
}

/// `∇̂_n = Σ_{j,k,m} triple_count(j,k,m) t_j t_k t_m` over `Λ_n × Λ_n`.
pub fn triangle_sum<R: Real>(tau: &RadialTwoPoint<R>, n: u32, params: &ModelParams<R>) -> Result<TriangleSum<R>> {
    let unrestricted = tau
        .unrestricted
        .as_ref()
        .ok_or_else(|| Error::Estimator("triangle sum needs unrestricted two-point estimates".into()))?;
    if unrestricted.len() < n as usize + 1 {
        return Err(Error::Estimator(format!(
            "two-point estimates stop at level {}, need {n}",
            unrestricted.len() as i64 - 1
        )));
    }
    let t: Vec<R> = unrestricted.iter().map(EstimateRecord::mean).collect();
    let mut partial = Vec::with_capacity(n as usize + 1);
    for level in 0..=n {
        let lat = params.lattice().with_level(level);
        let mut sum = R::zero();
        for j in 0..=level {
            for k in 0..=level {
                for m in 0..=level {
                    let c = lat.triple_count(j, k, m)?;
                    if c > 0 {
                        sum += R::from_u128(c).expect("finite") * t[j as usize] * t[k as usize] * t[m as usize];
                    }
                }
            }
        }
        partial.push(sum);
    }
    let increments = partial.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(TriangleSum { partial, increments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeParams;
    use crate::oracle::enumerate_exact;

    fn params(beta: f64) -> ModelParams<f64> {
        ModelParams::power_law(LatticeParams::new(1, 2, 2).unwrap(), 0.5, beta).unwrap()
    }

    #[test]
    fn zero_beta_and_self_connection() {
        let tau = estimate_radial_two_point(&params(0.0), 4, 200, TwoPointMode::Unrestricted { delta: 3 }, &StreamKey::new(1))
            .unwrap();
        for col in [&tau.restricted, tau.unrestricted.as_ref().unwrap(), tau.shallow.as_ref().unwrap()] {
            assert_eq!(col[0].mean(), 1.0);
            assert!(col[1..].iter().all(|r| r.mean() == 0.0));
        }
        let tri = triangle_sum(&tau, 4, &params(0.0)).unwrap();
        assert_eq!(tri.value(), 1.0);
    }

    #[test]
    fn restricted_matches_oracle() {
        let p = params(0.4);
        let law = enumerate_exact(&p, 2).unwrap();
        let tau = estimate_radial_two_point(&p, 2, 200_000, TwoPointMode::Restricted, &StreamKey::new(2)).unwrap();
        assert!(tau.unrestricted.is_none());
        assert!(tau.restricted[1].z_score(law.root_connection(1)) < 3.0);
        assert!(tau.restricted[2].z_score(law.root_connection(2)) < 3.0);
    }

    #[test]
    fn restricted_below_unrestricted_and_representatives() {
        let p = params(1.0);
        let n = 4;
        let key = StreamKey::new(3);
        let tau = estimate_radial_two_point(&p, n, 20_000, TwoPointMode::Unrestricted { delta: 2 }, &key).unwrap();
        let un = tau.unrestricted.as_ref().unwrap();
        let sh = tau.shallow.as_ref().unwrap();
        for k in 0..=n as usize {
            assert!(tau.restricted[k].mean() <= sh[k].mean());
            assert!(sh[k].mean() <= un[k].mean());
        }
        let other: Vec<Point> = (1..=n).map(|k| Point::from_digits((1..=k).map(|_| 1).collect())).collect();
        let alt = estimate_radial_two_point_at(&p, n, 20_000, TwoPointMode::Unrestricted { delta: 2 }, &other, &StreamKey::new(4))
            .unwrap();
        let alt_un = alt.unrestricted.as_ref().unwrap();
        for k in 1..=n as usize {
            let se = (un[k].stderr().powi(2) + alt_un[k].stderr().powi(2)).sqrt();
            assert!((un[k].mean() - alt_un[k].mean()).abs() < 4.0 * se);
        }
        assert!(estimate_radial_two_point_at(&p, 2, 10, TwoPointMode::Restricted, &other[..1], &key).is_err());
        assert!(estimate_radial_two_point(&p, 2, 10, TwoPointMode::Unrestricted { delta: 0 }, &key).is_err());
    }

    /// `Σ_{x,y ∈ Λ_n} t(x) t(x - y) t(y)` by a direct double loop.
    fn brute_triangle(lat: &LatticeParams, t: &[f64]) -> f64 {
        let pts: Vec<Point> = lat.ball_points().unwrap().collect();
        let mut sum = 0.0;
        for x in &pts {
            for y in &pts {
                let tx = t[x.top_level() as usize];
                let ty = t[y.top_level() as usize];
                let txy = t[lat.sub(x, y).top_level() as usize];
                sum += tx * ty * txy;
            }
        }
        sum
    }

    #[test]
    fn triangle_matches_double_loop() {
        let values = [1.0, 0.3, 0.12, 0.05];
        for (d, l) in [(1, 2), (1, 3), (2, 2)] {
            let lat = LatticeParams::new(d, l, 3).unwrap();
            let p = ModelParams::power_law(lat, 0.5, 1.0).unwrap();
            let tri = triangle_sum(&RadialTwoPoint::exact(1.0, &values), 3, &p).unwrap();
            for n in 0..=3 {
                let brute = brute_triangle(&lat.with_level(n), &values);
                assert!((tri.partial[n as usize] - brute).abs() < 1e-10 * brute);
            }
            assert!(tri.increments.iter().all(|&x| x >= 0.0));
        }
        let lat = LatticeParams::new(1, 2, 1).unwrap();
        let p = ModelParams::power_law(lat, 0.5, 1.0).unwrap();
        let t1: f64 = 0.4;
        let tri = triangle_sum(&RadialTwoPoint::exact(1.0, &[1.0, t1]), 1, &p).unwrap();
        // Pairs (0,0), (0,1), (1,0), (1,1).
        assert!((tri.value() - (1.0 + 3.0 * t1 * t1)).abs() < 1e-15);
        let restricted_only = RadialTwoPoint { unrestricted: None, ..RadialTwoPoint::exact(1.0, &[1.0, t1]) };
        assert!(triangle_sum(&restricted_only, 1, &p).is_err());
        assert!(triangle_sum(&RadialTwoPoint::exact(1.0, &[1.0, t1]), 2, &p).is_err());
    }
}
