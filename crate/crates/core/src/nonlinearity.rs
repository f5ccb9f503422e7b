//! Constitutive temperature map `alpha` taking enthalpy to temperature.
//!
//! The map is continuous, piecewise linear, and extended with the same slope
//! `a` on both unbounded ends, so `alpha(u) - a*u` is bounded. The two-phase
//! Stefan map is the instance with knots `(-1, 0)` and `(1, 0)` and `a = 1`.

use crate::error::{Error, Result};

/// Continuous piecewise-linear enthalpy-to-temperature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    knots: Vec<(f64, f64)>,
    slope_at_infinity: f64,
    offset_bound: f64,
    lipschitz: f64,
}

/// Outcome of [`Nonlinearity::validate_generalized`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    pub lipschitz: f64,
    pub max_sampled_quotient: f64,
    pub min_sampled_quotient: f64,
    pub worst_offset: f64,
    pub offset_bound: f64,
    /// Sample location and offending value for the worst violation of either
    /// the Lipschitz bound or the offset bound, if any.
    pub worst_violation: Option<(f64, f64)>,
    /// The Gaussian-weight growth hypothesis is inherited unchanged for
    /// slopes other than one; flagged so reports can say so.
    pub growth_assumption_flagged: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.worst_violation.is_none()
    }
}

impl Nonlinearity {
    /// Builds a map from sorted knots and the common slope used beyond the
    /// first and last knot. Monotonicity is *not* enforced here; see
    /// [`Nonlinearity::validate_generalized`] and [`Nonlinearity::ensure_monotone`].
    pub fn from_knots(knots: Vec<(f64, f64)>, slope_at_infinity: f64) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Nonlinearity("at least one knot is required".into()));
        }
        if !slope_at_infinity.is_finite() || slope_at_infinity < 0.0 {
            return Err(Error::Nonlinearity(format!(
                "slope at infinity must be finite and nonnegative, got {slope_at_infinity}"
            )));
        }
        if knots.iter().any(|(u, a)| !u.is_finite() || !a.is_finite()) {
            return Err(Error::Nonlinearity("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Nonlinearity(
                "knot enthalpies must be strictly increasing".into(),
            ));
        }
        let mut nl = Self {
            knots,
            slope_at_infinity,
            offset_bound: 0.0,
            lipschitz: slope_at_infinity,
        };
        nl.lipschitz = nl.segment_slopes().fold(slope_at_infinity, f64::max);
        // alpha(u) - a*u is constant on both unbounded ends and piecewise
        // linear in between, so its extremes sit on the knots.
        nl.offset_bound = nl
            .knots
            .iter()
            .map(|&(u, t)| (t - slope_at_infinity * u).abs())
            .fold(0.0, f64::max);
        Ok(nl)
    }

    /// The two-phase Stefan map: `u + 1` below `-1`, zero on `[-1, 1]`, `u - 1` above `1`.
    pub fn two_phase() -> Self {
        Self::from_knots(vec![(-1.0, 0.0), (1.0, 0.0)], 1.0).expect("valid two-phase knots")
    }

    /// Linear map `alpha(u) = slope * u` (the heat equation when `slope = 1`).
    pub fn linear(slope: f64) -> Result<Self> {
        Self::from_knots(vec![(0.0, 0.0)], slope)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn slope_at_infinity(&self) -> f64 {
        self.slope_at_infinity
    }

    /// Exact bound on `|alpha(u) - a*u|` over the real line.
    pub fn offset_bound(&self) -> f64 {
        self.offset_bound
    }

    /// Largest segment slope.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn segment_slopes(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
    }

    pub fn is_monotone(&self) -> bool {
        self.segment_slopes().all(|s| s >= 0.0)
    }

    pub fn ensure_monotone(&self) -> Result<()> {
        match self.segment_slopes().enumerate().find(|(_, s)| *s < 0.0) {
            Some((segment, slope)) => Err(Error::NotMonotone {
                segment: segment + 1,
                slope,
            }),
            None => Ok(()),
        }
    }

    /// Index of the segment containing `u`: 0 is the left unbounded piece,
    /// `knots.len()` the right one. Knots belong to the segment on their right.
    fn segment_of(&self, u: f64) -> usize {
        self.knots.partition_point(|&(k, _)| k <= u)
    }

    pub fn eval(&self, u: f64) -> f64 {
        let n = self.knots.len();
        match self.segment_of(u) {
            0 => {
                let (u0, t0) = self.knots[0];
                t0 + self.slope_at_infinity * (u - u0)
            }
            s if s == n => {
                let (u1, t1) = self.knots[n - 1];
                t1 + self.slope_at_infinity * (u - u1)
            }
            s => {
                let (ua, ta) = self.knots[s - 1];
                let (ub, tb) = self.knots[s];
                if u == ua {
                    return ta;
                }
                let lambda = (u - ua) / (ub - ua);
                ta + lambda * (tb - ta)
            }
        }
    }

    /// Slope of the segment containing `u` (right-continuous at knots).
    pub fn slope(&self, u: f64) -> f64 {
        let n = self.knots.len();
        match self.segment_of(u) {
            0 => self.slope_at_infinity,
            s if s == n => self.slope_at_infinity,
            s => {
                let (ua, ta) = self.knots[s - 1];
                let (ub, tb) = self.knots[s];
                (tb - ta) / (ub - ua)
            }
        }
    }

    /// Slope of the segment containing `u` (left-continuous at knots).
    pub fn slope_left(&self, u: f64) -> f64 {
        let n = self.knots.len();
        match self.knots.partition_point(|&(k, _)| k < u) {
            0 => self.slope_at_infinity,
            s if s == n => self.slope_at_infinity,
            s => {
                let (ua, ta) = self.knots[s - 1];
                let (ub, tb) = self.knots[s];
                (tb - ta) / (ub - ua)
            }
        }
    }

    /// Temperatures taken on a whole interval of enthalpies (flat segments).
    pub fn flat_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .knots
            .windows(2)
            .filter(|w| w[0].1 == w[1].1)
            .map(|w| w[0].1)
            .collect();
        out.dedup();
        out
    }

    /// The interval `[lo, hi]` of enthalpies mapped to `theta` by a monotone
    /// map. Unbounded ends appear when the slope at infinity is zero.
    pub fn preimage(&self, theta: f64) -> (f64, f64) {
        let n = self.knots.len();
        let a = self.slope_at_infinity;
        let (u0, t0) = self.knots[0];
        let (un, tn) = self.knots[n - 1];
        let lo = if theta < t0 {
            if a > 0.0 {
                u0 + (theta - t0) / a
            } else {
                f64::NAN
            }
        } else if theta == t0 && a == 0.0 {
            f64::NEG_INFINITY
        } else if theta > tn {
            if a > 0.0 {
                un + (theta - tn) / a
            } else {
                f64::NAN
            }
        } else {
            let k = self.knots.partition_point(|&(_, t)| t < theta);
            let (uk, tk) = self.knots[k];
            if tk == theta {
                uk
            } else {
                let (ua, ta) = self.knots[k - 1];
                ua + (theta - ta) / (tk - ta) * (uk - ua)
            }
        };
        let hi = if theta > tn {
            lo
        } else if theta == tn && a == 0.0 {
            f64::INFINITY
        } else if theta < t0 {
            lo
        } else {
            let k = self.knots.partition_point(|&(_, t)| t <= theta) - 1;
            let (uk, tk) = self.knots[k];
            if tk == theta || k == n - 1 {
                uk
            } else {
                let (ub, tb) = self.knots[k + 1];
                uk + (theta - tk) / (tb - tk) * (ub - uk)
            }
        };
        (lo, hi)
    }

    /// `(alpha(u) - alpha(v)) / (u - v)`, defined as zero when `u == v`.
    pub fn difference_quotient(&self, u: f64, v: f64) -> f64 {
        if u == v {
            0.0
        } else {
            (self.eval(u) - self.eval(v)) / (u - v)
        }
    }

    /// Solves `u + k * alpha(u) = r` for `u`, with `k >= 0` and a monotone map.
    pub fn solve_shifted(&self, k: f64, r: f64) -> f64 {
        let g = |u: f64, t: f64| u + k * t;
        let n = self.knots.len();
        let (u0, t0) = self.knots[0];
        let g0 = g(u0, t0);
        if r < g0 {
            return u0 + (r - g0) / (1.0 + k * self.slope_at_infinity);
        }
        let (un, tn) = self.knots[n - 1];
        let gn = g(un, tn);
        if r >= gn {
            return un + (r - gn) / (1.0 + k * self.slope_at_infinity);
        }
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let (um, tm) = self.knots[mid];
            if g(um, tm) <= r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (ua, ta) = self.knots[lo];
        let (ub, tb) = self.knots[hi];
        let (ga, gb) = (g(ua, ta), g(ub, tb));
        ua + (r - ga) / (gb - ga) * (ub - ua)
    }

    /// Samples `[lo, hi]` and checks monotonicity, the Lipschitz constant and
    /// the offset bound `|alpha(u) - a*u| <= B`.
    pub fn validate_generalized(
        &self,
        range: (f64, f64),
        n_samples: usize,
    ) -> Result<ValidationReport> {
        if n_samples < 2 {
            return Err(Error::Nonlinearity(
                "at least two samples are required".into(),
            ));
        }
        let (lo, hi) = range;
        if !(lo < hi) {
            return Err(Error::Nonlinearity(format!(
                "empty sample range [{lo}, {hi}]"
            )));
        }
        self.ensure_monotone()?;

        let a = self.slope_at_infinity;
        let tol = 1e-12 * (1.0 + self.lipschitz);
        let xs: Vec<f64> = (0..n_samples)
            .map(|i| lo + (hi - lo) * i as f64 / (n_samples - 1) as f64)
            .collect();
        let mut report = ValidationReport {
            samples: n_samples,
            lipschitz: self.lipschitz,
            max_sampled_quotient: f64::NEG_INFINITY,
            min_sampled_quotient: f64::INFINITY,
            worst_offset: 0.0,
            offset_bound: self.offset_bound,
            worst_violation: None,
            growth_assumption_flagged: a != 1.0,
        };
        let mut worst_excess = 0.0;
        for w in xs.windows(2) {
            let q = self.difference_quotient(w[1], w[0]);
            report.max_sampled_quotient = report.max_sampled_quotient.max(q);
            report.min_sampled_quotient = report.min_sampled_quotient.min(q);
            let excess = (q - self.lipschitz).max(-q);
            if excess > tol && excess > worst_excess {
                worst_excess = excess;
                report.worst_violation = Some((w[0], q));
            }
        }
        for &u in &xs {
            let off = (self.eval(u) - a * u).abs();
            report.worst_offset = report.worst_offset.max(off);
            let excess = off - self.offset_bound;
            if excess > tol && excess > worst_excess {
                worst_excess = excess;
                report.worst_violation = Some((u, off));
            }
        }
        Ok(report)
    }

    /// Declared-bound variant: checks `|alpha(u) - a*u| <= declared` on the samples.
    pub fn with_declared_offset_bound(mut self, declared: f64) -> Result<Self> {
        if declared + 1e-12 < self.offset_bound {
            return Err(Error::Nonlinearity(format!(
                "declared offset bound {declared} is below the exact bound {}",
                self.offset_bound
            )));
        }
        self.offset_bound = declared;
        Ok(self)
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&u| self.eval(u)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn preimage_of_two_phase() {
        let nl = Nonlinearity::two_phase();
        assert_eq!(nl.preimage(0.0), (-1.0, 1.0));
        assert_eq!(nl.preimage(2.0), (3.0, 3.0));
        assert_eq!(nl.preimage(-0.5), (-1.5, -1.5));
        assert_eq!(nl.flat_values(), vec![0.0]);
        assert_eq!(nl.slope_left(1.0), 0.0);
        assert_eq!(nl.slope(1.0), 1.0);
        let g = Nonlinearity::from_knots(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.0), (3.0, 2.5)], 0.5)
            .unwrap();
        assert_eq!(g.preimage(1.0), (0.5, 0.5));
        assert_eq!(g.preimage(2.0), (1.0, 2.0));
        assert_eq!(g.preimage(2.25), (2.5, 2.5));
        assert_eq!(g.preimage(3.0), (4.0, 4.0));
    }

    #[test]
    fn two_phase_values() {
        let nl = Nonlinearity::two_phase();
        assert_eq!(nl.eval(0.5), 0.0);
        assert_eq!(nl.eval(2.0), 1.0);
        assert_eq!(nl.eval(-3.0), -2.0);
        assert_eq!(nl.eval(1.0), 0.0);
        assert_eq!(nl.eval(-1.0), 0.0);
        assert_eq!(nl.eval(10.0), 9.0);
        assert_eq!(nl.slope_at_infinity(), 1.0);
        assert_eq!(nl.offset_bound(), 1.0);
        assert_eq!(nl.lipschitz(), 1.0);
    }

    #[test]
    fn two_phase_validation_reports_unit_offset() {
        let nl = Nonlinearity::two_phase();
        let r = nl.validate_generalized((-10.0, 10.0), 101).unwrap();
        assert!(r.passed());
        assert!((r.worst_offset - 1.0).abs() < 1e-15);
        assert!(!r.growth_assumption_flagged);
    }

    #[test]
    fn decreasing_segment_rejected() {
        let nl = Nonlinearity::from_knots(vec![(-1.0, 0.0), (0.0, 1.0), (1.0, 0.5)], 1.0).unwrap();
        assert!(!nl.is_monotone());
        assert!(matches!(
            nl.validate_generalized((-2.0, 2.0), 11),
            Err(Error::NotMonotone { .. })
        ));
    }

    #[test]
    fn identity_map_passes_with_zero_offset() {
        let nl = Nonlinearity::linear(1.0).unwrap();
        assert_eq!(nl.offset_bound(), 0.0);
        let r = nl.validate_generalized((-5.0, 5.0), 21).unwrap();
        assert!(r.passed());
        assert_eq!(r.worst_offset, 0.0);
    }

    #[test]
    fn declared_bound_below_exact_is_rejected() {
        assert!(Nonlinearity::two_phase()
            .with_declared_offset_bound(0.5)
            .is_err());
        let nl = Nonlinearity::two_phase()
            .with_declared_offset_bound(1.5)
            .unwrap();
        assert_eq!(nl.offset_bound(), 1.5);
    }

    #[test]
    fn general_slope_is_flagged() {
        let nl = Nonlinearity::from_knots(vec![(0.0, 0.0), (1.0, 0.0)], 2.0).unwrap();
        let r = nl.validate_generalized((-3.0, 3.0), 61).unwrap();
        assert!(r.passed());
        assert!(r.growth_assumption_flagged);
        assert_eq!(nl.offset_bound(), 2.0);
    }

    #[test]
    fn shifted_solve_inverts() {
        let nl = Nonlinearity::two_phase();
        for &k in &[0.0, 0.3, 5.0, 400.0] {
            for &u in &[-7.0, -1.0, -0.2, 0.9, 1.0, 1.5, 40.0] {
                let r = u + k * nl.eval(u);
                let back = nl.solve_shifted(k, r);
                assert!(
                    (back - u).abs() < 1e-12 * (1.0 + u.abs()),
                    "k={k} u={u} back={back}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn difference_quotient_in_unit_interval(u in -50.0f64..50.0, v in -50.0f64..50.0) {
            let q = Nonlinearity::two_phase().difference_quotient(u, v);
            prop_assert!((0.0..=1.0 + 1e-15).contains(&q));
        }

        #[test]
        fn offset_within_one(u in -1e3f64..1e3) {
            let nl = Nonlinearity::two_phase();
            prop_assert!((nl.eval(u) - u).abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn linear_on_segments(ua in -5.0f64..5.0, width in 0.01f64..3.0) {
            // any interval avoiding both knots lies in one segment
            let nl = Nonlinearity::two_phase();
            let ub = ua + width;
            prop_assume!(!(ua < -1.0 && ub > -1.0) && !(ua < 1.0 && ub > 1.0));
            let mid = 0.5 * (ua + ub);
            let lhs = nl.eval(mid);
            let rhs = 0.5 * (nl.eval(ua) + nl.eval(ub));
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
