//! One-dimensional convex and concave envelopes of piecewise-linear
//! functions, the gap intervals where function and envelope differ, and the
//! two-point split that attains the envelope value.

use crate::error::{Error, Result};

/// Function sampled at strictly increasing knots, linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearFn {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinearFn {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::LengthMismatch {
                knots: knots.len(),
                values: values.len(),
            });
        }
        if knots.len() < 2 {
            return Err(Error::TooFewKnots(knots.len()));
        }
        for (i, (x, y)) in knots.iter().zip(&values).enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::NonFinite(i));
            }
        }
        if let Some(i) = knots.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::UnorderedKnots(i + 1));
        }
        Ok(Self { knots, values })
    }

    /// Samples `f` at the given knots.
    pub fn sample(knots: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = knots.iter().map(|&x| f(x)).collect();
        Self::new(knots, values)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        Ok(interpolate(&self.knots, &self.values, x))
    }

    /// Slopes of the `len() - 1` linear pieces.
    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .collect()
    }

    pub fn negate(&self) -> Self {
        Self {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Linear interpolation on sorted knots; `x` must lie inside the span.
pub(crate) fn interpolate(knots: &[f64], values: &[f64], x: f64) -> f64 {
    let last = knots.len() - 1;
    if x >= knots[last] {
        return values[last];
    }
    let i = knots.partition_point(|&k| k <= x).max(1) - 1;
    let (x0, x1) = (knots[i], knots[i + 1]);
    let t = (x - x0) / (x1 - x0);
    values[i] + t * (values[i + 1] - values[i])
}

/// Indices of the lower convex hull of `(knots[i], values[i])`, monotone chain.
///
/// Collinear knots stay on the hull, so every knot where the envelope touches
/// the function is a hull vertex.
pub fn lower_hull(knots: &[f64], values: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(knots.len());
    for i in 0..knots.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // pop b when it lies strictly above the chord a -> i
            let cross = (knots[b] - knots[a]) * (values[i] - values[a])
                - (values[b] - values[a]) * (knots[i] - knots[a]);
            if cross < 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Greatest convex minorant of `f` on its knot span.
pub fn convex_envelope(f: &PiecewiseLinearFn) -> PiecewiseLinearFn {
    let hull = lower_hull(&f.knots, &f.values);
    PiecewiseLinearFn {
        knots: hull.iter().map(|&i| f.knots[i]).collect(),
        values: hull.iter().map(|&i| f.values[i]).collect(),
    }
}

/// Least concave majorant of `f`, computed as `-(convex_envelope(-f))`.
pub fn concave_envelope(f: &PiecewiseLinearFn) -> PiecewiseLinearFn {
    convex_envelope(&f.negate()).negate()
}

/// Maximal open intervals on which the envelope differs from the function.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GapIntervals {
    intervals: Vec<(f64, f64)>,
}

impl GapIntervals {
    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Gap interval containing `x` in its interior, if any.
    pub fn containing(&self, x: f64) -> Option<(f64, f64)> {
        self.intervals
            .iter()
            .copied()
            .find(|&(a, b)| a < x && x < b)
    }
}

/// Extracts the gap intervals of `f` with respect to its (convex or concave)
/// envelope `env`.
///
/// An interior knot counts as touching when `|env - f|` is within `1e-12`
/// of the function scale; touching knots split gaps.
pub fn gap_intervals(f: &PiecewiseLinearFn, env: &PiecewiseLinearFn) -> Result<GapIntervals> {
    let (f_lo, f_hi) = f.domain();
    let (env_lo, env_hi) = env.domain();
    if f_lo != env_lo || f_hi != env_hi {
        return Err(Error::SpanMismatch {
            f_lo,
            f_hi,
            env_lo,
            env_hi,
        });
    }
    let scale = f.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let touching: Vec<bool> = f
        .knots
        .iter()
        .zip(&f.values)
        .map(|(&x, &y)| (interpolate(&env.knots, &env.values, x) - y).abs() <= tol)
        .collect();

    let mut intervals = Vec::new();
    let mut start = 0usize;
    for i in 1..f.knots.len() {
        if touching[i] || i == f.knots.len() - 1 {
            if i - start >= 2 {
                intervals.push((f.knots[start], f.knots[i]));
            }
            start = i;
        }
    }
    Ok(GapIntervals { intervals })
}

/// Two-point law on the endpoints of a gap interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointMixture {
    /// Upper endpoint `b` and its probability.
    pub upper: (f64, f64),
    /// Lower endpoint `a` and its probability.
    pub lower: (f64, f64),
}

impl TwoPointMixture {
    pub fn mean(&self) -> f64 {
        let (b, p) = self.upper;
        let (a, _) = self.lower;
        a + p * (b - a)
    }

    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.upper.1 * g(self.upper.0) + self.lower.1 * g(self.lower.0)
    }
}

/// Splits `value` onto the endpoints of `(a, b)` preserving the mean.
pub fn randomize_to_envelope(value: f64, gap: (f64, f64)) -> Result<TwoPointMixture> {
    let (a, b) = gap;
    if !(a < value && value < b) {
        return Err(Error::OutsideGap { value, a, b });
    }
    let p = (value - a) / (b - a);
    Ok(TwoPointMixture {
        upper: (b, p),
        lower: (a, 1.0 - p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pl(knots: &[f64], values: &[f64]) -> PiecewiseLinearFn {
        PiecewiseLinearFn::new(knots.to_vec(), values.to_vec()).unwrap()
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            PiecewiseLinearFn::new(vec![0.0], vec![1.0]).unwrap_err(),
            Error::TooFewKnots(1)
        );
        assert_eq!(
            PiecewiseLinearFn::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap_err(),
            Error::UnorderedKnots(1)
        );
        assert!(matches!(
            PiecewiseLinearFn::new(vec![0.0, 1.0], vec![1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert_eq!(
            PiecewiseLinearFn::new(vec![0.0, 1.0], vec![f64::NAN, 1.0]).unwrap_err(),
            Error::NonFinite(0)
        );
    }

    #[test]
    fn eval_interpolates_and_rejects_outside() {
        let f = pl(&[0.0, 1.0, 3.0], &[0.0, 2.0, 0.0]);
        assert_eq!(f.eval(0.5).unwrap(), 1.0);
        assert_eq!(f.eval(2.0).unwrap(), 1.0);
        assert_eq!(f.eval(3.0).unwrap(), 0.0);
        assert!(matches!(f.eval(3.5), Err(Error::OutOfDomain { .. })));
        assert!(matches!(f.eval(-0.1), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn tent_envelope_is_the_base_chord() {
        let f = pl(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]);
        let env = convex_envelope(&f);
        assert_eq!(env.knots(), &[0.0, 2.0]);
        assert_eq!(env.eval(1.0).unwrap(), 0.0);
        let gaps = gap_intervals(&f, &env).unwrap();
        assert_eq!(gaps.intervals(), &[(0.0, 2.0)]);
    }

    #[test]
    fn convex_input_is_fixed() {
        let f = pl(&[0.0, 1.0, 2.0], &[1.0, 0.0, 2.0]);
        let env = convex_envelope(&f);
        assert_eq!(env, f);
        assert!(gap_intervals(&f, &env).unwrap().is_empty());

        let knots: Vec<f64> = vec![-2.0, -0.7, 0.1, 0.4, 1.3, 2.2];
        let sq = PiecewiseLinearFn::sample(knots, |x| x * x).unwrap();
        assert_eq!(convex_envelope(&sq), sq);
    }

    #[test]
    fn concave_envelope_of_hockey_stick() {
        let f = pl(&[0.0, 1.0, 2.0], &[0.0, 0.0, 1.0]);
        let env = concave_envelope(&f);
        assert_eq!(env.knots(), &[0.0, 2.0]);
        assert_eq!(env.eval(1.0).unwrap(), 0.5);

        let concave = pl(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.5]);
        assert_eq!(concave_envelope(&concave), concave);
    }

    #[test]
    fn two_separate_bumps() {
        // base line y = 0 with bumps over (0,2) and (3,5); knot 3 sits on the hull
        let f = pl(
            &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            &[0.0, 1.0, 0.0, 0.0, 2.0, 0.0],
        );
        let env = convex_envelope(&f);
        assert_eq!(env.knots(), &[0.0, 2.0, 3.0, 5.0]);
        let gaps = gap_intervals(&f, &env).unwrap();
        assert_eq!(gaps.intervals(), &[(0.0, 2.0), (3.0, 5.0)]);
        assert_eq!(gaps.containing(4.5), Some((3.0, 5.0)));
        assert_eq!(gaps.containing(2.5), None);
    }

    #[test]
    fn touching_knot_splits_gap() {
        // knot 2 lies exactly on the chord from 0 to 4
        let f = pl(&[0.0, 1.0, 2.0, 3.0, 4.0], &[0.0, 1.0, 0.0, 1.0, 0.0]);
        let env = convex_envelope(&f);
        let gaps = gap_intervals(&f, &env).unwrap();
        assert_eq!(gaps.intervals(), &[(0.0, 2.0), (2.0, 4.0)]);
    }

    #[test]
    fn span_mismatch() {
        let f = pl(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]);
        let g = pl(&[0.0, 1.5], &[0.0, 0.0]);
        assert!(matches!(
            gap_intervals(&f, &g),
            Err(Error::SpanMismatch { .. })
        ));
    }

    #[test]
    fn randomization_examples() {
        let m = randomize_to_envelope(0.5, (0.0, 1.0)).unwrap();
        assert_eq!(m.upper, (1.0, 0.5));
        assert_eq!(m.lower, (0.0, 0.5));
        assert_eq!(m.mean(), 0.5);

        let m = randomize_to_envelope(0.25, (0.0, 1.0)).unwrap();
        assert_eq!(m.upper, (1.0, 0.25));

        let tent = pl(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]);
        let env = convex_envelope(&tent);
        for lam in [0.3, 1.0, 1.7] {
            let m = randomize_to_envelope(lam, (0.0, 2.0)).unwrap();
            let mixed = m.expect(|x| tent.eval(x).unwrap());
            assert_eq!(mixed, env.eval(lam).unwrap());
            assert!(mixed < tent.eval(lam).unwrap());
        }

        assert!(matches!(
            randomize_to_envelope(1.0, (0.0, 1.0)),
            Err(Error::OutsideGap { .. })
        ));
    }
}
