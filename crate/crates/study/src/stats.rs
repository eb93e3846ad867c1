use serde::Serialize;

/// z value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mos: f64,
    /// Sample standard deviation; absent for a single rating.
    pub sd: Option<f64>,
    /// Half-width of the 95% confidence interval.
    pub ci95: Option<f64>,
    /// Fewer than two ratings: dispersion is undefined.
    pub degenerate: bool,
}

impl Summary {
    pub fn of(scores: &[f64]) -> Option<Summary> {
        let n = scores.len();
        if n == 0 {
            return None;
        }
        let mos = scores.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| (scores.iter().map(|s| (s - mos).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Some(Summary {
            n,
            mos,
            sd,
            ci95: sd.map(|s| Z95 * s / (n as f64).sqrt()),
            degenerate: n < 2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed() {
        let s = Summary::of(&[60.0, 80.0]).unwrap();
        assert_eq!(s.mos, 70.0);
        let sd = 200.0f64.sqrt();
        assert!((s.sd.unwrap() - sd).abs() < 1e-12 && (sd - 14.142).abs() < 1e-3);
        assert!((s.ci95.unwrap() - 1.96 * sd / 2.0f64.sqrt()).abs() < 1e-12);
        let one = Summary::of(&[42.5]).unwrap();
        assert!(one.degenerate && one.sd.is_none() && one.ci95.is_none());
        assert!(Summary::of(&[]).is_none());
    }
}
