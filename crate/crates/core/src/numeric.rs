//! Small numerical helpers shared across modules.

/// Neumaier-compensated sum.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in values {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn mean(values: &[f64]) -> f64 {
    sum(values.iter().copied()) / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss = sum(values.iter().map(|x| (x - m) * (x - m)));
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Running log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }
}

impl LogSum {
    pub fn add(&mut self, log_x: f64) {
        if log_x == f64::NEG_INFINITY {
            return;
        }
        if log_x <= self.max {
            self.scaled += (log_x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - log_x).exp() + 1.0;
            self.max = log_x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Ordinary least squares fit `y = a + s x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope; `None` without residual degrees of freedom.
    pub slope_se: Option<f64>,
}

/// Returns `None` when the abscissa has zero variance.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    assert_eq!(n, y.len());
    if n < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx = sum(x.iter().map(|v| (v - mx) * (v - mx)));
    if sxx <= 0.0 {
        return None;
    }
    let sxy = sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = (n > 2).then(|| {
        let ssr = sum(x.iter().zip(y).map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        }));
        (ssr / (n - 2) as f64 / sxx).sqrt()
    });
    Some(LineFit { intercept, slope, slope_se })
}
