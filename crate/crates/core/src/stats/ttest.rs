use super::{floor_p, mean, tail_p, variance, Alternative, TestMethod, TestResult};
use crate::error::{Error, Result};

/// Paired t-test on the differences `a - b`, with n - 1 degrees of freedom.
pub fn t_test_paired(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData("paired t-test needs n >= 2".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let sd = variance(&diffs, 1).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Err(Error::DegenerateVariance("paired differences are constant"));
    }
    let t = mean(&diffs) / (sd / n.sqrt());
    let df = n - 1.0;
    let (p_value, p_below_floor) = floor_p(tail_p(t, df, alternative));
    Ok(TestResult {
        statistic: t,
        p_value,
        p_below_floor,
        n1: a.len(),
        n2: b.len(),
        method: TestMethod::TPaired,
        alternative,
        exact: false,
        df: Some(df),
        z: None,
    })
}

/// Welch t-test of the one-sided alternative mean(a) > mean(b).
pub fn t_test_independent_one_sided(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(
            "independent t-test needs two observations per sample".into(),
        ));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a, 1) / na, variance(b, 1) / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Err(Error::DegenerateVariance("both samples are constant"));
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let (p_value, p_below_floor) = floor_p(tail_p(t, df, Alternative::Greater));
    Ok(TestResult {
        statistic: t,
        p_value,
        p_below_floor,
        n1: a.len(),
        n2: b.len(),
        method: TestMethod::TIndependentOneSided,
        alternative: Alternative::Greater,
        exact: false,
        df: Some(df),
        z: None,
    })
}
