use crate::error::{Error, Result};

/// Euclidean projection onto `{w : w >= 0, sum w = 1}`.
pub fn project_to_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::validation("cannot project an empty vector"));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::validation(format!("non-finite entry {bad} in projection input")));
    }
    let mut out = v.to_vec();
    let mut scratch = Vec::with_capacity(v.len());
    project_in_place(&mut out, &mut scratch);
    Ok(out)
}

/// Sort-and-threshold projection; `scratch` is reused between calls.
pub(crate) fn project_in_place(v: &mut [f64], scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in scratch.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
        sum += *x;
    }
    // a final rescale absorbs rounding so rows sum to one within a few ulps
    if sum > 0.0 {
        for x in v.iter_mut() {
            *x /= sum;
        }
    }
}
