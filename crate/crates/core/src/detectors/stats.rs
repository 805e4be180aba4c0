use super::DetectorError;

/// Linear-interpolation percentile (`p` in percent) of `values`.
///
/// Infinite values are allowed; interpolation toward an infinite neighbour
/// yields infinity only when the fractional rank is non-zero.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, DetectorError> {
    if values.is_empty() {
        return Err(DetectorError::EmptyInput);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(DetectorError::Parameter(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, p))
}

pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let v_lo = sorted[lo];
    if frac == 0.0 || lo + 1 >= sorted.len() {
        return v_lo;
    }
    let v_hi = sorted[lo + 1];
    if v_lo == v_hi {
        return v_lo;
    }
    v_lo + frac * (v_hi - v_lo)
}

/// Mean silhouette coefficient of a clustering under `metric`.
///
/// `assignment[i]` is the cluster of `points[i]`, in `0..k`. Points in
/// singleton clusters contribute 0, as do points whose intra- and
/// nearest-cluster distances are both zero.
pub fn silhouette<F>(points: &[f64], assignment: &[usize], metric: F) -> Result<f64, DetectorError>
where
    F: Fn(f64, f64) -> f64,
{
    if points.len() != assignment.len() {
        return Err(DetectorError::Parameter("assignment length differs from points".into()));
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(DetectorError::Parameter("silhouette needs at least two clusters".into()));
    }
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    if sizes.contains(&0) {
        return Err(DetectorError::Parameter("silhouette needs every cluster non-empty".into()));
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for (i, &p) in points.iter().enumerate() {
        let own = assignment[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, &q) in points.iter().enumerate() {
            if i != j {
                sums[assignment[j]] += metric(p, q);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / points.len() as f64)
}
