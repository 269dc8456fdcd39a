use super::NasError;
use crate::predict::LabeledRecord;

/// `a` dominates `b` under (maximize accuracy, minimize ET).
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 >= b.0 && a.1 <= b.1 && (a.0 > b.0 || a.1 < b.1)
}

/// Indices of the non-dominated points, sorted by accuracy descending then ET
/// ascending. Points with identical objectives are all kept.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[j]
            .0
            .total_cmp(&points[i].0)
            .then_with(|| points[i].1.total_cmp(&points[j].1))
            .then_with(|| i.cmp(&j))
    });
    let mut front = Vec::new();
    // Lowest ET among strictly more accurate points.
    let mut best_above = f64::INFINITY;
    let mut g = 0;
    while g < order.len() {
        let acc = points[order[g]].0;
        let mut end = g;
        while end < order.len() && points[order[end]].0 == acc {
            end += 1;
        }
        let group_min = points[order[g]].1;
        if group_min < best_above {
            front.extend(order[g..end].iter().copied().filter(|&i| points[i].1 == group_min));
        }
        best_above = best_above.min(group_min);
        g = end;
    }
    front
}

/// Non-dominated records under (maximize ACC_avg, minimize ET_avg).
pub fn pareto_front(records: &[LabeledRecord]) -> Result<Vec<LabeledRecord>, NasError> {
    if records.is_empty() {
        return Err(NasError::Empty);
    }
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.acc_avg, r.et_avg)).collect();
    Ok(pareto_indices(&pts).into_iter().map(|i| records[i].clone()).collect())
}

/// `1 - ET_avg / ET_static`.
pub fn et_reduction(et_avg: f64, static_et: f64) -> Result<f64, NasError> {
    if !(static_et > 0.0) {
        return Err(NasError::ZeroStatic(static_et));
    }
    Ok(1.0 - et_avg / static_et)
}

/// `1 - sum_i ER_i * cumMACs_i / cumMACs_static`.
pub fn mac_reduction(er: &[f64], cumulative_macs: &[u64], static_macs: u64) -> Result<f64, NasError> {
    if er.len() != cumulative_macs.len() {
        return Err(NasError::LengthMismatch(format!(
            "{} exit ratios, {} MAC counts",
            er.len(),
            cumulative_macs.len()
        )));
    }
    if static_macs == 0 {
        return Err(NasError::ZeroStatic(0.0));
    }
    let expected: f64 = er.iter().zip(cumulative_macs).map(|(r, &m)| r * m as f64).sum();
    Ok(1.0 - expected / static_macs as f64)
}
