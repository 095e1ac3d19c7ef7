use super::MetricError;

/// Image-level AUROC as the Mann–Whitney statistic, computed from midranks:
/// `(R₁ − n₁(n₁+1)/2) / (n₁·n₀)` where `R₁` is the rank sum of the positives.
/// Tied scores share their average rank, which counts each tied
/// positive/negative pair as one half.
pub fn compute_auroc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(format!("score {i} is {}", scores[i])));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(MetricError::UndefinedMetric(format!("label {bad} is not 0 or 1")));
    }
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(MetricError::UndefinedMetric(format!("AUROC needs both classes (n0={n0}, n1={n1})")));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the group spans ranks i+1 ..= j+1.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum_pos += mid * pos_in_group as f64;
        i = j + 1;
    }
    let (n1f, n0f) = (n1 as f64, n0 as f64);
    Ok((rank_sum_pos - n1f * (n1f + 1.0) / 2.0) / (n1f * n0f))
}
