/// Equal-frequency cut points over observed predicted response rates.
///
/// Returns at most `num_layers - 1` strictly increasing cut points. Cut `k`
/// is the value at sorted position `floor(k * N / L)`, so with the
/// lower-inclusive convention each layer receives about `N / L`
/// observations. Duplicate cuts are merged and a cut at the minimum value is
/// dropped; either reduces the effective number of layers.
pub fn derive_boundaries(observed: &[f64], num_layers: usize) -> Vec<f64> {
    let weighted: Vec<(f64, u64)> = observed.iter().map(|r| (*r, 1)).collect();
    derive_boundaries_weighted(&weighted, num_layers)
}

/// [`derive_boundaries`] over `(rate, count)` pairs.
pub fn derive_boundaries_weighted(observed: &[(f64, u64)], num_layers: usize) -> Vec<f64> {
    if num_layers <= 1 || observed.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<(f64, u64)> = observed.iter().copied().filter(|(_, w)| *w > 0).collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: u128 = sorted.iter().map(|(_, w)| *w as u128).sum();
    let min = sorted[0].0;

    let mut cuts: Vec<f64> = Vec::with_capacity(num_layers - 1);
    let mut idx = 0usize;
    let mut before = 0u128; // observations strictly before sorted[idx]
    for k in 1..num_layers {
        let pos = (k as u128 * total) / num_layers as u128;
        while before + sorted[idx].1 as u128 <= pos {
            before += sorted[idx].1 as u128;
            idx += 1;
        }
        let cut = sorted[idx].0;
        if cut > min && cuts.last().is_none_or(|last| cut > *last) {
            cuts.push(cut);
        }
    }
    cuts
}

/// Layer index (0 = lowest priority) whose interval contains `ctr`.
/// A rate equal to a cut point belongs to the layer above it.
pub fn classify(ctr: f64, boundaries: &[f64]) -> usize {
    boundaries.partition_point(|b| *b <= ctr)
}
