use super::StatsError;

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew {
            needed: 3,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Pearson linear correlation.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Degenerate("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // Positions i..=j share rank ((i+1) + (j+1)) / 2.
        let rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank-order correlation (Pearson on average ranks).
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    plcc(&average_ranks(x), &average_ranks(y)).map_err(|_| StatsError::Degenerate("all ranks tied".into()))
}

/// Pair counts used by Kendall's tau-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub concordant: u64,
    pub discordant: u64,
    pub ties_x: u64,
    pub ties_y: u64,
    pub total: u64,
}

pub fn pair_counts(x: &[f64], y: &[f64]) -> PairCounts {
    let n = x.len();
    let mut c = PairCounts {
        concordant: 0,
        discordant: 0,
        ties_x: 0,
        ties_y: 0,
        total: (n as u64 * n.saturating_sub(1) as u64) / 2,
    };
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                c.ties_x += 1;
            }
            if dy == 0.0 {
                c.ties_y += 1;
            }
            let s = dx * dy;
            if s > 0.0 {
                c.concordant += 1;
            } else if s < 0.0 {
                c.discordant += 1;
            }
        }
    }
    c
}

/// Kendall's tau-b.
pub fn krcc(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    let c = pair_counts(x, y);
    let nx = (c.total - c.ties_x) as f64;
    let ny = (c.total - c.ties_y) as f64;
    if nx == 0.0 || ny == 0.0 {
        return Err(StatsError::Degenerate("all pairs tied".into()));
    }
    let tau = (c.concordant as f64 - c.discordant as f64) / (nx.sqrt() * ny.sqrt());
    Ok(tau.clamp(-1.0, 1.0))
}
