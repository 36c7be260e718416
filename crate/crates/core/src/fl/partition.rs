use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};

use crate::error::{invalid, Result};
use crate::rng::stream;

/// Shuffles `0..n` and deals it into `k` contiguous, near-equal shards.
pub fn iid_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(invalid("need at least one client"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, &[0]));
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// Label-skewed split: for every class, client proportions are drawn from
/// `Dir(beta, ..., beta)` and that class's shuffled samples are cut accordingly.
pub fn dirichlet_partition(labels: &[usize], k: usize, beta: f64, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(invalid("need at least one client"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("Dirichlet concentration must be positive, got {beta}")));
    }
    let gamma = Gamma::new(beta, 1.0).map_err(|e| invalid(e.to_string()))?;
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for c in 0..classes {
        let mut rng = stream(seed, &[c as u64]);
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let mut w: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            w = vec![1.0; k];
        }
        let total: f64 = w.iter().sum();
        let n = members.len();
        let mut acc = 0.0;
        let mut start = 0;
        for (i, wi) in w.iter().enumerate() {
            acc += wi;
            let end = if i + 1 == k {
                n
            } else {
                ((acc / total) * n as f64).round().min(n as f64) as usize
            };
            let end = end.max(start);
            out[i].extend_from_slice(&members[start..end]);
            start = end;
        }
    }
    out.iter_mut().for_each(|s| s.sort_unstable());
    Ok(out)
}
