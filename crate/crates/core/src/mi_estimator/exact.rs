//! Exact mutual information for small discrete joints `p(x, s, s')`.

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Probability table indexed `[x][s][s']`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    pub nx: usize,
    pub ns: usize,
    pub nsn: usize,
    pub p: Vec<f64>,
}

impl JointTable {
    pub fn new(nx: usize, ns: usize, nsn: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != nx * ns * nsn {
            return Err(Error::DimensionMismatch {
                expected: nx * ns * nsn,
                got: p.len(),
            });
        }
        if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::contract("probabilities must be finite and non-negative"));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("table sums to {total}, not 1")));
        }
        Ok(Self { nx, ns, nsn, p })
    }

    /// Random joint with each alphabet size drawn from `sizes`. Entries are
    /// exponential draws, about a fifth of them zeroed, then normalized.
    pub fn random(rng: &mut Rng, sizes: std::ops::RangeInclusive<usize>) -> Self {
        let (lo, hi) = (*sizes.start(), *sizes.end());
        let mut dim = || lo + rng.index(hi - lo + 1);
        let (nx, ns, nsn) = (dim(), dim(), dim());
        let mut p: Vec<f64> = (0..nx * ns * nsn)
            .map(|_| if rng.uniform() < 0.2 { 0.0 } else { -(1.0 - rng.uniform()).ln() })
            .collect();
        if p.iter().all(|&v| v == 0.0) {
            p[0] = 1.0;
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        Self { nx, ns, nsn, p }
    }

    #[inline]
    pub fn get(&self, x: usize, s: usize, sn: usize) -> f64 {
        self.p[(x * self.ns + s) * self.nsn + sn]
    }
}

/// The three quantities in the decomposition
/// `I(x; (s, s')) = I(s; x) + I(x; s' | s)`, each computed independently
/// by direct summation over its own marginals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteMi {
    /// `I(x; (s, s'))`
    pub joint: f64,
    /// `I(s; x)`
    pub state: f64,
    /// `I(x; s' | s)`
    pub conditional: f64,
}

impl DiscreteMi {
    /// `|I(s; x) + I(x; s' | s) - I(x; (s, s'))|`.
    pub fn chain_rule_gap(&self) -> f64 {
        (self.state + self.conditional - self.joint).abs()
    }
}

/// Largest chain-rule gap over `count` random joints with alphabet sizes
/// 2 to 5.
pub fn chain_rule_check(count: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let table = JointTable::random(&mut rng, 2..=5);
        worst = worst.max(exact_discrete_mi(&table)?.chain_rule_gap());
    }
    Ok(worst)
}

fn plogp_ratio(p: f64, num: f64, den: f64) -> f64 {
    if p > 0.0 {
        p * (num / den).ln()
    } else {
        0.0
    }
}

pub fn exact_discrete_mi(table: &JointTable) -> Result<DiscreteMi> {
    let total: f64 = table.p.iter().sum();
    if (total - 1.0).abs() > 1e-9 || table.p.iter().any(|&v| v < 0.0) {
        return Err(Error::contract("joint table is not a normalized distribution"));
    }
    let (nx, ns, nsn) = (table.nx, table.ns, table.nsn);
    let mut px = vec![0.0; nx];
    let mut ps = vec![0.0; ns];
    let mut pxs = vec![0.0; nx * ns];
    let mut pssn = vec![0.0; ns * nsn];
    for x in 0..nx {
        for s in 0..ns {
            for sn in 0..nsn {
                let p = table.get(x, s, sn);
                px[x] += p;
                ps[s] += p;
                pxs[x * ns + s] += p;
                pssn[s * nsn + sn] += p;
            }
        }
    }

    let mut joint = 0.0;
    let mut conditional = 0.0;
    for x in 0..nx {
        for s in 0..ns {
            for sn in 0..nsn {
                let p = table.get(x, s, sn);
                // p(x,s,s') / (p(x) p(s,s'))
                joint += plogp_ratio(p, p, px[x] * pssn[s * nsn + sn]);
                // p(x,s,s') p(s) / (p(x,s) p(s,s'))
                conditional += plogp_ratio(p, p * ps[s], pxs[x * ns + s] * pssn[s * nsn + sn]);
            }
        }
    }
    let mut state = 0.0;
    for x in 0..nx {
        for s in 0..ns {
            let p = pxs[x * ns + s];
            state += plogp_ratio(p, p, px[x] * ps[s]);
        }
    }
    Ok(DiscreteMi {
        joint,
        state,
        conditional,
    })
}
