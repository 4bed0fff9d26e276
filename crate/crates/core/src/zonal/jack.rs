//! Jack polynomials in the `J` normalization via the branching rule
//!
//! ```text
//! J_kappa(x_1..x_r) = sum_mu beta_{kappa mu} x_r^{|kappa/mu|} J_mu(x_1..x_{r-1})
//! ```
//!
//! where `mu` runs over partitions with `kappa/mu` a horizontal strip.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use super::partition::{conjugate, partitions_of, Partition};
use super::scaled::LogSum;
use super::{ln_rising, lower_hook, upper_hook, FusedLog, SeriesControl, ALPHA};
use crate::error::Result;

type StripList = Arc<Vec<(Vec<u32>, f64, u32)>>;

fn strip_cache() -> &'static RwLock<HashMap<Vec<u32>, StripList>> {
    static CACHE: OnceLock<RwLock<HashMap<Vec<u32>, StripList>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Horizontal strips removable from `kappa` with their branching coefficients
/// and strip sizes.
fn strips(kappa: &[u32]) -> StripList {
    if let Some(s) = strip_cache().read().unwrap().get(kappa) {
        return s.clone();
    }
    let list = Arc::new(build_strips(kappa));
    strip_cache()
        .write()
        .unwrap()
        .insert(kappa.to_vec(), list.clone());
    list
}

fn build_strips(kappa: &[u32]) -> Vec<(Vec<u32>, f64, u32)> {
    let len = kappa.len();
    let mut out = Vec::new();
    let mut mu = vec![0u32; len];
    let kc = conjugate(kappa);
    loop_strips(kappa, 0, &mut mu, &mut |mu: &[u32]| {
        let mut m: Vec<u32> = mu.to_vec();
        while m.last() == Some(&0) {
            m.pop();
        }
        let mc = conjugate(&m);
        let mut num = 1.0;
        for i in 0..len {
            for j in 0..kappa[i] as usize {
                let unchanged = mc.get(j).copied().unwrap_or(0) == kc[j];
                num *= if unchanged {
                    upper_hook(kappa, &kc, i, j)
                } else {
                    lower_hook(kappa, &kc, i, j)
                };
            }
        }
        let mut den = 1.0;
        for i in 0..m.len() {
            for j in 0..m[i] as usize {
                let unchanged = mc[j] == kc[j];
                den *= if unchanged {
                    upper_hook(&m, &mc, i, j)
                } else {
                    lower_hook(&m, &mc, i, j)
                };
            }
        }
        let size = kappa.iter().sum::<u32>() - m.iter().sum::<u32>();
        out.push((m, num / den, size));
    });
    out
}

fn loop_strips(kappa: &[u32], i: usize, mu: &mut Vec<u32>, f: &mut dyn FnMut(&[u32])) {
    if i == kappa.len() {
        f(mu);
        return;
    }
    let lo = kappa.get(i + 1).copied().unwrap_or(0);
    for v in lo..=kappa[i] {
        mu[i] = v;
        loop_strips(kappa, i + 1, mu, f);
    }
}

type Memo = HashMap<(Vec<u32>, usize), f64>;

fn jack_rec(kappa: &[u32], r: usize, x: &[f64], memo: &mut Memo) -> f64 {
    if kappa.is_empty() {
        return 1.0;
    }
    if kappa.len() > r {
        return 0.0;
    }
    let key = (kappa.to_vec(), r);
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let xr = x[r - 1];
    let mut s = 0.0;
    for (mu, beta, size) in strips(kappa).iter() {
        if mu.len() > r - 1 {
            continue;
        }
        let p = if *size == 0 {
            1.0
        } else {
            xr.powi(*size as i32)
        };
        if p == 0.0 {
            continue;
        }
        s += beta * p * jack_rec(mu, r - 1, x, memo);
    }
    memo.insert(key, s);
    s
}

/// Jack polynomial `J_kappa` with parameter 2 evaluated at `x`.
pub fn jack_j(kappa: &Partition, x: &[f64]) -> f64 {
    let mut memo = Memo::new();
    jack_rec(kappa.parts(), x.len(), x, &mut memo)
}

fn ln_hook_product_both(parts: &[u32]) -> f64 {
    let conj = conjugate(parts);
    let mut s = 0.0;
    for i in 0..parts.len() {
        for j in 0..parts[i] as usize {
            s += upper_hook(parts, &conj, i, j).ln() + lower_hook(parts, &conj, i, j).ln();
        }
    }
    s
}

/// Zonal polynomial `C_kappa(S)` at a symmetric matrix with the given
/// eigenvalues, normalized so that the order-`k` sum equals `(tr S)^k`.
/// Partitions longer than the number of eigenvalues give 0.
pub fn zonal(kappa: &Partition, eigs: &[f64]) -> f64 {
    if kappa.len() > eigs.len() {
        return 0.0;
    }
    let k = kappa.weight();
    let ln_c =
        k as f64 * ALPHA.ln() + libm::lgamma(k as f64 + 1.0) - ln_hook_product_both(kappa.parts());
    ln_c.exp() * jack_j(kappa, eigs)
}

pub(crate) fn log_etr_reference(
    a: f64,
    b: f64,
    x: &[f64],
    ctrl: &SeriesControl,
) -> Result<FusedLog> {
    let m = x.len();
    let tr: f64 = x.iter().sum();
    let xmax = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if xmax == 0.0 {
        return Ok(FusedLog {
            log_abs: 0.0,
            sign: 1.0,
            converged: true,
            terms_used: 0,
        });
    }
    let xs: Vec<f64> = x.iter().map(|v| v / xmax).collect();
    let ln_xmax = xmax.ln();
    let ln_tol = ctrl.rel_tol.ln();
    let mut memo = Memo::new();
    let mut sum = LogSum::new();
    sum.add(0.0, 1.0);
    let mut converged = false;
    let mut used = 0;
    for k in 1..=ctrl.max_order {
        used = k;
        let mut order = LogSum::new();
        for kappa in partitions_of(k, m) {
            let parts = kappa.parts();
            let mut lc = k as f64 * ALPHA.ln() - ln_hook_product_both(parts);
            let mut sc = 1.0;
            for (i, &p) in parts.iter().enumerate() {
                let (la, sa) = ln_rising(a - i as f64 / 2.0, p as usize);
                let (lb, sb) = ln_rising(b - i as f64 / 2.0, p as usize);
                lc += la - lb;
                sc *= sa * sb;
            }
            if sc == 0.0 {
                continue;
            }
            let j = jack_rec(parts, m, &xs, &mut memo);
            if j != 0.0 {
                order.add(lc + j.abs().ln(), sc * j.signum());
            }
        }
        let lo = order.log_abs() + k as f64 * ln_xmax;
        if lo.is_nan() || lo == f64::INFINITY {
            // The J-normalized recursion overflows past order ~150.
            break;
        }
        sum.add(lo, order.sign());
        if lo <= ln_tol + sum.log_abs() {
            converged = true;
            break;
        }
    }
    Ok(FusedLog {
        log_abs: sum.log_abs() - tr,
        sign: sum.sign(),
        converged,
        terms_used: used,
    })
}
