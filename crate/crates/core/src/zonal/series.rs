//! Shape-adaptive evaluation of `etr(-S) 1F1(a; b; S)` for one to three
//! positive eigenvalues `x_1 >= x_2 >= x_3`.
//!
//! The series is rewritten over monic Jack polynomials,
//!
//! ```text
//! 1F1(a; b; S) = sum_kappa c_kappa P_kappa(x),  c_kappa = (a)_kappa / (b)_kappa * 2^k / h^*(kappa)
//! ```
//!
//! and each term is split as `B(kappa) * Q(kappa)` with
//! `B(kappa) = c_kappa x^kappa e^{-tr S}` and `Q(kappa) = P_kappa(x) / x^kappa`.
//! `Q` is bounded and varies slowly, so the magnitude of a term is governed by
//! `B`, whose ratio along the first part has a closed form. Partitions are
//! visited as rows of increasing first part, with the remaining parts fixed;
//! rows, and groups of rows, stop once their contributions are negligible and
//! decreasing.
//!
//! For two variables `Q` depends only on `p = kappa_1 - kappa_2` and obeys a
//! three-term recurrence. For three variables `Q` comes from branching on the
//! smallest variable down to two-variable polynomials, with coefficients
//! expressed through the running products `E_l(T) = prod_{t<T} f(t, l)`,
//! `f(t, l) = (l + 2(t+1)) / (l + 1 + 2t)`.

use super::scaled::Scaled;
use super::{ln_series_coef, FusedLog, SeriesControl, ALPHA};

pub(crate) fn log_etr_adaptive(a: f64, b: f64, x: &[f64], ctrl: &SeriesControl) -> FusedLog {
    let mut ev = Adaptive::new(a, b, x, ctrl);
    let total = ev.run();
    FusedLog {
        log_abs: if total == 0.0 {
            f64::NEG_INFINITY
        } else {
            total.abs().ln()
        },
        sign: total.signum(),
        converged: !ev.cut,
        terms_used: ev.used,
    }
}

struct Adaptive {
    a: f64,
    b: f64,
    r: usize,
    x1: f64,
    x2: f64,
    x3: f64,
    lnx: [f64; 3],
    tr: f64,
    eps: f64,
    ln_eps: f64,
    ln_tol: f64,
    max_order: usize,
    // Q for two variables indexed by p
    g2: Vec<f64>,
    e0: Vec<f64>,
    e1: Vec<f64>,
    inv_e0: Vec<f64>,
    inv_e1: Vec<f64>,
    // E_1(s) * g2[s]
    gamma: Vec<f64>,
    rho1: f64,
    rho2: f64,
    // Q for three variables indexed by [kappa_2 - kappa_3][kappa_1 - kappa_2]
    qtab: Vec<Vec<f64>>,
    cut: bool,
    used: usize,
}

struct RowSum {
    sum: f64,
    ln_peak: f64,
}

impl Adaptive {
    fn new(a: f64, b: f64, x: &[f64], ctrl: &SeriesControl) -> Self {
        let r = x.len();
        let mut lnx = [0.0; 3];
        for (i, v) in x.iter().enumerate() {
            lnx[i] = v.ln();
        }
        let n = ctrl.max_order + 2;
        let eps = (ctrl.rel_tol * 1e-4).max(1e-300);
        let mut s = Self {
            a,
            b,
            r,
            x1: x[0],
            x2: x.get(1).copied().unwrap_or(0.0),
            x3: x.get(2).copied().unwrap_or(0.0),
            lnx,
            tr: x.iter().sum(),
            eps,
            ln_eps: eps.ln(),
            ln_tol: ctrl.rel_tol.ln(),
            max_order: ctrl.max_order,
            g2: Vec::new(),
            e0: Vec::new(),
            e1: Vec::new(),
            inv_e0: Vec::new(),
            inv_e1: Vec::new(),
            gamma: Vec::new(),
            rho1: 0.0,
            rho2: 0.0,
            qtab: Vec::new(),
            cut: false,
            used: 0,
        };
        if r >= 2 {
            s.g2 = two_variable_table(x[1] / x[0], n);
        }
        if r == 3 {
            s.e0 = running_products(0.0, n);
            s.e1 = running_products(1.0, n);
            s.inv_e0 = s.e0.iter().map(|v| 1.0 / v).collect();
            s.inv_e1 = s.e1.iter().map(|v| 1.0 / v).collect();
            s.gamma = s.e1.iter().zip(&s.g2).map(|(e, g)| e * g).collect();
            s.rho1 = x[2] / x[0];
            s.rho2 = x[2] / x[1];
        }
        s
    }

    fn run(&mut self) -> f64 {
        if self.r < 3 {
            return self.level(0, 0.0).sum;
        }
        let c0 = scan_start(self.x3, 0.0);
        let mut total = 0.0;
        let mut prev = f64::INFINITY;
        let mut first_peak = f64::INFINITY;
        let mut c = c0;
        loop {
            if 3 * c > self.max_order {
                self.note_cut(prev, total);
                break;
            }
            let lv = self.level(c, total);
            total += lv.sum;
            if c == c0 {
                first_peak = lv.ln_peak;
            } else if lv.ln_peak < prev && lv.ln_peak < self.ln_eps + ln_abs(total) {
                break;
            }
            prev = lv.ln_peak;
            c += 1;
        }
        let mut prev = first_peak;
        for c in (0..c0).rev() {
            let lv = self.level(c, total);
            total += lv.sum;
            if lv.ln_peak < prev && lv.ln_peak < self.ln_eps + ln_abs(total) {
                break;
            }
            prev = lv.ln_peak;
        }
        total
    }

    fn note_cut(&mut self, last_peak: f64, acc: f64) {
        if last_peak > self.ln_tol + ln_abs(acc) {
            self.cut = true;
        }
    }

    /// Sum over partitions with third part `c`.
    fn level(&mut self, c: usize, acc: f64) -> RowSum {
        if self.r == 1 {
            return self.row(0, 0, acc);
        }
        let q0 = scan_start(self.x2, c as f64);
        let mut level = 0.0;
        let mut peak = f64::NEG_INFINITY;
        let mut prev = f64::INFINITY;
        let mut first_peak = f64::INFINITY;
        let mut q = q0;
        loop {
            let k2 = c + q;
            if 2 * k2 + c > self.max_order {
                self.note_cut(prev, acc + level);
                break;
            }
            let row = self.row(k2, c, acc + level);
            level += row.sum;
            peak = peak.max(row.ln_peak);
            if q == q0 {
                first_peak = row.ln_peak;
            } else if row.ln_peak < prev && row.ln_peak < self.ln_eps + ln_abs(acc + level) {
                break;
            }
            prev = row.ln_peak;
            q += 1;
        }
        let mut prev = first_peak;
        for q in (0..q0).rev() {
            let row = self.row(c + q, c, acc + level);
            level += row.sum;
            peak = peak.max(row.ln_peak);
            if row.ln_peak < prev && row.ln_peak < self.ln_eps + ln_abs(acc + level) {
                break;
            }
            prev = row.ln_peak;
        }
        RowSum {
            sum: level,
            ln_peak: peak,
        }
    }

    #[inline]
    fn shape_factor(&mut self, q: usize, d: usize) -> f64 {
        match self.r {
            1 => 1.0,
            2 => self.g2[d],
            _ => self.q3(q, d),
        }
    }

    /// Sum over partitions `(k2 + d, k2, c)` for `d >= 0`, scanning outward
    /// from an estimate of where the row carries its mass.
    fn row(&mut self, k2: usize, c: usize, acc: f64) -> RowSum {
        let w_base = match self.r {
            1 => 0,
            2 => 2 * k2,
            _ => 2 * k2 + c,
        };
        if w_base > self.max_order {
            return RowSum {
                sum: 0.0,
                ln_peak: f64::NEG_INFINITY,
            };
        }
        let d0 = scan_start(self.x1, k2 as f64).min(self.max_order - w_base);
        let parts_all = [(k2 + d0) as u32, k2 as u32, c as u32];
        let parts = &parts_all[..self.r];
        let (lc, sc) = ln_series_coef(self.a, self.b, trim(parts));
        if sc == 0.0 {
            return RowSum {
                sum: 0.0,
                ln_peak: f64::NEG_INFINITY,
            };
        }
        let mut lx = 0.0;
        for (i, &p) in parts.iter().enumerate() {
            lx += p as f64 * self.lnx[i];
        }
        let start_log = lc + lx - self.tr;
        let start = Scaled::from_log(start_log, sc);
        let q = k2 - c;
        let (k2f, cf) = (k2 as f64, c as f64);
        let mut sum = 0.0;
        let mut max_abs = 0.0f64;
        let mut fallback_peak = start_log;

        let mut term = start;
        let mut prev_abs = f64::INFINITY;
        let mut d = d0;
        loop {
            let w = w_base + d;
            if w > self.max_order {
                if prev_abs > 0.0 && prev_abs.ln() > self.ln_tol + ln_abs(acc + sum) {
                    self.cut = true;
                }
                break;
            }
            self.used = self.used.max(w);
            let t = term.value() * self.shape_factor(q, d);
            sum += t;
            let at = t.abs();
            max_abs = max_abs.max(at);
            let ratio = self.ratio((k2 + d) as f64, k2f, cf);
            if max_abs == 0.0 && ratio.abs() < 1.0 {
                fallback_peak = fallback_peak.max(term.log_abs());
            }
            if d > d0 && at <= self.eps * (acc + sum).abs() && ratio.abs() <= 1.0 && at <= prev_abs
            {
                break;
            }
            if term.is_zero() {
                break;
            }
            prev_abs = at;
            term.mul(ratio);
            d += 1;
        }

        let mut term = start;
        let mut d = d0;
        while d > 0 {
            let ratio = self.ratio((k2 + d - 1) as f64, k2f, cf);
            if ratio == 0.0 {
                break;
            }
            term.mul(1.0 / ratio);
            d -= 1;
            let t = term.value() * self.shape_factor(q, d);
            sum += t;
            let at = t.abs();
            max_abs = max_abs.max(at);
            if at <= self.eps * (acc + sum).abs() && ratio.abs() >= 1.0 {
                break;
            }
        }
        RowSum {
            sum,
            ln_peak: if max_abs > 0.0 {
                max_abs.ln()
            } else {
                fallback_peak
            },
        }
    }

    /// `B(kappa_1 + 1, ...) / B(kappa_1, ...)`.
    #[inline]
    fn ratio(&self, k1: f64, k2: f64, k3: f64) -> f64 {
        let mut num = (self.a + k1) * self.x1;
        let mut den = (self.b + k1) * (k1 - k2 + 1.0);
        match self.r {
            1 => {}
            2 => {
                num *= 1.0 + ALPHA * (k1 - k2 + 1.0);
                den *= 1.0 + ALPHA * (k1 + 1.0);
            }
            _ => {
                num *= (1.0 + ALPHA * (k1 - k2 + 1.0)) * (2.0 + ALPHA * (k1 - k3 + 1.0));
                den *= (1.0 + ALPHA * (k1 - k3 + 1.0)) * (2.0 + ALPHA * (k1 + 1.0));
            }
        }
        num / den
    }

    fn q3(&mut self, q: usize, d: usize) -> f64 {
        if self.qtab.len() <= q {
            self.qtab.resize(q + 1, Vec::new());
        }
        if self.qtab[q].len() <= d {
            self.qtab[q].resize(d + 1, f64::NAN);
        }
        let v = self.qtab[q][d];
        if !v.is_nan() {
            return v;
        }
        let v = self.q3_compute(q, d);
        self.qtab[q][d] = v;
        v
    }

    /// `P_(p,q,0)(x) / (x_1^p x_2^q)` with `p = q + dd`.
    fn q3_compute(&self, q: usize, dd: usize) -> f64 {
        let (e0, e1, i0, i1, g) = (&self.e0, &self.e1, &self.inv_e0, &self.inv_e1, &self.gamma);
        let p = q + dd;
        let pref = e1[p] * e0[dd] * e0[q];
        let mut outer = 0.0;
        let mut prev_o = f64::INFINITY;
        let mut r2 = 1.0;
        for d2 in 0..=q {
            let beta = r2 * i1[dd + d2] * i0[d2] * i0[q - d2];
            let mut inner = 0.0;
            let mut prev_i = f64::INFINITY;
            let mut r1 = 1.0;
            for d1 in 0..=dd {
                let t = r1 * i1[p - d1] * i0[d1] * i0[dd - d1] * g[dd - d1 + d2];
                inner += t;
                if t <= 1e-17 * inner && t <= prev_i {
                    break;
                }
                prev_i = t;
                r1 *= self.rho1;
            }
            let o = beta * inner;
            outer += o;
            if o <= 1e-17 * outer && o <= prev_o {
                break;
            }
            prev_o = o;
            r2 *= self.rho2;
        }
        pref * outer
    }
}

/// First index worth visiting when the mass of a scan sits near
/// `x - offset`: about ten standard deviations below it.
fn scan_start(x: f64, offset: f64) -> usize {
    let s = x - offset - 10.0 * x.sqrt() - 10.0;
    if s > 0.0 {
        s as usize
    } else {
        0
    }
}

fn trim(parts: &[u32]) -> &[u32] {
    let mut n = parts.len();
    while n > 0 && parts[n - 1] == 0 {
        n -= 1;
    }
    &parts[..n]
}

fn ln_abs(v: f64) -> f64 {
    if v == 0.0 {
        f64::NEG_INFINITY
    } else {
        v.abs().ln()
    }
}

/// `P_(p)(1, rho)` for `p < n`, from
/// `Q_{p+1} = (1 + rho) Q_p - rho p^2 / ((p + 1/2)(p - 1/2)) Q_{p-1}`.
fn two_variable_table(rho: f64, n: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(n);
    g.push(1.0);
    if n > 1 {
        g.push(1.0 + rho);
    }
    for p in 1..n.saturating_sub(1) {
        let pf = p as f64;
        let next = (1.0 + rho) * g[p] - rho * pf * pf / ((pf + 0.5) * (pf - 0.5)) * g[p - 1];
        g.push(next);
    }
    g
}

fn running_products(l: f64, n: usize) -> Vec<f64> {
    let mut e = Vec::with_capacity(n);
    e.push(1.0);
    for t in 0..n.saturating_sub(1) {
        let tf = t as f64;
        let f = (l + ALPHA * (tf + 1.0)) / (l + 1.0 + ALPHA * tf);
        let last = *e.last().unwrap();
        e.push(last * f);
    }
    e
}
