//! Continuous-time reference for ambiguity checks: the transmitted frame is
//! evaluated from its plans and schedule directly, and integrals use
//! composite Gauss-Legendre quadrature over the chip boundaries.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rfpa_core::codec::PulsePlan;
use rfpa_core::keyschedule::AgilitySchedule;
use rfpa_core::params::ValidatedConfig;

/// Nodes and weights on [-1, 1], Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

pub struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    pieces: usize,
}

impl Quadrature {
    pub fn new(order: usize, pieces: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights, pieces }
    }

    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> Complex64) -> Complex64 {
        if hi <= lo {
            return Complex64::new(0.0, 0.0);
        }
        let h = (hi - lo) / self.pieces as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for p in 0..self.pieces {
            let mid = lo + (p as f64 + 0.5) * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                acc += f(mid + 0.5 * h * x) * (0.5 * h * w);
            }
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub struct Chip {
    pub start: f64,
    pub pulse_start: f64,
    /// Per antenna: frequency and complex symbol.
    pub tones: Vec<(f64, Complex64)>,
}

/// `x_m(t)` as a sum of rectangular chips.
pub struct ContinuousFrame {
    pub chips: Vec<Chip>,
    pub dt: f64,
}

impl ContinuousFrame {
    pub fn new(plans: &[PulsePlan], schedule: &AgilitySchedule, cfg: &ValidatedConfig) -> Self {
        let dt = cfg.pulse_duration_s() / cfg.chips_per_pulse() as f64;
        let df = 1.0 / dt;
        let mut chips = Vec::new();
        for (l, plan) in plans.iter().enumerate() {
            let tl = l as f64 * cfg.pri_s() + schedule.phi_t[l] as f64 * cfg.pulse_duration_s();
            let fl = schedule.phi_f[l] as f64 * cfg.num_hops() as f64 * df;
            for (q, c) in plan.chips.iter().enumerate() {
                chips.push(Chip {
                    start: tl + q as f64 * dt,
                    pulse_start: tl,
                    tones: c
                        .hop_codes
                        .iter()
                        .zip(c.amplitudes.iter().zip(&c.phases))
                        .map(|(&h, (&a, &p))| (fl + h as f64 * df, Complex64::from_polar(a, p)))
                        .collect(),
                });
            }
        }
        chips.sort_by(|a, b| a.start.total_cmp(&b.start));
        Self { chips, dt }
    }

    pub fn value(&self, m: usize, t: f64) -> Complex64 {
        let i = self.chips.partition_point(|c| c.start <= t);
        if i == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let c = &self.chips[i - 1];
        if t >= c.start + self.dt {
            return Complex64::new(0.0, 0.0);
        }
        let (f, s) = c.tones[m];
        s * Complex64::cis(2.0 * PI * f * (t - c.pulse_start))
    }

    /// `int x_m(t) conj(x_m2(t + tau)) e^{i 2 pi nu t} dt`, one quadrature
    /// per overlapping chip pair so every piece is smooth.
    pub fn cross_af(&self, quad: &Quadrature, m: usize, m2: usize, tau: f64, nu: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in &self.chips {
            for b in &self.chips {
                let lo = a.start.max(b.start - tau);
                let hi = (a.start + self.dt).min(b.start + self.dt - tau);
                if hi <= lo {
                    continue;
                }
                acc += quad.integrate(lo, hi, |t| {
                    let (f, s) = a.tones[m];
                    let (f2, s2) = b.tones[m2];
                    let x = s * Complex64::cis(2.0 * PI * f * (t - a.pulse_start));
                    let y = s2 * Complex64::cis(2.0 * PI * f2 * (t + tau - b.pulse_start));
                    x * y.conj() * Complex64::cis(2.0 * PI * nu * t)
                });
            }
        }
        acc
    }

    pub fn mimo_af(&self, quad: &Quadrature, tau: f64, nu: f64, f: f64, f2: f64) -> Complex64 {
        let m_tx = self.chips[0].tones.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..m_tx {
            for b in 0..m_tx {
                let steer = Complex64::cis(2.0 * PI * (f * a as f64 - f2 * b as f64));
                acc += self.cross_af(quad, a, b, tau, nu) * steer;
            }
        }
        acc
    }
}
