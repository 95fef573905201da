//! Piece table of the assembled coefficient, stored as the excess `c - 1`
//! in extended precision, and its audits.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DgcsError, DgcsInputs, ModeWindow};
use crate::coefficients::{Coefficient, Segment, Shape};
use crate::spaces::ContinuityModulus;
use crate::Xf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PieceKind {
    /// Affine from `c = 1` at `t = 0` to the last window; stands in for
    /// the windows beyond `k_max`.
    Ramp,
    /// Resonant window `[t_k, s_k]`.
    Window { k: usize },
    /// Affine bridge `[s_k, t_{k-1}]`.
    Affine { k: usize },
    /// Constant from `s_{k0}` on.
    Tail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    #[serde(flatten)]
    pub kind: PieceKind,
    pub start: Xf,
    /// `None` for the unbounded tail.
    pub len: Option<Xf>,
    pub excess_start: Xf,
    pub excess_end: Xf,
    /// Window frequency and amplitude; zero elsewhere.
    pub lambda: Xf,
    pub eps: Xf,
    /// Window length in periods `pi / lambda`.
    pub periods: Xf,
}

/// `c - 1` inside a window at phase `theta = lambda (t - t_k)`:
/// `base - 16 eps^2 sin^4(theta) - 8 eps sin(2 theta)`.
pub fn window_excess(base: Xf, eps: Xf, theta: f64) -> Xf {
    base + window_oscillation(eps, theta)
}

fn window_oscillation(eps: Xf, theta: f64) -> Xf {
    let s = libm::sin(theta);
    eps * eps * (-16.0 * s * s * s * s) + eps * (-8.0 * libm::sin(2.0 * theta))
}

/// `c'(t) / lambda` inside a window:
/// `-64 eps^2 sin^3(theta) cos(theta) - 16 eps cos(2 theta)`.
pub fn window_slope(eps: Xf, theta: f64) -> Xf {
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    eps * eps * (-64.0 * s * s * s * c) + eps * (-16.0 * libm::cos(2.0 * theta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgcsCoefficient {
    /// Pieces in increasing time order; `c = 1` before the first.
    pub pieces: Vec<Piece>,
    pub modulus: ContinuityModulus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaCategory {
    pub name: String,
    pub pairs: usize,
    pub worst_ratio: f64,
}

/// `|c(a) - c(b)| / omega(|a - b|)` over sampled pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaAudit {
    pub pairs: usize,
    pub worst_ratio: f64,
    pub categories: Vec<OmegaCategory>,
}

impl OmegaAudit {
    pub fn passed(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientAudit {
    pub junction_max_gap: f64,
    pub min_c: f64,
    pub max_c: f64,
    /// `max |c'| / (32 eps_k lambda_k)` over window samples and bridges.
    pub slope_worst_ratio: f64,
    pub omega: OmegaAudit,
}

impl CoefficientAudit {
    pub fn strictly_hyperbolic(&self) -> bool {
        self.min_c >= 0.5 && self.max_c <= 1.5
    }
}

/// A sampled point inside a piece, located by its distances to both ends
/// so that nearby points in adjacent pieces keep full relative accuracy.
struct PiecePoint {
    from_start: Xf,
    to_end: Xf,
    excess: Xf,
}

impl DgcsCoefficient {
    pub fn assemble(inp: &DgcsInputs, modes: &[ModeWindow]) -> DgcsCoefficient {
        let mut pieces = Vec::new();
        let last = modes.last().expect("at least one certified mode");
        pieces.push(Piece {
            kind: PieceKind::Ramp,
            start: Xf::ZERO,
            len: Some(last.start),
            excess_start: Xf::ZERO,
            excess_end: last.base_excess,
            lambda: Xf::ZERO,
            eps: Xf::ZERO,
            periods: Xf::ZERO,
        });
        for (i, m) in modes.iter().enumerate().rev() {
            let periods = m.half_periods - 4.0;
            pieces.push(Piece {
                kind: PieceKind::Window { k: m.k },
                start: m.start,
                len: Some(periods * PI / m.lambda),
                excess_start: window_excess(m.base_excess, m.eps, 0.0),
                excess_end: window_excess(m.base_excess, m.eps, 0.0),
                lambda: m.lambda,
                eps: m.eps,
                periods,
            });
            if i > 0 {
                let prev = &modes[i - 1];
                pieces.push(Piece {
                    kind: PieceKind::Affine { k: m.k },
                    start: m.end,
                    len: Some(prev.start - m.end),
                    excess_start: m.base_excess,
                    excess_end: prev.base_excess,
                    lambda: Xf::ZERO,
                    eps: Xf::ZERO,
                    periods: Xf::ZERO,
                });
            }
        }
        let first = &modes[0];
        pieces.push(Piece {
            kind: PieceKind::Tail,
            start: first.end,
            len: None,
            excess_start: first.base_excess,
            excess_end: first.base_excess,
            lambda: Xf::ZERO,
            eps: Xf::ZERO,
            periods: Xf::ZERO,
        });
        DgcsCoefficient {
            pieces,
            modulus: inp.omega.clone(),
        }
    }

    /// `|c(end of piece i) - c(start of piece i + 1)|`, with `c(0^-) = 1`
    /// prepended.
    pub fn junction_gaps(&self) -> Vec<f64> {
        let mut gaps = alloc::vec![self.pieces[0].excess_start.abs().to_f64()];
        for w in self.pieces.windows(2) {
            gaps.push((w[0].excess_end - w[1].excess_start).abs().to_f64());
        }
        gaps
    }

    /// Lower and upper values of `c` from window samples and piece ends.
    pub fn range(&self, samples: usize) -> (f64, f64) {
        let mut lo = Xf::ZERO;
        let mut hi = Xf::ZERO;
        for p in &self.pieces {
            lo = lo.min(p.excess_start).min(p.excess_end);
            hi = hi.max(p.excess_start).max(p.excess_end);
            if let PieceKind::Window { .. } = p.kind {
                for i in 0..samples {
                    let th = PI * i as f64 / samples as f64;
                    let e = window_excess(p.excess_start, p.eps, th);
                    lo = lo.min(e);
                    hi = hi.max(e);
                }
            }
        }
        (1.0 + lo.to_f64(), 1.0 + hi.to_f64())
    }

    /// Worst `|c'| / (32 eps_k lambda_k)`; windows are sampled in phase,
    /// bridges are measured against the window they follow.
    pub fn slope_ratio(&self, samples: usize) -> f64 {
        let mut worst = 0.0f64;
        for (i, p) in self.pieces.iter().enumerate() {
            match p.kind {
                PieceKind::Window { .. } => {
                    for s in 0..samples {
                        let th = PI * s as f64 / samples as f64;
                        let r = window_slope(p.eps, th).abs() / (p.eps * 32.0);
                        worst = worst.max(r.to_f64());
                    }
                }
                PieceKind::Affine { .. } => {
                    let w = &self.pieces[i - 1];
                    let slope = (p.excess_end - p.excess_start).abs() / p.len.unwrap_or(Xf::ONE);
                    worst = worst.max((slope / (w.eps * w.lambda * 32.0)).to_f64());
                }
                _ => {}
            }
        }
        worst
    }

    fn sample_point(&self, idx: usize, rng: &mut ChaCha8Rng) -> PiecePoint {
        let p = &self.pieces[idx];
        let side = rng.gen_range(0..3);
        let f = log_uniform(rng);
        match p.kind {
            PieceKind::Window { .. } => {
                let theta = rng.gen::<f64>() * PI;
                let n = p.periods - 1.0;
                let r = (n * if side == 2 { rng.gen::<f64>() } else { f }).floor();
                let (m, rest) = if side == 1 { (n - r, r) } else { (r, n - r) };
                PiecePoint {
                    from_start: (m * PI + theta) / p.lambda,
                    to_end: (rest * PI + (PI - theta)) / p.lambda,
                    excess: window_excess(p.excess_start, p.eps, theta),
                }
            }
            PieceKind::Tail => PiecePoint {
                from_start: Xf::new(f),
                to_end: Xf::new(f64::INFINITY),
                excess: p.excess_start,
            },
            _ => {
                let len = p.len.unwrap_or(Xf::ONE);
                let (u, v) = match side {
                    0 => (f, 1.0 - f),
                    1 => (1.0 - f, f),
                    _ => {
                        let u = rng.gen::<f64>();
                        (u, 1.0 - u)
                    }
                };
                PiecePoint {
                    from_start: len * u,
                    to_end: len * v,
                    excess: p.excess_start + (p.excess_end - p.excess_start) * u,
                }
            }
        }
    }

    /// Sampled modulus-of-continuity audit. Categories: all pairs of window
    /// knots, pairs inside one window, pairs inside one affine piece, pairs
    /// inside the ramp, and pairs in two different pieces.
    pub fn omega_audit(&self, pairs: usize, seed: u64) -> OmegaAudit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = &self.modulus;
        let ratio = |dc: Xf, d: Xf| -> f64 {
            if dc.is_zero() {
                return 0.0;
            }
            (dc.abs() / w.eval_xf(d)).to_f64()
        };
        let mut cats = Vec::new();

        let mut knots = alloc::vec![(Xf::ZERO, Xf::ZERO)];
        for p in &self.pieces {
            if let PieceKind::Window { .. } = p.kind {
                knots.push((p.start, p.excess_start));
                knots.push((p.start + p.len.unwrap_or(Xf::ZERO), p.excess_end));
            }
        }
        let mut worst = 0.0f64;
        let mut n = 0;
        for i in 0..knots.len() {
            for j in i + 1..knots.len() {
                let d = (knots[i].0 - knots[j].0).abs();
                worst = worst.max(ratio(knots[i].1 - knots[j].1, d));
                n += 1;
            }
        }
        cats.push(OmegaCategory {
            name: "knots".to_string(),
            pairs: n,
            worst_ratio: worst,
        });

        let idx_of = |pred: fn(&PieceKind) -> bool| -> Vec<usize> {
            self.pieces.iter().enumerate().filter(|(_, p)| pred(&p.kind)).map(|(i, _)| i).collect()
        };
        let windows = idx_of(|k| matches!(k, PieceKind::Window { .. }));
        let affines = idx_of(|k| matches!(k, PieceKind::Affine { .. } | PieceKind::Ramp));
        let budget = pairs.saturating_sub(n) / 3 + 1;

        let (mut worst, mut cnt) = (0.0f64, 0);
        for _ in 0..budget {
            let p = &self.pieces[windows[rng.gen_range(0..windows.len())]];
            let (ta, tb) = (rng.gen::<f64>() * PI, rng.gen::<f64>() * PI);
            let dm = if rng.gen_range(0..4) == 0 {
                Xf::ZERO
            } else {
                ((p.periods - 1.0) * log_uniform(&mut rng)).floor()
            };
            let d = ((dm * PI + (tb - ta)) / p.lambda).abs();
            if d.is_zero() {
                continue;
            }
            let dc = window_oscillation(p.eps, ta) - window_oscillation(p.eps, tb);
            worst = worst.max(ratio(dc, d));
            cnt += 1;
        }
        cats.push(OmegaCategory {
            name: "window".to_string(),
            pairs: cnt,
            worst_ratio: worst,
        });

        let (mut worst, mut cnt) = (0.0f64, 0);
        for _ in 0..budget {
            let p = &self.pieces[affines[rng.gen_range(0..affines.len())]];
            let len = p.len.unwrap_or(Xf::ONE);
            let f = log_uniform(&mut rng);
            let d = len * f;
            let dc = (p.excess_end - p.excess_start) * f;
            worst = worst.max(ratio(dc, d));
            cnt += 1;
        }
        cats.push(OmegaCategory {
            name: "affine".to_string(),
            pairs: cnt,
            worst_ratio: worst,
        });

        let (mut worst, mut cnt) = (0.0f64, 0);
        let np = self.pieces.len();
        for _ in 0..pairs.saturating_sub(n + 2 * budget) {
            let a = rng.gen_range(0..np - 1);
            // Mostly neighbours, where cancellation would bite.
            let b = if rng.gen_bool(0.5) { a + 1 } else { rng.gen_range(a + 1..np) };
            let pa = self.sample_point(a, &mut rng);
            let pb = self.sample_point(b, &mut rng);
            let mut d = pa.to_end + pb.from_start;
            for q in &self.pieces[a + 1..b] {
                d = d + q.len.unwrap_or(Xf::ZERO);
            }
            worst = worst.max(ratio(pa.excess - pb.excess, d));
            cnt += 1;
        }
        cats.push(OmegaCategory {
            name: "cross".to_string(),
            pairs: cnt,
            worst_ratio: worst,
        });

        OmegaAudit {
            pairs: cats.iter().map(|c| c.pairs).sum(),
            worst_ratio: cats.iter().map(|c| c.worst_ratio).fold(0.0, f64::max),
            categories: cats,
        }
    }

    pub fn audit(&self, omega_pairs: usize, seed: u64) -> CoefficientAudit {
        let (min_c, max_c) = self.range(1000);
        CoefficientAudit {
            junction_max_gap: self.junction_gaps().into_iter().fold(0.0, f64::max),
            min_c,
            max_c,
            slope_worst_ratio: self.slope_ratio(1000),
            omega: self.omega_audit(omega_pairs, seed),
        }
    }

    /// The coefficient on `[0, upto]` in the scaled time `tau = lambda t` of
    /// a mode, as an `f64` [`Coefficient`] on `[0, tau_end]`. Pieces whose
    /// excess stays below `2^-60` become `c = 1`; the second value is the
    /// dropped `int |c - 1| dtau`, an upper bound on the resulting change of
    /// `ln E`.
    pub fn scaled_view(&self, k: usize, lambda: Xf, upto: Xf, tau_end: f64) -> Result<(Coefficient, f64), DgcsError> {
        let tiny = Xf::pow2(-60);
        let mut segs: Vec<Segment> = Vec::new();
        let mut dropped = 0.0;
        for (i, p) in self.pieces.iter().enumerate() {
            if p.start >= upto {
                break;
            }
            let a = (p.start * lambda).to_f64();
            let b = match p.len {
                Some(l) if p.start + l < upto => ((p.start + l) * lambda).to_f64(),
                _ => tau_end,
            };
            if b <= a {
                continue;
            }
            let amp = p.excess_start.abs().max(p.excess_end.abs()) + p.eps * 8.0 + p.eps * p.eps * 16.0;
            let shape = if amp < tiny {
                dropped += amp.to_f64() * (b - a);
                Shape::Constant { c: 1.0 }
            } else {
                match p.kind {
                    PieceKind::Window { .. } => {
                        let freq = (p.lambda / lambda).to_f64();
                        if !(freq <= 1e4) {
                            return Err(DgcsError::Unresolvable { k, piece: i });
                        }
                        Shape::Gamma {
                            base: 1.0 + p.excess_start.to_f64(),
                            eps: p.eps.to_f64(),
                            freq,
                            phase: -freq * a,
                        }
                    }
                    _ => {
                        let len = p.len.unwrap_or(Xf::ONE) * lambda;
                        Shape::Affine {
                            t0: a,
                            c0: 1.0 + p.excess_start.to_f64(),
                            slope: ((p.excess_end - p.excess_start) / len).to_f64(),
                        }
                    }
                }
            };
            match segs.last_mut() {
                Some(s) if s.shape == Shape::Constant { c: 1.0 } && shape == s.shape => s.end = b,
                _ => segs.push(Segment {
                    start: segs.last().map_or(a, |s| s.end),
                    end: b,
                    shape,
                }),
            }
        }
        if segs.is_empty() {
            return Ok((Coefficient::constant(1.0), dropped));
        }
        segs[0].start = 0.0;
        let n = segs.len();
        segs[n - 1].end = tau_end;
        let c = Coefficient::piecewise(segs).map_err(|_| DgcsError::Unresolvable { k, piece: 0 })?;
        Ok((c, dropped))
    }
}

/// `2^(-60 u)` for uniform `u`.
fn log_uniform(rng: &mut ChaCha8Rng) -> f64 {
    libm::exp2(-60.0 * rng.gen::<f64>())
}
