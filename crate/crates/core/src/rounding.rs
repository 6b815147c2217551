//! Sum-up rounding of a relaxed control on `T` coarse steps to a binary
//! schedule on `T_R = c_sur·T` fine steps, and the cumulative-deviation
//! diagnostics that bound the rounding error.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::error::{invalid, Error, Result};

/// Deviations are compared after rounding to this granularity so that
/// near-ties break the same way on every platform.
const TIE_GRANULARITY: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RoundingMode {
    /// Exactly one controller active per fine step.
    #[default]
    Sos1,
    /// Each controller rounded on its own, any number active.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundingConfig {
    pub c_sur: usize,
    #[serde(default)]
    pub mode: RoundingMode,
}

impl RoundingConfig {
    pub fn new(c_sur: usize, mode: RoundingMode) -> Result<Self> {
        if c_sur == 0 {
            return Err(invalid("c_sur must be at least 1"));
        }
        Ok(Self { c_sur, mode })
    }

    pub fn sos1(c_sur: usize) -> Result<Self> {
        Self::new(c_sur, RoundingMode::Sos1)
    }

    /// `c_sur·T`.
    pub fn fine_steps(&self, coarse_steps: usize) -> usize {
        self.c_sur * coarse_steps
    }
}

/// Zero-based coarse interval containing zero-based fine step `tau`.
fn coarse(tau: usize, c_sur: usize) -> usize {
    tau / c_sur
}

fn quantize(x: f64) -> f64 {
    (x / TIE_GRANULARITY).round() * TIE_GRANULARITY
}

pub fn sum_up_rounding(u_con: &ControlField, cfg: &RoundingConfig, dt: f64) -> Result<ControlField> {
    if cfg.c_sur == 0 {
        return Err(invalid("c_sur must be at least 1"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    let (n, t) = (u_con.controllers(), u_con.steps());
    let t_r = cfg.fine_steps(t);
    let h = dt / cfg.c_sur as f64;
    let mut out = DMatrix::<f64>::zeros(n, t_r);
    // running Σ u_con and Σ u_bin in units of control, scaled by h on use
    let mut con = vec![0.0; n];
    let mut bin = vec![0.0; n];
    let mut delta = vec![0.0; n];
    for tau in 0..t_r {
        let k = coarse(tau, cfg.c_sur);
        for j in 0..n {
            con[j] += u_con.get(j, k);
            delta[j] = quantize((con[j] - bin[j]) * h);
        }
        match cfg.mode {
            RoundingMode::Sos1 => {
                let mut best = 0;
                for j in 1..n {
                    if delta[j] > delta[best] {
                        best = j;
                    }
                }
                out[(best, tau)] = 1.0;
                bin[best] += 1.0;
            }
            RoundingMode::Free => {
                let threshold = quantize(0.5 * h);
                for j in 0..n {
                    if delta[j] >= threshold {
                        out[(j, tau)] = 1.0;
                        bin[j] += 1.0;
                    }
                }
            }
        }
    }
    ControlField::binary(out)
}

/// `max_k ‖Σ_{τ≤k} (u_con[·, coarse(τ)] − u_bin[·, τ]) · dt/c_sur‖_∞`.
pub fn cumulative_deviation(u_con: &ControlField, u_bin: &ControlField, cfg: &RoundingConfig, dt: f64) -> Result<f64> {
    let (n, t) = (u_con.controllers(), u_con.steps());
    if u_bin.controllers() != n || u_bin.steps() != cfg.fine_steps(t) {
        return Err(Error::Dimension(format!(
            "binary schedule is {}x{}, expected {}x{}",
            u_bin.controllers(),
            u_bin.steps(),
            n,
            cfg.fine_steps(t)
        )));
    }
    let h = dt / cfg.c_sur as f64;
    let mut diff = vec![0.0; n];
    let mut worst = 0.0f64;
    for tau in 0..u_bin.steps() {
        let k = coarse(tau, cfg.c_sur);
        for (j, d) in diff.iter_mut().enumerate() {
            *d += u_con.get(j, k) - u_bin.get(j, tau);
            worst = worst.max((*d * h).abs());
        }
    }
    Ok(worst)
}

/// `(N−1)·dt/c_sur + ((2N−1)/N)·√(t_f·f_l·dt)`.
pub fn bound_rhs(controllers: usize, cfg: &RoundingConfig, dt: f64, t_f: f64, f_l: f64) -> f64 {
    let n = controllers as f64;
    (n - 1.0) * dt / cfg.c_sur as f64 + ((2.0 * n - 1.0) / n) * (t_f * f_l * dt).sqrt()
}

/// `step,controller,value` rows with 1-based indices, preceded by an optional `#` comment line.
pub fn schedule_to_csv(u: &ControlField, comment: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(c) = comment {
        let _ = writeln!(s, "# {c}");
    }
    s.push_str("step,controller,value\n");
    for k in 0..u.steps() {
        for j in 0..u.controllers() {
            let v = u.get(j, k);
            if u.is_binary() {
                let _ = writeln!(s, "{},{},{}", k + 1, j + 1, v as u8);
            } else {
                let _ = writeln!(s, "{},{},{:.16e}", k + 1, j + 1, v);
            }
        }
    }
    s
}

pub fn schedule_from_csv(text: &str) -> Result<ControlField> {
    let mut entries = Vec::new();
    let mut header_seen = false;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != "step,controller,value" {
                return Err(invalid(format!("line {}: expected header step,controller,value", line_no + 1)));
            }
            header_seen = true;
            continue;
        }
        let bad = || invalid(format!("line {}: malformed row {line:?}", line_no + 1));
        let mut parts = line.split(',');
        let step: usize = parts.next().and_then(|p| p.trim().parse().ok()).ok_or_else(bad)?;
        let ctrl: usize = parts.next().and_then(|p| p.trim().parse().ok()).ok_or_else(bad)?;
        let value: f64 = parts.next().and_then(|p| p.trim().parse().ok()).ok_or_else(bad)?;
        if step == 0 || ctrl == 0 || parts.next().is_some() {
            return Err(bad());
        }
        entries.push((step - 1, ctrl - 1, value));
    }
    let steps = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let controllers = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    if entries.len() != steps * controllers || steps == 0 {
        return Err(invalid("schedule CSV does not cover a full controller-by-step grid"));
    }
    let mut m = DMatrix::from_element(controllers, steps, f64::NAN);
    for (k, j, v) in entries {
        m[(j, k)] = v;
    }
    if m.iter().any(|v| v.is_nan()) {
        return Err(invalid("schedule CSV has duplicate or missing entries"));
    }
    ControlField::new(m)
}
