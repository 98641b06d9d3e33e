//! Point robot in a walled arena with a U-shaped trap in front of its start.
//!
//! State is `[x, y, vx, vy]`. With `a` the clipped action, one step is
//!
//! ```text
//! v'  = (1 - damping) * v + dt * accel * a
//! x'  = x + dt * vx'      (stopped by vertical walls)
//! y'  = y + dt * vy'      (stopped by horizontal walls, tested at x')
//! p'  = clamp(p', -arena, arena)
//! r   = survival - energy * |a|^2
//! ```
//!
//! A wall stops motion along the axis it blocks: the position is held at
//! `wall_margin` on the near side and that velocity component is zeroed.
//! Leaving the arena edge is handled the same way.

use serde::{Deserialize, Serialize};

use super::{check_common, clip_action, squared_norm_clipped, EnvError, EnvSpec, Environment};

/// Axis-aligned wall segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum Wall {
    /// `x = at`, spanning `y` in `[from, to]`.
    Vertical { at: f64, from: f64, to: f64 },
    /// `y = at`, spanning `x` in `[from, to]`.
    Horizontal { at: f64, from: f64, to: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointTrapParams {
    pub horizon: usize,
    pub init_noise_std: f64,
    pub dt: f64,
    pub accel: f64,
    pub damping: f64,
    pub arena: f64,
    pub survival: f64,
    pub energy: f64,
    pub walls: Vec<Wall>,
    pub wall_margin: f64,
}

impl Default for PointTrapParams {
    fn default() -> Self {
        Self {
            horizon: 100,
            init_noise_std: 0.01,
            dt: 0.1,
            accel: 0.5,
            damping: 0.1,
            arena: 3.0,
            survival: 1.0,
            energy: 0.5,
            // cup opening towards -x with the start at its mouth
            walls: vec![
                Wall::Vertical {
                    at: 1.0,
                    from: -1.0,
                    to: 1.0,
                },
                Wall::Horizontal {
                    at: 1.0,
                    from: -0.5,
                    to: 1.0,
                },
                Wall::Horizontal {
                    at: -1.0,
                    from: -0.5,
                    to: 1.0,
                },
            ],
            wall_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointTrapOmni {
    params: PointTrapParams,
    spec: EnvSpec,
}

impl PointTrapOmni {
    pub fn new(params: PointTrapParams) -> Result<Self, EnvError> {
        check_common(params.horizon, params.init_noise_std)?;
        if !(params.arena > 0.0) || !(params.dt > 0.0) || !(0.0..=1.0).contains(&params.damping) {
            return Err(EnvError::InvalidParams(
                "arena and dt must be positive, damping in [0, 1]".into(),
            ));
        }
        if params.energy < 0.0 || params.survival < 2.0 * params.energy {
            return Err(EnvError::InvalidParams(
                "survival must cover the maximal energy penalty (2 * energy)".into(),
            ));
        }
        let spec = EnvSpec {
            name: "point_trap_omni".into(),
            state_dim: 4,
            action_dim: 2,
            horizon: params.horizon,
            descriptor_dim: 2,
            descriptor_bounds: vec![(-params.arena, params.arena); 2],
            init_noise_std: params.init_noise_std,
        };
        Ok(Self { params, spec })
    }

    pub fn params(&self) -> &PointTrapParams {
        &self.params
    }

    fn resolve_x(&self, y: f64, x0: f64, mut x1: f64, vx: &mut f64) -> f64 {
        let m = self.params.wall_margin;
        for wall in &self.params.walls {
            if let Wall::Vertical { at, from, to } = *wall {
                if y < from || y > to {
                    continue;
                }
                if x0 <= at && x1 > at {
                    x1 = at - m;
                    *vx = 0.0;
                } else if x0 >= at && x1 < at {
                    x1 = at + m;
                    *vx = 0.0;
                }
            }
        }
        x1
    }

    fn resolve_y(&self, x: f64, y0: f64, mut y1: f64, vy: &mut f64) -> f64 {
        let m = self.params.wall_margin;
        for wall in &self.params.walls {
            if let Wall::Horizontal { at, from, to } = *wall {
                if x < from || x > to {
                    continue;
                }
                if y0 <= at && y1 > at {
                    y1 = at - m;
                    *vy = 0.0;
                } else if y0 >= at && y1 < at {
                    y1 = at + m;
                    *vy = 0.0;
                }
            }
        }
        y1
    }
}

impl Environment for PointTrapOmni {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn nominal_state(&self) -> Vec<f64> {
        vec![0.0; 4]
    }

    fn step(&self, state: &[f64], action: &[f64], next: &mut [f64]) -> f64 {
        let p = &self.params;
        let (ax, ay) = (clip_action(action[0]), clip_action(action[1]));
        let mut vx = (1.0 - p.damping) * state[2] + p.dt * p.accel * ax;
        let mut vy = (1.0 - p.damping) * state[3] + p.dt * p.accel * ay;

        let x = self.resolve_x(state[1], state[0], state[0] + p.dt * vx, &mut vx);
        let y = self.resolve_y(x, state[1], state[1] + p.dt * vy, &mut vy);

        let clamp = |v: f64, vel: &mut f64| {
            if v.abs() > p.arena {
                *vel = 0.0;
                v.clamp(-p.arena, p.arena)
            } else {
                v
            }
        };
        next[0] = clamp(x, &mut vx);
        next[1] = clamp(y, &mut vy);
        next[2] = vx;
        next[3] = vy;
        p.survival - p.energy * squared_norm_clipped(action)
    }

    fn raw_descriptor(&self, states: &[f64], _actions: &[f64]) -> Vec<f64> {
        let h = self.spec.horizon;
        states[(h - 1) * 4..(h - 1) * 4 + 2].to_vec()
    }
}
