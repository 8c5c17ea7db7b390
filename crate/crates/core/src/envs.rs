//! Deterministic discrete-time environments: the polar limit-cycle integrator
//! and a cart-pole with an extended rail.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::costs::StepCostSpec;
use crate::error::{KsnrError, Result};
use crate::policy::Policy;

/// Integration step of the limit-cycle environment.
pub const LIMIT_CYCLE_DT: f64 = 0.05;

/// Cart-pole physics (standard Gym constants, frictionless).
pub mod cartpole {
    pub const GRAVITY: f64 = 9.8;
    pub const CART_MASS: f64 = 1.0;
    pub const POLE_MASS: f64 = 0.1;
    pub const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
    /// Half the pole length.
    pub const HALF_LENGTH: f64 = 0.5;
    pub const POLE_MASS_LENGTH: f64 = POLE_MASS * HALF_LENGTH;
    pub const FORCE_MAG: f64 = 10.0;
    /// Control interval.
    pub const DT: f64 = 0.02;
    /// Semi-implicit Euler substeps per control interval.
    pub const SUBSTEPS: usize = 8;
    pub const RAIL_LIMIT: f64 = 100.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    LimitCycle,
    Cartpole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnvState {
    LimitCycle { r: f64, theta: f64 },
    /// `theta = 0` is upright; kept wrapped to `(−π, π]`.
    Cartpole { p: f64, v: f64, theta: f64, omega: f64 },
}

pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    } else if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

impl EnvKind {
    pub fn obs_dim(self) -> usize {
        match self {
            EnvKind::LimitCycle => 3,
            EnvKind::Cartpole => 4,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvKind::LimitCycle => 2,
            EnvKind::Cartpole => 1,
        }
    }

    pub fn state_names(self) -> &'static [&'static str] {
        match self {
            EnvKind::LimitCycle => &["r", "theta"],
            EnvKind::Cartpole => &["p", "v", "theta", "omega"],
        }
    }

    /// Initial-state law: limit-cycle `r ~ U[0.2, 1.8]`, `θ ~ U[0, 2π)`;
    /// cart-pole every coordinate `~ U[−0.05, 0.05]` around upright rest.
    pub fn sample_init<R: Rng + ?Sized>(self, rng: &mut R) -> EnvState {
        match self {
            EnvKind::LimitCycle => EnvState::LimitCycle {
                r: rng.random_range(0.2..1.8),
                theta: rng.random_range(0.0..2.0 * PI),
            },
            EnvKind::Cartpole => EnvState::Cartpole {
                p: rng.random_range(-0.05..0.05),
                v: rng.random_range(-0.05..0.05),
                theta: rng.random_range(-0.05..0.05),
                omega: rng.random_range(-0.05..0.05),
            },
        }
    }
}

impl EnvState {
    pub fn kind(&self) -> EnvKind {
        match self {
            EnvState::LimitCycle { .. } => EnvKind::LimitCycle,
            EnvState::Cartpole { .. } => EnvKind::Cartpole,
        }
    }

    pub fn as_vec(&self) -> Vec<f64> {
        match *self {
            EnvState::LimitCycle { r, theta } => vec![r, theta],
            EnvState::Cartpole { p, v, theta, omega } => vec![p, v, theta, omega],
        }
    }

    /// Limit-cycle: `(r, cos θ, sin θ)`. Cart-pole: the state `(p, v, θ, ω)`.
    pub fn observe(&self) -> Vec<f64> {
        match *self {
            EnvState::LimitCycle { r, theta } => vec![r, theta.cos(), theta.sin()],
            EnvState::Cartpole { p, v, theta, omega } => vec![p, v, theta, omega],
        }
    }

    /// Advance one control interval. The action length must match the
    /// environment's action dimension.
    pub fn step(&self, action: &[f64]) -> EnvState {
        match *self {
            EnvState::LimitCycle { r, theta } => {
                debug_assert_eq!(action.len(), 2);
                EnvState::LimitCycle {
                    r: (r + action[0] * LIMIT_CYCLE_DT).max(0.0),
                    theta: theta + action[1] * LIMIT_CYCLE_DT,
                }
            }
            EnvState::Cartpole { .. } => {
                debug_assert_eq!(action.len(), 1);
                self.cartpole_step(action[0])
            }
        }
    }

    fn cartpole_step(&self, action: f64) -> EnvState {
        use cartpole::*;
        let EnvState::Cartpole { mut p, mut v, mut theta, mut omega } = *self else {
            unreachable!()
        };
        let force = FORCE_MAG * action.clamp(-1.0, 1.0);
        let h = DT / SUBSTEPS as f64;
        for _ in 0..SUBSTEPS {
            let (acc, alpha) = cartpole_accel(theta, omega, force);
            v += h * acc;
            p += h * v;
            omega += h * alpha;
            theta += h * omega;
        }
        EnvState::Cartpole {
            p: p.clamp(-RAIL_LIMIT, RAIL_LIMIT),
            v,
            theta: wrap_angle(theta),
            omega,
        }
    }

    /// Mechanical energy of the cart-pole (rod pole about its centre of mass).
    pub fn cartpole_energy(&self) -> Option<f64> {
        use cartpole::*;
        match *self {
            EnvState::Cartpole { v, theta, omega, .. } => Some(
                0.5 * TOTAL_MASS * v * v
                    + POLE_MASS_LENGTH * v * omega * theta.cos()
                    + (2.0 / 3.0) * POLE_MASS * HALF_LENGTH * HALF_LENGTH * omega * omega
                    + POLE_MASS_LENGTH * GRAVITY * theta.cos(),
            ),
            _ => None,
        }
    }
}

/// Cart and pole accelerations for the frictionless cart-pole.
pub fn cartpole_accel(theta: f64, omega: f64, force: f64) -> (f64, f64) {
    use cartpole::*;
    let (sin, cos) = theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * omega * omega * sin) / TOTAL_MASS;
    let alpha = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
    let acc = temp - POLE_MASS_LENGTH * alpha * cos / TOTAL_MASS;
    (acc, alpha)
}

/// The ground-truth limit-cycle controller `(r(1−r²), 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LimitCycleTruth;

impl Policy for LimitCycleTruth {
    fn action_dim(&self) -> usize {
        2
    }

    fn act(&self, obs: &[f64]) -> Vec<f64> {
        let r = obs[0];
        vec![r * (1.0 - r * r), 1.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<EnvState>,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub step_costs: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.step_costs.iter().sum()
    }

    pub fn final_state(&self) -> EnvState {
        *self.states.last().expect("trajectory has at least one state")
    }

    /// CSV with columns `t, state…, action…, cost`; the terminal row leaves
    /// the action and cost fields empty.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write_trajectories_csv(std::slice::from_ref(self), false, w)
    }
}

/// Several trajectories in one CSV; with `indexed`, a leading `traj` column
/// carries the trajectory index.
pub fn write_trajectories_csv<W: Write>(trajs: &[Trajectory], indexed: bool, w: &mut W) -> Result<()> {
    let Some(first) = trajs.first() else {
        return Err(KsnrError::EmptyInput("trajectories"));
    };
    let kind = first.states[0].kind();
    let mut header: Vec<String> = Vec::new();
    if indexed {
        header.push("traj".into());
    }
    header.push("t".into());
    header.extend(kind.state_names().iter().map(|s| s.to_string()));
    header.extend((0..kind.action_dim()).map(|i| format!("a{i}")));
    header.push("cost".into());
    writeln!(w, "{}", header.join(","))?;
    for (n, traj) in trajs.iter().enumerate() {
        for (t, s) in traj.states.iter().enumerate() {
            let mut row: Vec<String> = Vec::new();
            if indexed {
                row.push(n.to_string());
            }
            row.push(t.to_string());
            row.extend(s.as_vec().iter().map(|x| x.to_string()));
            match traj.actions.get(t) {
                Some(a) => row.extend(a.iter().map(|x| x.to_string())),
                None => row.extend((0..kind.action_dim()).map(|_| String::new())),
            }
            row.push(traj.step_costs.get(t).map(|c| c.to_string()).unwrap_or_default());
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// Roll a policy out for `horizon` steps: observe, act, record the cost of
/// the pre-step observation, step.
pub fn rollout<P: Policy + ?Sized>(x0: EnvState, policy: &P, horizon: usize, step_cost: &StepCostSpec) -> Result<Trajectory> {
    let kind = x0.kind();
    step_cost.check_layout(kind.obs_dim())?;
    if policy.action_dim() != kind.action_dim() {
        return Err(KsnrError::DimensionMismatch {
            context: "rollout action dimension",
            expected: kind.action_dim(),
            actual: policy.action_dim(),
        });
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut step_costs = Vec::with_capacity(horizon);
    let mut s = x0;
    for _ in 0..horizon {
        let obs = s.observe();
        let a = policy.act(&obs);
        step_costs.push(step_cost.eval(&obs)?);
        let next = s.step(&a);
        states.push(s);
        observations.push(obs);
        actions.push(a);
        s = next;
    }
    observations.push(s.observe());
    states.push(s);
    Ok(Trajectory { states, observations, actions, step_costs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn limit_cycle_steps() {
        let s = EnvState::LimitCycle { r: 1.0, theta: 0.0 };
        let a = LimitCycleTruth.act(&s.observe());
        assert_eq!(s.step(&a), EnvState::LimitCycle { r: 1.0, theta: 0.05 });
        let s = EnvState::LimitCycle { r: 0.5, theta: 0.0 };
        let EnvState::LimitCycle { r, .. } = s.step(&LimitCycleTruth.act(&s.observe())) else { panic!() };
        assert!((r - 0.51875).abs() < 1e-15);
        assert_eq!(s.step(&[0.0, 0.0]), s);
    }

    #[test]
    fn limit_cycle_radius_floored() {
        let s = EnvState::LimitCycle { r: 0.01, theta: 0.0 };
        assert_eq!(s.step(&[-3.0, 0.0]), EnvState::LimitCycle { r: 0.0, theta: 0.0 });
    }

    #[test]
    fn observations() {
        assert_eq!(EnvState::LimitCycle { r: 1.0, theta: 0.0 }.observe(), vec![1.0, 1.0, 0.0]);
        let o = EnvState::LimitCycle { r: 0.0, theta: PI }.observe();
        assert_eq!(o[0], 0.0);
        assert_eq!(o[1], -1.0);
        assert!(o[2].abs() < 1e-15);
    }

    #[test]
    fn cartpole_equilibria() {
        let up = EnvState::Cartpole { p: 0.0, v: 0.0, theta: 0.0, omega: 0.0 };
        assert_eq!(up.step(&[0.0]), up);
        let down = EnvState::Cartpole { p: 0.0, v: 0.0, theta: PI, omega: 0.0 };
        let EnvState::Cartpole { p, v, theta, omega } = down.step(&[0.0]) else { panic!() };
        assert!(p.abs() < 1e-14 && v.abs() < 1e-14 && omega.abs() < 1e-14);
        assert!((theta.cos() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn rail_clamp_and_wrap() {
        let s = EnvState::Cartpole { p: 99.99, v: 50.0, theta: 3.1, omega: 10.0 };
        let EnvState::Cartpole { p, theta, .. } = s.step(&[1.0]) else { panic!() };
        assert_eq!(p, 100.0);
        assert!(theta > -PI && theta <= PI);
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let t = k as f64 * 0.7;
            let w = wrap_angle(t);
            assert!(w > -PI && w <= PI);
            assert!((w.cos() - t.cos()).abs() < 1e-12 && (w.sin() - t.sin()).abs() < 1e-12);
        }
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn rollout_shapes_and_costs() {
        let x0 = EnvState::LimitCycle { r: 1.0, theta: 0.0 };
        let t = rollout(x0, &LimitCycleTruth, 0, &StepCostSpec::None).unwrap();
        assert_eq!(t.states.len(), 1);
        assert!(t.actions.is_empty() && t.step_costs.is_empty());
        let t = rollout(x0, &LimitCycleTruth, 80, &StepCostSpec::None).unwrap();
        assert_eq!(t.states.len(), 81);
        assert_eq!(t.observations.len(), 81);
        assert_eq!(t.total_cost(), 0.0);
    }

    #[test]
    fn sample_init_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(EnvKind::Cartpole.sample_init(&mut rng), EnvKind::Cartpole.sample_init(&mut rng2));
        for _ in 0..10_000 {
            match EnvKind::LimitCycle.sample_init(&mut rng) {
                EnvState::LimitCycle { r, theta } => {
                    assert!((0.2..1.8).contains(&r) && (0.0..2.0 * PI).contains(&theta))
                }
                _ => unreachable!(),
            }
            match EnvKind::Cartpole.sample_init(&mut rng) {
                EnvState::Cartpole { p, v, theta, omega } => {
                    for x in [p, v, theta, omega] {
                        assert!((-0.05..0.05).contains(&x));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn csv_layout() {
        let x0 = EnvState::LimitCycle { r: 1.0, theta: 0.0 };
        let t = rollout(x0, &LimitCycleTruth, 2, &StepCostSpec::None).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,r,theta,a0,a1,cost");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].ends_with(",,,"));
    }
}
