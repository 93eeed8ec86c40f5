use rand::Rng;

use super::{wrong_state, Action, Environment, Objective, Observation, State, Step};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const AREA: f64 = 150.0;
pub const MAX_TURN_RATE: f64 = 15.0;

/// Ship steering on a square water surface.
///
/// The desired turn rate (degrees per second) reaches the actual turn rate
/// with a first-order lag. An episode succeeds when the ship comes within
/// `goal_radius` of the goal, and fails when it leaves the area or runs out
/// of steps. Reward is 1 on the success step and 0 otherwise.
#[derive(Clone, Debug)]
pub struct Ship {
    pub dt: f64,
    pub speed: f64,
    pub lag: f64,
    pub start: (f64, f64),
    pub goal: (f64, f64),
    pub goal_radius: f64,
    pub step_limit: usize,
}

impl Default for Ship {
    fn default() -> Self {
        Self {
            dt: 0.2,
            speed: 3.0,
            lag: 5.0,
            start: (40.0, 40.0),
            goal: (100.0, 100.0),
            goal_radius: 5.0,
            step_limit: 500,
        }
    }
}

/// Wraps an angle in degrees into `[-180, 180)`.
pub fn wrap_degrees(angle: f64) -> f64 {
    let wrapped = (angle + 180.0).rem_euclid(360.0) - 180.0;
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

impl Ship {
    pub fn reached_goal(&self, x: f64, y: f64) -> bool {
        (x - self.goal.0).hypot(y - self.goal.1) <= self.goal_radius
    }
}

impl Environment for Ship {
    fn name(&self) -> &'static str {
        "ship"
    }

    fn gamma(&self) -> f64 {
        1.0
    }

    fn objective(&self) -> Objective {
        Objective::Maximize
    }

    fn step_cap(&self) -> usize {
        self.step_limit
    }

    fn reset(&self, rng: &mut SimRng) -> State {
        State::Ship {
            x: self.start.0,
            y: self.start.1,
            heading: rng.random_range(-180.0..180.0),
            turn_rate: rng.random_range(-MAX_TURN_RATE..=MAX_TURN_RATE),
            t: 0,
        }
    }

    fn step(&self, state: &State, action: &Action, _rng: &mut SimRng) -> Result<Step> {
        self.validate(state)?;
        let State::Ship {
            x,
            y,
            heading,
            turn_rate,
            t,
        } = *state
        else {
            unreachable!()
        };
        let desired = action.value()?;
        if !desired.is_finite() {
            return Err(Error::ContractViolation("non-finite ship action".into()));
        }
        let desired = desired.clamp(-MAX_TURN_RATE, MAX_TURN_RATE);
        let rad = heading.to_radians();
        let nx = x + self.dt * self.speed * rad.sin();
        let ny = y + self.dt * self.speed * rad.cos();
        let nheading = wrap_degrees(heading + self.dt * turn_rate);
        let nturn = (turn_rate + self.dt / self.lag * (desired - turn_rate))
            .clamp(-MAX_TURN_RATE, MAX_TURN_RATE);
        let outside = !(0.0..=AREA).contains(&nx) || !(0.0..=AREA).contains(&ny);
        let success = !outside && self.reached_goal(nx, ny);
        let next_state = State::Ship {
            x: nx.clamp(0.0, AREA),
            y: ny.clamp(0.0, AREA),
            heading: nheading,
            turn_rate: nturn,
            t: t + 1,
        };
        Ok(Step {
            next_state,
            reward: if success { 1.0 } else { 0.0 },
            terminal: success || outside || t + 1 >= self.step_limit,
        })
    }

    fn observe(&self, state: &State) -> Observation {
        match state {
            State::Ship {
                x,
                y,
                heading,
                turn_rate,
                ..
            } => Observation::Point(vec![*x, *y, *heading, *turn_rate]),
            _ => Observation::Empty,
        }
    }

    fn validate(&self, state: &State) -> Result<()> {
        match state {
            State::Ship {
                x,
                y,
                heading,
                turn_rate,
                t,
            } if (0.0..=AREA).contains(x)
                && (0.0..=AREA).contains(y)
                && (-180.0..=180.0).contains(heading)
                && (-MAX_TURN_RATE..=MAX_TURN_RATE).contains(turn_rate)
                && *t < self.step_limit =>
            {
                Ok(())
            }
            other => Err(wrong_state("ship", other)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_degrees(180.0), -180.0);
        assert_eq!(wrap_degrees(-180.0), -180.0);
        assert!((wrap_degrees(190.0) + 170.0).abs() < 1e-12);
        assert!((wrap_degrees(-190.0) - 170.0).abs() < 1e-12);
    }
}
