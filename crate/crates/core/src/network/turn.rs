use std::fmt;

use serde::{Deserialize, Serialize};

/// Movement alphabet. Declaration order is the canonical tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "s")]
    Straight,
    #[serde(rename = "L")]
    PartialLeft,
    #[serde(rename = "l")]
    Left,
    #[serde(rename = "R")]
    PartialRight,
    #[serde(rename = "r")]
    Right,
    #[serde(rename = "u")]
    Stay,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::Straight,
        Action::PartialLeft,
        Action::Left,
        Action::PartialRight,
        Action::Right,
        Action::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            Action::Straight => 's',
            Action::PartialLeft => 'L',
            Action::Left => 'l',
            Action::PartialRight => 'R',
            Action::Right => 'r',
            Action::Stay => 'u',
        }
    }

    pub fn from_symbol(c: char) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.symbol() == c)
    }

    /// Position on the right-to-left axis r, R, s, L, l. `None` for Stay.
    pub(crate) fn lateral(self) -> Option<i8> {
        match self {
            Action::Right => Some(-2),
            Action::PartialRight => Some(-1),
            Action::Straight => Some(0),
            Action::PartialLeft => Some(1),
            Action::Left => Some(2),
            Action::Stay => None,
        }
    }

    pub(crate) fn from_lateral(p: i8) -> Action {
        match p {
            -2 => Action::Right,
            -1 => Action::PartialRight,
            0 => Action::Straight,
            1 => Action::PartialLeft,
            _ => Action::Left,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurnClass {
    Move(Action),
    UTurn,
}

/// Angle bands in degrees: `|θ| <= straight` is 's', up to `partial` is the
/// partial turn, up to `sharp` the full turn, beyond that a U-turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnThresholds {
    pub straight: f64,
    pub partial: f64,
    pub sharp: f64,
}

impl Default for TurnThresholds {
    fn default() -> Self {
        TurnThresholds { straight: 30.0, partial: 75.0, sharp: 150.0 }
    }
}

/// Signed angle from `incoming` to `outgoing` heading, degrees in (-180, 180],
/// counter-clockwise (left) positive.
pub fn signed_turn_angle(incoming: (f64, f64), outgoing: (f64, f64)) -> f64 {
    let cross = incoming.0 * outgoing.1 - incoming.1 * outgoing.0;
    let dot = incoming.0 * outgoing.0 + incoming.1 * outgoing.1;
    let deg = cross.atan2(dot).to_degrees();
    if deg <= -180.0 {
        180.0
    } else {
        deg
    }
}

pub fn classify_turn(theta: f64, t: &TurnThresholds) -> TurnClass {
    let mag = theta.abs();
    let left = theta > 0.0;
    if mag <= t.straight {
        TurnClass::Move(Action::Straight)
    } else if mag <= t.partial {
        TurnClass::Move(if left { Action::PartialLeft } else { Action::PartialRight })
    } else if mag <= t.sharp {
        TurnClass::Move(if left { Action::Left } else { Action::Right })
    } else {
        TurnClass::UTurn
    }
}

/// Give each outgoing option a distinct action. Options are processed by
/// increasing `|θ|`; each takes its own class when free, otherwise the
/// nearest free class on the lateral axis, preferring its own side. Options
/// beyond the five movement classes are dropped (returned as `None`).
pub(crate) fn assign_actions(angles: &[f64], t: &TurnThresholds) -> Vec<Option<Action>> {
    let mut order: Vec<usize> = (0..angles.len()).collect();
    order.sort_by(|&a, &b| {
        angles[a]
            .abs()
            .total_cmp(&angles[b].abs())
            .then(angles[b].total_cmp(&angles[a]))
    });
    let mut taken = [false; 5];
    let mut out = vec![None; angles.len()];
    for i in order {
        let preferred = match classify_turn(angles[i], t) {
            TurnClass::Move(a) => a.lateral().unwrap(),
            TurnClass::UTurn => continue,
        };
        let side: i8 = if angles[i] >= 0.0 { 1 } else { -1 };
        let mut candidates = vec![preferred];
        for d in 1..=4i8 {
            candidates.push(preferred + side * d);
            candidates.push(preferred - side * d);
        }
        if let Some(p) = candidates.into_iter().find(|p| (-2..=2).contains(p) && !taken[(p + 2) as usize]) {
            taken[(p + 2) as usize] = true;
            out[i] = Some(Action::from_lateral(p));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(theta: f64) -> TurnClass {
        classify_turn(theta, &TurnThresholds::default())
    }

    #[test]
    fn straight_and_uturn() {
        assert_eq!(class(0.0), TurnClass::Move(Action::Straight));
        assert_eq!(class(180.0), TurnClass::UTurn);
        assert_eq!(class(-170.0), TurnClass::UTurn);
    }

    #[test]
    fn right_angle_is_full_turn() {
        assert_eq!(class(-90.0), TurnClass::Move(Action::Right));
        assert_eq!(class(90.0), TurnClass::Move(Action::Left));
        assert_eq!(class(45.0), TurnClass::Move(Action::PartialLeft));
        assert_eq!(class(-45.0), TurnClass::Move(Action::PartialRight));
    }

    #[test]
    fn wider_partial_band_is_configurable() {
        let t = TurnThresholds { straight: 30.0, partial: 100.0, sharp: 150.0 };
        assert_eq!(classify_turn(-90.0, &t), TurnClass::Move(Action::PartialRight));
        assert_eq!(classify_turn(120.0, &t), TurnClass::Move(Action::Left));
    }

    #[test]
    fn boundaries_are_inclusive_upward() {
        assert_eq!(class(30.0), TurnClass::Move(Action::Straight));
        assert_eq!(class(30.0001), TurnClass::Move(Action::PartialLeft));
        assert_eq!(class(150.0), TurnClass::Move(Action::Left));
        assert_eq!(class(150.0001), TurnClass::UTurn);
    }

    #[test]
    fn angle_sign_convention() {
        // Heading east, turning to north is a left turn.
        assert!((signed_turn_angle((1.0, 0.0), (0.0, 1.0)) - 90.0).abs() < 1e-12);
        assert!((signed_turn_angle((1.0, 0.0), (0.0, -1.0)) + 90.0).abs() < 1e-12);
        assert_eq!(signed_turn_angle((1.0, 0.0), (-1.0, 0.0)), 180.0);
        assert_eq!(signed_turn_angle((1.0, 0.0), (-1.0, -0.0)), 180.0);
    }

    #[test]
    fn two_straights_are_split() {
        let a = assign_actions(&[5.0, -10.0], &TurnThresholds::default());
        assert_eq!(a, vec![Some(Action::Straight), Some(Action::PartialRight)]);
        let a = assign_actions(&[-5.0, 10.0, 90.0], &TurnThresholds::default());
        assert_eq!(a, vec![Some(Action::Straight), Some(Action::PartialLeft), Some(Action::Left)]);
    }

    #[test]
    fn uturns_never_assigned() {
        let a = assign_actions(&[179.0, 0.0], &TurnThresholds::default());
        assert_eq!(a, vec![None, Some(Action::Straight)]);
    }

    #[test]
    fn symbols_round_trip() {
        for a in Action::ALL {
            assert_eq!(Action::from_symbol(a.symbol()), Some(a));
        }
        assert_eq!(serde_json::to_string(&Action::PartialLeft).unwrap(), "\"L\"");
    }
}
