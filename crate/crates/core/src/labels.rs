//! Selectivity axes shared by the ventral, BOS and relaxation stages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::BosError;

/// Preferred contour orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Vertical,
    Horizontal,
}

impl Orientation {
    pub const ALL: [Orientation; 2] = [Orientation::Vertical, Orientation::Horizontal];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Kernel modulation angle (`0` modulates along x, i.e. prefers vertical
    /// contours).
    pub fn theta(self) -> f64 {
        match self {
            Orientation::Vertical => 0.0,
            Orientation::Horizontal => std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn sides(self) -> [Side; 2] {
        match self {
            Orientation::Vertical => [Side::Left, Side::Right],
            Orientation::Horizontal => [Side::Up, Side::Down],
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Orientation::Vertical => "v",
            Orientation::Horizontal => "h",
        }
    }
}

/// Local feature selectivity: two step polarities and two bar polarities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// Step with the light side left of (above) the contour.
    BorderLightDark,
    BorderDarkLight,
    EdgeLightBar,
    EdgeDarkBar,
}

impl Feature {
    pub const ALL: [Feature; 4] = [
        Feature::BorderLightDark,
        Feature::BorderDarkLight,
        Feature::EdgeLightBar,
        Feature::EdgeDarkBar,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_border(self) -> bool {
        matches!(self, Feature::BorderLightDark | Feature::BorderDarkLight)
    }

    /// Light-first polarity within its class.
    pub fn is_light(self) -> bool {
        matches!(self, Feature::BorderLightDark | Feature::EdgeLightBar)
    }

    /// 0 for the same feature, 1 for the other polarity of the same class, 2
    /// across classes.
    pub fn dissimilarity(self, other: Feature) -> f64 {
        if self == other {
            0.0
        } else if self.is_border() == other.is_border() {
            1.0
        } else {
            2.0
        }
    }

    /// The feature a left-right reflection turns this one into, for a
    /// contour of orientation `o`.
    pub fn mirrored(self, o: Orientation) -> Feature {
        match (o, self) {
            (Orientation::Vertical, Feature::BorderLightDark) => Feature::BorderDarkLight,
            (Orientation::Vertical, Feature::BorderDarkLight) => Feature::BorderLightDark,
            (_, f) => f,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Feature::BorderLightDark => "bld",
            Feature::BorderDarkLight => "bdl",
            Feature::EdgeLightBar => "elb",
            Feature::EdgeDarkBar => "edb",
        }
    }
}

/// Ownership direction: the side of the contour the figure is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Up,
    Down,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Up, Side::Down];

    /// Unit step in image coordinates (x right, y down).
    pub fn unit(self) -> (i64, i64) {
        match self {
            Side::Left => (-1, 0),
            Side::Right => (1, 0),
            Side::Up => (0, -1),
            Side::Down => (0, 1),
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Up => Side::Down,
            Side::Down => Side::Up,
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            Side::Left | Side::Right => Orientation::Vertical,
            Side::Up | Side::Down => Orientation::Horizontal,
        }
    }

    /// 0 for the side toward negative coordinates, 1 otherwise.
    pub fn slot(self) -> usize {
        match self {
            Side::Left | Side::Up => 0,
            Side::Right | Side::Down => 1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn mirrored_x(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            s => s,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Up => "up",
            Side::Down => "down",
        }
    }
}

/// One border-ownership neuron family member: orientation, feature and side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub orientation: Orientation,
    pub feature: Feature,
    pub side: Side,
}

pub const NUM_LABELS: usize = 16;

impl Label {
    /// Panics if `side` does not belong to `orientation`.
    pub fn new(orientation: Orientation, feature: Feature, side: Side) -> Self {
        assert_eq!(side.orientation(), orientation, "side {side:?} invalid for {orientation:?}");
        Self {
            orientation,
            feature,
            side,
        }
    }

    /// Dense index in `0..16`: orientation-major, then feature, then side.
    pub fn index(self) -> usize {
        (self.orientation.index() * 4 + self.feature.index()) * 2 + self.side.slot()
    }

    pub fn from_index(i: usize) -> Label {
        assert!(i < NUM_LABELS);
        let orientation = Orientation::ALL[i / 8];
        let feature = Feature::ALL[(i / 2) % 4];
        let side = orientation.sides()[i % 2];
        Label::new(orientation, feature, side)
    }

    pub fn all() -> impl Iterator<Item = Label> {
        (0..NUM_LABELS).map(Label::from_index)
    }

    pub fn twin(self) -> Label {
        Label {
            side: self.side.opposite(),
            ..self
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.orientation.short(), self.feature.short(), self.side.name())
    }
}

impl FromStr for Label {
    type Err = BosError;

    /// Parses `<orientation>,<feature>,<side>`, e.g. `v,bld,left` or
    /// `horizontal,edge_dark_bar,down`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BosError::Selector(s.to_string());
        let parts: Vec<String> = s.split(',').map(|p| p.trim().to_ascii_lowercase()).collect();
        let [o, feat, side] = parts.as_slice() else {
            return Err(bad());
        };
        let orientation = match o.as_str() {
            "v" | "vertical" => Orientation::Vertical,
            "h" | "horizontal" => Orientation::Horizontal,
            _ => return Err(bad()),
        };
        let feature = match feat.as_str() {
            "bld" | "border_light_dark" => Feature::BorderLightDark,
            "bdl" | "border_dark_light" => Feature::BorderDarkLight,
            "elb" | "edge_light_bar" => Feature::EdgeLightBar,
            "edb" | "edge_dark_bar" => Feature::EdgeDarkBar,
            _ => return Err(bad()),
        };
        let side = match side.as_str() {
            "left" | "l" => Side::Left,
            "right" | "r" => Side::Right,
            "up" | "u" => Side::Up,
            "down" | "d" => Side::Down,
            _ => return Err(bad()),
        };
        if side.orientation() != orientation {
            return Err(bad());
        }
        Ok(Label::new(orientation, feature, side))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_index_round_trip() {
        for i in 0..NUM_LABELS {
            assert_eq!(Label::from_index(i).index(), i);
        }
        assert_eq!(Label::all().count(), 16);
    }

    #[test]
    fn parse_selector() {
        let l: Label = "v,bld,left".parse().unwrap();
        assert_eq!(l, Label::new(Orientation::Vertical, Feature::BorderLightDark, Side::Left));
        assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
        assert!("v,bld,up".parse::<Label>().is_err());
        assert!("v,xyz,left".parse::<Label>().is_err());
        assert!("v,bld".parse::<Label>().is_err());
    }
}
