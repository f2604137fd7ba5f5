//! Signed-permutation axis orientation codes.
//!
//! A code has one letter per storage axis, in storage order (D, H, W). Each
//! letter names the anatomical direction that increasing index along that
//! axis points toward: `L`/`R`, `P`/`A`, `I`/`S`. `"LPI"` therefore means
//! depth runs toward the patient's left, height toward posterior and width
//! toward inferior.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnatomicalAxis {
    LeftRight,
    PosteriorAnterior,
    InferiorSuperior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
    Posterior,
    Anterior,
    Inferior,
    Superior,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::Left,
        Direction::Right,
        Direction::Posterior,
        Direction::Anterior,
        Direction::Inferior,
        Direction::Superior,
    ];

    pub fn axis(self) -> AnatomicalAxis {
        match self {
            Direction::Left | Direction::Right => AnatomicalAxis::LeftRight,
            Direction::Posterior | Direction::Anterior => AnatomicalAxis::PosteriorAnterior,
            Direction::Inferior | Direction::Superior => AnatomicalAxis::InferiorSuperior,
        }
    }

    /// +1 when pointing toward L, P or S (the LPS world frame), -1 otherwise.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Left | Direction::Posterior | Direction::Superior => 1.0,
            _ => -1.0,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Direction::Left => 'L',
            Direction::Right => 'R',
            Direction::Posterior => 'P',
            Direction::Anterior => 'A',
            Direction::Inferior => 'I',
            Direction::Superior => 'S',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        Some(match c.to_ascii_uppercase() {
            'L' => Direction::Left,
            'R' => Direction::Right,
            'P' => Direction::Posterior,
            'A' => Direction::Anterior,
            'I' => Direction::Inferior,
            'S' => Direction::Superior,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Orientation([Direction; 3]);

impl Orientation {
    pub const LPI: Orientation = Orientation([
        Direction::Left,
        Direction::Posterior,
        Direction::Inferior,
    ]);

    pub fn new(axes: [Direction; 3]) -> Result<Self> {
        let [a, b, c] = axes.map(Direction::axis);
        if a == b || a == c || b == c {
            let code: String = axes.iter().map(|d| d.letter()).collect();
            return Err(Error::Orientation(code));
        }
        Ok(Orientation(axes))
    }

    pub fn axes(&self) -> [Direction; 3] {
        self.0
    }

    /// All 48 valid codes.
    pub fn all() -> Vec<Orientation> {
        let mut out = Vec::with_capacity(48);
        for a in Direction::ALL {
            for b in Direction::ALL {
                for c in Direction::ALL {
                    if let Ok(o) = Orientation::new([a, b, c]) {
                        out.push(o);
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{}", d.letter())?;
        }
        Ok(())
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters: Vec<char> = s.chars().collect();
        if letters.len() != 3 {
            return Err(Error::Orientation(s.to_string()));
        }
        let mut axes = [Direction::Left; 3];
        for (slot, c) in axes.iter_mut().zip(letters) {
            *slot = Direction::from_letter(c).ok_or_else(|| Error::Orientation(s.to_string()))?;
        }
        Orientation::new(axes).map_err(|_| Error::Orientation(s.to_string()))
    }
}

impl Serialize for Orientation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Orientation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Index relabeling between two orientations.
///
/// Output axis `j` reads source axis `perm[j]`, reversed when `flip[j]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisTransform {
    pub perm: [usize; 3],
    pub flip: [bool; 3],
}

impl AxisTransform {
    pub const IDENTITY: AxisTransform = AxisTransform {
        perm: [0, 1, 2],
        flip: [false; 3],
    };

    pub fn between(from: Orientation, to: Orientation) -> Self {
        let mut perm = [0; 3];
        let mut flip = [false; 3];
        for (j, target) in to.0.iter().enumerate() {
            let i = from
                .0
                .iter()
                .position(|d| d.axis() == target.axis())
                .expect("orientations are signed permutations");
            perm[j] = i;
            flip[j] = from.0[i] != *target;
        }
        AxisTransform { perm, flip }
    }

    pub fn inverse(&self) -> Self {
        let mut perm = [0; 3];
        let mut flip = [false; 3];
        for j in 0..3 {
            perm[self.perm[j]] = j;
            flip[self.perm[j]] = self.flip[j];
        }
        AxisTransform { perm, flip }
    }

    /// `self` applied first, then `next`.
    pub fn then(&self, next: &AxisTransform) -> Self {
        let mut perm = [0; 3];
        let mut flip = [false; 3];
        for j in 0..3 {
            perm[j] = self.perm[next.perm[j]];
            flip[j] = next.flip[j] ^ self.flip[next.perm[j]];
        }
        AxisTransform { perm, flip }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn output_shape(&self, shape: [usize; 3]) -> [usize; 3] {
        self.perm.map(|i| shape[i])
    }
}
