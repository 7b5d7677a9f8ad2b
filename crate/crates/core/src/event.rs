//! Core event type shared by every stage of the pipeline.

/// Sign of the brightness change an event reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// +1 for brightness increase, -1 for decrease.
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Polarity> {
        match sign {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    /// File encoding: 1 for positive, 0 for negative.
    pub fn to_bit(self) -> u8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => 0,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Polarity> {
        match bit {
            1 => Some(Polarity::Positive),
            0 => Some(Polarity::Negative),
            _ => None,
        }
    }
}

/// One asynchronous brightness-change report.
///
/// Timestamps are integer microseconds everywhere inside the library;
/// floating-point seconds appear only at I/O boundaries. Within one stream,
/// events are consumed in non-decreasing `t_us` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    /// Pixel column.
    pub x: u16,
    /// Pixel row.
    pub y: u16,
    /// Timestamp in microseconds.
    pub t_us: u64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t_us: u64, polarity: Polarity) -> Event {
        Event { x, y, t_us, polarity }
    }
}

/// Which camera of the stereo rig an event or surface belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CameraSide {
    Left,
    Right,
}

impl CameraSide {
    pub fn index(self) -> usize {
        match self {
            CameraSide::Left => 0,
            CameraSide::Right => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CameraSide::Left => "left",
            CameraSide::Right => "right",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polarity_sign_roundtrip() {
        for p in [Polarity::Positive, Polarity::Negative] {
            assert_eq!(Polarity::from_sign(p.sign()), Some(p));
            assert_eq!(Polarity::from_bit(p.to_bit()), Some(p));
        }
        assert_eq!(Polarity::from_sign(0), None);
        assert_eq!(Polarity::from_bit(2), None);
    }
}
