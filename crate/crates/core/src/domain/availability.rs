use std::fmt;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

/// Hourly blocks in a week: 7 days x 24 hours.
pub const SLOTS_PER_WEEK: usize = 168;

/// Weekly hourly availability, slot `day * 24 + hour` with Monday = day 0.
///
/// Serialized as the ascending list of available slot indices.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct AvailabilityVector {
    bits: [u64; 3],
}

impl AvailabilityVector {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a vector from slot indices; `None` if any index is out of range.
    pub fn from_slots<I: IntoIterator<Item = usize>>(slots: I) -> Option<Self> {
        let mut v = Self::empty();
        for s in slots {
            if s >= SLOTS_PER_WEEK {
                return None;
            }
            v.set(s, true);
        }
        Some(v)
    }

    pub fn from_bools(flags: &[bool; SLOTS_PER_WEEK]) -> Self {
        let mut v = Self::empty();
        for (i, &f) in flags.iter().enumerate() {
            v.set(i, f);
        }
        v
    }

    pub fn get(&self, slot: usize) -> bool {
        slot < SLOTS_PER_WEEK && self.bits[slot / 64] >> (slot % 64) & 1 == 1
    }

    pub fn set(&mut self, slot: usize, available: bool) {
        assert!(slot < SLOTS_PER_WEEK, "slot {slot} out of range");
        let mask = 1u64 << (slot % 64);
        if available {
            self.bits[slot / 64] |= mask;
        } else {
            self.bits[slot / 64] &= !mask;
        }
    }

    /// Number of available slots, `|z|`.
    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn intersect(&self, other: &Self) -> Self {
        Self { bits: [self.bits[0] & other.bits[0], self.bits[1] & other.bits[1], self.bits[2] & other.bits[2]] }
    }

    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..SLOTS_PER_WEEK).filter(move |&s| self.get(s))
    }

    pub fn first(&self) -> Option<usize> {
        self.bits.iter().enumerate().find(|(_, b)| **b != 0).map(|(i, b)| i * 64 + b.trailing_zeros() as usize)
    }

    pub fn to_bools(&self) -> [bool; SLOTS_PER_WEEK] {
        let mut out = [false; SLOTS_PER_WEEK];
        for s in self.slots() {
            out[s] = true;
        }
        out
    }
}

impl fmt::Debug for AvailabilityVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.slots()).finish()
    }
}

impl Serialize for AvailabilityVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.count()))?;
        for s in self.slots() {
            seq.serialize_element(&s)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for AvailabilityVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SlotsVisitor;

        impl<'de> Visitor<'de> for SlotsVisitor {
            type Value = AvailabilityVector;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a list of slot indices below {SLOTS_PER_WEEK}")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let mut v = AvailabilityVector::empty();
                while let Some(s) = seq.next_element::<usize>()? {
                    if s >= SLOTS_PER_WEEK {
                        return Err(de::Error::custom(format!("slot {s} out of range")));
                    }
                    v.set(s, true);
                }
                Ok(v)
            }
        }

        deserializer.deserialize_seq(SlotsVisitor)
    }
}
