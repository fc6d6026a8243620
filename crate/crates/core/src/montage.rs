//! cEEGrid electrode layout, amplifier channel mapping and re-referencing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::recording::Recording;
use crate::{Error, Result};

/// Electrodes per ear on one cEEGrid.
pub const ELECTRODES_PER_EAR: u8 = 10;
pub const AMPLIFIER_CHANNELS: u8 = 16;

const DEFAULT_MONTAGE_CSV: &str = include_str!("../data/montage.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

/// One of the twenty canonical labels `L1..L10`, `R1..R10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElectrodeLabel {
    side: Side,
    index: u8,
}

impl ElectrodeLabel {
    pub fn new(side: Side, index: u8) -> Result<Self> {
        if !(1..=ELECTRODES_PER_EAR).contains(&index) {
            return Err(Error::Config(format!("electrode index {index} outside 1..=10")));
        }
        Ok(ElectrodeLabel { side, index })
    }

    pub const fn left(index: u8) -> Self {
        ElectrodeLabel { side: Side::L, index }
    }

    pub const fn right(index: u8) -> Self {
        ElectrodeLabel { side: Side::R, index }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    /// All twenty labels, left ear first.
    pub fn all() -> impl Iterator<Item = ElectrodeLabel> {
        [Side::L, Side::R]
            .into_iter()
            .flat_map(|side| (1..=ELECTRODES_PER_EAR).map(move |index| ElectrodeLabel { side, index }))
    }
}

impl fmt::Display for ElectrodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.side, self.index)
    }
}

impl FromStr for ElectrodeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let side = match s.chars().next() {
            Some('L' | 'l') => Side::L,
            Some('R' | 'r') => Side::R,
            _ => return Err(Error::Config(format!("bad electrode label `{s}`"))),
        };
        let index = s[1..]
            .parse()
            .map_err(|_| Error::Config(format!("bad electrode label `{s}`")))?;
        ElectrodeLabel::new(side, index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Data,
    Reference,
    Ground,
    Excluded,
}

/// A montage invariant that does not hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    /// Two electrodes share an amplifier channel.
    Injectivity,
    /// A channel number outside `1..=16`.
    ChannelRange,
    /// Not exactly sixteen mapped electrodes.
    ChannelCount,
    /// Reference, ground, excluded and mapped sets intersect.
    RoleOverlap,
    /// An electrode without any role.
    Unassigned,
    OneExcludedPerEar,
    /// Right ear not on channels 1-8 or left ear not on 9-16.
    EarSplit,
}

impl Violation {
    pub fn name(&self) -> &'static str {
        match self {
            Violation::Injectivity => "injectivity",
            Violation::ChannelRange => "channel-range",
            Violation::ChannelCount => "channel-count",
            Violation::RoleOverlap => "role-overlap",
            Violation::Unassigned => "unassigned",
            Violation::OneExcludedPerEar => "one-excluded-per-ear",
            Violation::EarSplit => "ear-split",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MontageMap {
    pub channel_of: BTreeMap<ElectrodeLabel, u8>,
    pub reference: ElectrodeLabel,
    pub ground: ElectrodeLabel,
    pub excluded: BTreeSet<ElectrodeLabel>,
    /// Require right ear on the Cyton (1-8) and left ear on the Daisy (9-16).
    pub ear_split: bool,
}

/// Reference R6, ground L6, L3/R3 left out; right ear on channels 1-8.
pub fn default_montage() -> MontageMap {
    MontageMap::parse_csv(DEFAULT_MONTAGE_CSV).expect("bundled montage.csv is valid")
}

/// Same roles as the default but leaving out the electrodes below the ear
/// (L8, R8) instead of L3/R3.
pub fn below_ear_montage() -> MontageMap {
    let right = [1, 2, 3, 4, 5, 7, 9, 10];
    let left = right;
    let mut channel_of = BTreeMap::new();
    for (k, &i) in right.iter().enumerate() {
        channel_of.insert(ElectrodeLabel::right(i), k as u8 + 1);
    }
    for (k, &i) in left.iter().enumerate() {
        channel_of.insert(ElectrodeLabel::left(i), k as u8 + 9);
    }
    MontageMap {
        channel_of,
        reference: ElectrodeLabel::right(6),
        ground: ElectrodeLabel::left(6),
        excluded: [ElectrodeLabel::left(8), ElectrodeLabel::right(8)].into(),
        ear_split: true,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MontageRow {
    label: String,
    role: Role,
    channel: Option<u8>,
}

impl MontageMap {
    /// Every violated invariant, in a stable order. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = BTreeSet::new();

        let mut seen = BTreeSet::new();
        for &ch in self.channel_of.values() {
            if !(1..=AMPLIFIER_CHANNELS).contains(&ch) {
                out.insert(Violation::ChannelRange);
            }
            if !seen.insert(ch) {
                out.insert(Violation::Injectivity);
            }
        }
        if self.channel_of.len() != usize::from(AMPLIFIER_CHANNELS) {
            out.insert(Violation::ChannelCount);
        }

        let mut roles: BTreeMap<ElectrodeLabel, usize> = BTreeMap::new();
        let special = [self.reference, self.ground];
        for label in self.channel_of.keys().chain(&special).chain(&self.excluded) {
            *roles.entry(*label).or_default() += 1;
        }
        if self.reference == self.ground || roles.values().any(|&n| n > 1) {
            out.insert(Violation::RoleOverlap);
        }
        if ElectrodeLabel::all().any(|l| !roles.contains_key(&l)) {
            out.insert(Violation::Unassigned);
        }

        for side in [Side::L, Side::R] {
            if self.excluded.iter().filter(|l| l.side == side).count() != 1 {
                out.insert(Violation::OneExcludedPerEar);
            }
        }

        if self.ear_split {
            let split_ok = self.channel_of.iter().all(|(l, &ch)| match l.side {
                Side::R => (1..=8).contains(&ch),
                Side::L => (9..=16).contains(&ch),
            });
            if !split_ok {
                out.insert(Violation::EarSplit);
            }
        }
        out.into_iter().collect()
    }

    pub fn role_of(&self, label: ElectrodeLabel) -> Option<Role> {
        if self.channel_of.contains_key(&label) {
            Some(Role::Data)
        } else if label == self.reference {
            Some(Role::Reference)
        } else if label == self.ground {
            Some(Role::Ground)
        } else if self.excluded.contains(&label) {
            Some(Role::Excluded)
        } else {
            None
        }
    }

    /// Electrode wired to amplifier channel `channel` (1-based).
    pub fn electrode_on(&self, channel: u8) -> Option<ElectrodeLabel> {
        self.channel_of.iter().find(|(_, &c)| c == channel).map(|(l, _)| *l)
    }

    /// Parses the `label,role,channel` table. A `#ear_split=false` comment
    /// disables the per-ear channel constraint. The result is not validated.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let ear_split = !text
            .lines()
            .any(|l| l.trim_start_matches('#').trim() == "ear_split=false" && l.starts_with('#'));
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());

        let mut channel_of = BTreeMap::new();
        let mut reference = None;
        let mut ground = None;
        let mut excluded = BTreeSet::new();
        for row in reader.deserialize::<MontageRow>() {
            let row = row?;
            let label: ElectrodeLabel = row.label.parse()?;
            match (row.role, row.channel) {
                (Role::Data, Some(ch)) => {
                    if channel_of.insert(label, ch).is_some() {
                        return Err(Error::Config(format!("{label} listed twice")));
                    }
                }
                (Role::Data, None) => {
                    return Err(Error::Config(format!("data electrode {label} has no channel")))
                }
                (_, Some(_)) => {
                    return Err(Error::Config(format!("only data electrodes take a channel ({label})")))
                }
                (Role::Reference, None) => set_once(&mut reference, label, "reference")?,
                (Role::Ground, None) => set_once(&mut ground, label, "ground")?,
                (Role::Excluded, None) => {
                    excluded.insert(label);
                }
            }
        }
        Ok(MontageMap {
            channel_of,
            reference: reference.ok_or_else(|| Error::Config("montage has no reference".into()))?,
            ground: ground.ok_or_else(|| Error::Config("montage has no ground".into()))?,
            excluded,
            ear_split,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if !self.ear_split {
            out.push_str("#ear_split=false\n");
        }
        out.push_str("label,role,channel\n");
        let mut mapped: Vec<_> = self.channel_of.iter().collect();
        mapped.sort_by_key(|(_, &c)| c);
        for (label, ch) in mapped {
            out.push_str(&format!("{label},data,{ch}\n"));
        }
        out.push_str(&format!("{},reference,\n{},ground,\n", self.reference, self.ground));
        for label in &self.excluded {
            out.push_str(&format!("{label},excluded,\n"));
        }
        out
    }

    /// Loads and validates a montage file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map = Self::parse_csv(&text)?;
        let violations = map.validate();
        if !violations.is_empty() {
            let names: Vec<_> = violations.iter().map(Violation::name).collect();
            return Err(Error::Config(format!("{}: {}", path.display(), names.join(", "))));
        }
        Ok(map)
    }

    /// Row of `label` in `rec`: matched by electrode name first, then by the
    /// `chN` label of its amplifier channel.
    pub fn row_of(&self, rec: &Recording, label: ElectrodeLabel) -> Result<usize> {
        let channel = self
            .channel_of
            .get(&label)
            .ok_or_else(|| Error::Config(format!("electrode {label} is not mapped to a channel")))?;
        rec.channel_index(&label.to_string())
            .or_else(|| rec.channel_index(&format!("ch{channel}")))
            .ok_or_else(|| {
                Error::Data(format!("recording has no row for {label} (channel {channel})"))
            })
    }

    /// Renames `chN` rows to the electrode wired to channel N.
    pub fn relabel(&self, rec: &Recording) -> Recording {
        let mut out = rec.clone();
        for label in &mut out.labels {
            if let Some(e) = label
                .strip_prefix("ch")
                .and_then(|n| n.parse::<u8>().ok())
                .and_then(|n| self.electrode_on(n))
            {
                *label = e.to_string();
            }
        }
        out
    }
}

fn set_once(slot: &mut Option<ElectrodeLabel>, label: ElectrodeLabel, what: &str) -> Result<()> {
    if slot.replace(label).is_some() {
        return Err(Error::Config(format!("more than one {what} electrode")));
    }
    Ok(())
}

/// Subtracts the mean of the two mastoid electrodes from every channel,
/// sample by sample.
pub fn rereference_linked_mastoid(
    rec: &Recording,
    montage: &MontageMap,
    left: ElectrodeLabel,
    right: ElectrodeLabel,
) -> Result<Recording> {
    let li = montage.row_of(rec, left)?;
    let ri = montage.row_of(rec, right)?;
    let reference: Vec<f64> = rec.data[li]
        .iter()
        .zip(&rec.data[ri])
        .map(|(a, b)| (a + b) / 2.0)
        .collect();
    Ok(rec.map_channels(|row| row.iter().zip(&reference).map(|(x, r)| x - r).collect()))
}
