use crate::error::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Which priors feed which network.
///
/// Names combine at most one depth prefix (`DL` luminance, `DE` edges) with
/// at most one pose suffix (`PL`, `PE`); `baseline` uses neither.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct AblationConfig {
    pub depth_lum: bool,
    pub depth_edge: bool,
    pub pose_lum: bool,
    pub pose_edge: bool,
}

impl AblationConfig {
    pub const BASELINE: Self = Self::from_flags(false, false, false, false);
    pub const DLPE: Self = Self::from_flags(true, false, false, true);

    pub const fn from_flags(depth_lum: bool, depth_edge: bool, pose_lum: bool, pose_edge: bool) -> Self {
        Self {
            depth_lum,
            depth_edge,
            pose_lum,
            pose_edge,
        }
    }

    /// The nine named configurations in reporting order.
    pub fn all() -> [AblationConfig; 9] {
        ["baseline", "PE", "PL", "DE", "DL", "DEPL", "DLPE", "DEPE", "DLPL"].map(|n| n.parse().expect("known name"))
    }

    pub fn name(&self) -> &'static str {
        match (self.depth_lum, self.depth_edge, self.pose_lum, self.pose_edge) {
            (false, false, false, false) => "baseline",
            (false, false, false, true) => "PE",
            (false, false, true, false) => "PL",
            (false, true, false, false) => "DE",
            (true, false, false, false) => "DL",
            (false, true, true, false) => "DEPL",
            (true, false, false, true) => "DLPE",
            (false, true, false, true) => "DEPE",
            (true, false, true, false) => "DLPL",
            _ => "custom",
        }
    }

    pub fn is_named(&self) -> bool {
        self.name() != "custom"
    }

    pub fn uses_luminance(&self) -> bool {
        self.depth_lum || self.pose_lum
    }

    pub fn uses_edges(&self) -> bool {
        self.depth_edge || self.pose_edge
    }

    /// `3 + depth_lum + depth_edge`.
    pub fn depth_channels(&self) -> usize {
        3 + self.depth_lum as usize + self.depth_edge as usize
    }

    pub fn pose_frame_channels(&self) -> usize {
        3 + self.pose_lum as usize + self.pose_edge as usize
    }

    /// `2 · (3 + pose_lum + pose_edge)`.
    pub fn pose_channels(&self) -> usize {
        2 * self.pose_frame_channels()
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let flags = match s.trim() {
            "baseline" => (false, false, false, false),
            "PE" => (false, false, false, true),
            "PL" => (false, false, true, false),
            "DE" => (false, true, false, false),
            "DL" => (true, false, false, false),
            "DEPL" => (false, true, true, false),
            "DLPE" => (true, false, false, true),
            "DEPE" => (false, true, false, true),
            "DLPL" => (true, false, true, false),
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation configuration {other:?} (expected one of baseline, PE, PL, DE, DL, DEPL, DLPE, DEPE, DLPL)"
                )))
            }
        };
        Ok(Self::from_flags(flags.0, flags.1, flags.2, flags.3))
    }
}

impl Serialize for AblationConfig {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for AblationConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_and_are_distinct() {
        let all = AblationConfig::all();
        for (i, c) in all.iter().enumerate() {
            assert_eq!(c.name().parse::<AblationConfig>().unwrap(), *c);
            for d in &all[i + 1..] {
                assert_ne!(c, d);
            }
        }
        assert!("XYZ".parse::<AblationConfig>().is_err());
    }

    #[test]
    fn channel_counts_follow_flags() {
        for c in AblationConfig::all() {
            let n = c.name();
            let dl = n.contains("DL") as usize;
            let de = n.contains("DE") as usize;
            let pl = n.contains("PL") as usize;
            let pe = n.contains("PE") as usize;
            assert_eq!(c.depth_channels(), 3 + dl + de, "{n}");
            assert_eq!(c.pose_channels(), 2 * (3 + pl + pe), "{n}");
        }
        let dlpe: AblationConfig = "DLPE".parse().unwrap();
        assert_eq!((dlpe.depth_channels(), dlpe.pose_channels()), (4, 8));
        assert!(dlpe.depth_lum && dlpe.pose_edge && !dlpe.depth_edge && !dlpe.pose_lum);
        let depl: AblationConfig = "DEPL".parse().unwrap();
        assert_eq!((depl.depth_channels(), depl.pose_channels()), (4, 8));
        assert_eq!((AblationConfig::BASELINE.depth_channels(), AblationConfig::BASELINE.pose_channels()), (3, 6));
    }
}
