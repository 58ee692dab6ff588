//! The 50 states plus the District of Columbia.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

macro_rules! states {
    ($( $variant:ident, $abbr:literal, $name:literal, $fips:literal; )*) => {
        /// A US state or DC, identified by its postal abbreviation.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum State {
            $( $variant, )*
        }

        impl State {
            pub const ALL: &'static [State] = &[ $( State::$variant, )* ];

            pub fn abbr(self) -> &'static str {
                match self { $( State::$variant => $abbr, )* }
            }

            pub fn name(self) -> &'static str {
                match self { $( State::$variant => $name, )* }
            }

            pub fn fips(self) -> &'static str {
                match self { $( State::$variant => $fips, )* }
            }

            pub fn from_abbr(s: &str) -> Option<State> {
                match s { $( $abbr => Some(State::$variant), )* _ => None }
            }
        }
    };
}

states! {
    AL, "AL", "Alabama", "01";
    AK, "AK", "Alaska", "02";
    AZ, "AZ", "Arizona", "04";
    AR, "AR", "Arkansas", "05";
    CA, "CA", "California", "06";
    CO, "CO", "Colorado", "08";
    CT, "CT", "Connecticut", "09";
    DE, "DE", "Delaware", "10";
    DC, "DC", "District of Columbia", "11";
    FL, "FL", "Florida", "12";
    GA, "GA", "Georgia", "13";
    HI, "HI", "Hawaii", "15";
    ID, "ID", "Idaho", "16";
    IL, "IL", "Illinois", "17";
    IN, "IN", "Indiana", "18";
    IA, "IA", "Iowa", "19";
    KS, "KS", "Kansas", "20";
    KY, "KY", "Kentucky", "21";
    LA, "LA", "Louisiana", "22";
    ME, "ME", "Maine", "23";
    MD, "MD", "Maryland", "24";
    MA, "MA", "Massachusetts", "25";
    MI, "MI", "Michigan", "26";
    MN, "MN", "Minnesota", "27";
    MS, "MS", "Mississippi", "28";
    MO, "MO", "Missouri", "29";
    MT, "MT", "Montana", "30";
    NE, "NE", "Nebraska", "31";
    NV, "NV", "Nevada", "32";
    NH, "NH", "New Hampshire", "33";
    NJ, "NJ", "New Jersey", "34";
    NM, "NM", "New Mexico", "35";
    NY, "NY", "New York", "36";
    NC, "NC", "North Carolina", "37";
    ND, "ND", "North Dakota", "38";
    OH, "OH", "Ohio", "39";
    OK, "OK", "Oklahoma", "40";
    OR, "OR", "Oregon", "41";
    PA, "PA", "Pennsylvania", "42";
    RI, "RI", "Rhode Island", "44";
    SC, "SC", "South Carolina", "45";
    SD, "SD", "South Dakota", "46";
    TN, "TN", "Tennessee", "47";
    TX, "TX", "Texas", "48";
    UT, "UT", "Utah", "49";
    VT, "VT", "Vermont", "50";
    VA, "VA", "Virginia", "51";
    WA, "WA", "Washington", "53";
    WV, "WV", "West Virginia", "54";
    WI, "WI", "Wisconsin", "55";
    WY, "WY", "Wyoming", "56";
}

impl State {
    /// Case-insensitive match against the full name ("Washington, D.C." spellings included).
    pub fn from_name(s: &str) -> Option<State> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("washington, d.c.") || s.eq_ignore_ascii_case("washington dc") {
            return Some(State::DC);
        }
        State::ALL
            .iter()
            .copied()
            .find(|st| st.name().eq_ignore_ascii_case(s))
    }

    pub fn from_fips(s: &str) -> Option<State> {
        let s = s.trim();
        let padded;
        let s = if s.len() == 1 {
            padded = format!("0{s}");
            padded.as_str()
        } else {
            s
        };
        State::ALL.iter().copied().find(|st| st.fips() == s)
    }

    /// Abbreviation, full name, or two-digit FIPS code.
    pub fn parse_loose(s: &str) -> Option<State> {
        let t = s.trim();
        State::from_abbr(&t.to_ascii_uppercase())
            .or_else(|| State::from_name(t))
            .or_else(|| {
                if t.chars().all(|c| c.is_ascii_digit()) && !t.is_empty() && t.len() <= 2 {
                    State::from_fips(t)
                } else {
                    None
                }
            })
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbr())
    }
}

impl FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        State::parse_loose(s).ok_or_else(|| Error::UnknownState(s.to_string()))
    }
}

impl Serialize for State {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.abbr())
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parse a comma-separated state list such as `"CA,NY,TX"`.
pub fn parse_state_list(s: &str) -> Result<Vec<State>, Error> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_51_unique_entries() {
        assert_eq!(State::ALL.len(), 51);
        let mut abbrs: Vec<_> = State::ALL.iter().map(|s| s.abbr()).collect();
        abbrs.sort();
        abbrs.dedup();
        assert_eq!(abbrs.len(), 51);
    }

    #[test]
    fn loose_parsing() {
        assert_eq!(State::parse_loose("ny"), Some(State::NY));
        assert_eq!(State::parse_loose("new york"), Some(State::NY));
        assert_eq!(State::parse_loose("6"), Some(State::CA));
        assert_eq!(State::parse_loose("District of Columbia"), Some(State::DC));
        assert_eq!(State::parse_loose("Puerto Rico"), None);
        assert_eq!(State::parse_loose("PR"), None);
    }

    #[test]
    fn state_list() {
        assert_eq!(parse_state_list("CA, ny").unwrap(), vec![State::CA, State::NY]);
        assert!(parse_state_list("CA,XX").is_err());
    }
}
