//! Announced-prefix table with longest-prefix-match lookup.
//!
//! Each address family gets its own binary trie; a lookup walks the address
//! bits from the most significant one and remembers the deepest entry seen.

use std::fmt;
use std::io;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrefixError {
    #[error("{0:?} is not in address/length form")]
    Syntax(String),
    #[error("{0:?}: invalid address")]
    Address(String),
    #[error("{0:?}: prefix length out of range")]
    Length(String),
    #[error("{0:?}: host bits are set")]
    HostBits(String),
}

/// A CIDR block such as `10.1.0.0/16` or `2001:db8::/32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    addr: IpAddr,
    len: u8,
}

impl Prefix {
    pub fn new(addr: IpAddr, len: u8) -> Result<Self, PrefixError> {
        let text = || format!("{addr}/{len}");
        if len > max_len(&addr) {
            return Err(PrefixError::Length(text()));
        }
        let p = Self { addr, len };
        if bits(&addr) & !p.mask() != 0 {
            return Err(PrefixError::HostBits(text()));
        }
        Ok(p)
    }

    pub fn addr(&self) -> IpAddr {
        self.addr
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn mask(&self) -> u128 {
        let width = max_len(&self.addr) as u32;
        if self.len == 0 {
            return 0;
        }
        let ones = u128::MAX << (128 - self.len as u32);
        ones >> (128 - width)
    }

    pub fn contains(&self, ip: &IpAddr) -> bool {
        ip.is_ipv4() == self.addr.is_ipv4() && bits(ip) & self.mask() == bits(&self.addr)
    }
}

impl FromStr for Prefix {
    type Err = PrefixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (addr, len) = s.split_once('/').ok_or_else(|| PrefixError::Syntax(s.into()))?;
        let addr: IpAddr = addr.parse().map_err(|_| PrefixError::Address(s.into()))?;
        let len: u8 = len.parse().map_err(|_| PrefixError::Length(s.into()))?;
        Prefix::new(addr, len)
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl Serialize for Prefix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Prefix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn max_len(addr: &IpAddr) -> u8 {
    if addr.is_ipv4() {
        32
    } else {
        128
    }
}

fn bits(addr: &IpAddr) -> u128 {
    match addr {
        IpAddr::V4(a) => u32::from(*a) as u128,
        IpAddr::V6(a) => u128::from(*a),
    }
}

/// One row of the table: who announces a block and from where.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixEntry {
    pub prefix: Prefix,
    /// ISO 3166 alpha-3.
    pub country: String,
    pub organization: String,
}

#[derive(Debug, Clone, Default)]
struct Trie {
    children: Vec<[u32; 2]>,
    entry: Vec<Option<usize>>,
}

impl Trie {
    const NONE: u32 = u32::MAX;

    fn root(&mut self) {
        if self.children.is_empty() {
            self.children.push([Self::NONE; 2]);
            self.entry.push(None);
        }
    }

    fn insert(&mut self, value: u128, width: u8, len: u8, entry: usize) {
        self.root();
        let mut node = 0usize;
        for i in 0..len {
            let bit = ((value >> (width - 1 - i)) & 1) as usize;
            let next = self.children[node][bit];
            node = if next == Self::NONE {
                self.children.push([Self::NONE; 2]);
                self.entry.push(None);
                let id = self.children.len() - 1;
                self.children[node][bit] = id as u32;
                id
            } else {
                next as usize
            };
        }
        self.entry[node] = Some(entry);
    }

    fn lookup(&self, value: u128, width: u8) -> Option<usize> {
        if self.children.is_empty() {
            return None;
        }
        let mut node = 0usize;
        let mut best = self.entry[0];
        for i in 0..width {
            let bit = ((value >> (width - 1 - i)) & 1) as usize;
            match self.children[node][bit] {
                Self::NONE => break,
                next => node = next as usize,
            }
            if let Some(e) = self.entry[node] {
                best = Some(e);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("{0}")]
    Read(String),
}

/// Offline replacement for BGP looking-glass and whois lookups.
#[derive(Debug, Clone, Default)]
pub struct PrefixTable {
    entries: Vec<PrefixEntry>,
    v4: Trie,
    v6: Trie,
}

impl PrefixTable {
    pub fn new(entries: Vec<PrefixEntry>) -> Self {
        let mut table = Self::default();
        for e in entries {
            table.insert(e);
        }
        table
    }

    /// A later entry for the same prefix replaces the earlier one.
    pub fn insert(&mut self, entry: PrefixEntry) {
        let idx = self.entries.len();
        let p = entry.prefix;
        let (trie, width) = if p.addr.is_ipv4() {
            (&mut self.v4, 32)
        } else {
            (&mut self.v6, 128)
        };
        trie.insert(bits(&p.addr), width, p.len, idx);
        self.entries.push(entry);
    }

    /// Longest matching entry for `ip`.
    pub fn lookup(&self, ip: &IpAddr) -> Option<&PrefixEntry> {
        let idx = match ip {
            IpAddr::V4(_) => self.v4.lookup(bits(ip), 32),
            IpAddr::V6(_) => self.v6.lookup(bits(ip), 128),
        }?;
        self.entries.get(idx)
    }

    pub fn entries(&self) -> &[PrefixEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse `prefix,country,organization` CSV with a header row.
    pub fn from_csv<R: io::Read>(input: R) -> Result<Self, TableError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let mut entries = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| TableError::Read(e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            let field = |i: usize, name: &str| {
                row.get(i)
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .ok_or_else(|| TableError::Row {
                        line,
                        message: format!("missing {name}"),
                    })
            };
            let prefix = field(0, "prefix")?
                .parse::<Prefix>()
                .map_err(|e| TableError::Row {
                    line,
                    message: e.to_string(),
                })?;
            let country = field(1, "country")?;
            if country.len() != 3 || !country.chars().all(|c| c.is_ascii_uppercase()) {
                return Err(TableError::Row {
                    line,
                    message: format!("{country:?} is not an alpha-3 country code"),
                });
            }
            entries.push(PrefixEntry {
                prefix,
                country,
                organization: row.get(2).unwrap_or_default().to_owned(),
            });
        }
        Ok(Self::new(entries))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(p: &str, country: &str) -> PrefixEntry {
        PrefixEntry {
            prefix: p.parse().unwrap(),
            country: country.into(),
            organization: String::new(),
        }
    }

    fn brute_force<'a>(entries: &'a [PrefixEntry], ip: &IpAddr) -> Option<&'a PrefixEntry> {
        // last-inserted wins among equal prefixes, matching the trie
        entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.prefix.contains(ip))
            .max_by_key(|(i, e)| (e.prefix.len(), *i))
            .map(|(_, e)| e)
    }

    #[test]
    fn parse_and_display() {
        let p: Prefix = "10.1.0.0/16".parse().unwrap();
        assert_eq!(p.to_string(), "10.1.0.0/16");
        assert_eq!("2001:db8::/32".parse::<Prefix>().unwrap().len(), 32);
        assert!(matches!("10.1.0.1/16".parse::<Prefix>(), Err(PrefixError::HostBits(_))));
        assert!(matches!("10.1.0.0/33".parse::<Prefix>(), Err(PrefixError::Length(_))));
        assert!(matches!("10.1.0.0".parse::<Prefix>(), Err(PrefixError::Syntax(_))));
        assert!(matches!("10.1.0/8".parse::<Prefix>(), Err(PrefixError::Address(_))));
        assert!("0.0.0.0/0".parse::<Prefix>().unwrap().contains(&"1.2.3.4".parse().unwrap()));
    }

    #[test]
    fn longest_match_wins() {
        let table = PrefixTable::new(vec![
            entry("10.0.0.0/8", "USA"),
            entry("10.20.0.0/16", "GBR"),
            entry("10.20.5.0/24", "FRA"),
            entry("2001:db8::/32", "CHE"),
        ]);
        let look = |s: &str| table.lookup(&s.parse().unwrap()).map(|e| e.country.as_str());
        assert_eq!(look("10.20.5.77"), Some("FRA"));
        assert_eq!(look("10.20.6.1"), Some("GBR"));
        assert_eq!(look("10.99.0.1"), Some("USA"));
        assert_eq!(look("11.0.0.1"), None);
        assert_eq!(look("2001:db8:1::5"), Some("CHE"));
        assert_eq!(look("2001:db9::1"), None);
        // no cross-family matches
        assert_eq!(look("::ffff:10.20.5.77"), None);
    }

    #[test]
    fn csv_table() {
        let text = "prefix,country,organization\n10.1.0.0/16,CHE,Example AG\n2001:db8::/32, GBR ,\n";
        let t = PrefixTable::from_csv(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.entries()[0].organization, "Example AG");
        assert_eq!(t.entries()[1].country, "GBR");

        let bad = "prefix,country,organization\n10.1.0.0/16,CH,x\n";
        assert!(matches!(
            PrefixTable::from_csv(bad.as_bytes()),
            Err(TableError::Row { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn trie_agrees_with_scan(
            prefixes in proptest::collection::vec((any::<u32>(), 0u8..=32), 1..40),
            probes in proptest::collection::vec(any::<u32>(), 1..60),
        ) {
            let entries: Vec<PrefixEntry> = prefixes
                .iter()
                .enumerate()
                .map(|(i, (addr, len))| {
                    let mask = if *len == 0 { 0 } else { u32::MAX << (32 - len) };
                    let ip = IpAddr::V4((addr & mask).into());
                    PrefixEntry {
                        prefix: Prefix::new(ip, *len).unwrap(),
                        country: "USA".into(),
                        organization: i.to_string(),
                    }
                })
                .collect();
            let table = PrefixTable::new(entries.clone());
            // probe both random addresses and the prefixes' own base addresses
            let all = probes.iter().copied().chain(prefixes.iter().map(|(a, _)| *a));
            for raw in all {
                let ip = IpAddr::V4(raw.into());
                prop_assert_eq!(table.lookup(&ip), brute_force(&entries, &ip));
            }
        }
    }
}
