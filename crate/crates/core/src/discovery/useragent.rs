//! Parser for the Dalvik user agent reported by Android executors:
//!
//! ```text
//! Dalvik/<ver> (Linux; U; Android <N>[.<minor>...]; <model> Build/<id>)
//! ```

use std::io;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceInfo {
    pub runtime: String,
    pub runtime_version: String,
    pub android_version: u32,
    pub device_model: String,
    pub build_id: String,
}

impl DeviceInfo {
    /// Render back to the user-agent grammar.
    pub fn format(&self) -> String {
        format!(
            "{}/{} (Linux; U; Android {}; {} Build/{})",
            self.runtime, self.runtime_version, self.android_version, self.device_model, self.build_id
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed user agent at byte {offset}: expected {expected}")]
pub struct ParseFailure {
    pub offset: usize,
    pub expected: &'static str,
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn fail(&self, expected: &'static str) -> ParseFailure {
        ParseFailure {
            offset: self.pos,
            expected,
        }
    }

    fn literal(&mut self, lit: &'static str) -> Result<(), ParseFailure> {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            Ok(())
        } else {
            Err(self.fail(lit))
        }
    }

    /// Consume up to (not including) `delim`; the taken text must be non-empty.
    fn until(&mut self, delim: &str, what: &'static str) -> Result<&'a str, ParseFailure> {
        let rest = self.rest();
        match rest.find(delim) {
            Some(0) | None => Err(self.fail(what)),
            Some(i) => {
                self.pos += i;
                Ok(&rest[..i])
            }
        }
    }

    /// Like `until`, but for the last occurrence of `delim`.
    fn until_last(&mut self, delim: &str, what: &'static str) -> Result<&'a str, ParseFailure> {
        let rest = self.rest();
        match rest.rfind(delim) {
            Some(0) | None => Err(self.fail(what)),
            Some(i) => {
                self.pos += i;
                Ok(&rest[..i])
            }
        }
    }
}

pub fn parse_user_agent(ua: &str) -> Result<DeviceInfo, ParseFailure> {
    let mut c = Cursor { text: ua, pos: 0 };
    c.literal("Dalvik/")?;
    let runtime_version = c.until(" ", "runtime version")?;
    c.literal(" (Linux; U; Android ")?;
    let version_start = c.pos;
    let version_text = c.until(";", "Android version")?;
    let major = version_text.split('.').next().unwrap_or_default();
    let android_version = match major.parse::<u32>() {
        Ok(v) if v >= 1 && major.bytes().all(|b| b.is_ascii_digit()) => v,
        _ => {
            return Err(ParseFailure {
                offset: version_start,
                expected: "numeric Android version",
            })
        }
    };
    c.literal("; ")?;
    let device_model = c.until_last(" Build/", "device model")?;
    c.literal(" Build/")?;
    let build_id = c.until_last(")", "build id")?;
    c.literal(")")?;
    if !c.rest().is_empty() {
        return Err(c.fail("end of user agent"));
    }
    Ok(DeviceInfo {
        runtime: "Dalvik".into(),
        runtime_version: runtime_version.into(),
        android_version,
        device_model: device_model.into(),
        build_id: build_id.into(),
    })
}

/// Model-name prefix to vendor, resolved by longest matching prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VendorMap {
    // sorted by descending prefix length
    rules: Vec<(String, String)>,
}

pub const UNKNOWN_VENDOR: &str = "Unknown";

impl VendorMap {
    pub fn new<I, A, B>(rules: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut rules: Vec<(String, String)> = rules.into_iter().map(|(a, b)| (a.into(), b.into())).collect();
        rules.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Self { rules }
    }

    pub fn vendor(&self, model: &str) -> &str {
        self.rules
            .iter()
            .find(|(prefix, _)| model.starts_with(prefix.as_str()))
            .map_or(UNKNOWN_VENDOR, |(_, v)| v.as_str())
    }

    /// Parse `model_prefix,vendor` CSV with a header row.
    pub fn from_csv<R: io::Read>(input: R) -> Result<Self, csv::Error> {
        let mut reader = csv::ReaderBuilder::new().from_reader(input);
        let mut rules = Vec::new();
        for row in reader.records() {
            let row = row?;
            let prefix = row.get(0).unwrap_or_default();
            let vendor = row.get(1).unwrap_or_default().trim();
            if !prefix.is_empty() && !vendor.is_empty() {
                rules.push((prefix.to_owned(), vendor.to_owned()));
            }
        }
        Ok(Self::new(rules))
    }
}
