//! Offline node-discovery analysis.
//!
//! Executors call a logging endpoint while running a deployed function. From
//! those access logs we collapse source addresses into announced prefixes
//! (one prefix = one node), geolocate the prefixes, and profile the devices
//! from their user agents.

mod prefix;
mod useragent;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

pub use prefix::{Prefix, PrefixEntry, PrefixError, PrefixTable, TableError};
pub use useragent::{parse_user_agent, DeviceInfo, ParseFailure, VendorMap, UNKNOWN_VENDOR};

/// One request seen by the logging endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub timestamp: String,
    #[serde(rename = "ip")]
    pub source_ip: IpAddr,
    pub user_agent: String,
    pub status: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    /// 1-based.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLog {
    pub records: Vec<LogRecord>,
    pub rejected: Vec<RejectedLine>,
}

#[derive(Deserialize)]
struct RawLine {
    timestamp: String,
    ip: String,
    user_agent: String,
    status: u16,
}

fn parse_line(line: &str) -> Result<LogRecord, String> {
    let raw: RawLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let source_ip = raw
        .ip
        .trim()
        .parse::<IpAddr>()
        .map_err(|_| format!("invalid IP address {:?}", raw.ip))?;
    if !(100..=599).contains(&raw.status) {
        return Err(format!("status {} outside 100..=599", raw.status));
    }
    Ok(LogRecord {
        timestamp: raw.timestamp,
        source_ip,
        user_agent: raw.user_agent,
        status: raw.status,
    })
}

/// Parse JSON Lines. Blank lines are skipped; malformed ones are kept as
/// rejects with their line number.
pub fn parse_log<R: BufRead>(input: R) -> io::Result<ParsedLog> {
    let mut out = ParsedLog::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.rejected.push(RejectedLine { line: i + 1, reason }),
        }
    }
    Ok(out)
}

pub fn parse_log_str(input: &str) -> ParsedLog {
    parse_log(input.as_bytes()).expect("reading from memory cannot fail")
}

/// A discovered node: one announced prefix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Node {
    pub prefix: Prefix,
    pub country: String,
    pub organization: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDiscovery {
    pub nodes: BTreeSet<Node>,
    pub distinct_ips: usize,
    /// Addresses no table entry covers.
    pub unresolved: Vec<IpAddr>,
    /// Addresses in prefixes of denied organizations (VPNs, clouds).
    pub excluded: Vec<IpAddr>,
}

/// Collapse source addresses into announced prefixes.
pub fn nodes_by_prefix(records: &[LogRecord], table: &PrefixTable) -> NodeDiscovery {
    nodes_by_prefix_excluding(records, table, &BTreeSet::new())
}

/// As [`nodes_by_prefix`], dropping addresses whose prefix belongs to one of
/// `denied` organizations.
pub fn nodes_by_prefix_excluding(
    records: &[LogRecord],
    table: &PrefixTable,
    denied: &BTreeSet<String>,
) -> NodeDiscovery {
    let ips: BTreeSet<IpAddr> = records.iter().map(|r| r.source_ip).collect();
    let mut out = NodeDiscovery {
        distinct_ips: ips.len(),
        ..Default::default()
    };
    for ip in ips {
        match table.lookup(&ip) {
            None => out.unresolved.push(ip),
            Some(e) if denied.contains(&e.organization) => out.excluded.push(ip),
            Some(e) => {
                out.nodes.insert(Node {
                    prefix: e.prefix,
                    country: e.country.clone(),
                    organization: e.organization.clone(),
                });
            }
        }
    }
    out
}

pub fn country_histogram<'a, I>(nodes: I) -> BTreeMap<String, usize>
where
    I: IntoIterator<Item = &'a Node>,
{
    let mut hist = BTreeMap::new();
    for node in nodes {
        *hist.entry(node.country.clone()).or_insert(0) += 1;
    }
    hist
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VendorCount {
    pub models: usize,
    pub devices: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    /// Distinct full user-agent strings that parsed.
    pub distinct_devices: usize,
    pub distinct_models: usize,
    pub node_count: usize,
    /// `distinct_devices / node_count`; 0 when there are no nodes.
    pub devices_per_node: f64,
    pub runtimes: BTreeMap<String, usize>,
    pub vendors: BTreeMap<String, VendorCount>,
    pub android_devices: BTreeMap<u32, usize>,
    /// Percent of devices per Android major version, rounded half away from zero.
    pub android_shares: BTreeMap<u32, u64>,
    pub unparsed_user_agents: Vec<String>,
}

/// Nearest-integer percentage, ties away from zero.
pub fn rounded_percent(part: usize, total: usize) -> u64 {
    if total == 0 {
        return 0;
    }
    ((200 * part as u128 + total as u128) / (2 * total as u128)) as u64
}

/// Device profile over distinct user agents.
pub fn device_report(records: &[LogRecord], node_count: usize, vendors: &VendorMap) -> DeviceReport {
    let agents: BTreeSet<&str> = records.iter().map(|r| r.user_agent.as_str()).collect();
    let mut report = DeviceReport {
        node_count,
        ..Default::default()
    };
    let mut models: BTreeSet<&str> = BTreeSet::new();
    let mut devices = Vec::new();
    for ua in agents {
        match parse_user_agent(ua) {
            Ok(info) => devices.push(info),
            Err(_) => report.unparsed_user_agents.push(ua.to_owned()),
        }
    }
    for d in &devices {
        *report.runtimes.entry(d.runtime.clone()).or_insert(0) += 1;
        *report.android_devices.entry(d.android_version).or_insert(0) += 1;
        let v = report.vendors.entry(vendors.vendor(&d.device_model).to_owned()).or_default();
        v.devices += 1;
        if models.insert(d.device_model.as_str()) {
            v.models += 1;
        }
    }
    report.distinct_devices = devices.len();
    report.distinct_models = models.len();
    report.devices_per_node = if node_count == 0 {
        0.0
    } else {
        devices.len() as f64 / node_count as f64
    };
    report.android_shares = report
        .android_devices
        .iter()
        .map(|(&v, &n)| (v, rounded_percent(n, devices.len())))
        .collect();
    report
}

/// Everything the discovery workflow produces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub records: usize,
    pub rejected: Vec<RejectedLine>,
    /// Share of requests answered with a 2xx status.
    pub success_rate: f64,
    pub distinct_ips: usize,
    pub nodes: Vec<Node>,
    pub countries: BTreeMap<String, usize>,
    pub unresolved: Vec<IpAddr>,
    pub excluded: Vec<IpAddr>,
    /// Device ratios against announced prefixes.
    pub devices_by_prefix: DeviceReport,
    /// Device ratios against distinct resolved source addresses.
    pub devices_per_address: f64,
}

pub fn analyze(
    log: ParsedLog,
    table: &PrefixTable,
    vendors: &VendorMap,
    denied: &BTreeSet<String>,
) -> DiscoveryReport {
    let discovery = nodes_by_prefix_excluding(&log.records, table, denied);
    let kept: BTreeSet<IpAddr> = log
        .records
        .iter()
        .map(|r| r.source_ip)
        .filter(|ip| !discovery.unresolved.contains(ip) && !discovery.excluded.contains(ip))
        .collect();
    let kept_records: Vec<LogRecord> = log
        .records
        .iter()
        .filter(|r| kept.contains(&r.source_ip))
        .cloned()
        .collect();
    let devices = device_report(&kept_records, discovery.nodes.len(), vendors);
    let ok = log.records.iter().filter(|r| (200..300).contains(&r.status)).count();
    DiscoveryReport {
        records: log.records.len(),
        rejected: log.rejected,
        success_rate: if log.records.is_empty() {
            0.0
        } else {
            ok as f64 / log.records.len() as f64
        },
        distinct_ips: discovery.distinct_ips,
        countries: country_histogram(&discovery.nodes),
        nodes: discovery.nodes.into_iter().collect(),
        unresolved: discovery.unresolved,
        excluded: discovery.excluded,
        devices_per_address: if kept.is_empty() {
            0.0
        } else {
            devices.distinct_devices as f64 / kept.len() as f64
        },
        devices_by_prefix: devices,
    }
}
