//! Per-framework connection-tracking behavior.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::types::PortRange;

use super::TcpConnState;

/// How RST segments are validated before they change an entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RstPolicy {
    /// Any RST closes the entry.
    NoCheck,
    /// RSTs whose sequence number lies within `window` of the expected value
    /// cut the timeout to `reduced_timeout_s` and arm a challenge-ACK
    /// restore to `restore_timeout_s`.
    InWindow {
        window: u32,
        reduced_timeout_s: u64,
        restore_timeout_s: u64,
    },
    /// Only an exact sequence match is honored.
    Strict,
}

impl RstPolicy {
    pub fn label(&self) -> &'static str {
        match self {
            RstPolicy::NoCheck => "no_check",
            RstPolicy::InWindow { .. } => "in_window",
            RstPolicy::Strict => "strict",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortAllocation {
    /// Keep the client's source port when it is free on the public side.
    Preservation,
    /// Always pick a fresh port from the range.
    Random { range_lo: u16, range_hi: u16 },
}

impl PortAllocation {
    pub fn label(&self) -> &'static str {
        match self {
            PortAllocation::Preservation => "preservation",
            PortAllocation::Random { .. } => "random",
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, PortAllocation::Random { .. })
    }
}

/// What happens to a new flow when no public port is left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExhaustionBehavior {
    DropPacket,
    /// Forward the packet untranslated, leaking the internal address.
    BypassNat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Framework {
    Netfilter,
    Pf,
    IpFilter,
    Ipfw,
    Natd,
    Custom,
}

impl Framework {
    pub const ALL: [Framework; 5] = [
        Framework::Netfilter,
        Framework::Pf,
        Framework::IpFilter,
        Framework::Ipfw,
        Framework::Natd,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Framework::Netfilter => "netfilter",
            Framework::Pf => "pf",
            Framework::IpFilter => "ipfilter",
            Framework::Ipfw => "ipfw",
            Framework::Natd => "natd",
            Framework::Custom => "custom",
        }
    }

    /// Only these two carry the untranslated-forwarding bug.
    pub fn has_bypass_bug(&self) -> bool {
        matches!(self, Framework::Pf | Framework::Natd | Framework::Custom)
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Framework {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "netfilter" => Framework::Netfilter,
            "pf" => Framework::Pf,
            "ipfilter" => Framework::IpFilter,
            "ipfw" => Framework::Ipfw,
            "natd" => Framework::Natd,
            "custom" => Framework::Custom,
            other => return Err(format!("unknown framework {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timeouts {
    pub syn_sent_s: u64,
    pub established_s: u64,
    pub close_s: u64,
    pub udp_s: u64,
    /// Lifetime of an entry created mid-stream until the remote side answers.
    pub unacknowledged_s: u64,
}

impl Timeouts {
    pub fn for_state(&self, state: TcpConnState) -> u64 {
        match state {
            TcpConnState::SynSent => self.syn_sent_s,
            TcpConnState::Established => self.established_s,
            TcpConnState::Close => self.close_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameworkProfile {
    pub name: String,
    pub framework: Framework,
    pub allocation: PortAllocation,
    /// Bounded linear probing from random offsets, halving the run length
    /// after each miss. `None` picks uniformly among all free ports.
    pub random_attempts: Option<u32>,
    /// Where a preserved port that collides is re-homed.
    pub fallback_range: PortRange,
    pub rst_policy: RstPolicy,
    pub timeouts: Timeouts,
    pub table_limit: Option<usize>,
    /// Per (client, destination host) cap on concurrent entries.
    pub dest_conn_limit: Option<usize>,
    pub loose_instantiation: bool,
    pub exhaustion: ExhaustionBehavior,
    /// Keys holding defaults that were never measured on the real framework.
    pub unmeasured: BTreeSet<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("profile {profile}: {key} must be positive")]
    NonPositive { profile: String, key: &'static str },
    #[error("profile {profile}: reduced RST timeout must be below the restore timeout")]
    RstTimeouts { profile: String },
    #[error("profile {profile}: in-window RST check needs a non-zero window")]
    ZeroWindow { profile: String },
    #[error("profile {profile}: random range {lo}-{hi} is empty")]
    EmptyRange { profile: String, lo: u16, hi: u16 },
    #[error("profile {profile}: bypass_nat exhaustion is only modeled for pf and natd")]
    IllegalBypass { profile: String },
    #[error("unknown key {key:?}")]
    UnknownKey { key: String },
    #[error("{key}: {msg}")]
    BadValue { key: String, msg: String },
}

const NETFILTER_WINDOW: u32 = 65536;

impl FrameworkProfile {
    pub const BUILTIN_NAMES: [&'static str; 10] = [
        "netfilter_pre",
        "netfilter_rand",
        "pf_pre",
        "pf_rand",
        "ipfilter_pre",
        "ipfilter_rand",
        "ipfw_pre",
        "ipfw_rand",
        "natd_pre",
        "natd_rand",
    ];

    fn base(name: &str, framework: Framework) -> Self {
        FrameworkProfile {
            name: name.to_string(),
            framework,
            allocation: PortAllocation::Preservation,
            random_attempts: None,
            fallback_range: PortRange::EPHEMERAL,
            rst_policy: RstPolicy::Strict,
            timeouts: Timeouts {
                syn_sent_s: 120,
                established_s: 432_000,
                close_s: 10,
                udp_s: 30,
                unacknowledged_s: 300,
            },
            table_limit: None,
            dest_conn_limit: None,
            loose_instantiation: true,
            exhaustion: ExhaustionBehavior::DropPacket,
            unmeasured: BTreeSet::new(),
        }
    }

    /// One of the ten compiled-in profiles (five frameworks, two allocation
    /// modes each).
    pub fn builtin(name: &str) -> Option<Self> {
        let (fw, random) = match name {
            "netfilter_pre" => (Framework::Netfilter, false),
            "netfilter_rand" => (Framework::Netfilter, true),
            "pf_pre" => (Framework::Pf, false),
            "pf_rand" => (Framework::Pf, true),
            "ipfilter_pre" => (Framework::IpFilter, false),
            "ipfilter_rand" => (Framework::IpFilter, true),
            "ipfw_pre" => (Framework::Ipfw, false),
            "ipfw_rand" => (Framework::Ipfw, true),
            "natd_pre" => (Framework::Natd, false),
            "natd_rand" => (Framework::Natd, true),
            _ => return None,
        };
        let mut p = Self::base(name, fw);
        let mut unmeasured: Vec<&'static str> = vec!["udp_s"];
        match fw {
            Framework::Netfilter => {
                p.rst_policy = RstPolicy::InWindow {
                    window: NETFILTER_WINDOW,
                    reduced_timeout_s: 10,
                    restore_timeout_s: 300,
                };
                if random {
                    // Linux-style bounded search over 1024-65535.
                    p.allocation = PortAllocation::Random {
                        range_lo: 1024,
                        range_hi: 65535,
                    };
                    p.random_attempts = Some(128);
                    unmeasured.extend(["random_range", "random_attempts"]);
                }
            }
            Framework::Pf => {
                p.rst_policy = RstPolicy::NoCheck;
                p.timeouts.close_s = 90;
                if random {
                    p.allocation = PortAllocation::Random {
                        range_lo: 50001,
                        range_hi: 65535,
                    };
                    p.exhaustion = ExhaustionBehavior::BypassNat;
                }
                unmeasured.extend(["syn_sent_s", "established_s", "unacknowledged_s"]);
            }
            Framework::IpFilter => {
                p.rst_policy = RstPolicy::NoCheck;
                p.timeouts.close_s = 60;
                p.table_limit = Some(if random { 256 } else { 30_000 });
                if random {
                    p.allocation = PortAllocation::Random {
                        range_lo: 1024,
                        range_hi: 65535,
                    };
                    unmeasured.push("random_range");
                }
                unmeasured.extend(["syn_sent_s", "established_s", "unacknowledged_s"]);
            }
            Framework::Ipfw => {
                p.rst_policy = RstPolicy::Strict;
                p.table_limit = Some(16_384);
                if random {
                    p.allocation = PortAllocation::Random {
                        range_lo: 1024,
                        range_hi: 65535,
                    };
                    unmeasured.push("random_range");
                }
                unmeasured.extend(["syn_sent_s", "established_s", "close_s", "unacknowledged_s"]);
            }
            Framework::Natd => {
                p.rst_policy = RstPolicy::Strict;
                p.exhaustion = ExhaustionBehavior::BypassNat;
                if random {
                    p.allocation = PortAllocation::Random {
                        range_lo: 32768,
                        range_hi: 65535,
                    };
                }
                unmeasured.extend(["syn_sent_s", "established_s", "close_s", "unacknowledged_s"]);
            }
            Framework::Custom => unreachable!(),
        }
        p.unmeasured = unmeasured.into_iter().collect();
        Some(p)
    }

    pub fn builtins() -> Vec<Self> {
        Self::BUILTIN_NAMES
            .iter()
            .map(|n| Self::builtin(n).expect("builtin"))
            .collect()
    }

    /// Builtins matching either an exact profile name or a framework label.
    pub fn lookup(name: &str) -> Vec<Self> {
        if let Some(p) = Self::builtin(name) {
            return vec![p];
        }
        Self::builtins()
            .into_iter()
            .filter(|p| p.framework.label() == name)
            .collect()
    }

    /// Gateway-owned connections of the proxy path.
    pub fn proxy() -> Self {
        let mut p = Self::base("proxy", Framework::Custom);
        p.allocation = PortAllocation::Random {
            range_lo: 1024,
            range_hi: 65535,
        };
        p.rst_policy = RstPolicy::Strict;
        p.loose_instantiation = false;
        p
    }

    pub fn rst_window(&self) -> u32 {
        match self.rst_policy {
            RstPolicy::InWindow { window, .. } => window,
            _ => 0,
        }
    }

    /// How long an attacker has to wait for an entry hit by an accepted RST
    /// to disappear.
    pub fn rst_eviction_s(&self) -> u64 {
        match self.rst_policy {
            RstPolicy::InWindow { reduced_timeout_s, .. } => reduced_timeout_s,
            RstPolicy::NoCheck | RstPolicy::Strict => self.timeouts.close_s,
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let t = &self.timeouts;
        for (key, v) in [
            ("syn_sent_s", t.syn_sent_s),
            ("established_s", t.established_s),
            ("close_s", t.close_s),
            ("udp_s", t.udp_s),
            ("unacknowledged_s", t.unacknowledged_s),
        ] {
            if v == 0 {
                return Err(ProfileError::NonPositive {
                    profile: self.name.clone(),
                    key,
                });
            }
        }
        if let RstPolicy::InWindow {
            window,
            reduced_timeout_s,
            restore_timeout_s,
        } = self.rst_policy
        {
            if window == 0 {
                return Err(ProfileError::ZeroWindow {
                    profile: self.name.clone(),
                });
            }
            if reduced_timeout_s == 0 {
                return Err(ProfileError::NonPositive {
                    profile: self.name.clone(),
                    key: "rst_reduced_timeout_s",
                });
            }
            if reduced_timeout_s >= restore_timeout_s {
                return Err(ProfileError::RstTimeouts {
                    profile: self.name.clone(),
                });
            }
        }
        if let PortAllocation::Random { range_lo, range_hi } = self.allocation {
            if range_lo > range_hi || range_lo == 0 {
                return Err(ProfileError::EmptyRange {
                    profile: self.name.clone(),
                    lo: range_lo,
                    hi: range_hi,
                });
            }
        }
        if self.exhaustion == ExhaustionBehavior::BypassNat && !self.framework.has_bypass_bug() {
            return Err(ProfileError::IllegalBypass {
                profile: self.name.clone(),
            });
        }
        if self.table_limit == Some(0) {
            return Err(ProfileError::NonPositive {
                profile: self.name.clone(),
                key: "table_limit",
            });
        }
        Ok(())
    }

    /// Apply one `key = value` override. An override clears the key's
    /// unmeasured marker.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ProfileError> {
        let bad = |msg: String| ProfileError::BadValue {
            key: key.to_string(),
            msg,
        };
        let num = |v: &str| v.parse::<u64>().map_err(|e| bad(e.to_string()));
        let opt = |v: &str| -> Result<Option<usize>, ProfileError> {
            if v == "none" {
                Ok(None)
            } else {
                v.parse::<usize>().map(Some).map_err(|e| bad(e.to_string()))
            }
        };
        let interned: &'static str = match key {
            "framework" => {
                self.framework = value.parse().map_err(bad)?;
                "framework"
            }
            "allocation" => {
                self.allocation = match value {
                    "preservation" => PortAllocation::Preservation,
                    "random" => match self.allocation {
                        r @ PortAllocation::Random { .. } => r,
                        PortAllocation::Preservation => PortAllocation::Random {
                            range_lo: 1024,
                            range_hi: 65535,
                        },
                    },
                    other => return Err(bad(format!("unknown allocation {other:?}"))),
                };
                "allocation"
            }
            "random_range" => {
                let r: PortRange = value.parse().map_err(bad)?;
                self.allocation = PortAllocation::Random {
                    range_lo: r.lo,
                    range_hi: r.hi,
                };
                "random_range"
            }
            "random_attempts" => {
                self.random_attempts = opt(value)?.map(|v| v as u32);
                "random_attempts"
            }
            "fallback_range" => {
                self.fallback_range = value.parse().map_err(bad)?;
                "fallback_range"
            }
            "rst_policy" => {
                self.rst_policy = match value {
                    "no_check" => RstPolicy::NoCheck,
                    "strict" => RstPolicy::Strict,
                    "in_window" => match self.rst_policy {
                        p @ RstPolicy::InWindow { .. } => p,
                        _ => RstPolicy::InWindow {
                            window: NETFILTER_WINDOW,
                            reduced_timeout_s: 10,
                            restore_timeout_s: 300,
                        },
                    },
                    other => return Err(bad(format!("unknown rst policy {other:?}"))),
                };
                "rst_policy"
            }
            "rst_window" | "rst_reduced_timeout_s" | "rst_restore_timeout_s" => {
                let v = num(value)?;
                let RstPolicy::InWindow {
                    window,
                    reduced_timeout_s,
                    restore_timeout_s,
                } = &mut self.rst_policy
                else {
                    return Err(bad("only meaningful with rst_policy = in_window".into()));
                };
                match key {
                    "rst_window" => {
                        *window = u32::try_from(v).map_err(|e| bad(e.to_string()))?;
                        "rst_window"
                    }
                    "rst_reduced_timeout_s" => {
                        *reduced_timeout_s = v;
                        "rst_reduced_timeout_s"
                    }
                    _ => {
                        *restore_timeout_s = v;
                        "rst_restore_timeout_s"
                    }
                }
            }
            "syn_sent_s" => {
                self.timeouts.syn_sent_s = num(value)?;
                "syn_sent_s"
            }
            "established_s" => {
                self.timeouts.established_s = num(value)?;
                "established_s"
            }
            "close_s" => {
                self.timeouts.close_s = num(value)?;
                "close_s"
            }
            "udp_s" => {
                self.timeouts.udp_s = num(value)?;
                "udp_s"
            }
            "unacknowledged_s" => {
                self.timeouts.unacknowledged_s = num(value)?;
                "unacknowledged_s"
            }
            "table_limit" => {
                self.table_limit = opt(value)?;
                "table_limit"
            }
            "dest_conn_limit" => {
                self.dest_conn_limit = opt(value)?;
                "dest_conn_limit"
            }
            "loose_instantiation" => {
                self.loose_instantiation = value.parse().map_err(|_| bad("expected true|false".into()))?;
                "loose_instantiation"
            }
            "exhaustion" => {
                self.exhaustion = match value {
                    "drop" => ExhaustionBehavior::DropPacket,
                    "bypass_nat" => ExhaustionBehavior::BypassNat,
                    other => return Err(bad(format!("unknown exhaustion behavior {other:?}"))),
                };
                "exhaustion"
            }
            other => return Err(ProfileError::UnknownKey { key: other.to_string() }),
        };
        self.unmeasured.remove(interned);
        Ok(())
    }

    /// Canonical `key = value` rendering of every effective parameter.
    pub fn to_config(&self) -> String {
        let mut out = String::new();
        let mut line = |key: &'static str, value: String| {
            let marker = if self.unmeasured.contains(key) {
                "  # default, not measured"
            } else {
                ""
            };
            let _ = writeln!(out, "{key} = {value}{marker}");
        };
        line("framework", self.framework.to_string());
        line("allocation", self.allocation.label().to_string());
        if let PortAllocation::Random { range_lo, range_hi } = self.allocation {
            line("random_range", format!("{range_lo}-{range_hi}"));
            line(
                "random_attempts",
                self.random_attempts
                    .map_or_else(|| "none".to_string(), |a| a.to_string()),
            );
        }
        line("fallback_range", self.fallback_range.to_string());
        line("rst_policy", self.rst_policy.label().to_string());
        if let RstPolicy::InWindow {
            window,
            reduced_timeout_s,
            restore_timeout_s,
        } = self.rst_policy
        {
            line("rst_window", window.to_string());
            line("rst_reduced_timeout_s", reduced_timeout_s.to_string());
            line("rst_restore_timeout_s", restore_timeout_s.to_string());
        }
        let t = self.timeouts;
        line("syn_sent_s", t.syn_sent_s.to_string());
        line("established_s", t.established_s.to_string());
        line("close_s", t.close_s.to_string());
        line("udp_s", t.udp_s.to_string());
        line("unacknowledged_s", t.unacknowledged_s.to_string());
        let limit = |l: Option<usize>| l.map_or_else(|| "none".to_string(), |v| v.to_string());
        line("table_limit", limit(self.table_limit));
        line("dest_conn_limit", limit(self.dest_conn_limit));
        line("loose_instantiation", self.loose_instantiation.to_string());
        line(
            "exhaustion",
            match self.exhaustion {
                ExhaustionBehavior::DropPacket => "drop",
                ExhaustionBehavior::BypassNat => "bypass_nat",
            }
            .to_string(),
        );
        format!("[profile.{}]\n{out}", self.name)
    }
}
