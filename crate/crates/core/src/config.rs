//! Sectioned `key = value` text.
//!
//! ```text
//! # comment
//! [section]
//! key = value   ; trailing comments allowed
//! ```

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    /// 1-based; 0 when the problem is not tied to one line.
    pub line: usize,
    pub msg: String,
}

impl ConfigError {
    pub fn new(line: usize, msg: impl Into<String>) -> Self {
        ConfigError { line, msg: msg.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            0 => f.write_str(&self.msg),
            n => write!(f, "line {n}: {}", self.msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ini {
    pub sections: Vec<Section>,
}

fn strip_comment(s: &str) -> &str {
    match s.find(['#', ';']) {
        Some(i) => &s[..i],
        None => s,
    }
}

impl Ini {
    pub fn parse(text: &str) -> Result<Ini, ConfigError> {
        let mut ini = Ini::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = strip_comment(raw).trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::new(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(ConfigError::new(line, "empty section name"));
                }
                if ini.section(name).is_some() {
                    return Err(ConfigError::new(line, format!("duplicate section [{name}]")));
                }
                ini.sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| ConfigError::new(line, format!("expected key = value, got {s:?}")))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(ConfigError::new(line, "missing key"));
            }
            let sec = ini
                .sections
                .last_mut()
                .ok_or_else(|| ConfigError::new(line, format!("key \"{key}\" outside any section")))?;
            if sec.get(key).is_some() {
                return Err(ConfigError::new(line, format!("duplicate key \"{key}\"")));
            }
            sec.entries.push(Entry {
                key: key.to_string(),
                value: v.trim().to_string(),
                line,
            });
        }
        Ok(ini)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

impl fmt::Display for Ini {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            writeln!(f, "[{}]", s.name)?;
            for e in &s.entries {
                writeln!(f, "{} = {}", e.key, e.value)?;
            }
        }
        Ok(())
    }
}

/// Parse a value, turning failures into a line-tagged error naming the key.
pub fn parse_value<T: std::str::FromStr>(e: &Entry) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    e.value
        .parse()
        .map_err(|err| ConfigError::new(e.line, format!("bad value for \"{}\": {err}", e.key)))
}

pub fn parse_bool(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::new(
            e.line,
            format!("bad value for \"{}\": expected a boolean", e.key),
        )),
    }
}

/// Comma-separated list; empty input gives an empty list.
pub fn parse_list<T: std::str::FromStr>(e: &Entry) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|err| ConfigError::new(e.line, format!("bad list item {s:?} for \"{}\": {err}", e.key)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let ini = Ini::parse("# top\n[a]\nx = 1 ; one\n\n[b]\ny=two words\n").unwrap();
        assert_eq!(ini.sections.len(), 2);
        let x = ini.section("a").unwrap().get("x").unwrap();
        assert_eq!((x.value.as_str(), x.line), ("1", 3));
        assert_eq!(ini.section("b").unwrap().get("y").unwrap().value, "two words");
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(Ini::parse("x = 1").unwrap_err().line, 1);
        assert_eq!(Ini::parse("[a]\n\nbogus\n").unwrap_err().line, 3);
        assert_eq!(Ini::parse("[a]\nk=1\nk=2").unwrap_err().line, 3);
        assert_eq!(Ini::parse("[a\n").unwrap_err().line, 1);
    }

    #[test]
    fn display_roundtrips() {
        let text = "[a]\nx = 1\n\n[b]\ny = 2\n";
        let ini = Ini::parse(text).unwrap();
        assert_eq!(ini.to_string(), text);
        assert_eq!(Ini::parse(&ini.to_string()).unwrap(), ini);
    }

    #[test]
    fn lists_and_bools() {
        let ini = Ini::parse("[s]\nseeds = 1, 2,3\nflag = yes\n").unwrap();
        let s = ini.section("s").unwrap();
        assert_eq!(parse_list::<u64>(s.get("seeds").unwrap()).unwrap(), vec![1, 2, 3]);
        assert!(parse_bool(s.get("flag").unwrap()).unwrap());
        let err = parse_list::<u64>(&Entry {
            key: "seeds".into(),
            value: "1,x".into(),
            line: 7,
        })
        .unwrap_err();
        assert_eq!(err.line, 7);
        assert!(err.msg.contains("seeds"));
    }
}
