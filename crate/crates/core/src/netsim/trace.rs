//! Line-oriented event trace.

use std::fmt;
use std::io::Write;

use crate::types::SimTime;

pub enum TraceSink {
    Off,
    Memory(Vec<String>),
    Writer(Box<dyn Write + Send>),
}

impl fmt::Debug for TraceSink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceSink::Off => f.write_str("Off"),
            TraceSink::Memory(v) => write!(f, "Memory({} records)", v.len()),
            TraceSink::Writer(_) => f.write_str("Writer"),
        }
    }
}

/// Records are `t=<secs> host=<name> verb=<verb> <detail>`, one per line.
#[derive(Debug)]
pub struct Trace {
    sink: TraceSink,
    count: u64,
    error: Option<String>,
}

impl Trace {
    pub fn new(sink: TraceSink) -> Self {
        Trace {
            sink,
            count: 0,
            error: None,
        }
    }

    pub fn off() -> Self {
        Self::new(TraceSink::Off)
    }

    pub fn memory() -> Self {
        Self::new(TraceSink::Memory(Vec::new()))
    }

    pub fn enabled(&self) -> bool {
        !matches!(self.sink, TraceSink::Off)
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// The detail closure only runs when tracing is on.
    pub fn record(&mut self, at: SimTime, host: &str, verb: &str, detail: impl FnOnce() -> String) {
        if !self.enabled() {
            return;
        }
        let d = detail();
        let line = if d.is_empty() {
            format!("t={at} host={host} verb={verb}")
        } else {
            format!("t={at} host={host} verb={verb} {d}")
        };
        self.count += 1;
        match &mut self.sink {
            TraceSink::Off => {}
            TraceSink::Memory(v) => v.push(line),
            TraceSink::Writer(w) => {
                if self.error.is_none() {
                    if let Err(e) = writeln!(w, "{line}") {
                        self.error = Some(e.to_string());
                    }
                }
            }
        }
    }

    pub fn lines(&self) -> &[String] {
        match &self.sink {
            TraceSink::Memory(v) => v,
            _ => &[],
        }
    }

    /// Flush a writer sink and surface the first write error, if any.
    pub fn finish(&mut self) -> std::io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(std::io::Error::other(e));
        }
        if let TraceSink::Writer(w) = &mut self.sink {
            w.flush()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn off_skips_formatting() {
        let mut t = Trace::off();
        t.record(SimTime::ZERO, "x", "send", || panic!("formatted while off"));
        assert_eq!(t.count(), 0);
    }

    #[test]
    fn memory_keeps_order() {
        let mut t = Trace::memory();
        t.record(SimTime::from_secs(1), "vpn", "drop", || "reason=ttl".into());
        t.record(SimTime::from_secs(2), "vpn", "expire", String::new);
        assert_eq!(
            t.lines(),
            [
                "t=1.000000 host=vpn verb=drop reason=ttl",
                "t=2.000000 host=vpn verb=expire"
            ]
        );
    }
}
