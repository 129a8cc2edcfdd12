//! Append-only event log shared by the gateway and the emulator.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SystemClock};

/// Log classes; the UI renders each with its own color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Error,
    Connection,
    Command,
    Response,
    Action,
}

impl fmt::Display for LogLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogLevel::Error => "error",
            LogLevel::Connection => "connection",
            LogLevel::Command => "command",
            LogLevel::Response => "response",
            LogLevel::Action => "action",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub timestamp: u64,
    pub level: LogLevel,
    pub message: String,
}

struct Inner {
    entries: Vec<LogEntry>,
    sink: Option<Box<dyn Write + Send>>,
}

/// Timestamps never go backwards, even if the clock does.
#[derive(Clone)]
pub struct EventLog {
    inner: Arc<Mutex<Inner>>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for EventLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventLog").field("len", &self.len()).finish()
    }
}

impl Default for EventLog {
    fn default() -> Self {
        EventLog::new(Arc::new(SystemClock))
    }
}

impl EventLog {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        EventLog {
            inner: Arc::new(Mutex::new(Inner {
                entries: Vec::new(),
                sink: None,
            })),
            clock,
        }
    }

    /// Mirrors every future entry as one JSON line to `sink`.
    pub fn set_sink(&self, sink: Box<dyn Write + Send>) {
        self.inner.lock().sink = Some(sink);
    }

    pub fn push(&self, level: LogLevel, message: impl Into<String>) -> LogEntry {
        let mut inner = self.inner.lock();
        let now = self.clock.now_ms();
        let timestamp = inner.entries.last().map_or(now, |last| now.max(last.timestamp));
        let entry = LogEntry {
            timestamp,
            level,
            message: message.into(),
        };
        if let Some(sink) = inner.sink.as_mut() {
            let mut line = serde_json::to_vec(&entry).expect("log entry serialization is infallible");
            line.push(b'\n');
            // a broken sink must not take the service down
            let _ = sink.write_all(&line).and_then(|_| sink.flush());
        }
        inner.entries.push(entry.clone());
        entry
    }

    pub fn len(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries with `timestamp >= since_ms`.
    pub fn since(&self, since_ms: u64) -> Vec<LogEntry> {
        let inner = self.inner.lock();
        let start = inner.entries.partition_point(|e| e.timestamp < since_ms);
        inner.entries[start..].to_vec()
    }

    /// Entries from position `cursor` on, plus the cursor to resume from.
    pub fn read_from(&self, cursor: usize) -> (Vec<LogEntry>, usize) {
        let inner = self.inner.lock();
        let start = cursor.min(inner.entries.len());
        (inner.entries[start..].to_vec(), inner.entries.len())
    }

    pub fn entries(&self) -> Vec<LogEntry> {
        self.inner.lock().entries.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    #[test]
    fn timestamps_are_monotone() {
        let clock = ManualClock::new(1000);
        let log = EventLog::new(clock.clone());
        log.push(LogLevel::Connection, "a");
        clock.set(500);
        let e = log.push(LogLevel::Command, "b");
        assert_eq!(e.timestamp, 1000);
        clock.set(2000);
        log.push(LogLevel::Response, "c");
        assert_eq!(log.since(1000).len(), 3);
        assert_eq!(log.since(1001).len(), 1);
        let (first, cursor) = log.read_from(0);
        assert_eq!(first.len(), 3);
        log.push(LogLevel::Error, "d");
        let (rest, next) = log.read_from(cursor);
        assert_eq!(rest.len(), 1);
        assert_eq!(next, 4);
    }

    #[test]
    fn writes_ndjson_sink() {
        #[derive(Clone, Default)]
        struct Shared(Arc<Mutex<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.lock().extend_from_slice(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let buf = Shared::default();
        let log = EventLog::new(ManualClock::new(7));
        log.set_sink(Box::new(buf.clone()));
        log.push(LogLevel::Action, "x");
        let text = String::from_utf8(buf.0.lock().clone()).unwrap();
        assert_eq!(text, "{\"timestamp\":7,\"level\":\"action\",\"message\":\"x\"}\n");
    }
}
