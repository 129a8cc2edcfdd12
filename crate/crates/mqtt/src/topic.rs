//! Topic names, topic filters and MQTT 3.1.1 wildcard matching.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopicError {
    #[error("topic is empty")]
    Empty,
    #[error("topic exceeds 65535 bytes")]
    TooLong,
    #[error("topic contains a NUL character")]
    Nul,
    #[error("topic name {0:?} contains a wildcard")]
    WildcardInName(String),
    #[error("'#' must be the last level of filter {0:?}")]
    MultiLevelNotLast(String),
    #[error("wildcard must occupy a whole level in filter {0:?}")]
    PartialWildcard(String),
}

fn check_common(s: &str) -> Result<(), TopicError> {
    if s.is_empty() {
        return Err(TopicError::Empty);
    }
    if s.len() > u16::MAX as usize {
        return Err(TopicError::TooLong);
    }
    if s.contains('\0') {
        return Err(TopicError::Nul);
    }
    Ok(())
}

/// Topic names used in PUBLISH must not contain wildcards.
pub fn validate_topic_name(topic: &str) -> Result<(), TopicError> {
    check_common(topic)?;
    if topic.contains(['+', '#']) {
        return Err(TopicError::WildcardInName(topic.to_owned()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Segment {
    Literal(String),
    SingleLevel,
    MultiLevel,
}

/// A parsed SUBSCRIBE filter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopicFilter {
    raw: String,
    segments: Vec<Segment>,
}

impl TopicFilter {
    pub fn parse(filter: &str) -> Result<Self, TopicError> {
        check_common(filter)?;
        let levels: Vec<&str> = filter.split('/').collect();
        let last = levels.len() - 1;
        let mut segments = Vec::with_capacity(levels.len());
        for (i, level) in levels.into_iter().enumerate() {
            let segment = match level {
                "+" => Segment::SingleLevel,
                "#" if i == last => Segment::MultiLevel,
                "#" => return Err(TopicError::MultiLevelNotLast(filter.to_owned())),
                other if other.contains(['+', '#']) => {
                    return Err(TopicError::PartialWildcard(filter.to_owned()))
                }
                other => Segment::Literal(other.to_owned()),
            };
            segments.push(segment);
        }
        Ok(TopicFilter {
            raw: filter.to_owned(),
            segments,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn has_wildcards(&self) -> bool {
        self.segments.iter().any(|s| !matches!(s, Segment::Literal(_)))
    }

    /// MQTT 3.1.1 matching: `+` is exactly one level, a trailing `#` is zero
    /// or more levels (so `a/#` also matches `a`). Filters starting with a
    /// wildcard never match `$`-prefixed topics.
    pub fn matches(&self, topic: &str) -> bool {
        if topic.starts_with('$') && !matches!(self.segments.first(), Some(Segment::Literal(_))) {
            return false;
        }
        let mut levels = topic.split('/');
        for segment in &self.segments {
            match segment {
                Segment::MultiLevel => return true,
                Segment::SingleLevel => {
                    if levels.next().is_none() {
                        return false;
                    }
                }
                Segment::Literal(lit) => match levels.next() {
                    Some(level) if level == lit => {}
                    _ => return false,
                },
            }
        }
        levels.next().is_none()
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl std::str::FromStr for TopicFilter {
    type Err = TopicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TopicFilter::parse(s)
    }
}

pub fn topic_matches(filter: &TopicFilter, topic: &str) -> bool {
    filter.matches(topic)
}
