use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PageStatus {
    Fetching,
    RetryAfterScroll,
    DoneTimeout,
    DoneStale,
    DoneIntercepted,
    DoneEmpty,
}

impl PageStatus {
    pub fn is_terminal(self) -> bool {
        !matches!(self, PageStatus::Fetching | PageStatus::RetryAfterScroll)
    }
}

/// What happened when one token page was requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PageEvent {
    Loaded { new_tokens: usize, has_next: bool },
    TimedOut,
    ConnectionReset,
    /// Throttling or any other failed response.
    Failed,
}

/// Token-enumeration state for one collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageState {
    pub status: PageStatus,
    pub page: usize,
}

impl Default for PageState {
    fn default() -> Self {
        Self {
            status: PageStatus::Fetching,
            page: 0,
        }
    }
}

impl PageState {
    pub fn is_terminal(&self) -> bool {
        self.status.is_terminal()
    }

    pub fn next(self, event: PageEvent) -> PageState {
        use PageStatus::*;
        if self.is_terminal() {
            return self;
        }
        let status = match (self.status, event) {
            (_, PageEvent::Loaded { new_tokens, has_next }) => {
                if new_tokens > 0 && has_next {
                    return PageState {
                        status: Fetching,
                        page: self.page + 1,
                    };
                }
                DoneEmpty
            }
            (RetryAfterScroll, _) => DoneIntercepted,
            (_, PageEvent::TimedOut) => DoneTimeout,
            (_, PageEvent::ConnectionReset) => DoneStale,
            (_, PageEvent::Failed) => RetryAfterScroll,
        };
        PageState { status, page: self.page }
    }
}
