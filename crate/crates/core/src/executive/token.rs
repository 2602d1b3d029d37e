use serde::{Deserialize, Serialize};

pub const DEFAULT_LEASE_S: f64 = 120.0;

/// Lease-based command authority; at most one holder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlToken {
    pub holder: Option<String>,
    pub acquired_at: f64,
    pub lease_s: f64,
}

impl ControlToken {
    pub fn new(lease_s: f64) -> Self {
        Self { holder: None, acquired_at: 0.0, lease_s }
    }

    /// True while the lease covers `now` (expiry instant excluded).
    pub fn is_live(&self, now: f64) -> bool {
        self.holder.is_some() && now < self.acquired_at + self.lease_s
    }

    pub fn live_holder(&self, now: f64) -> Option<&str> {
        if self.is_live(now) {
            self.holder.as_deref()
        } else {
            None
        }
    }

    pub fn is_holder(&self, operator: &str, now: f64) -> bool {
        self.live_holder(now) == Some(operator)
    }

    /// Grants when free, expired, or already held by `operator` (which renews);
    /// otherwise returns the current holder.
    pub fn acquire(&mut self, operator: &str, now: f64) -> Result<(), String> {
        match self.live_holder(now) {
            Some(h) if h != operator => Err(h.to_string()),
            _ => {
                self.holder = Some(operator.to_string());
                self.acquired_at = now;
                Ok(())
            }
        }
    }

    /// Releases if `operator` holds the token; returns whether it did.
    pub fn release(&mut self, operator: &str) -> bool {
        if self.holder.as_deref() == Some(operator) {
            self.holder = None;
            true
        } else {
            false
        }
    }

    /// Clears an expired lease; returns the former holder.
    pub fn expire(&mut self, now: f64) -> Option<String> {
        if self.holder.is_some() && !self.is_live(now) {
            self.holder.take()
        } else {
            None
        }
    }
}
