use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{Classifier, ClassifierError, PredictionDistribution};

/// Spaces request starts at least `1/qps` apart. The next free slot is
/// claimed under a lock, so concurrent callers queue up in order.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    /// `qps <= 0` or non-finite disables limiting.
    pub fn new(qps: f64) -> Self {
        let interval = (qps.is_finite() && qps > 0.0).then(|| Duration::from_secs_f64(1.0 / qps));
        RateLimiter {
            interval,
            next_slot: Mutex::new(None),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(0.0)
    }

    /// Blocks until the caller may start a request.
    pub fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let slot = {
            let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = match *next {
                Some(t) if t > now => t,
                _ => now,
            };
            *next = Some(slot + interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            initial_backoff: Duration::from_millis(200),
            max_backoff: Duration::from_secs(10),
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.min(30));
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }
}

#[derive(Deserialize)]
struct RemoteResponse {
    p_hateful: f64,
}

/// Classifier behind an HTTP endpoint that accepts `{"text": ...}` and
/// answers `{"p_hateful": ...}`.
#[derive(Debug)]
pub struct RemoteClassifier {
    endpoint: String,
    client: reqwest::blocking::Client,
    limiter: RateLimiter,
    retry: RetryPolicy,
    auth_header: Option<(String, String)>,
}

impl RemoteClassifier {
    pub fn new(endpoint: &str, qps: f64) -> Result<Self, ClassifierError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ClassifierError::Config(format!("http client: {e}")))?;
        Ok(RemoteClassifier {
            endpoint: endpoint.to_string(),
            client,
            limiter: RateLimiter::new(qps),
            retry: RetryPolicy::default(),
            auth_header: None,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Adds a header given as `Name: value`, e.g. `Authorization: Bearer t`.
    pub fn with_auth_header(mut self, header: &str) -> Result<Self, ClassifierError> {
        let (name, value) = header
            .split_once(':')
            .map(|(n, v)| (n.trim(), v.trim()))
            .filter(|(n, _)| !n.is_empty())
            .ok_or_else(|| {
                ClassifierError::Config(format!(
                    "auth header must look like `Name: value`, got `{header}`"
                ))
            })?;
        reqwest::header::HeaderName::from_bytes(name.as_bytes())
            .map_err(|e| ClassifierError::Config(format!("auth header name: {e}")))?;
        reqwest::header::HeaderValue::from_str(value)
            .map_err(|e| ClassifierError::Config(format!("auth header value: {e}")))?;
        self.auth_header = Some((name.to_string(), value.to_string()));
        Ok(self)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, text: &str) -> Result<f64, String> {
        let mut request = self
            .client
            .post(&self.endpoint)
            .json(&serde_json::json!({ "text": text }));
        if let Some((name, value)) = &self.auth_header {
            request = request.header(name.as_str(), value.as_str());
        }
        let response = request.send().map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let body = response.text().map_err(|e| e.to_string())?;
        let parsed: RemoteResponse =
            serde_json::from_str(&body).map_err(|e| format!("bad response body: {e}"))?;
        if !(0.0..=1.0).contains(&parsed.p_hateful) {
            return Err(format!("p_hateful {} outside [0, 1]", parsed.p_hateful));
        }
        Ok(parsed.p_hateful)
    }
}

impl Classifier for RemoteClassifier {
    fn predict(&self, text: &str) -> Result<PredictionDistribution, ClassifierError> {
        let mut retry = 0;
        loop {
            self.limiter.acquire();
            match self.attempt(text) {
                Ok(p) => return Ok(PredictionDistribution::from_p_hateful(p)),
                Err(message) if retry < self.retry.max_retries => {
                    let wait = self.retry.backoff(retry);
                    log::warn!("request for `{text}` failed ({message}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                    retry += 1;
                }
                Err(message) => {
                    return Err(ClassifierError::Transport {
                        text: text.to_string(),
                        attempts: retry + 1,
                        message,
                    })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_retries: 10,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_millis(700),
        };
        assert_eq!(p.backoff(0), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(400));
        assert_eq!(p.backoff(3), Duration::from_millis(700));
        assert_eq!(p.backoff(40), Duration::from_millis(700));
    }

    #[test]
    fn limiter_spaces_requests() {
        let limiter = RateLimiter::new(20.0);
        let start = Instant::now();
        for _ in 0..5 {
            limiter.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(195));
    }

    #[test]
    fn auth_header_must_have_name() {
        let c = RemoteClassifier::new("http://127.0.0.1:9", 0.0).unwrap();
        assert!(c.with_auth_header("no colon").is_err());
        let c = RemoteClassifier::new("http://127.0.0.1:9", 0.0).unwrap();
        assert!(c.with_auth_header("Authorization: Bearer abc").is_ok());
    }
}
