use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use clap::Args;
use nftport_core::report::Format;
use serde::{Deserialize, Deserializer};

/// Per-subcommand defaults. Section keys match subcommand names and the keys
/// inside each section match the long flag names.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub crawl: CrawlArgs,
    pub analyze: AnalyzeArgs,
    pub optimize: OptimizeArgs,
    pub report: ReportArgs,
    pub replay_generate: GenerateArgs,
    pub replay_serve: ServeArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Trade cutoff as epoch seconds. Parses an integer or a `YYYY-MM-DD` date
/// (midnight UTC).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cutoff(pub i64);

impl FromStr for Cutoff {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(epoch) = s.trim().parse::<i64>() {
            return Ok(Cutoff(epoch));
        }
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
            .map(|d| Cutoff(d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp()))
            .map_err(|_| format!("`{s}` is neither epoch seconds nor a YYYY-MM-DD date"))
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<'de> Deserialize<'de> for Cutoff {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Epoch(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Epoch(e) => Ok(Cutoff(e)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

macro_rules! layered {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl $ty {
            /// Fills every unset field from `base`.
            pub fn or(self, base: $ty) -> $ty {
                $ty { $($field: self.$field.or(base.$field)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CrawlArgs {
    /// Marketplace base URL (overridden by PIPELINE_ENDPOINT).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Directory for checkpoint, collection index and cookies [default: checkpoint].
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Dataset output [default: dataset.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of top collections by volume [default: 50].
    #[arg(long)]
    pub collection_limit: Option<usize>,
    /// Tokens per listing page [default: 50].
    #[arg(long)]
    pub page_size_tokens: Option<usize>,
    /// Activities per history page [default: 500].
    #[arg(long)]
    pub page_size_activities: Option<usize>,
    /// Request rate ceiling per second [default: 2].
    #[arg(long)]
    pub qps: Option<f64>,
    /// Seconds between request starts [default: 0.4].
    #[arg(long)]
    pub download_delay: Option<f64>,
    /// Concurrent requests per host [default: 2].
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Request timeout in seconds [default: 20].
    #[arg(long)]
    pub timeout: Option<u64>,
    /// Proxy URL; repeat for a rotation pool.
    #[arg(long)]
    pub proxy: Option<Vec<String>>,
    /// Save the cookie jar with the checkpoint [default: true].
    #[arg(long)]
    pub cookie_persistence: Option<bool>,
    /// Route requests through the proxies instead of only tagging them [default: true].
    #[arg(long)]
    pub route_through_proxies: Option<bool>,
    #[arg(long)]
    pub user_agent: Option<String>,
    #[arg(long)]
    pub accept: Option<String>,
    /// Pause before retrying a failed page, in milliseconds [default: 1000].
    #[arg(long)]
    pub retry_backoff_ms: Option<u64>,
    /// Stop after this many tokens; a later run resumes.
    #[arg(long)]
    pub stop_after_tokens: Option<usize>,
}

layered!(CrawlArgs {
    endpoint,
    checkpoint_dir,
    out,
    collection_limit,
    page_size_tokens,
    page_size_activities,
    qps,
    download_delay,
    concurrency,
    timeout,
    proxy,
    cookie_persistence,
    route_through_proxies,
    user_agent,
    accept,
    retry_backoff_ms,
    stop_after_tokens,
});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct AnalyzeArgs {
    /// Dataset file [default: dataset.json].
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output file [default: returns.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Minimum trades per token [default: 2].
    #[arg(long)]
    pub min_trades: Option<usize>,
    /// Ignore trades after this time (epoch seconds or YYYY-MM-DD).
    #[arg(long)]
    pub cutoff: Option<Cutoff>,
}

layered!(AnalyzeArgs { dataset, out, min_trades, cutoff });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct OptimizeArgs {
    /// Dataset file [default: dataset.json].
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Only this series; all series otherwise.
    #[arg(long)]
    pub series: Option<String>,
    /// Assets per portfolio, most traded first [default: 10].
    #[arg(long)]
    pub top: Option<usize>,
    /// Risk-free rate per grid period [default: 0].
    #[arg(long)]
    pub rf: Option<f64>,
    /// Resampling period in seconds [default: 86400].
    #[arg(long)]
    pub grid_period: Option<i64>,
    /// Ignore trades after this time and end the window there.
    #[arg(long)]
    pub cutoff: Option<Cutoff>,
    /// Minimum trades per token [default: 2].
    #[arg(long)]
    pub min_trades: Option<usize>,
    #[arg(long)]
    pub ridge_epsilon: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub objective_tolerance: Option<f64>,
    /// Output file [default: portfolio.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

layered!(OptimizeArgs {
    dataset,
    series,
    top,
    rf,
    grid_period,
    cutoff,
    min_trades,
    ridge_epsilon,
    max_iterations,
    objective_tolerance,
    out,
});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReportArgs {
    /// Portfolio file written by `optimize`.
    #[arg(long, conflicts_with = "returns")]
    pub portfolio: Option<PathBuf>,
    /// Returns file written by `analyze`.
    #[arg(long)]
    pub returns: Option<PathBuf>,
    /// csv or text [default: csv].
    #[arg(long)]
    pub format: Option<Format>,
    /// Output file; stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

layered!(ReportArgs { portfolio, returns, format, out });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GenerateArgs {
    /// [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 5]
    #[arg(long)]
    pub collections: Option<usize>,
    /// Tokens per collection [default: 20].
    #[arg(long)]
    pub tokens: Option<usize>,
    /// Fewest sales per token [default: 2].
    #[arg(long)]
    pub min_trades: Option<usize>,
    /// Most sales per token [default: 60].
    #[arg(long)]
    pub max_trades: Option<usize>,
    /// Most list/bid/cancel events mixed into each token [default: 0].
    #[arg(long)]
    pub max_non_sale: Option<usize>,
    /// [default: fixture.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

layered!(GenerateArgs {
    seed,
    collections,
    tokens,
    min_trades,
    max_trades,
    max_non_sale,
    out,
});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ServeArgs {
    /// [default: fixture.json]
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// [default: 127.0.0.1]
    #[arg(long)]
    pub host: Option<String>,
    /// [default: 8080]
    #[arg(long)]
    pub port: Option<u16>,
}

layered!(ServeArgs { fixture, host, port });
