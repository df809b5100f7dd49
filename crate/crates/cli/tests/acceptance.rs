//! Acceptance checks. Runs without the libtest harness and prints one
//! `[PASS]`/`[FAIL]` line per criterion; exits non-zero if any fail.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use nalgebra::{DMatrix, DVector};
use nftport_core::model::{Dataset, MomentEstimate, PortfolioAllocation, PriceSeries, TokenRef};
use nftport_core::optimize::{grid_sharpe_oracle, max_sharpe_weights, OptimizerConfig};
use nftport_core::report::{render_portfolio_table, Format};
use nftport_core::returns::{interval_adjusted_returns, simple_returns, time_weighted_return};
use nftport_ingest::{run_crawl, run_crawl_with, CrawlConfig, CrawlOutcome, Crawler, RunOptions};
use nftport_replay::{generate_fixture, serve, FixtureParams, ReplayServer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const RETURN_REL_TOL: f64 = 1e-12;
const RETURN_RUNTIME: Duration = Duration::from_secs(10);
const CLOSED_FORM_TOL: f64 = 1e-6;
const CLOSED_FORM_RUNTIME: Duration = Duration::from_secs(30);
const GRID_STEP: f64 = 0.01;
const GRID_TOL: f64 = 1e-6;
const BUDGET_TOL: f64 = 1e-9;
const NONNEG_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-6;
const PERMUTATION_TOL: f64 = 1e-9;
const RATE_WINDOW: Duration = Duration::from_secs(10);
const RATE_MAX_REQUESTS: usize = 21;
const MIN_GAP_SECONDS: f64 = 0.4 - 0.010;
const END_TO_END_RUNTIME: Duration = Duration::from_secs(60);

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: [(&str, &str, Check); 11] = [
        ("AC1", "return engine vs arbitrary-precision fold", ac1_return_oracle),
        ("AC2", "return identities", ac2_return_identities),
        ("AC3", "optimizer vs closed form (diagonal)", ac3_closed_form),
        ("AC4", "optimizer vs 0.01 grid (3 assets)", ac4_grid_oracle),
        ("AC5", "feasibility, symmetry, permutation", ac5_feasibility),
        ("AC6", "pagination exactness", ac6_pagination),
        ("AC7", "rate limiting", ac7_rate_limit),
        ("AC8", "resume equivalence", ac8_resume),
        ("AC9", "buyNow purity", ac9_buy_now_purity),
        ("AC10", "report golden", ac10_report_golden),
        ("AC11", "end-to-end determinism", ac11_end_to_end),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {id} {name}: {detail} ({secs:.2} s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {detail} ({secs:.2} s)");
            }
        }
    }
    println!("acceptance: {}/{} passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn series(timestamps: Vec<i64>, prices: Vec<f64>) -> PriceSeries {
    PriceSeries::new(TokenRef::new("S", "T"), timestamps, prices)
}

fn random_series(rng: &mut ChaCha8Rng, len: usize) -> PriceSeries {
    let mut t = rng.random_range(1_600_000_000i64..1_700_000_000);
    let mut p: f64 = rng.random_range(0.001..10_000.0);
    let (mut ts, mut ps) = (vec![t], vec![p]);
    for _ in 1..len {
        t += rng.random_range(1..=1_000_000);
        p *= rng.random_range(-0.3f64..0.3).exp();
        ts.push(t);
        ps.push(p);
    }
    series(ts, ps)
}

type Big = FBig<HalfEven, 2>;

fn big(x: f64) -> Big {
    Big::try_from(x).unwrap().with_precision(128).value()
}

/// Product of (1 + R_i)^(1/Δt_i) minus one, at 128 bits, with each R_i
/// formed exactly from the f64 prices. The product is taken as one exp of
/// the summed exponents.
fn oracle_twr(s: &PriceSeries) -> f64 {
    let one = big(1.0);
    let mut exponent = big(0.0);
    for i in 1..s.len() {
        let p0 = big(s.prices[i - 1]);
        let r = (big(s.prices[i]) - &p0) / &p0;
        let dt = big((s.timestamps[i] - s.timestamps[i - 1]) as f64);
        exponent += (&one + &r).ln() / dt;
    }
    (exponent.exp() - one).to_f64().value()
}

fn ac1_return_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let all: Vec<PriceSeries> = (0..1000)
        .map(|_| {
            let len = rng.random_range(2..=200);
            random_series(&mut rng, len)
        })
        .collect();

    let start = Instant::now();
    let got: Vec<f64> = all.iter().map(|s| time_weighted_return(s).unwrap().total_return).collect();
    let engine = start.elapsed();

    let mut worst = 0.0f64;
    for (s, g) in all.iter().zip(&got) {
        let want = oracle_twr(s);
        let rel = if want == 0.0 { g.abs() } else { (g - want).abs() / want.abs() };
        worst = worst.max(rel);
    }
    ensure(worst <= RETURN_REL_TOL, || format!("worst relative error {worst:e}"))?;
    ensure(engine < RETURN_RUNTIME, || format!("engine took {engine:?}"))?;
    Ok(format!("1000 series, worst rel err {worst:.1e}, engine {:.1} ms", engine.as_secs_f64() * 1e3))
}

fn ac2_return_identities() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    for _ in 0..100 {
        let len = rng.random_range(2..=50);
        let mut s = random_series(&mut rng, len);
        let t0 = s.timestamps[0];
        s.timestamps = (0..len as i64).map(|i| t0 + i).collect();
        let simple = simple_returns(&s).unwrap();
        let adjusted: Vec<f64> = interval_adjusted_returns(&s).unwrap().iter().map(|r| r.adjusted_return).collect();
        ensure(simple == adjusted, || "Δt=1 adjusted return differs from simple return".into())?;
    }

    for _ in 0..100 {
        let len = rng.random_range(2..=50);
        let mut s = random_series(&mut rng, len);
        let p = s.prices[0];
        s.prices = vec![p; len];
        let total = time_weighted_return(&s).unwrap().total_return;
        ensure(total == 0.0, || format!("constant price gave {total:e}"))?;
    }

    let mut splits = 0;
    for _ in 0..100 {
        let len = rng.random_range(3..=60);
        let s = random_series(&mut rng, len);
        let whole = time_weighted_return(&s).unwrap().total_return;
        for k in 1..len - 1 {
            let head = series(s.timestamps[..=k].to_vec(), s.prices[..=k].to_vec());
            let tail = series(s.timestamps[k..].to_vec(), s.prices[k..].to_vec());
            let a = time_weighted_return(&head).unwrap().total_return;
            let b = time_weighted_return(&tail).unwrap().total_return;
            let composed = a + b + a * b;
            ensure((composed - whole).abs() <= RETURN_REL_TOL * whole.abs(), || {
                format!("split {k}: {composed:e} vs {whole:e}")
            })?;
            splits += 1;
        }
    }

    for _ in 0..100 {
        let len = rng.random_range(2..=60);
        let s = random_series(&mut rng, len);
        let base = time_weighted_return(&s).unwrap().total_return;
        for c in [1e-6, 1.0, 1e6] {
            let scaled = series(s.timestamps.clone(), s.prices.iter().map(|p| p * c).collect());
            let got = time_weighted_return(&scaled).unwrap().total_return;
            ensure((got - base).abs() <= RETURN_REL_TOL * base.abs(), || {
                format!("scale {c}: {got:e} vs {base:e}")
            })?;
        }
    }
    Ok(format!("Δt=1, constant price, {splits} split points, 3 scales"))
}

fn assets(n: usize) -> Vec<TokenRef> {
    (0..n).map(|i| TokenRef::new("S", format!("T{i}"))).collect()
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.2..0.2));
    &a * a.transpose() + DMatrix::identity(n, n) * 1e-4
}

fn check_feasible(w: &[f64]) -> Result<(), String> {
    let sum: f64 = w.iter().sum();
    ensure((sum - 1.0).abs() <= BUDGET_TOL, || format!("weights sum to {sum}"))?;
    ensure(w.iter().all(|&x| x >= -NONNEG_TOL), || format!("negative weight in {w:?}"))
}

fn ac3_closed_form() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let mu = DVector::from_fn(n, |_, _| rng.random_range(0.0..0.3));
        let var = DVector::from_fn(n, |_, _| rng.random_range(0.0005..0.2));
        if mu.iter().all(|&m| m == 0.0) {
            continue;
        }
        let raw: Vec<f64> = (0..n).map(|i| mu[i] / var[i]).collect();
        let total: f64 = raw.iter().sum();
        let m = MomentEstimate::from_moments(assets(n), mu, DMatrix::from_diagonal(&var));
        let got = max_sharpe_weights(&m, &OptimizerConfig::default()).map_err(|e| e.to_string())?;
        check_feasible(&got.weights)?;
        for (g, r) in got.weights.iter().zip(&raw) {
            worst = worst.max((g - r / total).abs());
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= CLOSED_FORM_TOL, || format!("worst component error {worst:e}"))?;
    ensure(elapsed < CLOSED_FORM_RUNTIME, || format!("took {elapsed:?}"))?;
    Ok(format!("100 instances, worst component error {worst:.1e}"))
}

fn ac4_grid_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    let mut slack = f64::INFINITY;
    while checked < 50 {
        let cov = random_pd(&mut rng, 3);
        let mu = DVector::from_fn(3, |_, _| rng.random_range(-0.05..0.2));
        if mu.iter().all(|&m| m <= 0.0) {
            continue;
        }
        let m = MomentEstimate::from_moments(assets(3), mu, cov);
        let got = max_sharpe_weights(&m, &OptimizerConfig::default()).map_err(|e| e.to_string())?;
        let (_, best) = grid_sharpe_oracle(&m, GRID_STEP, 0.0).map_err(|e| e.to_string())?;
        ensure(got.sharpe >= best - GRID_TOL, || format!("solver {} < grid {best}", got.sharpe))?;
        slack = slack.min(got.sharpe - best);
        checked += 1;
    }
    Ok(format!("50 instances, min(solver − grid) = {slack:.2e}"))
}

fn ac5_feasibility() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = OptimizerConfig::default();
    let mut solves = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let cov = random_pd(&mut rng, n);
        let mu = DVector::from_fn(n, |_, _| rng.random_range(-0.1..0.2));
        if mu.iter().all(|&m| m <= 0.0) {
            continue;
        }
        let base = max_sharpe_weights(&MomentEstimate::from_moments(assets(n), mu.clone(), cov.clone()), &cfg)
            .map_err(|e| e.to_string())?;
        check_feasible(&base.weights)?;

        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mu_p = DVector::from_fn(n, |i, _| mu[perm[i]]);
        let cov_p = DMatrix::from_fn(n, n, |i, j| cov[(perm[i], perm[j])]);
        let permuted = max_sharpe_weights(&MomentEstimate::from_moments(assets(n), mu_p, cov_p), &cfg)
            .map_err(|e| e.to_string())?;
        check_feasible(&permuted.weights)?;
        for i in 0..n {
            let d = (permuted.weights[i] - base.weights[perm[i]]).abs();
            ensure(d <= PERMUTATION_TOL, || format!("permutation moved weight by {d:e}"))?;
        }
        solves += 2;
    }

    for _ in 0..20 {
        let m = rng.random_range(0.001..0.2);
        let v = rng.random_range(0.001..0.3);
        let est = MomentEstimate::from_moments(assets(2), DVector::from_element(2, m), DMatrix::from_diagonal_element(2, 2, v));
        let got = max_sharpe_weights(&est, &cfg).map_err(|e| e.to_string())?;
        check_feasible(&got.weights)?;
        for w in &got.weights {
            ensure((w - 0.5).abs() <= SYMMETRY_TOL, || format!("i.i.d. pair gave {:?}", got.weights))?;
        }
        solves += 1;
    }
    Ok(format!("{solves} solves feasible, permutation and i.i.d. symmetry hold"))
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Runtime::new().unwrap()
}

async fn start(fixture: nftport_replay::Fixture) -> ReplayServer {
    serve(fixture, "127.0.0.1:0".parse().unwrap()).await.unwrap()
}

fn fast_config(server: &ReplayServer) -> CrawlConfig {
    CrawlConfig {
        qps_limit: 10_000.0,
        download_delay_seconds: 0.0,
        retry_backoff_ms: 10,
        route_through_proxies: false,
        ..CrawlConfig::with_endpoint(server.base_url())
    }
}

fn ac6_pagination() -> Result<String, String> {
    runtime().block_on(async {
        let fixture = generate_fixture(6, 1, 1, 1234..=1234);
        let c = &fixture.collections[0];
        let token = TokenRef::new(c.collection.collection_name.clone(), c.tokens[0].token.clone());
        let server = start(fixture).await;
        let fetched = Crawler::new(fast_config(&server))
            .unwrap()
            .fetch_trade_history(&token)
            .await
            .map_err(|e| e.to_string())?;
        let offsets: Vec<String> = server
            .requests_to("/tokens/")
            .iter()
            .map(|r| r.query_param("offset").unwrap_or_default())
            .collect();
        ensure(offsets == ["0", "500", "1000", "1500"], || format!("offsets {offsets:?}"))?;
        ensure(fetched.series.len() == 1234, || format!("{} events", fetched.series.len()))?;
        Ok(format!("offsets {}, {} events", offsets.join("/"), fetched.series.len()))
    })
}

fn ac7_rate_limit() -> Result<String, String> {
    runtime().block_on(async {
        let server = start(generate_fixture(7, 3, 20, 1..=600)).await;
        let config = CrawlConfig {
            route_through_proxies: false,
            ..CrawlConfig::with_endpoint(server.base_url())
        };
        let dir = tempfile::tempdir().unwrap();
        let finished = tokio::time::timeout(RATE_WINDOW, run_crawl(&config, dir.path())).await;
        ensure(finished.is_err(), || "crawl finished inside the window; fixture too small".into())?;

        let log = server.requests();
        let first = log.first().ok_or("no requests logged")?.at;
        let in_window = log.iter().filter(|r| r.at - first <= RATE_WINDOW).count();
        let min_gap = log
            .windows(2)
            .map(|w| (w[1].at - w[0].at).as_secs_f64())
            .fold(f64::INFINITY, f64::min);
        ensure(in_window <= RATE_MAX_REQUESTS, || format!("{in_window} requests in 10 s"))?;
        ensure(min_gap >= MIN_GAP_SECONDS, || format!("min gap {min_gap:.4} s"))?;
        Ok(format!("{in_window} requests in 10 s, min start gap {min_gap:.3} s"))
    })
}

fn sha256(path: &Path) -> String {
    Sha256::digest(std::fs::read(path).unwrap()).iter().map(|b| format!("{b:02x}")).collect()
}

fn ac8_resume() -> Result<String, String> {
    runtime().block_on(async {
        let mut runs = 0;
        for seed in [11u64, 12, 13] {
            let server = start(generate_fixture(seed, 3, 6, 0..=700)).await;
            let config = fast_config(&server);
            let whole = tempfile::tempdir().unwrap();
            let reference = sha256(&run_crawl(&config, whole.path()).await.map_err(|e| e.to_string())?);

            let mut plans: Vec<Vec<usize>> = [1, 7, 17].iter().map(|&k| vec![k]).collect();
            plans.push(vec![2, 5, 4]);
            for plan in plans {
                let dir = tempfile::tempdir().unwrap();
                for stop in &plan {
                    let options = RunOptions {
                        stop_after_tokens: Some(*stop),
                        ..Default::default()
                    };
                    let outcome = run_crawl_with(&config, dir.path(), &options).await.map_err(|e| e.to_string())?;
                    ensure(matches!(outcome, CrawlOutcome::Interrupted { .. }), || {
                        format!("seed {seed}: plan {plan:?} did not interrupt")
                    })?;
                }
                let resumed = sha256(&run_crawl(&config, dir.path()).await.map_err(|e| e.to_string())?);
                ensure(resumed == reference, || format!("seed {seed}: plan {plan:?} diverged"))?;
                runs += 1;
            }
        }
        Ok(format!("3 seeds × {} interrupted runs match the uninterrupted hash", runs / 3))
    })
}

fn ac9_buy_now_purity() -> Result<String, String> {
    runtime().block_on(async {
        let mut observations = 0;
        let mut skipped_events = 0;
        for seed in [21u64, 22, 23, 24] {
            let fixture = FixtureParams::new(seed, 3, 5, 0..=300).with_non_sale_events(1..=200).generate();
            let mut sales: BTreeMap<&str, HashSet<(i64, u64)>> = BTreeMap::new();
            for t in fixture.collections.iter().flat_map(|c| &c.tokens) {
                sales.insert(&t.token, t.sales().map(|e| (e.block_time, e.price.to_bits())).collect());
                skipped_events += t.activities.len() - t.sales().count();
            }
            let expected: usize = sales.values().map(HashSet::len).sum();
            let sales: BTreeMap<String, HashSet<(i64, u64)>> = sales.into_iter().map(|(k, v)| (k.to_string(), v)).collect();

            let server = start(fixture).await;
            let dir = tempfile::tempdir().unwrap();
            let dataset = Dataset::load(run_crawl(&fast_config(&server), dir.path()).await.map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let mut seen = 0;
            for s in dataset.tokens() {
                let allowed = &sales[&s.token.token];
                for (t, p) in s.observations() {
                    ensure(allowed.contains(&(t, p.to_bits())), || format!("{} has non-sale point at {t}", s.token))?;
                    seen += 1;
                }
            }
            ensure(seen == expected, || format!("seed {seed}: {seen} observations, {expected} sales"))?;
            observations += seen;
        }
        Ok(format!("{observations} observations all sales; {skipped_events} other events excluded"))
    })
}

const TABLE_ROWS: [(&str, f64); 10] = [
    ("5K9Mwj6aMMZc1JatB4Mquq94oBywm4BLJyUzfzaub3w7y", 0.1183),
    ("CEvbkmMw1DTi8Dyr3KNQ7YfDaYpMIDGSStnNu5bHPLN", 0.1054),
    ("2pF1k1zuplhFw9DnGjU6N2M2KXnbnHb5G5btwUo73HA", 0.1032),
    ("E6x1W8FxuFJeFdybR1XAXTDusHLYkNT4Zfn4840WTh", 0.1011),
    ("9QgfQAEf9TbPBLJd6W3oUeuzcdGM2Q3KYmdkqqfQ08bku", 0.0984),
    ("6MxXH9rU31e2fJRhQKCVewm2UK3gy3cZGyVigiq166M9Y", 0.0913),
    ("7G4JpPkMyPKnPMMktAo8jNkDN4gi4fDdp9xY0RWtcwKxw", 0.0899),
    ("9YQemwCnsYikYGE9isEVXBYNvJhaAdTrTCEt14QpVZjy5", 0.0871),
    ("BdxJ5YFce3L6h1D6NsnFr9qW5WyRwvZG3mNRb7X5BNkZB", 0.0861),
    ("4e9WnaTxm6gCKZqbExiiNC2ZZLzzAq4pE44dKC7gH6q97", 0.0793),
];

const TABLE_CSV: &str = "Series Name,Token ID,Weight
Froganas,5K9Mwj6aMMZc1JatB4Mquq94oBywm4BLJyUzfzaub3w7y,0.1183
Froganas,CEvbkmMw1DTi8Dyr3KNQ7YfDaYpMIDGSStnNu5bHPLN,0.1054
Froganas,2pF1k1zuplhFw9DnGjU6N2M2KXnbnHb5G5btwUo73HA,0.1032
Froganas,E6x1W8FxuFJeFdybR1XAXTDusHLYkNT4Zfn4840WTh,0.1011
Froganas,9QgfQAEf9TbPBLJd6W3oUeuzcdGM2Q3KYmdkqqfQ08bku,0.0984
Froganas,6MxXH9rU31e2fJRhQKCVewm2UK3gy3cZGyVigiq166M9Y,0.0913
Froganas,7G4JpPkMyPKnPMMktAo8jNkDN4gi4fDdp9xY0RWtcwKxw,0.0899
Froganas,9YQemwCnsYikYGE9isEVXBYNvJhaAdTrTCEt14QpVZjy5,0.0871
Froganas,BdxJ5YFce3L6h1D6NsnFr9qW5WyRwvZG3mNRb7X5BNkZB,0.0861
Froganas,4e9WnaTxm6gCKZqbExiiNC2ZZLzzAq4pE44dKC7gH6q97,0.0793
";

fn ac10_report_golden() -> Result<String, String> {
    // Listed out of order on purpose: rendering must rank by weight.
    let mut rows = TABLE_ROWS.to_vec();
    rows.reverse();
    rows.swap(0, 4);
    let alloc = PortfolioAllocation {
        assets: rows.iter().map(|(t, _)| TokenRef::new("Froganas", *t)).collect(),
        weights: rows.iter().map(|(_, w)| *w).collect(),
        sharpe: 0.0,
        risk_free_rate: 0.0,
    };
    let csv = render_portfolio_table(&alloc, Format::Csv);
    ensure(csv == TABLE_CSV, || format!("CSV differs:\n{csv}"))?;
    let first_row = "Froganas,5K9Mwj6aMMZc1JatB4Mquq94oBywm4BLJyUzfzaub3w7y,0.1183\n";
    ensure(csv.lines().nth(1) == first_row.lines().next(), || "first data row differs".into())?;
    Ok(format!("{} bytes identical, first row {}", csv.len(), first_row.trim_end()))
}

fn pipeline(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pipeline"))
        .current_dir(dir)
        .env_remove("PIPELINE_ENDPOINT")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`pipeline {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn ac11_end_to_end() -> Result<String, String> {
    let start = Instant::now();
    let rt = runtime();
    let server = rt.block_on(start_server(generate_fixture(42, 3, 12, 2..=80)));
    let config = format!(
        r#"{{"crawl": {{"endpoint": "{}", "qps": 10000, "download-delay": 0, "route-through-proxies": false}}}}"#,
        server.base_url()
    );

    let outputs = ["dataset.json", "returns.json", "portfolio.json", "portfolio.csv", "returns.csv"];
    let mut digests = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        std::fs::write(d.join("config.json"), &config).unwrap();
        pipeline(d, &["crawl", "--config", "config.json"])?;
        pipeline(d, &["analyze", "--dataset", "dataset.json", "--out", "returns.json"])?;
        pipeline(d, &["optimize", "--dataset", "dataset.json", "--out", "portfolio.json"])?;
        pipeline(d, &["report", "--portfolio", "portfolio.json", "--out", "portfolio.csv"])?;
        pipeline(d, &["report", "--returns", "returns.json", "--out", "returns.csv"])?;
        digests.push(outputs.iter().map(|f| sha256(&d.join(f))).collect::<Vec<_>>());
    }
    for (i, name) in outputs.iter().enumerate() {
        ensure(digests[0][i] == digests[1][i], || format!("{name} differs between runs"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < END_TO_END_RUNTIME, || format!("took {elapsed:?}"))?;
    Ok(format!("{} outputs byte-identical across 2 runs in {:.1} s", outputs.len(), elapsed.as_secs_f64()))
}

async fn start_server(fixture: nftport_replay::Fixture) -> ReplayServer {
    start(fixture).await
}
