//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::thread::JoinHandle;

use lace_core::api::{serve, AppState, ServerConfig};
use lace_core::raster::Rgba;
use num_rational::Ratio;
use rand::Rng;

type Q = Ratio<i64>;

fn round_half_up(q: Q) -> i64 {
    (q + Q::new(1, 2)).floor().to_integer()
}

/// Straight-alpha "over" evaluated in exact rationals and rounded once at
/// the end. `opacity` is `num / den`.
pub fn composite_oracle(src: Rgba, opacity_num: i64, opacity_den: i64, dst: Rgba) -> Rgba {
    let sa_byte = round_half_up(Q::new(src.a as i64 * opacity_num, opacity_den));
    if sa_byte == 0 {
        return dst;
    }
    let sa = Q::new(sa_byte, 255);
    let da = Q::new(dst.a as i64, 255);
    let one = Q::from_integer(1);
    let ao = sa + da * (one - sa);
    let ch = |s: u8, d: u8| -> u8 {
        let v = (Q::from_integer(s as i64) * sa + Q::from_integer(d as i64) * da * (one - sa)) / ao;
        round_half_up(v) as u8
    };
    Rgba::new(
        ch(src.r, dst.r),
        ch(src.g, dst.g),
        ch(src.b, dst.b),
        round_half_up(ao * 255) as u8,
    )
}

/// Friedman statistic straight from the rank-sum formula in exact
/// rationals. Ranks come from pairwise counting: rank = less + (equal + 1) / 2.
pub fn friedman_oracle(rows: &[Vec<i64>]) -> (f64, usize) {
    let n = rows.len() as i64;
    let k = rows[0].len() as i64;
    let mut rank_sums = vec![Q::from_integer(0); k as usize];
    let mut tie_sum = 0i64;
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            let less = row.iter().filter(|x| *x < v).count() as i64;
            let equal = row.iter().filter(|x| *x == v).count() as i64;
            rank_sums[j] += Q::new(2 * less + equal + 1, 2);
        }
        let mut seen: Vec<i64> = Vec::new();
        for v in row {
            if !seen.contains(v) {
                seen.push(*v);
                let t = row.iter().filter(|x| *x == v).count() as i64;
                tie_sum += t * t * t - t;
            }
        }
    }
    let sum_sq: Q = rank_sums.iter().map(|r| r * r).sum();
    let raw = Q::new(12, n * k * (k + 1)) * sum_sq - Q::from_integer(3 * n * (k + 1));
    let correction = Q::from_integer(1) - Q::new(tie_sum, n * k * (k * k - 1));
    let chi2 = if correction <= Q::from_integer(0) { Q::from_integer(0) } else { raw / correction };
    (*chi2.numer() as f64 / *chi2.denom() as f64, (k - 1) as usize)
}

/// Exact signed-rank distribution by enumerating every sign assignment of
/// the non-zero differences. Returns `(P(W+ < w), P(W+ <= w))` for the
/// observed `W+`, or `None` when every difference is zero. Ranks are
/// doubled to stay integral.
pub fn wilcoxon_exact_step(a: &[i64], b: &[i64]) -> Option<(f64, f64)> {
    let d: Vec<i64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0).collect();
    let m = d.len();
    if m == 0 {
        return None;
    }
    let abs: Vec<i64> = d.iter().map(|v| v.abs()).collect();
    let ranks2: Vec<i64> = abs
        .iter()
        .map(|v| {
            let less = abs.iter().filter(|x| *x < v).count() as i64;
            let equal = abs.iter().filter(|x| *x == v).count() as i64;
            2 * less + equal + 1
        })
        .collect();
    let observed: i64 = d.iter().zip(&ranks2).filter(|(v, _)| **v > 0).map(|(_, r)| r).sum();
    let (mut below, mut at) = (0u64, 0u64);
    for mask in 0u32..(1 << m) {
        let w: i64 = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| ranks2[i]).sum();
        if w < observed {
            below += 1;
        } else if w == observed {
            at += 1;
        }
    }
    let total = (1u64 << m) as f64;
    Some((below as f64 / total, (below + at) as f64 / total))
}

/// Standard normal CDF by composite Simpson integration of the density
/// from -12 to `z`.
pub fn normal_cdf_quadrature(z: f64) -> f64 {
    let lo = -12.0;
    if z <= lo {
        return 0.0;
    }
    let n = 20_000;
    let h = (z - lo) / n as f64;
    let pdf = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = pdf(lo) + pdf(z);
    for i in 1..n {
        let x = lo + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(x);
    }
    acc * h / 3.0
}

/// Likert table of `n` rows by `k` columns with values 1-7.
pub fn random_likert(rng: &mut impl Rng, n: usize, k: usize) -> Vec<Vec<i64>> {
    (0..n).map(|_| (0..k).map(|_| rng.gen_range(1..=7)).collect()).collect()
}

pub fn random_rgba(rng: &mut impl Rng) -> Rgba {
    Rgba::new(rng.gen(), rng.gen(), rng.gen(), rng.gen())
}

/// Server on an ephemeral port, running on its own runtime thread.
pub struct TestServer {
    pub url: String,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn start(config: ServerConfig) -> Self {
        Self::start_with(AppState::new(config))
    }

    pub fn start_with(state: AppState) -> Self {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                serve(listener, state, async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        TestServer {
            url: format!("http://{addr}"),
            shutdown: Some(stop_tx),
            thread: Some(thread),
        }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        // open event streams keep graceful shutdown waiting; do not join
        self.thread.take();
    }
}
