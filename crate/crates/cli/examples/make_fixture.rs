//! Regenerates `fixtures/synthetic`: 40 assets over 520 days with returns
//! drawn from one QRSE kernel, and a strictly rising index.
//!
//! cargo run -p qrse-cli --example make_fixture

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Days, NaiveDate};
use qrse_core::ingest::DATE_FORMAT;
use qrse_core::model::{marginal_density, QrseParams, ReturnGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ASSETS: usize = 40;
const DAYS: usize = 520;

fn date(i: usize) -> String {
    let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
    (start + Days::new(i as u64)).format(DATE_FORMAT).to_string()
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let theta = QrseParams::new(0.3, 1.05, -0.16, 1.69).unwrap();
    let grid = ReturnGrid::covering(&theta, 4001).unwrap();
    let kernel = marginal_density(&grid, &theta).unwrap();

    let mut prices = vec![vec![0.0; ASSETS]; DAYS];
    for a in 0..ASSETS {
        let mut p = rng.random_range(5.0..500.0);
        let draws = kernel.sample(&mut rng, DAYS - 1);
        prices[0][a] = p;
        for t in 1..DAYS {
            p *= (draws[t - 1] / 100.0).exp();
            prices[t][a] = p;
        }
    }
    let mut text = String::from("date");
    for a in 0..ASSETS {
        write!(text, ",A{a:02}").unwrap();
    }
    text.push('\n');
    for (t, row) in prices.iter().enumerate() {
        text.push_str(&date(t));
        for p in row {
            write!(text, ",{p:.6}").unwrap();
        }
        text.push('\n');
    }
    std::fs::write(dir.join("prices.csv"), text).unwrap();

    let mut level = 1000.0;
    let mut text = String::from("date,close\n");
    for t in 0..DAYS {
        if t > 0 {
            level *= (rng.random_range(0.1..0.5) / 100.0f64).exp();
        }
        writeln!(text, "{},{level:.6}", date(t)).unwrap();
    }
    std::fs::write(dir.join("index.csv"), text).unwrap();
}
