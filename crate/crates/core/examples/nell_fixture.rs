//! Regenerates `fixtures/nell_sports.tsv`, the sports-domain stand-in used
//! by the static-evaluation experiments.
//!
//! Shape: 817 entities and 1,860 triples. 801 small entities (400 with one
//! fact, 200 with two, 120 with three, 81 with four) plus 16 teams and
//! leagues with 8 to 60 facts each. 167 facts are wrong (91.0% accuracy).
//! Wrong facts are drawn without replacement with probability proportional
//! to a per-entity risk: most entities have risk 1, a few have `BAD_RISK`.
//!
//! ```text
//! cargo run -p kgacc --example nell_fixture -- crates/core/fixtures/nell_sports.tsv
//! ```

use std::fmt::Write as _;

use kgacc::rng;
use rand::Rng;

const SMALL: [(usize, usize); 4] = [(1, 400), (2, 200), (3, 120), (4, 81)];
const LARGE: [usize; 16] = [60, 48, 40, 34, 30, 26, 22, 20, 18, 16, 14, 12, 10, 9, 9, 8];
const WRONG: usize = 167;
const BAD_SHARE: f64 = 0.05;
const BAD_RISK: f64 = 8.0;
const SEED: u64 = 2019;

const ATHLETE: [(&str, &str); 6] = [
    ("athleteplaysforteam", "team"),
    ("athleteplaysinleague", "league"),
    ("athleteplayssport", "sport"),
    ("athletehomestadium", "stadium"),
    ("athleteledsportsteam", "team"),
    ("athletewinsawardtrophytournament", "trophy"),
];
const SPORTS: [&str; 6] = ["baseball", "basketball", "football", "hockey", "soccer", "golf"];

fn object(kind: &str, k: usize) -> String {
    match kind {
        "sport" => format!("concept:sport:{}", SPORTS[k % SPORTS.len()]),
        other => format!("concept:{other}:{other}_{k:03}"),
    }
}

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "crates/core/fixtures/nell_sports.tsv".into());
    let mut rows: Vec<(String, String, String)> = Vec::new();
    let mut owner: Vec<usize> = Vec::new();
    let mut r = rng::stream(SEED, &[1]);

    let mut entity = 0;
    for &(size, count) in &SMALL {
        for _ in 0..count {
            let subject = format!("concept:athlete:athlete_{entity:04}");
            let start = r.random_range(0..ATHLETE.len());
            for j in 0..size {
                let (p, kind) = ATHLETE[(start + j) % ATHLETE.len()];
                rows.push((subject.clone(), p.into(), object(kind, r.random_range(0..200))));
                owner.push(entity);
            }
            entity += 1;
        }
    }
    for (i, &size) in LARGE.iter().enumerate() {
        let (subject, p) = if i % 4 == 3 {
            (format!("concept:sportsleague:league_{i:02}"), "leagueincludesteam")
        } else {
            (format!("concept:sportsteam:team_{i:02}"), "teamplaysagainstteam")
        };
        for j in 0..size {
            rows.push((subject.clone(), p.into(), format!("concept:sportsteam:opponent_{i:02}_{j:02}")));
            owner.push(entity);
        }
        entity += 1;
    }
    assert_eq!((entity, rows.len()), (817, 1860));

    let risk: Vec<f64> = (0..entity).map(|_| if r.random::<f64>() < BAD_SHARE { BAD_RISK } else { 1.0 }).collect();
    // weighted sampling without replacement: keep the WRONG largest u^(1/w)
    let mut keyed: Vec<(f64, usize)> = (0..rows.len()).map(|t| (r.random::<f64>().ln() / risk[owner[t]], t)).collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut label = vec![true; rows.len()];
    for &(_, t) in &keyed[..WRONG] {
        label[t] = false;
    }

    let mut text = String::from("subject\tpredicate\tobject\tkind\tlabel\n");
    for ((s, p, o), l) in rows.iter().zip(&label) {
        writeln!(text, "{s}\t{p}\t{o}\tentity\t{}", u8::from(*l)).unwrap();
    }
    std::fs::write(&out, text).expect("write fixture");
    eprintln!("wrote {out}");
}
