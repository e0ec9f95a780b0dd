//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod grad;
pub mod pipeline;

use std::collections::BTreeMap;

use iaa_core::dataset::{AnnotationTable, ImageEntry};
use iaa_core::schema::Rater;
use iaa_core::{ScoreScale, TraitSchema};

/// Optimal transport cost between two histograms on the points `values`,
/// solved as a min-cost flow by successive shortest paths (Bellman-Ford on
/// the residual graph). Knows nothing about CDFs.
pub fn transport_emd(p: &[f64], q: &[f64], values: &[f64]) -> f64 {
    let n = p.len();
    assert_eq!(q.len(), n);
    let mut supply = p.to_vec();
    let mut demand = q.to_vec();
    // flow[i][j]: mass moved from source bin i to sink bin j
    let mut flow = vec![vec![0.0; n]; n];
    let cost = |i: usize, j: usize| (values[i] - values[j]).abs();
    // nodes 0..n are sources, n..2n sinks
    loop {
        let eps = 1e-15;
        if supply.iter().all(|s| *s <= eps) || demand.iter().all(|d| *d <= eps) {
            break;
        }
        let mut dist = vec![f64::INFINITY; 2 * n];
        let mut prev = vec![usize::MAX; 2 * n];
        for i in 0..n {
            if supply[i] > eps {
                dist[i] = 0.0;
            }
        }
        for _ in 0..2 * n {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    // forward edge source i -> sink j, unbounded
                    if dist[i] + cost(i, j) < dist[n + j] - 1e-15 {
                        dist[n + j] = dist[i] + cost(i, j);
                        prev[n + j] = i;
                        changed = true;
                    }
                    // residual edge sink j -> source i while flow remains
                    if flow[i][j] > eps && dist[n + j] - cost(i, j) < dist[i] - 1e-15 {
                        dist[i] = dist[n + j] - cost(i, j);
                        prev[i] = n + j;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let sink = (0..n)
            .filter(|&j| demand[j] > eps && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]))
            .expect("balanced problem has a path");
        // walk back to find the bottleneck
        let mut path = Vec::new();
        let mut v = n + sink;
        while prev[v] != usize::MAX {
            path.push((prev[v], v));
            v = prev[v];
        }
        let origin = v;
        let mut amount = supply[origin].min(demand[sink]);
        for &(a, b) in &path {
            if a >= n {
                // backward over sink a-n -> source b
                amount = amount.min(flow[b][a - n]);
            }
        }
        for &(a, b) in &path {
            if a < n {
                flow[a][b - n] += amount;
            } else {
                flow[b][a - n] -= amount;
            }
        }
        supply[origin] -= amount;
        demand[sink] -= amount;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += flow[i][j] * cost(i, j);
        }
    }
    total
}

/// Average ranks by counting, O(n^2).
pub fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let below = x.iter().filter(|&&xj| xj < xi).count() as f64;
            let equal = x.iter().filter(|&&xj| xj == xi).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation: means first, then centered sums.
pub fn two_pass_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn naive_srocc(x: &[f64], y: &[f64]) -> f64 {
    two_pass_pearson(&naive_ranks(x), &naive_ranks(y))
}

/// The 24 scores of the worked PARA example.
pub fn golden_para_scores() -> Vec<f64> {
    let mut scores = Vec::new();
    for (v, c) in [(2.0, 2), (2.5, 2), (3.0, 3), (3.5, 8), (4.0, 7), (4.5, 2)] {
        scores.extend(std::iter::repeat_n(v, c));
    }
    scores
}

/// Annotation CSV for one image rated by 24 raters with the golden scores,
/// on the PARA schema.
pub fn golden_para_csv() -> String {
    let genders = ["female", "male"];
    let ages = ["18-21", "22-25", "26-29", "30-34", "35-40"];
    let edu = ["junior high", "senior high", "technical secondary", "junior college", "university"];
    let exp = ["beginner", "competent", "proficient", "expert"];
    let mut out = String::from(
        "image_id,user_id,score,gender,age,education,photo_experience,art_experience,\
         openness,conscientiousness,extraversion,agreeableness,neuroticism\n",
    );
    for (u, s) in golden_para_scores().iter().enumerate() {
        out.push_str(&format!(
            "golden,u{u:02},{s},{},{},{},{},{},{},{},{},{},{}\n",
            genders[u % 2],
            ages[u % 5],
            edu[u % 5],
            exp[u % 4],
            exp[(u + 1) % 4],
            1 + u % 10,
            1 + (u * 3) % 10,
            1 + (u * 7) % 10,
            1.5 + (u % 9) as f64,
            10 - u % 10,
        ));
    }
    out
}

/// A small table on a two-field schema with hand-picked scores.
pub fn tiny_table() -> AnnotationTable {
    let schema = TraitSchema::new(
        "tiny",
        vec![
            iaa_core::schema::TraitField::categorical("gender", &["female", "male"]),
            iaa_core::schema::TraitField::categorical("education", &["school", "college", "university"]),
        ],
    )
    .unwrap();
    let raters = [("a", "female", "school"), ("b", "male", "college"), ("c", "female", "university"), ("d", "male", "school")]
        .iter()
        .map(|(id, g, e)| Rater::new(*id).with_category("gender", g).with_category("education", e))
        .collect();
    let images = (0..3)
        .map(|k| ImageEntry { id: format!("img{k}"), features: vec![k as f64, 1.0] })
        .collect();
    let scores: BTreeMap<&str, [f64; 4]> =
        [("img0", [2.0, 4.0, 3.0, 5.0]), ("img1", [7.0, 6.0, 8.0, 7.0]), ("img2", [1.0, 1.0, 2.0, 9.0])].into();
    let mut records = Vec::new();
    for (img, s) in &scores {
        for (r, v) in ["a", "b", "c", "d"].iter().zip(s) {
            records.push((img.to_string(), r.to_string(), *v));
        }
    }
    AnnotationTable::new(ScoreScale::lapis(), schema, images, raters, records).unwrap()
}
