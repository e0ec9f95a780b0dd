//! Drives the `iaa` binary through a full pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn iaa(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iaa"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("IAA_OUT")
        .output()
        .unwrap()
}

/// Run and return the run directory printed on stdout.
pub fn ok(out: &Path, args: &[&str]) -> PathBuf {
    let o = iaa(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    PathBuf::from(String::from_utf8(o.stdout).unwrap().lines().last().unwrap())
}

pub fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// synth -> ingest -> split -> build -> augment -> train -> eval -> analyze -> report.
pub fn pipeline(out: &Path, work: &Path) -> Vec<PathBuf> {
    let pop = work.join("pop.toml");
    std::fs::write(
        &pop,
        "n_raters = 24\nn_images = 40\nfeature_dim = 4\nraters_per_image = 10\nscale = \"lapis\"\n\
         schema = \"demographics\"\ngamma = 0.4\nsigma = 0.5\nseed = 5\n\
         [effects]\neducation = [-1.0, -0.5, 0.0, 0.5, 1.0]\n",
    )
    .unwrap();
    let spec = work.join("sweep.toml");
    std::fs::write(&spec, "split_seed = 2\n[train]\nepochs = 3\nhidden = 6\n").unwrap();
    let synth = ok(out, &["synth", "--config", &s(&pop), "--experiment", "sweep", "--spec", &s(&spec), "--fields", "education,gender"]);
    let data: Vec<String> = [
        "--annotations",
        &s(&synth.join("annotations.csv")),
        "--schema",
        &s(&synth.join("schema.toml")),
        "--scale",
        &s(&synth.join("scale.json")),
        "--features",
        &s(&synth.join("features.csv")),
    ]
    .iter()
    .map(|x| x.to_string())
    .collect();
    let with = |head: &[&str], tail: &[&str]| -> Vec<String> {
        head.iter().map(|x| x.to_string()).chain(data.iter().cloned()).chain(tail.iter().map(|x| x.to_string())).collect()
    };
    let call = |args: Vec<String>| ok(out, &args.iter().map(String::as_str).collect::<Vec<_>>());

    let mut runs = vec![synth.clone()];
    runs.push(call(with(&["ingest"], &[])));
    let split = call(with(&["split"], &["--seed", "3"]));
    let manifest = s(&split.join("manifest.json"));
    runs.push(split);
    runs.push(call(with(&["split"], &["--seed", "3", "--disjoint-field", "education", "--test-values", "university"])));
    runs.push(call(with(&["build"], &["--manifest", &manifest, "--kind", "piaa", "--set", "test"])));
    runs.push(call(with(&["augment"], &["--manifest", &manifest, "--samples-per-image", "3", "--k-max", "5", "--seed", "4"])));
    let train = call(with(&["train"], &["--manifest", &manifest, "--kind", "sgiaa", "--epochs", "4", "--hidden", "8"]));
    let model = s(&train.join("model.json"));
    runs.push(train);
    runs.push(call(with(&["eval"], &["--manifest", &manifest, "--model", &model, "--mode", "giaa"])));
    runs.push(call(with(&["eval"], &["--manifest", &manifest, "--model", &model, "--mode", "piaa"])));
    runs.push(call(with(&["analyze", "gini"], &[])));
    runs.push(call(with(&["analyze", "emd"], &["--field", "education"])));
    runs.push(ok(out, &["verify-theorem", "--trials", "2000", "--seed", "1"]));
    runs.push(ok(out, &["report", "--input", &s(&synth.join("sweep.json"))]));
    runs
}

/// Every file under `out`, keyed by relative path.
pub fn snapshot(out: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(out).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}
