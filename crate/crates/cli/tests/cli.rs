use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use nftscope_core::fixtures::{self, DAY, EPOCH, MARKET_FIVE_SALE_DAY};
use nftscope_core::indicators::{day_date, day_index, market_series, WhalePolicy};
use nftscope_core::ingestion::load_snapshot;
use nftscope_core::ActivityKind;
use serde_json::Value;

fn nftscope(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nftscope"))
        .arg("--data-dir")
        .arg(data)
        .args(args)
        .env_remove("NFTSCOPE_DATA_DIR")
        .output()
        .unwrap()
}

fn ok(data: &Path, args: &[&str]) -> Vec<u8> {
    let out = nftscope(data, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn json(data: &Path, args: &[&str]) -> Value {
    let mut a = vec!["--json"];
    a.extend_from_slice(args);
    serde_json::from_slice(&ok(data, &a)).unwrap()
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Generates `scenario` into a fresh temp dir and ingests it.
fn ingested(scenario: &str) -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    let data = tmp.path().join("data");
    ok(&data, &["gen-fixture", "--scenario", scenario, "--out", fx.to_str().unwrap()]);
    ok(&data, &["ingest", fx.to_str().unwrap()]);
    (tmp, data)
}

#[test]
fn generated_fixtures_validate_and_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    for sc in ["basic", "fig7-wash", "identical-images", "market"] {
        let a = tmp.path().join(format!("{sc}-a"));
        let b = tmp.path().join(format!("{sc}-b"));
        ok(&data, &["gen-fixture", "--scenario", sc, "--out", a.to_str().unwrap()]);
        ok(&data, &["gen-fixture", "--scenario", sc, "--out", b.to_str().unwrap()]);
        assert_eq!(tree(&a), tree(&b), "{sc}");
        let v = json(&data, &["ingest", a.to_str().unwrap()]);
        assert_eq!(v["warnings"], Value::Array(vec![]), "{sc}");
    }
    let other = tmp.path().join("basic-seed8");
    ok(&data, &["gen-fixture", "--scenario", "basic", "--seed", "8", "--out", other.to_str().unwrap()]);
    assert_ne!(tree(&other), tree(&tmp.path().join("basic-a")));

    let wash = load_snapshot(tmp.path().join("fig7-wash-a")).unwrap();
    let zero_sales = wash
        .nfts
        .iter()
        .flat_map(|n| &n.activities)
        .filter(|a| a.kind == ActivityKind::Sale && a.price_eth.is_zero())
        .count();
    assert!(zero_sales >= 1);
}

#[test]
fn ingest_reports_broken_images_and_is_idempotent() {
    let (tmp, data) = ingested("basic");
    let fx = tmp.path().join("fx");
    ok(&data, &["rarity", "--collection-id", "basic"]);
    let before = tree(&data);
    ok(&data, &["ingest", fx.to_str().unwrap()]);
    assert_eq!(before, tree(&data));

    let broken = tmp.path().join("broken");
    ok(&data, &["gen-fixture", "--scenario", "basic", "--out", broken.to_str().unwrap()]);
    let s = load_snapshot(&broken).unwrap();
    std::fs::remove_file(broken.join(&s.nfts[3].image_ref)).unwrap();
    let out = nftscope(&data, &["ingest", broken.to_str().unwrap(), "--collection-id", "broken"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&s.nfts[3].token_id));
    let out = nftscope(&data, &["--json", "ingest", broken.to_str().unwrap()]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["details"]["tokens"][0], s.nfts[3].token_id.as_str());

    let renamed = json(&data, &["ingest", fx.to_str().unwrap(), "--collection-id", "basic-copy"]);
    assert_eq!(renamed["collection_id"], "basic-copy");
    assert_eq!(nftscope(&data, &["ingest", fx.to_str().unwrap(), "--collection-id", "../x"]).status.code(), Some(2));
}

fn csv_rows(data: &Path, id: &str) -> Vec<(String, f64, f64)> {
    let text = std::fs::read_to_string(data.join("collections").join(id).join("rarity.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_owned(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn rarity_outputs() {
    let (_tmp, data) = ingested("basic");
    let first = json(&data, &["rarity", "--collection-id", "basic", "--jobs", "2"]);
    assert_eq!(first["extracted"], 10);
    let csv_a = std::fs::read(data.join("collections/basic/rarity.csv")).unwrap();

    // A second data dir computed from scratch gives identical bytes.
    let (_tmp2, data2) = ingested("basic");
    ok(&data2, &["rarity", "--collection-id", "basic", "--jobs", "1"]);
    assert_eq!(csv_a, std::fs::read(data2.join("collections/basic/rarity.csv")).unwrap());

    let again = json(&data, &["rarity", "--collection-id", "basic"]);
    assert_eq!(again["reused_pairs"], true);
    assert_eq!(again["ranking"], first["ranking"]);
    assert_eq!(ok(&data, &["rarity", "--collection-id", "basic"]), ok(&data, &["rarity", "--collection-id", "basic"]));

    let w1 = json(&data, &["rarity", "--collection-id", "basic", "--w-trait", "1"]);
    let order: Vec<&str> = w1["ranking"].as_array().unwrap().iter().map(|r| r["token_id"].as_str().unwrap()).collect();
    let mut by_trait = csv_rows(&data, "basic");
    by_trait.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    assert_eq!(order, by_trait.iter().map(|r| r.0.as_str()).collect::<Vec<_>>());

    let (_tmp3, same) = ingested("identical-images");
    ok(&same, &["rarity", "--collection-id", "identical-images"]);
    assert!(csv_rows(&same, "identical-images").iter().all(|r| r.2 == 0.0));

    // Missing image bytes in the store: no features, nonzero exit.
    let (_tmp4, gone) = ingested("basic");
    let s = load_snapshot(gone.join("collections/basic")).unwrap();
    std::fs::remove_file(gone.join("collections/basic").join(&s.nfts[0].image_ref)).unwrap();
    let out = nftscope(&gone, &["rarity", "--collection-id", "basic"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!gone.join("collections/basic/rarity.csv").exists());

    assert_eq!(nftscope(&data, &["rarity", "--collection-id", "basic", "--w-trait", "1.5"]).status.code(), Some(2));
    assert_eq!(nftscope(&data, &["rarity", "--collection-id", "nope"]).status.code(), Some(1));
}

#[test]
fn indicator_and_network_outputs() {
    let (tmp, data) = ingested("market");
    let c = load_snapshot(tmp.path().join("fx")).unwrap();
    let day = day_date(day_index(EPOCH) + MARKET_FIVE_SALE_DAY).to_string();
    let series = json(&data, &["indicators", "--collection-id", "market", "--from", &day, "--to", &day]);
    assert_eq!(series[0]["liquidity"], 5.0);

    let raw = ok(&data, &["--json", "indicators", "--collection-id", "market"]);
    let full: Value = serde_json::from_slice(&raw).unwrap();
    let days = full.as_array().unwrap();
    let from = days[0]["date"].as_str().unwrap().parse().unwrap();
    let to = days.last().unwrap()["date"].as_str().unwrap().parse().unwrap();
    let want = market_series(&c, from, to, WhalePolicy::default()).unwrap();
    assert_eq!(String::from_utf8(raw).unwrap(), serde_json::to_string(&want).unwrap() + "\n");
    let pretty: Value = serde_json::from_slice(&ok(&data, &["indicators", "--collection-id", "market"])).unwrap();
    assert_eq!(pretty, full);

    let csv = tmp.path().join("traders.csv");
    ok(&data, &["indicators", "--collection-id", "market", "--traders-csv", csv.to_str().unwrap()]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("address,holding_value,pnl,"));
    assert!(text.contains(fixtures::MARKET_WHALE));

    let out = nftscope(&data, &["indicators", "--collection-id", "market", "--from", "2022-03-09", "--to", "2022-03-01"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(nftscope(&data, &["indicators", "--collection-id", "market", "--from", "March"]).status.code(), Some(2));

    let (_tmp, wash) = ingested("fig7-wash");
    let net = json(&wash, &["network", "--collection-id", "fig7-wash", "--token", fixtures::FIG7_FOCUS_TOKEN]);
    assert_eq!(net["schema"], 1);
    let zero = net["nft_nodes"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|n| n["rings"].as_array().unwrap())
        .any(|r| r["outer_fraction"] == 0.0);
    assert!(zero);
    let early = json(
        &wash,
        &["network", "--collection-id", "fig7-wash", "--token", fixtures::FIG7_FOCUS_TOKEN, "--as-of", &(EPOCH + DAY).to_string()],
    );
    assert_eq!(early["as_of"], EPOCH + DAY);
    assert_eq!(nftscope(&wash, &["network", "--collection-id", "fig7-wash", "--token", "nope"]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["rarity"],
        vec!["gen-fixture", "--scenario", "lunar", "--out", "x"],
        vec!["indicators", "--collection-id", "x", "--whale-min", "0"],
    ] {
        assert_eq!(nftscope(tmp.path(), &args).status.code(), Some(2), "{args:?}");
    }
    // Commands other than ingest need an existing data dir.
    let out = nftscope(&tmp.path().join("absent"), &["--json", "network", "--collection-id", "x", "--token", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["error"].as_str().unwrap().contains("absent"));
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn serve_answers_and_reports_startup_errors() {
    let (_tmp, data) = ingested("basic");
    let port = free_port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_nftscope"))
        .args(["--data-dir", data.to_str().unwrap(), "serve", "--port", &port.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    let reply = loop {
        if let Some(r) = http_get(port, "/api/v1/collections") {
            break r;
        }
        assert!(Instant::now() < deadline, "service did not start");
        std::thread::sleep(Duration::from_millis(100));
    };
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.contains("\"id\":\"basic\""));

    let clash = nftscope(&data, &["serve", "--port", &port.to_string()]);
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(clash.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&clash.stderr).contains("already in use"));

    let missing = nftscope(&data.join("absent"), &["serve", "--port", &free_port().to_string()]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent"));
}
