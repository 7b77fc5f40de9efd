//! Deterministic synthetic collections.
//!
//! Every generator is a pure function of its seed: the same seed produces
//! byte-identical manifests and PNG files.

use std::collections::BTreeMap;
use std::io::{self, Cursor};
use std::path::Path;
use std::str::FromStr;

use image::{ImageFormat, Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eth::Eth;
use crate::ingestion::{
    write_snapshot_dir, Activity, ActivityKind, CollectionInfo, CollectionSnapshot, ImageSource, IngestError,
    NftRecord, Trait, TraitSet,
};

pub const DEFAULT_SEED: u64 = 7;
/// 2022-03-01T00:00:00Z
pub const EPOCH: i64 = 1_646_092_800;
pub const DAY: i64 = 86_400;
pub const IMAGE_SIZE: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Ten NFTs with mixed trading, one with all-unique traits.
    Basic,
    /// Zero-price sale through an accomplice followed by a high resale.
    Fig7Wash,
    /// Six NFTs sharing one image.
    IdenticalImages,
    /// 100 NFTs and 200 activities, including a whale and a 5-sale day.
    Market,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Basic,
        Scenario::Fig7Wash,
        Scenario::IdenticalImages,
        Scenario::Market,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Basic => "basic",
            Scenario::Fig7Wash => "fig7-wash",
            Scenario::IdenticalImages => "identical-images",
            Scenario::Market => "market",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

/// A generated snapshot and the encoded images it references.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub snapshot: CollectionSnapshot,
    pub images: BTreeMap<String, Vec<u8>>,
}

impl ImageSource for Fixture {
    fn image_bytes(&self, image_ref: &str) -> io::Result<Vec<u8>> {
        self.images.image_bytes(image_ref)
    }
}

impl Fixture {
    pub fn write(&self, dir: &Path) -> Result<(), IngestError> {
        write_snapshot_dir(dir, &self.snapshot, self)
    }
}

pub fn generate(scenario: Scenario, seed: u64) -> Fixture {
    match scenario {
        Scenario::Basic => basic(seed),
        Scenario::Fig7Wash => fig7_wash(seed),
        Scenario::IdenticalImages => identical_images(seed),
        Scenario::Market => market(seed),
    }
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .expect("png encoding to memory");
    out
}

fn random_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    [rng.gen(), rng.gen(), rng.gen()]
}

fn jitter(rng: &mut ChaCha8Rng, v: u8, amount: i32) -> u8 {
    (v as i32 + rng.gen_range(-amount..=amount)).clamp(0, 255) as u8
}

/// Draws random filled discs, rectangles and rings inside `[lo, hi)²`.
fn draw_shapes(img: &mut RgbImage, rng: &mut ChaCha8Rng, lo: u32, hi: u32, count: usize) {
    for _ in 0..count {
        let color = random_color(rng);
        let kind = rng.gen_range(0..3);
        let cx = rng.gen_range(lo + 4..hi - 4) as f32;
        let cy = rng.gen_range(lo + 4..hi - 4) as f32;
        let r = rng.gen_range(3.0..(((hi - lo) / 4) as f32).max(4.0));
        let (rw, rh) = (rng.gen_range(3..10) as f32, rng.gen_range(3..10) as f32);
        for y in lo..hi {
            for x in lo..hi {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                let d = (dx * dx + dy * dy).sqrt();
                let inside = match kind {
                    0 => d <= r,
                    1 => dx.abs() <= rw && dy.abs() <= rh,
                    _ => (d - r).abs() <= 1.5,
                };
                if inside {
                    img.put_pixel(x, y, Rgb(color));
                }
            }
        }
    }
}

/// Full-frame generative "art": coloured background and overlapping shapes.
pub fn art_image(seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA11CE);
    let bg = random_color(&mut rng);
    let mut img = RgbImage::from_pixel(IMAGE_SIZE, IMAGE_SIZE, Rgb(bg));
    let n = rng.gen_range(8..13);
    draw_shapes(&mut img, &mut rng, 0, IMAGE_SIZE, n);
    for p in img.pixels_mut() {
        for c in 0..3 {
            p[c] = jitter(&mut rng, p[c], 6);
        }
    }
    img
}

/// Textured content confined to the central 40×40 box on a flat background,
/// so it can be shifted by a few pixels without leaving the frame.
pub fn textured_image(seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7E47);
    let mut img = RgbImage::from_pixel(IMAGE_SIZE, IMAGE_SIZE, Rgb([235, 235, 235]));
    draw_shapes(&mut img, &mut rng, 12, 52, 10);
    for y in 12..52 {
        for x in 12..52 {
            let p = img.get_pixel_mut(x, y);
            for c in 0..3 {
                p[c] = jitter(&mut rng, p[c], 10);
            }
        }
    }
    img
}

/// Moves the image content by `(dx, dy)`, filling uncovered pixels with the
/// top-left colour.
pub fn shifted(img: &RgbImage, dx: i32, dy: i32) -> RgbImage {
    let fill = *img.get_pixel(0, 0);
    let (w, h) = img.dimensions();
    RgbImage::from_fn(w, h, |x, y| {
        let (sx, sy) = (x as i32 - dx, y as i32 - dy);
        if sx < 0 || sy < 0 || sx >= w as i32 || sy >= h as i32 {
            fill
        } else {
            *img.get_pixel(sx as u32, sy as u32)
        }
    })
}

pub fn noise_image(seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9015E);
    RgbImage::from_fn(IMAGE_SIZE, IMAGE_SIZE, |_, _| Rgb(random_color(&mut rng)))
}

/// 8-pixel checkerboard with per-pixel noise.
pub fn checkerboard_noise(seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC4EC);
    RgbImage::from_fn(IMAGE_SIZE, IMAGE_SIZE, |x, y| {
        let on = ((x / 8) + (y / 8)) % 2 == 0;
        let base: [u8; 3] = if on { [220, 40, 200] } else { [30, 210, 40] };
        Rgb(base.map(|v| jitter(&mut rng, v, 25)))
    })
}

/// A collection whose NFTs carry the given images, minted and never traded.
pub fn image_collection(id: &str, images: Vec<RgbImage>) -> Fixture {
    let mut nfts = Vec::new();
    let mut files = BTreeMap::new();
    for (i, img) in images.iter().enumerate() {
        let token = format!("{i}");
        let image_ref = format!("images/{token}.png");
        files.insert(image_ref.clone(), encode_png(img));
        nfts.push(NftRecord {
            token_id: token,
            image_ref,
            traits: [("Index", i.to_string())].into_iter().collect(),
            activities: vec![mint(EPOCH + i as i64 * 60, "0xminter", Eth::ZERO, i)],
        });
    }
    Fixture {
        snapshot: CollectionSnapshot {
            info: info(id, id, EPOCH + 10 * DAY),
            nfts,
        },
        images: files,
    }
}

fn info(id: &str, name: &str, snapshot_at: i64) -> CollectionInfo {
    CollectionInfo {
        id: id.into(),
        name: name.into(),
        description: format!("Synthetic {name} collection"),
        official_url: format!("https://example.invalid/{id}"),
        created_at: EPOCH - 30 * DAY,
        snapshot_at,
    }
}

fn tx(n: usize, ts: i64) -> String {
    format!("0x{ts:x}{n:04x}")
}

fn mint(ts: i64, to: &str, price: Eth, n: usize) -> Activity {
    Activity {
        kind: ActivityKind::Mint,
        timestamp: ts,
        price_eth: price,
        from_address: String::new(),
        to_address: to.into(),
        tx_id: tx(n, ts),
    }
}

fn step(kind: ActivityKind, ts: i64, price: Eth, from: &str, to: &str, n: usize) -> Activity {
    Activity {
        kind,
        timestamp: ts,
        price_eth: price,
        from_address: from.into(),
        to_address: to.into(),
        tx_id: tx(n, ts),
    }
}

fn eth(v: f64) -> Eth {
    Eth::from_eth(v)
}

/// Accumulates NFTs and their images while generators append activities.
struct Builder {
    nfts: Vec<NftRecord>,
    images: BTreeMap<String, Vec<u8>>,
    tx_counter: usize,
}

impl Builder {
    fn new() -> Self {
        Builder {
            nfts: Vec::new(),
            images: BTreeMap::new(),
            tx_counter: 0,
        }
    }

    fn add(&mut self, token: &str, img: &RgbImage, traits: TraitSet) -> usize {
        let image_ref = format!("images/{token}.png");
        self.images.insert(image_ref.clone(), encode_png(img));
        self.nfts.push(NftRecord {
            token_id: token.into(),
            image_ref,
            traits,
            activities: Vec::new(),
        });
        self.nfts.len() - 1
    }

    fn holder(&self, nft: usize) -> String {
        self.nfts[nft].activities.last().map(|a| a.to_address.clone()).unwrap_or_default()
    }

    fn push(&mut self, nft: usize, kind: ActivityKind, ts: i64, price: Eth, to: &str) {
        self.tx_counter += 1;
        let act = if kind == ActivityKind::Mint {
            mint(ts, to, price, self.tx_counter)
        } else {
            let from = self.holder(nft);
            step(kind, ts, price, &from, to, self.tx_counter)
        };
        self.nfts[nft].activities.push(act);
    }

    fn finish(self, info: CollectionInfo) -> Fixture {
        Fixture {
            snapshot: CollectionSnapshot { info, nfts: self.nfts },
            images: self.images,
        }
    }
}

const BACKGROUNDS: [&str; 3] = ["Blue", "Orange", "Gray"];
const EYES: [&str; 3] = ["Bored", "Sleepy", "Laser"];
const MOUTHS: [&str; 2] = ["Grin", "Frown"];

fn basic(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traders: Vec<String> = (0..8).map(|i| format!("0xtrader{i}")).collect();
    let mut b = Builder::new();
    for i in 0..10usize {
        let traits: TraitSet = if i == 9 {
            [("Background", "Gold"), ("Eyes", "Diamond"), ("Mouth", "Pipe"), ("Hat", "Crown")]
                .into_iter()
                .collect()
        } else {
            [
                ("Background", *BACKGROUNDS.choose(&mut rng).unwrap()),
                ("Eyes", *EYES.choose(&mut rng).unwrap()),
                ("Mouth", *MOUTHS.choose(&mut rng).unwrap()),
            ]
            .into_iter()
            .collect()
        };
        let token = format!("{}", 100 + i);
        let n = b.add(&token, &art_image(seed * 1000 + i as u64), traits);

        let mut ts = EPOCH + i as i64 * 3_600;
        b.push(n, ActivityKind::Mint, ts, Eth::ZERO, &traders[i % 3]);
        // Tokens 103 and 107 are never traded.
        let trades = if i == 3 || i == 7 { 0 } else { rng.gen_range(1..5) };
        for _ in 0..trades {
            ts += rng.gen_range(1..6) * DAY + rng.gen_range(0..DAY / 2);
            let holder = b.holder(n);
            let to = loop {
                let t = traders.choose(&mut rng).unwrap();
                if *t != holder {
                    break t.clone();
                }
            };
            if rng.gen_bool(0.75) {
                let price = eth(rng.gen_range(1..80) as f64 * 0.05);
                b.push(n, ActivityKind::Sale, ts, price, &to);
            } else {
                b.push(n, ActivityKind::Transfer, ts, Eth::ZERO, &to);
            }
        }
    }
    let mut info = info("basic", "Basic Apes", EPOCH + 30 * DAY);
    info.description = "Ten synthetic NFTs with mixed trading".into();
    b.finish(info)
}

/// Tokens touched by the wash pattern.
pub const FIG7_WASH_TOKENS: [&str; 4] = ["2893", "2894", "2895", "2896"];
pub const FIG7_FOCUS_TOKEN: &str = "2896";
pub const FIG7_BLUE: &str = "0xb1ue";
pub const FIG7_YELLOW: &str = "0xye11ow";
pub const FIG7_GREEN: &str = "0x6reen";

fn fig7_wash(seed: u64) -> Fixture {
    let mut b = Builder::new();
    let common: TraitSet = [("Background", "Blue"), ("Eyes", "Bored"), ("Mouth", "Grin")]
        .into_iter()
        .collect();
    let t0 = EPOCH;

    // The blue trader buys each wash token at a rising high price, dumps it to
    // the yellow trader at 0 ETH, yellow hands it to green, and green resells
    // high. The focus token is still held by green at the snapshot.
    for (k, token) in FIG7_WASH_TOKENS.iter().enumerate() {
        let n = b.add(token, &art_image(seed * 1000 + k as u64), common.clone());
        let collector = format!("0xcollector{k}");
        let base = t0 + k as i64 * DAY;
        b.push(n, ActivityKind::Mint, base, eth(0.5), "0xminter");
        b.push(n, ActivityKind::Sale, base + 2 * DAY, eth(2.0), &collector);
        b.push(n, ActivityKind::Sale, base + 5 * DAY, eth(6.0 + k as f64), FIG7_BLUE);
        b.push(n, ActivityKind::Sale, base + 12 * DAY, Eth::ZERO, FIG7_YELLOW);
        b.push(n, ActivityKind::Transfer, base + 13 * DAY, Eth::ZERO, FIG7_GREEN);
        if *token != FIG7_FOCUS_TOKEN {
            b.push(n, ActivityKind::Sale, base + 16 * DAY, eth(10.0 + k as f64), &format!("0xbuyer{k}"));
        }
    }

    // Ordinary tokens with distinctive traits, some also touched by the
    // wash traders so the network expands beyond the focus token.
    let others = [
        ("3001", ("Background", "Gold"), ("Eyes", "Laser")),
        ("3002", ("Background", "Purple"), ("Eyes", "Sleepy")),
        ("3003", ("Background", "Red"), ("Eyes", "Wink")),
        ("3004", ("Background", "Green"), ("Eyes", "Closed")),
    ];
    for (k, (token, bg, eyes)) in others.iter().enumerate() {
        let traits: TraitSet = [*bg, *eyes, ("Hat", "Cap")].into_iter().collect();
        let n = b.add(token, &art_image(seed * 1000 + 50 + k as u64), traits);
        let base = t0 + k as i64 * DAY + 3_600;
        b.push(n, ActivityKind::Mint, base, Eth::ZERO, "0xminter");
        b.push(n, ActivityKind::Sale, base + 3 * DAY, eth(1.0 + k as f64), &format!("0xholder{k}"));
        match k {
            0 => b.push(n, ActivityKind::Sale, base + 8 * DAY, eth(4.0), FIG7_BLUE),
            1 => b.push(n, ActivityKind::Sale, base + 9 * DAY, eth(1.5), FIG7_GREEN),
            _ => b.push(n, ActivityKind::Sale, base + 9 * DAY, eth(3.0 + k as f64), "0xholder9"),
        }
    }

    let mut info = info("fig7-wash", "Wash Pattern", t0 + 25 * DAY);
    info.description = "Synthetic zero-price wash-trading chain".into();
    b.finish(info)
}

fn identical_images(seed: u64) -> Fixture {
    let img = art_image(seed * 1000 + 999);
    let mut b = Builder::new();
    for i in 0..6usize {
        let token = format!("{}", 500 + i);
        let traits: TraitSet = [("Eyes", EYES[i % 3]), ("Mouth", MOUTHS[i % 2])].into_iter().collect();
        let n = b.add(&token, &img, traits);
        b.push(n, ActivityKind::Mint, EPOCH + i as i64 * 600, Eth::ZERO, "0xminter");
        if i % 2 == 0 {
            b.push(n, ActivityKind::Sale, EPOCH + DAY + i as i64 * 600, eth(1.0 + i as f64 * 0.25), "0xcollector");
        }
    }
    b.finish(info("identical-images", "Identical Images", EPOCH + 5 * DAY))
}

/// Market stress fixture: 100 mints, then 100 trades over 30 days.
///
/// - day 10 carries exactly five sales;
/// - `0xwhale` buys 3 tokens, sells one (holding 3), buys 10 more and then
///   sells again while holding 12.
pub const MARKET_WHALE: &str = "0xwhale";
pub const MARKET_FIVE_SALE_DAY: i64 = 10;

fn market(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4A4B);
    let mut b = Builder::new();
    let traders: Vec<String> = (0..12).map(|i| format!("0xm{i:02}")).collect();
    for i in 0..100usize {
        let traits: TraitSet = [
            ("Background", BACKGROUNDS[i % 3]),
            ("Eyes", EYES[(i / 3) % 3]),
            ("Mouth", MOUTHS[(i / 9) % 2]),
        ]
        .into_iter()
        .collect();
        let token = format!("{i}");
        // Small flat images keep this fixture cheap; extraction yields nothing.
        let img = RgbImage::from_pixel(8, 8, Rgb([i as u8, 100, 200]));
        let n = b.add(&token, &img, traits);
        let ts = EPOCH + (i as i64 % 3) * DAY + i as i64 * 60;
        b.push(n, ActivityKind::Mint, ts, Eth::ZERO, &traders[i % traders.len()]);
    }

    let day = |d: i64, rng: &mut ChaCha8Rng| EPOCH + d * DAY + rng.gen_range(0..DAY);
    let price = |rng: &mut ChaCha8Rng| eth(rng.gen_range(2..60) as f64 * 0.05);

    // Whale: three buys on day 4, one sale on day 5, ten buys on days 6-7,
    // one sale on day 8. 15 activities.
    for k in 0..3 {
        let ts = EPOCH + 4 * DAY + k * 600;
        let p = price(&mut rng);
        b.push(k as usize, ActivityKind::Sale, ts, p, MARKET_WHALE);
    }
    let p = price(&mut rng);
    b.push(0, ActivityKind::Sale, EPOCH + 5 * DAY, p, "0xm05x");
    for k in 3..13 {
        let ts = EPOCH + 6 * DAY + k * 3_000;
        let p = price(&mut rng);
        b.push(k as usize, ActivityKind::Sale, ts, p, MARKET_WHALE);
    }
    let p = price(&mut rng);
    b.push(1, ActivityKind::Sale, EPOCH + 8 * DAY, p, "0xm08x");

    // Day 10: exactly five sales, plus one transfer.
    for k in 0..5usize {
        let nft = 20 + k;
        let ts = EPOCH + MARKET_FIVE_SALE_DAY * DAY + k as i64 * 1_000;
        let to = traders[(k + 5) % traders.len()].clone() + "b";
        let p = price(&mut rng);
        b.push(nft, ActivityKind::Sale, ts, p, &to);
    }
    b.push(30, ActivityKind::Transfer, EPOCH + MARKET_FIVE_SALE_DAY * DAY + 9_000, Eth::ZERO, "0xm99");

    // The remainder is random trading outside day 10, keeping per-NFT order.
    let mut remaining = 100 - 15 - 6;
    let mut last_ts: Vec<i64> = b.nfts.iter().map(|n| n.activities.last().unwrap().timestamp).collect();
    while remaining > 0 {
        let nft = rng.gen_range(13..100usize);
        let mut d = rng.gen_range(11..30);
        if d == MARKET_FIVE_SALE_DAY {
            d += 1;
        }
        let ts = day(d, &mut rng).max(last_ts[nft] + 1);
        if ts / DAY == (EPOCH / DAY + MARKET_FIVE_SALE_DAY) || ts >= EPOCH + 31 * DAY {
            continue;
        }
        let holder = b.holder(nft);
        let to = loop {
            let t = traders.choose(&mut rng).unwrap();
            if *t != holder {
                break t.clone();
            }
        };
        if rng.gen_bool(0.8) {
            let p = price(&mut rng);
            b.push(nft, ActivityKind::Sale, ts, p, &to);
        } else {
            b.push(nft, ActivityKind::Transfer, ts, Eth::ZERO, &to);
        }
        last_ts[nft] = ts;
        remaining -= 1;
    }
    b.finish(info("market", "Market Stress", EPOCH + 32 * DAY))
}

/// A trait label helper for tests and bindings.
pub fn traits<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> TraitSet {
    pairs.into_iter().map(|(t, v)| Trait::new(t, v)).collect()
}
