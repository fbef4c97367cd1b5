//! Multi-digit MNIST addition.
//!
//! An instance shows two `N`-digit numbers as `2N` images and is labelled
//! only with their sum. Digit `d` of segment `s` is variable `10·s + d + 1`;
//! segments `0..N` are the first number, most significant digit first, and
//! segments `N..2N` the second.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng;

use super::TaskError;
use crate::explain::ExplanationSet;
use crate::formula::{CnfFormula, Lit, World};
use crate::learn::{Input, Supervision};
use crate::rng;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Largest supported number of digits per operand.
pub const MAX_DIGITS: usize = 18;

fn digit_var(segment: usize, digit: usize) -> u32 {
    (10 * segment + digit + 1) as u32
}

pub fn max_sum(n: usize) -> u64 {
    2 * (10u64.pow(n as u32) - 1)
}

fn check(n: usize, sum: u64) -> Result<(), TaskError> {
    if n == 0 || n > MAX_DIGITS {
        return Err(TaskError::InvalidParameter(format!(
            "digits per number must be in 1..={MAX_DIGITS}"
        )));
    }
    if sum > max_sum(n) {
        return Err(TaskError::SumOutOfRange { sum, max: max_sum(n) });
    }
    Ok(())
}

/// Decimal digit `i` of `x`, least significant first.
fn digit_of(x: u64, i: usize) -> usize {
    ((x / 10u64.pow(i as u32)) % 10) as usize
}

/// CNF whose projected models are the digit assignments summing to `sum`.
///
/// Each segment gets an exactly-one constraint. Position `i` (least
/// significant first) has a carry-out variable `c_{i+1}`; for every pair of
/// digits and carry-in, a clause either forbids the combination (wrong sum
/// digit) or forces the carry-out. The final carry equals the top digit of
/// the sum. Carries are auxiliary.
pub fn mnist_sum_formula(n: usize, sum: u64) -> Result<CnfFormula, TaskError> {
    check(n, sum)?;
    let digits = 20 * n;
    let carry = |i: usize| Lit::pos((digits + i) as u32);
    let mut clauses = Vec::new();
    for s in 0..2 * n {
        clauses.push((0..10).map(|d| Lit::pos(digit_var(s, d))).collect());
        for d in 0..10 {
            for e in d + 1..10 {
                clauses.push(vec![Lit::neg(digit_var(s, d)), Lit::neg(digit_var(s, e))]);
            }
        }
    }
    for i in 0..n {
        let (sa, sb) = (n - 1 - i, 2 * n - 1 - i);
        let target = digit_of(sum, i);
        let carry_ins: &[usize] = if i == 0 { &[0] } else { &[0, 1] };
        for &cin in carry_ins {
            for da in 0..10 {
                for db in 0..10 {
                    let r = da + db + cin;
                    let mut clause = vec![Lit::neg(digit_var(sa, da)), Lit::neg(digit_var(sb, db))];
                    if i > 0 {
                        let c = carry(i);
                        clause.push(if cin == 1 { !c } else { c });
                    }
                    if r % 10 == target {
                        let out = carry(i + 1);
                        clause.push(if r >= 10 { out } else { !out });
                    }
                    clauses.push(clause);
                }
            }
        }
    }
    let top = sum / 10u64.pow(n as u32);
    clauses.push(vec![if top == 1 { carry(n) } else { !carry(n) }]);
    let f = CnfFormula::new(digits + n, clauses)?;
    let original: Vec<u32> = (1..=digits as u32).collect();
    Ok(f.with_original_vars(&original)?)
}

/// Digit strings of two `n`-digit numbers summing to a label, counted and
/// sampled exactly through their carries.
#[derive(Clone, Debug)]
pub struct DigitSampler {
    n: usize,
    sum: u64,
    /// `ways[i][c]`: completions of positions `i..n` with carry-in `c`.
    ways: Vec<[u128; 2]>,
}

impl DigitSampler {
    pub fn new(n: usize, sum: u64) -> Result<Self, TaskError> {
        check(n, sum)?;
        let top = (sum / 10u64.pow(n as u32)) as usize;
        let mut ways = vec![[0u128; 2]; n + 1];
        ways[n][top] = 1;
        for i in (0..n).rev() {
            let target = digit_of(sum, i);
            for cin in 0..2 {
                let mut w = 0;
                for da in 0..10 {
                    for db in 0..10 {
                        let r = da + db + cin;
                        if r % 10 == target {
                            w += ways[i + 1][r / 10];
                        }
                    }
                }
                ways[i][cin] = w;
            }
        }
        Ok(DigitSampler { n, sum, ways })
    }

    /// Number of digit assignments with the given sum.
    pub fn count(&self) -> u128 {
        self.ways[0][0]
    }

    pub fn sum(&self) -> u64 {
        self.sum
    }

    /// A uniformly random pair of digit strings (most significant first).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<u8>, Vec<u8>) {
        let n = self.n;
        let mut a = vec![0u8; n];
        let mut b = vec![0u8; n];
        let mut cin = 0;
        for i in 0..n {
            let target = digit_of(self.sum, i);
            let total = self.ways[i][cin];
            let mut r = rng.random_range(0..total);
            'pick: for da in 0..10 {
                for db in 0..10 {
                    let s = da + db + cin;
                    if s % 10 != target {
                        continue;
                    }
                    let w = self.ways[i + 1][s / 10];
                    if r < w {
                        a[n - 1 - i] = da as u8;
                        b[n - 1 - i] = db as u8;
                        cin = s / 10;
                        break 'pick;
                    }
                    r -= w;
                }
            }
        }
        (a, b)
    }
}

/// One-hot world for digit strings `a` and `b`.
pub fn digits_to_world(a: &[u8], b: &[u8]) -> World {
    let mut bits = vec![false; 10 * (a.len() + b.len())];
    for (s, &d) in a.iter().chain(b).enumerate() {
        bits[10 * s + d as usize] = true;
    }
    World(bits)
}

/// The digit of every segment of a one-hot world.
pub fn world_to_digits(world: &World) -> Vec<u8> {
    world
        .bits()
        .chunks(10)
        .map(|c| c.iter().position(|&b| b).unwrap_or(0) as u8)
        .collect()
}

/// `draws` exact uniform samples of digit assignments with the given sum.
pub fn sample_digit_explanations(n: usize, sum: u64, draws: usize, seed: u64) -> Result<ExplanationSet, TaskError> {
    let sampler = DigitSampler::new(n, sum)?;
    Ok(sampler.sample_set(draws, seed))
}

impl DigitSampler {
    pub fn sample_set(&self, draws: usize, seed: u64) -> ExplanationSet {
        let mut set = ExplanationSet::new();
        for t in 0..draws {
            let (a, b) = self.draw(&mut rng::stream(seed, t as u64, 0));
            set.record_draw(digits_to_world(&a, &b));
        }
        set
    }
}

impl Supervision for DigitSampler {
    fn explanations(&self, draws: usize, _theta: f64, seed: u64) -> Result<ExplanationSet, crate::explain::ExplainError> {
        Ok(self.sample_set(draws, seed))
    }
}

/// Grayscale images in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Images {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl Images {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let k = self.pixels_per_image();
        &self.pixels[i * k..(i + 1) * k]
    }

    /// Image `i` scaled to `[0, 1]`.
    pub fn features(&self, i: usize) -> Vec<f64> {
        self.image(i).iter().map(|&p| p as f64 / 255.0).collect()
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, TaskError> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(b: &[u8], at: usize) -> Result<u32, TaskError> {
    b.get(at..at + 4)
        .map(|s| u32::from_be_bytes(s.try_into().expect("4 bytes")))
        .ok_or(TaskError::Truncated {
            expected: at + 4,
            found: b.len(),
        })
}

/// Parses IDX image data (magic `0x00000803`).
pub fn parse_idx_images(bytes: &[u8]) -> Result<Images, TaskError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(TaskError::BadMagic {
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(TaskError::Truncated {
            expected: need,
            found: bytes.len(),
        });
    }
    Ok(Images {
        count,
        rows,
        cols,
        pixels: bytes[16..need].to_vec(),
    })
}

/// Parses IDX label data (magic `0x00000801`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, TaskError> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(TaskError::BadMagic {
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    if bytes.len() < 8 + count {
        return Err(TaskError::Truncated {
            expected: 8 + count,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..8 + count].to_vec())
}

/// Reads an IDX image file, gzip-compressed or not.
pub fn load_mnist_images(path: impl AsRef<Path>) -> Result<Images, TaskError> {
    parse_idx_images(&read_maybe_gz(path.as_ref())?)
}

/// Reads an IDX label file, gzip-compressed or not.
pub fn load_mnist_labels(path: impl AsRef<Path>) -> Result<Vec<u8>, TaskError> {
    parse_idx_labels(&read_maybe_gz(path.as_ref())?)
}

/// Images with their digit labels.
#[derive(Clone, Debug, PartialEq)]
pub struct MnistSplit {
    pub images: Images,
    pub labels: Vec<u8>,
}

/// Loads `<prefix>-images-idx3-ubyte[.gz]` and `<prefix>-labels-idx1-ubyte[.gz]`
/// from `dir`, e.g. with prefix `train` or `t10k`.
pub fn load_mnist_idx(dir: impl AsRef<Path>, prefix: &str) -> Result<MnistSplit, TaskError> {
    let find = |kind: &str| {
        let plain = dir.as_ref().join(format!("{prefix}-{kind}-ubyte"));
        let gz = dir.as_ref().join(format!("{prefix}-{kind}-ubyte.gz"));
        if gz.exists() {
            gz
        } else {
            plain
        }
    };
    let images = load_mnist_images(find("images-idx3"))?;
    let labels = load_mnist_labels(find("labels-idx1"))?;
    if images.count != labels.len() {
        return Err(TaskError::InvalidParameter(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    Ok(MnistSplit { images, labels })
}

/// Two `n`-digit numbers drawn as `2n` images, with their digits and sum.
#[derive(Clone, Debug, PartialEq)]
pub struct MnistAdditionInstance {
    /// Image indices, first number then second, most significant first.
    pub image_indices: Vec<usize>,
    pub digits: Vec<u8>,
    pub sum: u64,
}

impl MnistAdditionInstance {
    pub fn digits_per_number(&self) -> usize {
        self.digits.len() / 2
    }

    pub fn input(&self, images: &Images) -> Input {
        Input::new(self.image_indices.iter().map(|&i| images.features(i)).collect())
    }
}

fn number(digits: &[u8]) -> u64 {
    digits.iter().fold(0, |acc, &d| 10 * acc + d as u64)
}

/// Number of addition instances a split of `images` images yields.
pub fn addition_instance_count(images: usize, n: usize) -> usize {
    images / (2 * n)
}

/// Groups the images of a split into addition instances, each image used
/// once, after a seeded shuffle.
pub fn build_addition_dataset(split: &MnistSplit, n: usize, seed: u64) -> Result<Vec<MnistAdditionInstance>, TaskError> {
    check(n, 0)?;
    let mut order: Vec<usize> = (0..split.labels.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    Ok(order
        .chunks_exact(2 * n)
        .map(|chunk| {
            let digits: Vec<u8> = chunk.iter().map(|&i| split.labels[i]).collect();
            let sum = number(&digits[..n]) + number(&digits[n..]);
            MnistAdditionInstance {
                image_indices: chunk.to_vec(),
                digits,
                sum,
            }
        })
        .collect())
}
