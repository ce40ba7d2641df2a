//! Shared numeric and plumbing helpers: seeded RNG streams, stable content
//! hashing, rank statistics, and a bounded thread pool for verification scans.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a over bytes. Used for config hashes and artifact manifests; stable
/// across platforms and releases, unlike `std::hash`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a named sub-stream from a root seed so that stages (dataset,
/// occupancy, reward, policy, analysis) are independently reproducible.
pub fn stream_seed(root: u64, label: &str) -> u64 {
    let mut bytes = Vec::with_capacity(8 + label.len());
    bytes.extend_from_slice(&root.to_le_bytes());
    bytes.extend_from_slice(label.as_bytes());
    fnv1a64(&bytes)
}

/// Seeded RNG for a named sub-stream.
pub fn stream_rng(root: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(stream_seed(root, label))
}

/// Further splits a stream by an index (per trajectory, per cell, per chunk),
/// so parallel work is deterministic regardless of scheduling.
pub fn indexed_rng(root: u64, label: &str, index: u64) -> ChaCha12Rng {
    let mut bytes = Vec::with_capacity(16 + label.len());
    bytes.extend_from_slice(&root.to_le_bytes());
    bytes.extend_from_slice(label.as_bytes());
    bytes.extend_from_slice(&index.to_le_bytes());
    ChaCha12Rng::seed_from_u64(fnv1a64(&bytes))
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Average ranks (1-based), with ties sharing the mean rank of their block.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).expect("non-finite value in ranking"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "spearman inputs must have equal length");
    assert!(xs.len() >= 2, "spearman needs at least two points");
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Thread cap for internally parallel scans. Reads `ORS_LAB_THREADS`,
/// defaulting to the machine's parallelism.
pub fn thread_cap() -> usize {
    if let Ok(s) = std::env::var("ORS_LAB_THREADS") {
        if let Ok(n) = s.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Maps `f` over `0..n_items` on up to `thread_cap()` threads and returns the
/// results in index order. Output is independent of the thread count; callers
/// keep determinism by seeding any randomness from the item index.
pub fn parallel_map<T, F>(n_items: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = thread_cap().min(n_items.max(1));
    if threads <= 1 || n_items <= 1 {
        return (0..n_items).map(f).collect();
    }
    let mut out: Vec<Option<T>> = (0..n_items).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<&mut Option<T>>> =
        out.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n_items {
                    break;
                }
                let value = f(i);
                **slots[i].lock().unwrap() = Some(value);
            });
        }
    });
    out.into_iter().map(|v| v.expect("parallel_map slot unfilled")).collect()
}
