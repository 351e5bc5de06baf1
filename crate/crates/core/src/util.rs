//! Small numeric and execution helpers shared across modules.

/// Compensated (Neumaier) summation.
///
/// Keeps the running error of long force sums far below the 1e-12 N budget
/// the binning conservation checks rely on.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Map `f` over `items` on up to `threads` OS threads, preserving input order.
///
/// Each item is handled independently; the output vector is assembled by
/// index, so the result does not depend on scheduling. `threads == 0` is
/// treated as 1.
pub fn parallel_map<T, U, F>(items: Vec<T>, threads: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(usize, T) -> U + Sync,
{
    let threads = threads.max(1);
    if threads == 1 || items.len() <= 1 {
        return items.into_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }

    let n = items.len();
    let chunk = n.div_ceil(threads);
    let mut indexed: Vec<(usize, T)> = items.into_iter().enumerate().collect();
    let mut out: Vec<(usize, U)> = Vec::with_capacity(n);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        while !indexed.is_empty() {
            let take = chunk.min(indexed.len());
            let batch: Vec<(usize, T)> = indexed.drain(..take).collect();
            let f = &f;
            handles.push(scope.spawn(move || {
                batch
                    .into_iter()
                    .map(|(i, t)| (i, f(i, t)))
                    .collect::<Vec<_>>()
            }));
        }
        for h in handles {
            out.extend(h.join().expect("worker thread panicked"));
        }
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, u)| u).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_handles_cancellation() {
        // 1e16 + 1 - 1e16 loses the 1 under naive summation.
        let s = neumaier_sum([1e16, 1.0, -1e16]);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<usize> = (0..103).collect();
        let serial = parallel_map(items.clone(), 1, |i, x| i * 1000 + x * 2);
        let threaded = parallel_map(items, 4, |i, x| i * 1000 + x * 2);
        assert_eq!(serial, threaded);
    }
}
