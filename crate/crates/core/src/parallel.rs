use std::thread;

/// Maps `f` over `0..len` on up to `threads` scoped threads, splitting the
/// range into contiguous chunks. The output order matches the index order,
/// so any reduction done over it afterwards is independent of the thread
/// count.
pub(crate) fn par_map<R, F>(len: usize, threads: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    let threads = threads.max(1).min(len.max(1));
    if threads == 1 || len < 256 {
        return (0..len).map(f).collect();
    }
    let chunk = len.div_ceil(threads);
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let lo = t * chunk;
                let hi = ((t + 1) * chunk).min(len);
                s.spawn(move || (lo..hi).map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::par_map;

    #[test]
    fn order_is_preserved() {
        for threads in [1, 2, 3, 8] {
            let v = par_map(1000, threads, |i| i * 2);
            assert_eq!(v, (0..1000).map(|i| i * 2).collect::<Vec<_>>());
        }
    }
}
