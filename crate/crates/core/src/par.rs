//! Trial fan-out. With the `parallel` feature trials run on the rayon pool;
//! without it they run in order on the calling thread. Results are returned
//! in trial order either way, so reports do not depend on the schedule.

pub fn map_trials_sequential<T, F>(trials: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..trials).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_trials_parallel<T, F>(trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..trials).into_par_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_trials<T, F>(trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    map_trials_parallel(trials, f)
}

#[cfg(not(feature = "parallel"))]
pub fn map_trials<T, F>(trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    map_trials_sequential(trials, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v = map_trials(1000, |t| t * t);
        assert_eq!(v, map_trials_sequential(1000, |t| t * t));
        assert_eq!(v[999], 999 * 999);
    }
}
