//! Sieve of Eratosthenes, written the way the benchmark workload defines it:
//! every unmarked `i` from 2 to `max` is a prime and marks `2i, 3i, ...`.
//! No square-root cut-off and no odd-only packing, so timings stay
//! comparable with the reference workload.

/// All primes `<= max`, ascending.
pub fn sieve_primes(max: usize) -> Vec<usize> {
    if max < 2 {
        return Vec::new();
    }
    let mut composite = vec![false; max + 1];
    let mut primes = Vec::new();
    for i in 2..=max {
        if !composite[i] {
            primes.push(i);
            let mut j = i * 2;
            while j <= max {
                composite[j] = true;
                j += i;
            }
        }
    }
    primes
}
