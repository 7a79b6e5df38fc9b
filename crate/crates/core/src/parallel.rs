//! Thread-pool sizing shared by the library and the CLI.

/// Environment variable that caps internal parallelism.
pub const THREADS_ENV: &str = "INSTLOC_THREADS";

/// Configures the global rayon pool from `INSTLOC_THREADS` when it is set.
///
/// Returns the number of threads in effect. Calling this more than once is
/// harmless; only the first successful configuration sticks.
pub fn init_from_env() -> usize {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}
