fn main() {
    // Die quietly when a downstream pipe closes, like any line-oriented
    // tool; Rust's runtime otherwise turns SIGPIPE into a panic.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    std::process::exit(eegrad::cli::cli_main(std::env::args_os().skip(1)));
}
