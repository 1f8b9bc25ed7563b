fn main() {
    // Die quietly on a closed pipe (e.g. `surropt ... | head`) like other
    // Unix line tools instead of panicking in println.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(surropt::cli::run());
}
