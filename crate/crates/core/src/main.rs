//! `nomalink` binary: see `nomalink --help` or the `harness` module docs.

fn main() {
    std::process::exit(nomalink::harness::cli_main(std::env::args()));
}
