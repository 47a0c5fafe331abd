fn main() {
    std::process::exit(anchormesh::cli::main());
}
