fn main() {
    // Filled in once the core solvers land.
}
