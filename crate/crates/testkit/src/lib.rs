//! Test support for `isn-core`: slow reference implementations written
//! without reusing any of the library's algorithms, and seeded generators
//! of small random problems to compare them on.

pub mod random;
pub mod reference;
