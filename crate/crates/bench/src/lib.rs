//! Shared inputs for the benchmarks.

use cryptohalal_core::corpus::synthesize_fixture;
use cryptohalal_core::textprep::RawDocument;
use cryptohalal_core::Dataset;

/// The DeFi landing page used by the text-pipeline golden test.
pub const DEFI_PAGE: &str = include_str!("../../core/tests/fixtures/defi_site.html");

pub fn defi_page() -> RawDocument {
    RawDocument::html(DEFI_PAGE)
}

/// A page of roughly `kib` KiB made by repeating the DeFi page.
pub fn large_page(kib: usize) -> RawDocument {
    let reps = (kib * 1024).div_ceil(DEFI_PAGE.len()).max(1);
    RawDocument::html(DEFI_PAGE.repeat(reps))
}

pub fn reference_sized_dataset() -> Dataset {
    synthesize_fixture(56, 50, 42).expect("valid fixture sizes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_are_usable() {
        assert_eq!(reference_sized_dataset().len(), 106);
        assert!(large_page(64).content.len() >= 64 * 1024);
    }
}
