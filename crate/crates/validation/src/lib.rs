//! Holds the `acceptance` test target. Run it with
//! `cargo test -p hepacut-validation --test acceptance`.
