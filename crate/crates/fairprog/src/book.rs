//! Book chapters as doctests.
