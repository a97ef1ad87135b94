pub mod eval;
pub mod inspect;
pub mod saliency;
pub mod sweep;
