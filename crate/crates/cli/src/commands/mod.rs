pub mod ablate;
pub mod bench;
pub mod eval;
pub mod gradcheck;
pub mod robustness;
pub mod train;

pub use ablate::cmd_ablate;
pub use bench::cmd_bench;
pub use eval::cmd_eval;
pub use gradcheck::cmd_gradcheck;
pub use robustness::cmd_robustness;
pub use train::cmd_train;
