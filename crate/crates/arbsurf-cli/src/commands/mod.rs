mod evaluate;
mod fit;
mod gen_data;
mod predict;
mod simulate;

pub use evaluate::cmd_evaluate;
pub use fit::cmd_fit;
pub use gen_data::cmd_gen_data;
pub use predict::cmd_predict;
pub use simulate::cmd_simulate;
