pub mod garnet;
pub mod inventory;
pub mod cartpole;
