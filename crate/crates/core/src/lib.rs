pub mod mesh;
pub mod ode;
pub mod tableau;
pub mod models;
pub mod dg;
pub mod stability;
pub mod harness;
