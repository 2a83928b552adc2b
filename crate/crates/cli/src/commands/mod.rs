pub mod ensemble;
pub mod evolve;
pub mod inspect;
pub mod report;
pub mod train;
