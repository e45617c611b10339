pub mod basin;
pub mod boltzmann;
pub mod markov;
pub mod resum;
