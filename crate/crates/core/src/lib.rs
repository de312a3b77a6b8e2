pub mod augment;
pub mod dataio;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod objective;
pub mod optim;
pub mod phantom;
pub mod rng;
pub mod tensor;
