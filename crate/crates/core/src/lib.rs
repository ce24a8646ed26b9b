pub mod crtbp;
pub mod kof;
pub mod koopman;
pub mod moments;
pub mod poly;
pub mod reference;
pub mod scenario;
