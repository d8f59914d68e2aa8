pub mod assistants;
pub mod gateway;
pub mod institution;
pub mod land;
pub mod protocol;
pub mod session;
