pub mod exactnum;
pub mod ramification;
pub mod discbounds;
pub mod cft;
pub mod groups;
pub mod symplectic;
pub mod tate;
pub mod exclusion;
pub mod data;
