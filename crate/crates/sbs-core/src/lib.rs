pub mod geom;
pub mod liouville;
pub mod mesh;
pub mod morse;
pub mod parallel;
pub mod sparse;
pub mod surface;
