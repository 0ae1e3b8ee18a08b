//! Sub-Riemannian geometry of the Grushin-type pair `X1 = d/dx1`,
//! `X2 = h(x1) d/dx2`.

mod hfunc;
mod holder;
mod metric;
pub(crate) mod series;
mod vector_fields;

pub use hfunc::{CustomH, HFunction, TableH};
pub use holder::holder_seminorm;
pub use metric::{CcMetric, H_FLOOR};
#[allow(unused_imports)]
pub(crate) use metric::least_squares_slope;
pub use vector_fields::{dyadic_slopes, hormander_index, RootInfo, VectorFieldFamily, KAPPA_MAX};
