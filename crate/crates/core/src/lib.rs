//! SPNet-style RGB-D salient object detection on a small, fully
//! differentiable CPU tensor engine.
//!
//! * [`tensor`]: NCHW tensors, the recording [`tensor::Graph`], parameters,
//!   finite-difference checking and the `SALF` weight container.
//! * [`model`]: pyramid encoders, cross-enhanced integration (CIM), receptive
//!   field blocks, U-Net decoders and multi-modal feature aggregation (MFA).
//! * [`loss`]: pixel position-aware loss and the three-branch objective.
//! * [`metrics`]: MAE, PR curve, max F-measure, S-measure and E-measure.

pub mod loss;
pub mod map;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;
