//! Recurrent convolutional layers and the full forecasting network.

pub mod batchnorm;
pub mod cell;
pub mod network;

pub use batchnorm::{batchnorm_forward, BatchNormParams, BatchStats, Mode};
pub use cell::{
    cell_backward, cell_step, cell_step_cached, layer_backward, layer_forward, layer_forward_cached, CellGrads,
    CellState, ConvLSTMCellParams, Gate, GateParams, LayerCache, StepCache,
};
pub use network::{
    network_backward, network_forward, Architecture, Gradients, LayerRow, LossAndGrads, NetworkParams, Tape,
    NON_TRAINABLE, TRAINABLE,
};
