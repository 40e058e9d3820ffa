//! Link-level machinery: QAM constellations, channel models, minimum-distance
//! demapping, bit error rate and plug-in mutual information.

mod channel;
mod constellation;
mod demap;
mod mi;

pub use channel::{apply_channel, modulate, ChannelKind, ChannelModel, SymbolFrame};
pub use constellation::Constellation;
pub use demap::{compute_ber, count_bit_errors, demap_nearest, indices_to_bits, nearest_index};
pub use mi::{entropy_bits, mutual_information};
