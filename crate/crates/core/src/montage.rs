//! Canonical 10/20 montage: the fixed 22-channel order every recording,
//! attention vector and topography in this crate refers to.
//!
//! Position 22 is the reference/auxiliary channel, named `REF`. Coordinates
//! are unit-disc head-model positions (x to the right ear, y to the nose);
//! the earlobes and `REF` sit just outside the scalp circle.

/// Number of channels in the canonical montage.
pub const CHANNEL_COUNT: usize = 22;

/// Canonical channel order.
pub const CHANNEL_NAMES: [&str; CHANNEL_COUNT] = [
    "FP1", "FP2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2", "F7", "F8", "T3", "T4", "T5",
    "T6", "A1", "A2", "FZ", "CZ", "PZ", "REF",
];

/// Unit-disc coordinates per channel, aligned with [`CHANNEL_NAMES`].
pub const CHANNEL_POSITIONS: [(f64, f64); CHANNEL_COUNT] = [
    (-0.294, 0.903),  // FP1
    (0.294, 0.903),   // FP2
    (-0.450, 0.480),  // F3
    (0.450, 0.480),   // F4
    (-0.475, 0.000),  // C3
    (0.475, 0.000),   // C4
    (-0.450, -0.480), // P3
    (0.450, -0.480),  // P4
    (-0.294, -0.903), // O1
    (0.294, -0.903),  // O2
    (-0.769, 0.559),  // F7
    (0.769, 0.559),   // F8
    (-0.950, 0.000),  // T3
    (0.950, 0.000),   // T4
    (-0.769, -0.559), // T5
    (0.769, -0.559),  // T6
    (-1.080, 0.000),  // A1
    (1.080, 0.000),   // A2
    (0.000, 0.475),   // FZ
    (0.000, 0.000),   // CZ
    (0.000, -0.475),  // PZ
    (0.000, -1.080),  // REF
];

/// Index of a channel name in the canonical order (case-insensitive).
pub fn channel_index(name: &str) -> Option<usize> {
    CHANNEL_NAMES
        .iter()
        .position(|c| c.eq_ignore_ascii_case(name.trim()))
}
