//! Seed derivation. All randomness in the crate flows from a single root
//! seed; subsystem seeds are derived with the splitmix64 finalizer so that
//! results do not depend on iteration or scheduling order.

/// splitmix64 finalizer (Vigna). Bijective on u64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a root seed with a sequence of domain values into one derived seed.
///
/// `mix64(&[seed, z1, z2, rep])` is the documented per-split seed rule:
/// each part is absorbed through one splitmix64 round, so the result is a
/// pure function of the inputs and insensitive to how splits are scheduled.
pub fn mix64(parts: &[u64]) -> u64 {
    let mut acc = 0x243f_6a88_85a3_08d3; // pi fraction, arbitrary non-zero start
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}
