#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "aurora/cohort.hpp"
#include "aurora/encoder.hpp"
#include "aurora/metrics.hpp"

namespace aurora {

// Store file: "AURE", u16 version, u64 n, u32 d, u32 K, then per record
// u64 id, d f32 values of z, K x d f32 component values; all little-endian,
// followed by an FNV-1a 64 checksum. Values are rounded to 32-bit on write.
inline constexpr std::uint16_t kStoreVersion = 1;

void write_store(std::ostream& out, const EmbeddingSet& set);
void write_store(const std::string& path, const EmbeddingSet& set);
EmbeddingSet read_store(std::istream& in);
EmbeddingSet read_store(const std::string& path);

/// Forward pass over every record in cohort order. Rows are computed
/// independently, so an id maps to the same embedding under any permutation.
EmbeddingSet embed(const ModelBundle& model, const Cohort& cohort);
EmbeddingSet embed(const ModelBundle& model, const Cohort& cohort, std::span<const std::size_t> rows);

/// The set as it reads back from a store file (every value rounded to f32).
EmbeddingSet round_to_f32(const EmbeddingSet& set);

}  // namespace aurora
