#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rngaudit/bitstream.hpp"

namespace rngaudit::augment {

enum class AugmentKind : std::uint8_t {
  Identity,
  BiasBits,
  ConstantBlocks,
  InjectLongRun,
  SortChunks,
  StampTemplate,
};

inline constexpr std::array<AugmentKind, 6> kAllKinds = {
    AugmentKind::Identity,      AugmentKind::BiasBits,   AugmentKind::ConstantBlocks,
    AugmentKind::InjectLongRun, AugmentKind::SortChunks, AugmentKind::StampTemplate,
};

std::string_view kind_name(AugmentKind kind) noexcept;
AugmentKind kind_from_name(std::string_view name);

/// Kind plus its intensity parameters. Defaults are the documented default
/// intensities; only the fields of `kind` are read.
struct AugmentSpec {
  AugmentKind kind = AugmentKind::Identity;
  double ones_probability = 0.7;  // BiasBits, [0.5, 0.95]; sampled from [0.55, 0.95]
  std::size_t block_bits = 128;  // ConstantBlocks
  double fraction = 1.0;  // ConstantBlocks, (0, 1]
  std::size_t run_length = 32;  // InjectLongRun, [8, 64]
  std::size_t run_count = 5;  // InjectLongRun, >= 1
  std::size_t chunk_bits = 64;  // SortChunks, divides n
  std::size_t copies = 40;  // StampTemplate, >= 8
  std::uint64_t seed = 0;

  friend bool operator==(const AugmentSpec&, const AugmentSpec&) = default;
};

/// Template stamped by StampTemplate; the same pattern the template test scans for.
inline const std::vector<std::uint8_t> kDefaultTemplate = {0, 0, 0, 0, 0, 0, 0, 0, 1};

BitSequence bias_bits(const BitSequence& seq, double ones_probability, std::uint64_t seed);
BitSequence constant_blocks(const BitSequence& seq, std::size_t block_bits, double fraction,
                            std::uint64_t seed);
BitSequence inject_long_run(const BitSequence& seq, std::size_t run_length, std::size_t count,
                            std::uint64_t seed);
BitSequence sort_chunks(const BitSequence& seq, std::size_t chunk_bits);
BitSequence stamp_template(const BitSequence& seq, std::span<const std::uint8_t> pattern,
                           std::size_t copies, std::uint64_t seed);

BitSequence apply(const AugmentSpec& spec, const BitSequence& seq);

/// Spec for `kind` with intensity drawn uniformly over its documented range,
/// feasible for sequences of `bits` bits.
AugmentSpec sample_spec(AugmentKind kind, std::size_t bits, std::uint64_t seed);

/// `kind;key=value;...` with only the parameters of that kind.
std::string to_string(const AugmentSpec& spec);
AugmentSpec parse_spec(std::string_view text);

}  // namespace rngaudit::augment
