#include "rngaudit/augment.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <charconv>
#include <cstdio>
#include <numeric>
#include <random>

#include "rngaudit/errors.hpp"

namespace rngaudit::augment {

namespace {

constexpr std::array<std::string_view, 6> kNames = {
    "identity", "bias_bits", "constant_blocks", "inject_long_run", "sort_chunks", "stamp_template",
};

// Offsets of `count` non-overlapping windows of `width` bits in [0, n), uniformly
// over all placements (sorted gaps, then shift each window by the ones before it).
std::vector<std::size_t> place_windows(std::size_t n, std::size_t width, std::size_t count,
                                       std::mt19937_64& rng) {
  if (count * width > n) {
    throw ArgumentError("cannot place " + std::to_string(count) + " windows of " +
                        std::to_string(width) + " bits in " + std::to_string(n) + " bits");
  }
  const std::size_t slack = n - count * width;
  std::uniform_int_distribution<std::size_t> pick(0, slack);
  std::vector<std::size_t> offsets(count);
  for (auto& o : offsets) o = pick(rng);
  std::sort(offsets.begin(), offsets.end());
  for (std::size_t i = 0; i < count; ++i) offsets[i] += i * width;
  return offsets;
}

}  // namespace

std::string_view kind_name(AugmentKind kind) noexcept { return kNames[static_cast<std::size_t>(kind)]; }

AugmentKind kind_from_name(std::string_view name) {
  for (auto k : kAllKinds) {
    if (kind_name(k) == name) return k;
  }
  throw ArgumentError("unknown augmentation kind '" + std::string(name) + "'");
}

BitSequence bias_bits(const BitSequence& seq, double ones_probability, std::uint64_t seed) {
  if (!(ones_probability >= 0.5 && ones_probability <= 0.95)) {
    throw ArgumentError("ones probability must lie in [0.5, 0.95]");
  }
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(ones_probability);
  std::vector<std::uint8_t> bits(seq.size());
  for (auto& b : bits) b = coin(rng) ? 1 : 0;
  return BitSequence(std::move(bits));
}

BitSequence constant_blocks(const BitSequence& seq, std::size_t block_bits, double fraction,
                            std::uint64_t seed) {
  if (block_bits == 0 || block_bits > seq.size()) {
    throw ArgumentError("block length " + std::to_string(block_bits) + " exceeds sequence length");
  }
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ArgumentError("block fraction must lie in (0, 1]");
  const std::size_t blocks = seq.size() / block_bits;
  const auto selected = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(blocks) + 0.5));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(blocks);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  BitSequence out = seq;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < selected; ++i) {
    const std::uint8_t value = coin(rng) ? 1 : 0;
    auto bits = out.bits().subspan(order[i] * block_bits, block_bits);
    std::fill(bits.begin(), bits.end(), value);
  }
  return out;
}

BitSequence inject_long_run(const BitSequence& seq, std::size_t run_length, std::size_t count,
                            std::uint64_t seed) {
  if (run_length < 8 || run_length > 64) throw ArgumentError("run length must lie in [8, 64]");
  if (count == 0) throw ArgumentError("run count must be at least 1");
  std::mt19937_64 rng(seed);
  BitSequence out = seq;
  for (auto offset : place_windows(seq.size(), run_length, count, rng)) {
    auto bits = out.bits().subspan(offset, run_length);
    std::fill(bits.begin(), bits.end(), std::uint8_t{1});
  }
  return out;
}

BitSequence sort_chunks(const BitSequence& seq, std::size_t chunk_bits) {
  if (chunk_bits == 0 || seq.size() % chunk_bits != 0) {
    throw ArgumentError("chunk length " + std::to_string(chunk_bits) + " does not divide " +
                        std::to_string(seq.size()));
  }
  BitSequence out = seq;
  for (std::size_t c = 0; c < seq.size(); c += chunk_bits) {
    auto chunk = out.bits().subspan(c, chunk_bits);
    std::sort(chunk.begin(), chunk.end());
  }
  return out;
}

BitSequence stamp_template(const BitSequence& seq, std::span<const std::uint8_t> pattern,
                           std::size_t copies, std::uint64_t seed) {
  if (pattern.empty()) throw ArgumentError("empty template");
  if (copies < 8) throw ArgumentError("at least 8 template copies are required");
  std::mt19937_64 rng(seed);
  BitSequence out = seq;
  for (auto offset : place_windows(seq.size(), pattern.size(), copies, rng)) {
    std::copy(pattern.begin(), pattern.end(), out.bits().begin() + static_cast<std::ptrdiff_t>(offset));
  }
  return out;
}

BitSequence apply(const AugmentSpec& spec, const BitSequence& seq) {
  switch (spec.kind) {
    case AugmentKind::Identity:
      return seq;
    case AugmentKind::BiasBits:
      return bias_bits(seq, spec.ones_probability, spec.seed);
    case AugmentKind::ConstantBlocks:
      return constant_blocks(seq, spec.block_bits, spec.fraction, spec.seed);
    case AugmentKind::InjectLongRun:
      return inject_long_run(seq, spec.run_length, spec.run_count, spec.seed);
    case AugmentKind::SortChunks:
      return sort_chunks(seq, spec.chunk_bits);
    case AugmentKind::StampTemplate:
      return stamp_template(seq, kDefaultTemplate, spec.copies, spec.seed);
  }
  throw ArgumentError("invalid augmentation kind");
}

AugmentSpec sample_spec(AugmentKind kind, std::size_t bits, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AugmentSpec spec;
  spec.kind = kind;
  spec.seed = rng();
  switch (kind) {
    case AugmentKind::Identity:
      break;
    case AugmentKind::BiasBits:
      spec.ones_probability = std::uniform_real_distribution<double>(0.55, 0.95)(rng);
      break;
    case AugmentKind::ConstantBlocks:
      spec.fraction = 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      break;
    case AugmentKind::InjectLongRun:
      spec.run_length = std::uniform_int_distribution<std::size_t>(8, 64)(rng);
      spec.run_count = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
      spec.run_count = std::min(spec.run_count, std::max<std::size_t>(1, bits / spec.run_length));
      break;
    case AugmentKind::SortChunks: {
      static constexpr std::size_t kChunks[] = {16, 32, 64, 128};
      spec.chunk_bits = kChunks[std::uniform_int_distribution<std::size_t>(0, 3)(rng)];
      while (bits % spec.chunk_bits != 0) spec.chunk_bits /= 2;
      break;
    }
    case AugmentKind::StampTemplate:
      spec.copies = std::uniform_int_distribution<std::size_t>(8, 40)(rng);
      spec.copies = std::min(spec.copies, std::max<std::size_t>(8, bits / kDefaultTemplate.size()));
      break;
  }
  return spec;
}

std::string to_string(const AugmentSpec& spec) {
  std::string out(kind_name(spec.kind));
  char buf[64];
  auto add = [&](const char* key, auto value) {
    if constexpr (std::is_floating_point_v<decltype(value)>) {
      std::snprintf(buf, sizeof buf, ";%s=%.17g", key, value);
    } else {
      std::snprintf(buf, sizeof buf, ";%s=%llu", key, static_cast<unsigned long long>(value));
    }
    out += buf;
  };
  switch (spec.kind) {
    case AugmentKind::Identity:
      break;
    case AugmentKind::BiasBits:
      add("ones_probability", spec.ones_probability);
      break;
    case AugmentKind::ConstantBlocks:
      add("block_bits", spec.block_bits);
      add("fraction", spec.fraction);
      break;
    case AugmentKind::InjectLongRun:
      add("run_length", spec.run_length);
      add("count", spec.run_count);
      break;
    case AugmentKind::SortChunks:
      add("chunk_bits", spec.chunk_bits);
      break;
    case AugmentKind::StampTemplate:
      add("copies", spec.copies);
      break;
  }
  add("seed", spec.seed);
  return out;
}

AugmentSpec parse_spec(std::string_view text) {
  AugmentSpec spec;
  std::size_t pos = text.find(';');
  spec.kind = kind_from_name(text.substr(0, pos));
  while (pos != std::string_view::npos) {
    const std::size_t next = text.find(';', pos + 1);
    const auto field = text.substr(pos + 1, next == std::string_view::npos ? next : next - pos - 1);
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) throw FormatError("malformed augmentation field '" + std::string(field) + "'");
    const auto key = field.substr(0, eq);
    const std::string value(field.substr(eq + 1));
    auto as_uint = [&] {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc{} || ptr != value.data() + value.size()) {
        throw FormatError("bad integer '" + value + "' for " + std::string(key));
      }
      return v;
    };
    if (key == "ones_probability") {
      spec.ones_probability = std::stod(value);
    } else if (key == "block_bits") {
      spec.block_bits = as_uint();
    } else if (key == "fraction") {
      spec.fraction = std::stod(value);
    } else if (key == "run_length") {
      spec.run_length = as_uint();
    } else if (key == "count") {
      spec.run_count = as_uint();
    } else if (key == "chunk_bits") {
      spec.chunk_bits = as_uint();
    } else if (key == "copies") {
      spec.copies = as_uint();
    } else if (key == "seed") {
      spec.seed = as_uint();
    } else {
      throw FormatError("unknown augmentation parameter '" + std::string(key) + "'");
    }
    pos = next;
  }
  return spec;
}

}  // namespace rngaudit::augment
