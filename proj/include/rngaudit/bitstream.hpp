#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rngaudit {

/// Ordered binary symbols, one byte per bit (each 0 or 1).
class BitSequence {
 public:
  BitSequence() = default;
  explicit BitSequence(std::vector<std::uint8_t> bits);
  BitSequence(std::size_t n, std::uint8_t fill);

  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return bits_.empty(); }
  std::uint8_t operator[](std::size_t i) const noexcept { return bits_[i]; }
  std::uint8_t& operator[](std::size_t i) noexcept { return bits_[i]; }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::span<std::uint8_t> bits() noexcept { return bits_; }

  std::size_t popcount() const noexcept;

  friend bool operator==(const BitSequence&, const BitSequence&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

using Token = std::uint16_t;
using TokenSequence = std::vector<Token>;

inline constexpr std::size_t kBitsPerToken = 16;
inline constexpr std::size_t kVocabSize = 65536;

/// The three sequence lengths the corpus pipeline accepts.
inline constexpr std::size_t kCorpusLengths[] = {512, 1024, 2048};
bool is_corpus_length(std::size_t bits) noexcept;

/// `count` sequences of `bits` bits from a ChaCha20 keystream keyed by
/// (seed, index). Throws ArgumentError unless bits is a positive multiple of 16.
std::vector<BitSequence> generate_random(std::size_t count, std::size_t bits, std::uint64_t seed);

/// Single sequence from stream `index` of `seed`; generate_random(c, b, s)[i]
/// equals generate_one(b, s, i).
BitSequence generate_one(std::size_t bits, std::uint64_t seed, std::uint64_t index);

/// Token i is bits [16i, 16i+16) read most-significant-bit first.
TokenSequence tokenize(const BitSequence& seq);
BitSequence detokenize(std::span<const Token> tokens);

/// Accepts '0'/'1' with interleaved whitespace.
BitSequence parse_text(std::string_view text);
std::string to_text(const BitSequence& seq);

/// Lowercase hex, MSB-first per nibble; a trailing partial nibble is zero padded.
std::string to_hex(const BitSequence& seq);
BitSequence from_hex(std::string_view hex, std::size_t n);

}  // namespace rngaudit
