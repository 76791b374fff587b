#include "rngaudit/bitstream.hpp"

#include <sodium.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <numeric>

#include "rngaudit/errors.hpp"

namespace rngaudit {

BitSequence::BitSequence(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] > 1) throw ArgumentError("bit " + std::to_string(i) + " is not 0 or 1");
  }
}

BitSequence::BitSequence(std::size_t n, std::uint8_t fill) : bits_(n, fill ? 1 : 0) {}

std::size_t BitSequence::popcount() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool is_corpus_length(std::size_t bits) noexcept {
  return std::find(std::begin(kCorpusLengths), std::end(kCorpusLengths), bits) !=
         std::end(kCorpusLengths);
}

namespace {

void check_token_multiple(std::size_t bits) {
  if (bits == 0 || bits % kBitsPerToken != 0) {
    throw ArgumentError("sequence length must be a positive multiple of 16 bits, got " +
                        std::to_string(bits));
  }
}

void ensure_sodium() {
  static const int status = sodium_init();
  if (status < 0) throw std::runtime_error("libsodium initialisation failed");
}

}  // namespace

BitSequence generate_one(std::size_t bits, std::uint64_t seed, std::uint64_t index) {
  check_token_multiple(bits);
  ensure_sodium();
  std::array<unsigned char, randombytes_SEEDBYTES> key{};
  for (int b = 0; b < 8; ++b) {
    key[b] = static_cast<unsigned char>(seed >> (8 * b));
    key[8 + b] = static_cast<unsigned char>(index >> (8 * b));
  }
  std::vector<unsigned char> bytes(bits / 8);
  randombytes_buf_deterministic(bytes.data(), bytes.size(), key.data());
  std::vector<std::uint8_t> out(bits);
  for (std::size_t i = 0; i < bits; ++i) {
    out[i] = static_cast<std::uint8_t>((bytes[i / 8] >> (7 - i % 8)) & 1u);
  }
  return BitSequence(std::move(out));
}

std::vector<BitSequence> generate_random(std::size_t count, std::size_t bits, std::uint64_t seed) {
  check_token_multiple(bits);
  std::vector<BitSequence> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_one(bits, seed, i));
  return out;
}

TokenSequence tokenize(const BitSequence& seq) {
  check_token_multiple(seq.size());
  TokenSequence tokens(seq.size() / kBitsPerToken);
  auto bits = seq.bits();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    unsigned value = 0;
    for (std::size_t k = 0; k < kBitsPerToken; ++k) value = (value << 1) | bits[t * kBitsPerToken + k];
    tokens[t] = static_cast<Token>(value);
  }
  return tokens;
}

BitSequence detokenize(std::span<const Token> tokens) {
  std::vector<std::uint8_t> bits(tokens.size() * kBitsPerToken);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    for (std::size_t k = 0; k < kBitsPerToken; ++k) {
      bits[t * kBitsPerToken + k] = static_cast<std::uint8_t>((tokens[t] >> (15 - k)) & 1u);
    }
  }
  return BitSequence(std::move(bits));
}

BitSequence parse_text(std::string_view text) {
  std::vector<std::uint8_t> bits;
  bits.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '0' || c == '1') {
      bits.push_back(static_cast<std::uint8_t>(c - '0'));
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      throw ParseError(std::string("illegal character '") + c + "' in bit text", i);
    }
  }
  return BitSequence(std::move(bits));
}

std::string to_text(const BitSequence& seq) {
  std::string out(seq.size(), '0');
  for (std::size_t i = 0; i < seq.size(); ++i) out[i] = static_cast<char>('0' + seq[i]);
  return out;
}

std::string to_hex(const BitSequence& seq) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out((seq.size() + 3) / 4, '0');
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i]) {
      auto& c = out[i / 4];
      const int nibble = static_cast<int>(std::string_view(kDigits).find(c)) | (8 >> (i % 4));
      c = kDigits[nibble];
    }
  }
  return out;
}

BitSequence from_hex(std::string_view hex, std::size_t n) {
  if (hex.size() != (n + 3) / 4) {
    throw ArgumentError("hex length " + std::to_string(hex.size()) + " does not match " +
                        std::to_string(n) + " bits");
  }
  std::vector<std::uint8_t> bits(n);
  for (std::size_t d = 0; d < hex.size(); ++d) {
    const char c = hex[d];
    int value;
    if (c >= '0' && c <= '9') {
      value = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      value = c - 'a' + 10;
    } else if (c >= 'A' && c <= 'F') {
      value = c - 'A' + 10;
    } else {
      throw ParseError(std::string("illegal hex digit '") + c + "'", d);
    }
    for (std::size_t k = 0; k < 4 && d * 4 + k < n; ++k) {
      bits[d * 4 + k] = static_cast<std::uint8_t>((value >> (3 - k)) & 1);
    }
  }
  return BitSequence(std::move(bits));
}

}  // namespace rngaudit
