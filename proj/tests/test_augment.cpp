#include <algorithm>

#include "doctest.h"
#include "rngaudit/augment.hpp"
#include "rngaudit/errors.hpp"
#include "rngaudit/sts.hpp"

using namespace rngaudit;
using namespace rngaudit::augment;

namespace {

std::size_t count_occurrences(const BitSequence& s, std::span<const std::uint8_t> pattern) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i + pattern.size() <= s.size(); ++i) {
    hits += std::equal(pattern.begin(), pattern.end(), s.bits().begin() + static_cast<std::ptrdiff_t>(i));
  }
  return hits;
}

std::size_t longest_ones(const BitSequence& s) {
  std::size_t best = 0, run = 0;
  for (auto b : s.bits()) {
    run = b ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

// Fraction of 1000 augmented 512-bit sequences that fail `test`.
double fail_rate(const AugmentSpec& base, sts::TestId test) {
  std::size_t fails = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    AugmentSpec spec = base;
    spec.seed = 1000 + i;
    const auto seq = apply(spec, generate_one(512, 99, i));
    fails += sts::run_all(seq).p[sts::index_of(test)] < 0.01;
  }
  return static_cast<double>(fails) / 1000.0;
}

}  // namespace

TEST_CASE("bias_bits") {
  const auto seq = generate_one(512, 1, 0);
  const auto out = bias_bits(seq, 0.7, 5);
  CHECK(out.size() == seq.size());
  CHECK(out == bias_bits(seq, 0.7, 5));
  const double ones = static_cast<double>(bias_bits(BitSequence(20000, 0), 0.7, 9).popcount()) / 20000.0;
  CHECK(ones == doctest::Approx(0.7).epsilon(0.03));
  const double half = static_cast<double>(bias_bits(BitSequence(20000, 1), 0.5, 9).popcount()) / 20000.0;
  CHECK(half == doctest::Approx(0.5).epsilon(0.03));
  CHECK_THROWS_AS(bias_bits(seq, 0.97, 1), ArgumentError);
  CHECK_THROWS_AS(bias_bits(seq, 0.3, 1), ArgumentError);
  AugmentSpec spec;
  spec.kind = AugmentKind::BiasBits;
  CHECK(fail_rate(spec, sts::TestId::Frequency) >= 0.99);
}

TEST_CASE("constant_blocks") {
  const auto seq = generate_one(512, 2, 0);
  const auto out = constant_blocks(seq, 128, 0.5, 3);
  std::size_t constant = 0, untouched = 0;
  for (std::size_t b = 0; b < 4; ++b) {
    const auto block = out.bits().subspan(b * 128, 128);
    const bool same = std::equal(block.begin(), block.end(), seq.bits().begin() + static_cast<std::ptrdiff_t>(b * 128));
    const bool flat = std::all_of(block.begin(), block.end(), [&](auto v) { return v == block[0]; });
    constant += flat && !same;
    untouched += same;
  }
  CHECK(constant == 2);
  CHECK(untouched == 2);
  CHECK(constant_blocks(seq, 128, 0.01, 3) == seq);
  CHECK_THROWS_AS(constant_blocks(seq, 1024, 0.5, 3), ArgumentError);

  AugmentSpec spec;
  spec.kind = AugmentKind::ConstantBlocks;
  CHECK(fail_rate(spec, sts::TestId::BlockFrequency) >= 0.99);
}

TEST_CASE("inject_long_run") {
  const auto seq = generate_one(512, 3, 0);
  const auto out = inject_long_run(seq, 32, 4, 7);
  CHECK(out.size() == 512);
  CHECK(longest_ones(out) >= 32);
  CHECK(inject_long_run(BitSequence(512, 0), 64, 8, 1) == BitSequence(512, 1));
  CHECK_THROWS_AS(inject_long_run(seq, 64, 9, 1), ArgumentError);
  CHECK_THROWS_AS(inject_long_run(seq, 7, 1, 1), ArgumentError);
  CHECK_THROWS_AS(inject_long_run(seq, 8, 0, 1), ArgumentError);

  AugmentSpec spec;
  spec.kind = AugmentKind::InjectLongRun;
  CHECK(spec.run_count == 5);
  CHECK(fail_rate(spec, sts::TestId::LongestRun) >= 0.95);
  // Four runs of 32 sit just below the 95% mark.
  spec.run_count = 4;
  const double four = fail_rate(spec, sts::TestId::LongestRun);
  CHECK(four >= 0.90);
  CHECK(four <= 0.97);
}

TEST_CASE("sort_chunks") {
  const auto seq = generate_one(512, 4, 0);
  const auto out = sort_chunks(seq, 64);
  for (std::size_t c = 0; c < 512; c += 64) {
    const auto a = seq.bits().subspan(c, 64);
    const auto b = out.bits().subspan(c, 64);
    CHECK(std::count(a.begin(), a.end(), 1) == std::count(b.begin(), b.end(), 1));
    CHECK(std::is_sorted(b.begin(), b.end()));
  }
  CHECK(sort_chunks(out, 64) == out);
  CHECK_THROWS_AS(sort_chunks(seq, 48), ArgumentError);

  AugmentSpec spec;
  spec.kind = AugmentKind::SortChunks;
  CHECK(fail_rate(spec, sts::TestId::Runs) >= 0.99);
  // Popcounts are untouched, so Frequency keeps passing at its usual rate.
  CHECK(fail_rate(spec, sts::TestId::Frequency) <= 0.10);
}

TEST_CASE("stamp_template") {
  const auto seq = generate_one(512, 5, 0);
  const auto out = stamp_template(seq, kDefaultTemplate, 40, 11);
  CHECK(out.size() == 512);
  CHECK(count_occurrences(out, kDefaultTemplate) >= 40);
  CHECK_THROWS_AS(stamp_template(seq, kDefaultTemplate, 7, 1), ArgumentError);
  CHECK_THROWS_AS(stamp_template(seq, kDefaultTemplate, 57, 1), ArgumentError);

  AugmentSpec spec;
  spec.kind = AugmentKind::StampTemplate;
  CHECK(fail_rate(spec, sts::TestId::NonOverlappingTemplate) >= 0.95);
}

TEST_CASE("template count near its expectation passes") {
  // 8 blocks of 520 bits: one copy per block on an all-ones background gives
  // W_j = 1 = (520 - 9 + 1) / 512 exactly.
  BitSequence s(8 * 520, 1);
  for (std::size_t b = 0; b < 8; ++b) {
    std::copy(kDefaultTemplate.begin(), kDefaultTemplate.end(),
              s.bits().begin() + static_cast<std::ptrdiff_t>(b * 520 + 100));
  }
  const auto r = sts::non_overlapping_template_test(s, kDefaultTemplate, 8);
  CHECK(r.stats.matches == std::vector<std::size_t>(8, 1));
  CHECK(r.stats.chi_square == doctest::Approx(0.0));
  CHECK(r.p == doctest::Approx(1.0));
}

TEST_CASE("apply dispatches and is deterministic") {
  const auto seq = generate_one(512, 6, 0);
  CHECK(apply(AugmentSpec{}, seq) == seq);
  for (auto kind : kAllKinds) {
    const auto spec = sample_spec(kind, 512, 77);
    const auto a = apply(spec, seq);
    CHECK(a.size() == seq.size());
    CHECK(a == apply(spec, seq));
  }
}

TEST_CASE("sampled intensities stay in range and lengths are preserved") {
  for (std::size_t bits : {512u, 1024u, 2048u}) {
    for (std::uint64_t s = 0; s < 300; ++s) {
      for (auto kind : kAllKinds) {
        const auto spec = sample_spec(kind, bits, s);
        CHECK(spec.ones_probability >= 0.55);
        CHECK(spec.ones_probability <= 0.95);
        CHECK(spec.fraction > 0.0);
        CHECK(spec.fraction <= 1.0);
        CHECK(spec.run_length >= 8);
        CHECK(spec.run_length <= 64);
        CHECK(spec.copies >= 8);
        CHECK(bits % spec.chunk_bits == 0);
        if (s % 50 == 0) CHECK(apply(spec, generate_one(bits, s, 0)).size() == bits);
      }
    }
  }
}

TEST_CASE("spec text round trip") {
  for (auto kind : kAllKinds) {
    const auto spec = sample_spec(kind, 1024, 5);
    CHECK(parse_spec(to_string(spec)) == spec);
  }
  CHECK(to_string(AugmentSpec{}) == "identity;seed=0");
  CHECK_THROWS_AS(parse_spec("warp;seed=1"), ArgumentError);
  CHECK_THROWS_AS(parse_spec("bias_bits;bogus=1"), FormatError);
}
