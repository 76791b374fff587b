#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "rngaudit/bitstream.hpp"
#include "rngaudit/sts.hpp"

using namespace rngaudit;
using namespace rngaudit::sts;

namespace {

BitSequence alternating(std::size_t n) {
  BitSequence s(n, 0);
  for (std::size_t i = 1; i < n; i += 2) s[i] = 1;
  return s;
}

}  // namespace

TEST_CASE("test names round trip in canonical order") {
  CHECK(kAllTests.size() == 7);
  CHECK(test_name(TestId::Frequency) == "Frequency");
  CHECK(test_name(TestId::CumulativeSums) == "CumulativeSums");
  for (auto id : kAllTests) CHECK(test_from_name(test_name(id)) == id);
  CHECK_THROWS_AS(test_from_name("Serial"), ArgumentError);
}

TEST_CASE("frequency") {
  SUBCASE("reference worked example") {
    const auto r = frequency_test(parse_text("1011010101"));
    CHECK(r.stats.partial_sum == 2);
    CHECK(r.stats.s_obs == doctest::Approx(0.632456).epsilon(1e-6));
    CHECK(r.p == doctest::Approx(0.527089).epsilon(1e-6));
    CHECK(r.stats.small_sample);
  }
  SUBCASE("all zeros") { CHECK(frequency_test(BitSequence(512, 0)).p < 1e-12); }
  SUBCASE("alternation") {
    const auto r = frequency_test(alternating(512));
    CHECK(r.stats.partial_sum == 0);
    CHECK(r.p == 1.0);
    CHECK_FALSE(r.stats.small_sample);
  }
  CHECK_THROWS_AS(frequency_test(BitSequence{}), ArgumentError);
}

TEST_CASE("block frequency") {
  SUBCASE("reference worked example") {
    const auto r = block_frequency_test(parse_text("0110011010"), 3);
    CHECK(r.stats.block_count == 3);
    CHECK(r.stats.chi_square == doctest::Approx(1.0));
    CHECK(r.p == doctest::Approx(0.801252).epsilon(1e-6));
  }
  SUBCASE("all zeros") {
    const auto r = block_frequency_test(BitSequence(512, 0));
    CHECK(r.stats.chi_square == 512.0);
    CHECK(r.p < 1e-100);
  }
  SUBCASE("balanced blocks") {
    BitSequence s(512, 0);
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t i = 0; i < 64; ++i) s[b * 128 + 2 * i] = 1;
    }
    const auto r = block_frequency_test(s);
    CHECK(r.stats.chi_square == 0.0);
    CHECK(r.p == 1.0);
  }
  CHECK_THROWS_AS(block_frequency_test(BitSequence(100, 1), 128), ArgumentError);
}

TEST_CASE("runs") {
  SUBCASE("reference worked example") {
    const auto r = runs_test(parse_text("1001101011"));
    CHECK(r.stats.ones_proportion == doctest::Approx(0.6));
    CHECK(r.stats.runs == 7);
    CHECK(r.p == doctest::Approx(0.147232).epsilon(1e-6));
  }
  SUBCASE("alternation") {
    const auto r = runs_test(alternating(512));
    CHECK(r.stats.runs == 512);
    CHECK(r.p == doctest::Approx(std::erfc(16.0)).epsilon(1e-9));
    CHECK(r.p < 1e-100);
  }
  SUBCASE("frequency gate") {
    const auto r = runs_test(BitSequence(512, 0));
    CHECK(r.stats.not_applicable);
    CHECK(r.p == 0.0);
  }
}

TEST_CASE("longest run of ones") {
  SUBCASE("reference worked example") {
    const auto r = longest_run_test(parse_text(
        "11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101011111001100111001101101100010110010"));
    CHECK(r.stats.category_counts == std::vector<std::size_t>{4, 9, 3, 0});
    CHECK(r.stats.chi_square == doctest::Approx(4.882457).epsilon(1e-6));
    CHECK(r.p == doctest::Approx(0.180609).epsilon(1e-5));
  }
  SUBCASE("all ones") {
    const auto r = longest_run_test(BitSequence(512, 1));
    CHECK(r.stats.category_counts == std::vector<std::size_t>{0, 0, 0, 64});
    CHECK(r.p < 1e-50);
  }
  SUBCASE("all zeros land in the lowest category") {
    const auto r = longest_run_test(BitSequence(512, 0));
    CHECK(r.stats.category_counts == std::vector<std::size_t>{64, 0, 0, 0});
    CHECK(r.p < 1e-40);
  }
  SUBCASE("exact expected counts give zero statistic") {
    // 256 bits = 32 blocks; expected counts 32 * (0.21484375, 0.3671875,
    // 0.23046875, 0.1875) are not integral, so use 256 blocks (2048 bits):
    // 55, 94, 59, 48.
    std::vector<std::uint8_t> bits;
    auto block = [&](const char* b) {
      for (int i = 0; i < 8; ++i) bits.push_back(static_cast<std::uint8_t>(b[i] - '0'));
    };
    for (int i = 0; i < 55; ++i) block("10000000");
    for (int i = 0; i < 94; ++i) block("11000000");
    for (int i = 0; i < 59; ++i) block("11100000");
    for (int i = 0; i < 48; ++i) block("11110000");
    const auto r = longest_run_test(BitSequence(bits));
    CHECK(r.stats.chi_square == doctest::Approx(0.0));
    CHECK(r.p == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(longest_run_test(BitSequence(127, 1)), UnsupportedLength);
}

TEST_CASE("discrete Fourier transform") {
  SUBCASE("all zeros") {
    const auto r = dft_test(BitSequence(512, 0));
    CHECK(r.stats.threshold == doctest::Approx(std::sqrt(2.995732274 * 512)));
    CHECK(r.stats.observed_below == 255.0);
    // N1 = 255 exceeds N0 = 243.2, so the deviation is positive.
    CHECK(r.stats.deviation == doctest::Approx(4.78553).epsilon(1e-5));
    CHECK(r.p == doctest::Approx(1.7053507666243625e-06).epsilon(1e-6));
  }
  SUBCASE("alternation") {
    const auto r = dft_test(alternating(512));
    CHECK(r.stats.observed_below == 256.0);
    CHECK(r.stats.expected_below == doctest::Approx(243.2));
    CHECK(r.stats.deviation == doctest::Approx(5.19).epsilon(1e-3));
    CHECK(r.p == doctest::Approx(2.0907161196514007e-07).epsilon(1e-6));
  }
  SUBCASE("reference worked example") {
    CHECK(dft_test(parse_text("1001010011")).p == doctest::Approx(0.4681599098544281).epsilon(1e-9));
  }
  CHECK_THROWS_AS(dft_test(BitSequence(511, 1)), ArgumentError);
}

TEST_CASE("non-overlapping template") {
  SUBCASE("reference worked example") {
    const std::vector<std::uint8_t> tmpl{0, 0, 1};
    const auto r = non_overlapping_template_test(parse_text("10100100101110010110"), tmpl, 2);
    CHECK(r.stats.matches == std::vector<std::size_t>{2, 1});
    CHECK(r.stats.mean == doctest::Approx(1.0));
    CHECK(r.stats.variance == doctest::Approx(0.46875));
    CHECK(r.stats.chi_square == doctest::Approx(2.133333).epsilon(1e-6));
    CHECK(r.p == doctest::Approx(0.344154).epsilon(1e-5));
  }
  SUBCASE("all zeros, default single block") {
    const auto r = non_overlapping_template_test(BitSequence(512, 0));
    CHECK(r.stats.block_count == 1);
    CHECK(r.stats.matches == std::vector<std::size_t>{0});
    CHECK(r.stats.mean == doctest::Approx(504.0 / 512.0));
    CHECK(r.p == doctest::Approx(0.3167611986132855).epsilon(1e-9));
  }
  SUBCASE("all zeros, eight blocks") {
    const std::vector<std::uint8_t> tmpl{0, 0, 0, 0, 0, 0, 0, 0, 1};
    const auto r = non_overlapping_template_test(BitSequence(512, 0), tmpl, 8);
    CHECK(r.stats.mean == doctest::Approx(56.0 / 512.0));
    CHECK(r.stats.chi_square == doctest::Approx(0.792).epsilon(1e-3));
    CHECK(r.p == doctest::Approx(0.9992522603315008).epsilon(1e-9));
  }
  SUBCASE("tiled template") {
    BitSequence s(512, 0);
    for (std::size_t i = 8; i < 512; i += 9) s[i] = 1;
    const auto r = non_overlapping_template_test(s);
    CHECK(r.stats.matches == std::vector<std::size_t>{56});
    CHECK(r.p < 1e-100);
    const std::vector<std::uint8_t> tmpl{0, 0, 0, 0, 0, 0, 0, 0, 1};
    const auto eight = non_overlapping_template_test(s, tmpl, 8);
    for (auto w : eight.stats.matches) CHECK((w == 6 || w == 7));
    CHECK(eight.stats.chi_square > 100.0);
  }
  SUBCASE("window jumps past a match") {
    const std::vector<std::uint8_t> tmpl{1, 1};
    CHECK(non_overlapping_template_test(BitSequence(8, 1), tmpl, 1).stats.matches[0] == 4);
  }
  const std::vector<std::uint8_t> tmpl{0, 0, 0, 0, 0, 0, 0, 0, 1};
  CHECK_THROWS_AS(non_overlapping_template_test(BitSequence(64, 0), tmpl, 8), ArgumentError);
}

TEST_CASE("cumulative sums") {
  SUBCASE("reference worked example") {
    const auto r = cumulative_sums_test(parse_text("1011010111"));
    CHECK(r.stats.max_excursion == 4);
    CHECK(r.p == doctest::Approx(0.4116588).epsilon(1e-6));
  }
  SUBCASE("all zeros") {
    const auto r = cumulative_sums_test(BitSequence(512, 0));
    CHECK(r.stats.max_excursion == 512);
    CHECK(r.p < 1e-100);
  }
  SUBCASE("alternation") {
    const auto r = cumulative_sums_test(alternating(512));
    CHECK(r.stats.max_excursion == 1);
    CHECK(r.p == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("reverse mode scans from the end") {
    BitSequence s(100, 1);
    for (std::size_t i = 0; i < 50; ++i) s[i] = 0;
    CHECK(cumulative_sums_test(s, CusumMode::Forward).stats.max_excursion == 50);
    CHECK(cumulative_sums_test(s, CusumMode::Reverse).stats.max_excursion == 50);
    BitSequence t(100, 0);
    for (std::size_t i = 0; i < 10; ++i) t[i] = 1;
    CHECK(cumulative_sums_test(t, CusumMode::Forward).stats.max_excursion == 80);
    CHECK(cumulative_sums_test(t, CusumMode::Reverse).stats.max_excursion == 90);
  }
}

TEST_CASE("run_all and labelize") {
  const auto zeros = run_all(BitSequence(512, 0));
  CHECK(zeros.p.size() == 7);
  const auto label = labelize(zeros);
  CHECK(label_to_string(label) == "0000010");

  PValueReport ones;
  ones.p.fill(1.0);
  CHECK(label_to_string(labelize(ones)) == "1111111");

  PValueReport boundary;
  boundary.p.fill(0.01);
  CHECK(label_to_string(labelize(boundary, LabelPolicy(0.01))) == "1111111");

  CHECK_THROWS_AS(LabelPolicy(0.0), ArgumentError);
  CHECK_THROWS_AS(LabelPolicy(1.0), ArgumentError);
}

TEST_CASE("run_all tags the failing test") {
  try {
    run_all(BitSequence(96, 1));
    FAIL("expected TestError");
  } catch (const TestError& e) {
    CHECK(e.test() == TestId::BlockFrequency);
  }
  try {
    run_all(BitSequence(112, 1), StsParams{.block_frequency_bits = 16});
    FAIL("expected TestError");
  } catch (const TestError& e) {
    CHECK(e.test() == TestId::LongestRun);
  }
}

TEST_CASE("matches the reference oracle on the frozen fixture") {
  const auto rows = fixtures::load_sts_oracle(RNGAUDIT_TEST_DATA "/sts_oracle.csv");
  REQUIRE(rows.size() == 1000);
  for (std::size_t i = 0; i < rows.size(); i += 7) {
    const auto report = run_all(rows[i].seq);
    for (std::size_t t = 0; t < kNumTests; ++t) {
      INFO("row " << i << " test " << test_name(kAllTests[t]));
      CHECK(std::abs(report.p[t] - rows[i].p[t]) <= 1e-6);
    }
  }
}

TEST_CASE("batch evaluation is deterministic across thread counts") {
  const auto seqs = generate_random(64, 1024, 3);
  const auto serial = run_batch(seqs, {}, 1);
  const auto parallel = run_batch(seqs, {}, 4);
  for (std::size_t i = 0; i < seqs.size(); ++i) CHECK(serial[i].p == parallel[i].p);
}

TEST_CASE("labelize is monotone in alpha") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    PValueReport r;
    for (auto& p : r.p) p = unit(rng) < 0.2 ? unit(rng) * 0.05 : unit(rng);
    const double lo = unit(rng) * 0.5 + 1e-6;
    const double hi = lo + unit(rng) * (1.0 - lo - 1e-6);
    const auto a = labelize(r, LabelPolicy(lo));
    const auto b = labelize(r, LabelPolicy(hi));
    for (std::size_t t = 0; t < kNumTests; ++t) CHECK((a[t] || !b[t]));
  }
}

TEST_CASE("frequency p-value decreases with bias") {
  std::mt19937_64 rng(23);
  double previous = 2.0;
  for (double bias : {0.5, 0.6, 0.7, 0.8}) {
    std::bernoulli_distribution coin(bias);
    double total = 0.0;
    for (int i = 0; i < 1000; ++i) {
      std::vector<std::uint8_t> bits(512);
      for (auto& b : bits) b = coin(rng);
      total += frequency_test(BitSequence(bits)).p;
    }
    const double mean = total / 1000.0;
    CHECK(mean < previous);
    previous = mean;
  }
}

TEST_CASE("report line format") {
  PValueReport r;
  r.p = {0.5270892568655381, 1.0, 0.0, 0.25, 0.009, 0.3167611986132855, 1e-12};
  const auto line = format_report_line(42, r, labelize(r));
  CHECK(line ==
        "42,Frequency,0.5270892569,1,BlockFrequency,1,1,Runs,0,0,LongestRun,0.25,1,Dft,0.009,0,"
        "NonOverlappingTemplate,0.3167611986,1,CumulativeSums,1e-12,0");
}

TEST_CASE("label strings") {
  CHECK(label_from_string("1010101") == LabelVector{true, false, true, false, true, false, true});
  CHECK_THROWS_AS(label_from_string("0101"), FormatError);
  CHECK_THROWS_AS(label_from_string("01010x1"), FormatError);
}
