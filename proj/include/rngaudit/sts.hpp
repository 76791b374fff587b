#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rngaudit/bitstream.hpp"
#include "rngaudit/errors.hpp"

namespace rngaudit::sts {

/// The seven tests in canonical order; every 7-vector is indexed by this.
enum class TestId : std::uint8_t {
  Frequency,
  BlockFrequency,
  Runs,
  LongestRun,
  Dft,
  NonOverlappingTemplate,
  CumulativeSums,
};

inline constexpr std::size_t kNumTests = 7;
inline constexpr std::array<TestId, kNumTests> kAllTests = {
    TestId::Frequency, TestId::BlockFrequency,         TestId::Runs,           TestId::LongestRun,
    TestId::Dft,       TestId::NonOverlappingTemplate, TestId::CumulativeSums,
};

std::string_view test_name(TestId id) noexcept;
TestId test_from_name(std::string_view name);
constexpr std::size_t index_of(TestId id) noexcept { return static_cast<std::size_t>(id); }

enum class CusumMode { Forward, Reverse };

/// Intermediate quantities of a test. Only the fields a test defines are set.
struct TestStatistics {
  std::size_t n = 0;
  bool small_sample = false;  // n below the recommended minimum
  bool not_applicable = false;  // Runs: frequency pre-test failed

  // Frequency / CumulativeSums
  long long partial_sum = 0;  // S_n
  double s_obs = 0.0;
  long long max_excursion = 0;  // z

  // Runs
  double ones_proportion = 0.0;
  std::size_t runs = 0;  // V_n

  // Block-based tests
  std::size_t block_bits = 0;  // M
  std::size_t block_count = 0;  // N
  std::vector<double> block_proportions;  // pi_i
  std::vector<std::size_t> category_counts;  // nu_i
  double chi_square = 0.0;

  // Dft
  double threshold = 0.0;  // T
  double expected_below = 0.0;  // N0
  double observed_below = 0.0;  // N1
  double deviation = 0.0;  // d

  // NonOverlappingTemplate
  std::vector<std::uint8_t> template_bits;
  std::vector<std::size_t> matches;  // W_j
  double mean = 0.0;
  double variance = 0.0;
};

struct TestResult {
  double p = 0.0;
  TestStatistics stats;
};

struct StsParams {
  std::size_t block_frequency_bits = 128;
  std::vector<std::uint8_t> template_bits = {0, 0, 0, 0, 0, 0, 0, 0, 1};
  std::size_t template_blocks = 1;
  CusumMode cusum_mode = CusumMode::Forward;
};

/// Error raised by run_all, tagged with the test that failed.
class TestError : public ArgumentError {
 public:
  TestError(TestId id, const std::string& what)
      : ArgumentError(std::string(test_name(id)) + ": " + what), id_(id) {}
  TestId test() const noexcept { return id_; }

 private:
  TestId id_;
};

TestResult frequency_test(const BitSequence& seq);
TestResult block_frequency_test(const BitSequence& seq, std::size_t block_bits = 128);
TestResult runs_test(const BitSequence& seq);
TestResult longest_run_test(const BitSequence& seq);
TestResult dft_test(const BitSequence& seq);
TestResult non_overlapping_template_test(const BitSequence& seq,
                                         std::span<const std::uint8_t> template_bits,
                                         std::size_t block_count);
TestResult non_overlapping_template_test(const BitSequence& seq);
TestResult cumulative_sums_test(const BitSequence& seq, CusumMode mode = CusumMode::Forward);

struct PValueReport {
  std::array<double, kNumTests> p{};
  std::array<TestStatistics, kNumTests> stats{};

  double operator[](TestId id) const noexcept { return p[index_of(id)]; }
};

PValueReport run_all(const BitSequence& seq, const StsParams& params = {});

/// Evaluates sequences on `threads` workers; result i belongs to sequence i.
std::vector<PValueReport> run_batch(std::span<const BitSequence> seqs, const StsParams& params = {},
                                    unsigned threads = 1);

using LabelVector = std::array<bool, kNumTests>;

struct LabelPolicy {
  std::array<double, kNumTests> alpha;

  explicit LabelPolicy(double a = 0.01);
  explicit LabelPolicy(const std::array<double, kNumTests>& per_test);
};

/// pass[t] = p[t] >= alpha[t]
LabelVector labelize(const PValueReport& report, const LabelPolicy& policy = LabelPolicy{});

/// Seven '0'/'1' characters in TestId order.
std::string label_to_string(const LabelVector& label);
LabelVector label_from_string(std::string_view text);

/// `id,Name,p,flag,...` with p to 10 significant digits.
std::string format_report_line(std::uint64_t id, const PValueReport& report, const LabelVector& label);

}  // namespace rngaudit::sts
