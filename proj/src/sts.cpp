#include "rngaudit/sts.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "rngaudit/special.hpp"

namespace rngaudit::sts {

namespace {

constexpr std::array<std::string_view, kNumTests> kNames = {
    "Frequency", "BlockFrequency",         "Runs",           "LongestRun",
    "Dft",       "NonOverlappingTemplate", "CumulativeSums",
};

constexpr std::size_t kRecommendedMinimum = 100;

void require_nonempty(const BitSequence& seq) {
  if (seq.empty()) throw ArgumentError("empty sequence");
}

double clamp_p(double p) { return std::clamp(p, 0.0, 1.0); }

// C-style integer division (truncation toward zero), as in the reference code.
long long cdiv(long long a, long long b) { return a / b; }

// FFTW plans are created under a lock and reused; executing a plan on
// caller-owned buffers is thread safe.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan plan_for(std::size_t n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    std::vector<double> in(n);
    std::vector<fftw_complex> out(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(),
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(n, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [n, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::map<std::size_t, fftw_plan> plans_;
};

struct LongestRunTable {
  std::size_t block_bits;
  unsigned low;  // category 0 collects runs <= low
  std::vector<double> probs;
};

const LongestRunTable& longest_run_table(std::size_t n) {
  static const LongestRunTable small{8, 1, {0.21484375, 0.3671875, 0.23046875, 0.1875}};
  static const LongestRunTable medium{
      128, 4, {0.1174035788, 0.242955959, 0.249363483, 0.17517706, 0.102701071, 0.112398847}};
  static const LongestRunTable large{
      10000, 10, {0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727}};
  if (n < 128) throw UnsupportedLength("longest run test needs at least 128 bits");
  if (n < 6272) return small;
  if (n < 750000) return medium;
  return large;
}

}  // namespace

std::string_view test_name(TestId id) noexcept { return kNames[index_of(id)]; }

TestId test_from_name(std::string_view name) {
  for (auto id : kAllTests) {
    if (test_name(id) == name) return id;
  }
  throw ArgumentError("unknown test name '" + std::string(name) + "'");
}

TestResult frequency_test(const BitSequence& seq) {
  require_nonempty(seq);
  TestResult r;
  auto& s = r.stats;
  s.n = seq.size();
  s.small_sample = s.n < kRecommendedMinimum;
  s.partial_sum = 2 * static_cast<long long>(seq.popcount()) - static_cast<long long>(s.n);
  s.s_obs = std::abs(static_cast<double>(s.partial_sum)) / std::sqrt(static_cast<double>(s.n));
  r.p = clamp_p(special::erfc(s.s_obs / std::sqrt(2.0)));
  return r;
}

TestResult block_frequency_test(const BitSequence& seq, std::size_t block_bits) {
  require_nonempty(seq);
  if (block_bits == 0 || block_bits > seq.size()) {
    throw ArgumentError("block length " + std::to_string(block_bits) + " exceeds sequence length " +
                        std::to_string(seq.size()));
  }
  TestResult r;
  auto& s = r.stats;
  s.n = seq.size();
  s.small_sample = s.n < kRecommendedMinimum;
  s.block_bits = block_bits;
  s.block_count = seq.size() / block_bits;
  auto bits = seq.bits();
  double sum = 0.0;
  for (std::size_t i = 0; i < s.block_count; ++i) {
    const auto block = bits.subspan(i * block_bits, block_bits);
    const auto ones = std::count(block.begin(), block.end(), std::uint8_t{1});
    const double pi = static_cast<double>(ones) / static_cast<double>(block_bits);
    s.block_proportions.push_back(pi);
    sum += (pi - 0.5) * (pi - 0.5);
  }
  s.chi_square = 4.0 * static_cast<double>(block_bits) * sum;
  r.p = clamp_p(special::igamc(static_cast<double>(s.block_count) / 2.0, s.chi_square / 2.0));
  return r;
}

TestResult runs_test(const BitSequence& seq) {
  require_nonempty(seq);
  TestResult r;
  auto& s = r.stats;
  s.n = seq.size();
  s.small_sample = s.n < kRecommendedMinimum;
  const double n = static_cast<double>(s.n);
  const double pi = static_cast<double>(seq.popcount()) / n;
  s.ones_proportion = pi;
  s.runs = 1;
  for (std::size_t k = 0; k + 1 < s.n; ++k) s.runs += seq[k] != seq[k + 1];
  if (std::abs(pi - 0.5) > 2.0 / std::sqrt(n)) {
    s.not_applicable = true;
    r.p = 0.0;
    return r;
  }
  const double num = std::abs(static_cast<double>(s.runs) - 2.0 * n * pi * (1.0 - pi));
  const double den = 2.0 * std::sqrt(2.0 * n) * pi * (1.0 - pi);
  r.p = clamp_p(special::erfc(num / den));
  return r;
}

TestResult longest_run_test(const BitSequence& seq) {
  require_nonempty(seq);
  const auto& table = longest_run_table(seq.size());
  TestResult r;
  auto& s = r.stats;
  s.n = seq.size();
  s.block_bits = table.block_bits;
  s.block_count = seq.size() / table.block_bits;
  const std::size_t categories = table.probs.size();
  s.category_counts.assign(categories, 0);
  auto bits = seq.bits();
  for (std::size_t i = 0; i < s.block_count; ++i) {
    unsigned longest = 0;
    unsigned run = 0;
    for (auto b : bits.subspan(i * table.block_bits, table.block_bits)) {
      run = b ? run + 1 : 0;
      longest = std::max(longest, run);
    }
    const std::size_t category =
        longest <= table.low ? 0 : std::min<std::size_t>(longest - table.low, categories - 1);
    ++s.category_counts[category];
  }
  const double blocks = static_cast<double>(s.block_count);
  for (std::size_t i = 0; i < categories; ++i) {
    const double expected = blocks * table.probs[i];
    const double diff = static_cast<double>(s.category_counts[i]) - expected;
    s.chi_square += diff * diff / expected;
  }
  const double k = static_cast<double>(categories - 1);
  r.p = clamp_p(special::igamc(k / 2.0, s.chi_square / 2.0));
  return r;
}

TestResult dft_test(const BitSequence& seq) {
  require_nonempty(seq);
  const std::size_t n = seq.size();
  if (n % 2 != 0) throw ArgumentError("DFT test needs an even length, got " + std::to_string(n));
  TestResult r;
  auto& s = r.stats;
  s.n = n;
  s.small_sample = n < kRecommendedMinimum;

  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = 2.0 * seq[i] - 1.0;
  std::vector<fftw_complex> spectrum(n / 2 + 1);
  fftw_execute_dft_r2c(PlanCache::instance().plan_for(n), x.data(), spectrum.data());

  const double dn = static_cast<double>(n);
  s.threshold = std::sqrt(2.995732274 * dn);
  std::size_t below = 0;
  for (std::size_t i = 0; i < n / 2; ++i) {
    below += std::hypot(spectrum[i][0], spectrum[i][1]) < s.threshold;
  }
  s.observed_below = static_cast<double>(below);
  s.expected_below = 0.95 * dn / 2.0;
  s.deviation = (s.observed_below - s.expected_below) / std::sqrt(dn / 4.0 * 0.95 * 0.05);
  r.p = clamp_p(special::erfc(std::abs(s.deviation) / std::sqrt(2.0)));
  return r;
}

TestResult non_overlapping_template_test(const BitSequence& seq,
                                         std::span<const std::uint8_t> template_bits,
                                         std::size_t block_count) {
  require_nonempty(seq);
  const std::size_t m = template_bits.size();
  if (m == 0) throw ArgumentError("empty template");
  if (block_count == 0) throw ArgumentError("template test needs at least one block");
  const std::size_t block_bits = seq.size() / block_count;
  if (block_bits < m) {
    throw ArgumentError("block length " + std::to_string(block_bits) + " shorter than template length " +
                        std::to_string(m));
  }
  TestResult r;
  auto& s = r.stats;
  s.n = seq.size();
  s.small_sample = s.n < kRecommendedMinimum;
  s.block_bits = block_bits;
  s.block_count = block_count;
  s.template_bits.assign(template_bits.begin(), template_bits.end());

  const double M = static_cast<double>(block_bits);
  const double dm = static_cast<double>(m);
  s.mean = (M - dm + 1.0) / std::pow(2.0, dm);
  s.variance = M * (1.0 / std::pow(2.0, dm) - (2.0 * dm - 1.0) / std::pow(2.0, 2.0 * dm));

  auto bits = seq.bits();
  for (std::size_t i = 0; i < block_count; ++i) {
    const auto block = bits.subspan(i * block_bits, block_bits);
    std::size_t hits = 0;
    std::size_t j = 0;
    while (j + m <= block_bits) {
      if (std::equal(template_bits.begin(), template_bits.end(), block.begin() + j)) {
        ++hits;
        j += m;
      } else {
        ++j;
      }
    }
    s.matches.push_back(hits);
    const double diff = static_cast<double>(hits) - s.mean;
    s.chi_square += diff * diff / s.variance;
  }
  r.p = clamp_p(special::igamc(static_cast<double>(block_count) / 2.0, s.chi_square / 2.0));
  return r;
}

TestResult non_overlapping_template_test(const BitSequence& seq) {
  const StsParams defaults;
  return non_overlapping_template_test(seq, defaults.template_bits, defaults.template_blocks);
}

TestResult cumulative_sums_test(const BitSequence& seq, CusumMode mode) {
  require_nonempty(seq);
  TestResult r;
  auto& s = r.stats;
  s.n = seq.size();
  s.small_sample = s.n < kRecommendedMinimum;

  const long long n = static_cast<long long>(s.n);
  long long sum = 0;
  long long z = 0;
  for (long long k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(mode == CusumMode::Forward ? k : n - 1 - k);
    sum += seq[i] ? 1 : -1;
    z = std::max(z, std::abs(sum));
  }
  s.partial_sum = sum;
  s.max_excursion = z;

  const double root_n = std::sqrt(static_cast<double>(n));
  const double dz = static_cast<double>(z);
  const long long nz = cdiv(n, z);
  double sum1 = 0.0;
  for (long long k = cdiv(-nz + 1, 4); k <= cdiv(nz - 1, 4); ++k) {
    sum1 += special::normal_cdf(static_cast<double>(4 * k + 1) * dz / root_n) -
            special::normal_cdf(static_cast<double>(4 * k - 1) * dz / root_n);
  }
  double sum2 = 0.0;
  for (long long k = cdiv(-nz - 3, 4); k <= cdiv(nz - 1, 4); ++k) {
    sum2 += special::normal_cdf(static_cast<double>(4 * k + 3) * dz / root_n) -
            special::normal_cdf(static_cast<double>(4 * k + 1) * dz / root_n);
  }
  r.p = clamp_p(1.0 - sum1 + sum2);
  return r;
}

PValueReport run_all(const BitSequence& seq, const StsParams& params) {
  PValueReport report;
  auto store = [&](TestId id, auto&& fn) {
    try {
      TestResult r = fn();
      report.p[index_of(id)] = r.p;
      report.stats[index_of(id)] = std::move(r.stats);
    } catch (const TestError&) {
      throw;
    } catch (const std::exception& e) {
      throw TestError(id, e.what());
    }
  };
  store(TestId::Frequency, [&] { return frequency_test(seq); });
  store(TestId::BlockFrequency, [&] { return block_frequency_test(seq, params.block_frequency_bits); });
  store(TestId::Runs, [&] { return runs_test(seq); });
  store(TestId::LongestRun, [&] { return longest_run_test(seq); });
  store(TestId::Dft, [&] { return dft_test(seq); });
  store(TestId::NonOverlappingTemplate, [&] {
    return non_overlapping_template_test(seq, params.template_bits, params.template_blocks);
  });
  store(TestId::CumulativeSums, [&] { return cumulative_sums_test(seq, params.cusum_mode); });
  return report;
}

std::vector<PValueReport> run_batch(std::span<const BitSequence> seqs, const StsParams& params,
                                    unsigned threads) {
  std::vector<PValueReport> out(seqs.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(seqs.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < seqs.size(); ++i) out[i] = run_all(seqs[i], params);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < seqs.size(); i += threads) out[i] = run_all(seqs[i], params);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

LabelPolicy::LabelPolicy(double a) : LabelPolicy(std::array<double, kNumTests>{a, a, a, a, a, a, a}) {}

LabelPolicy::LabelPolicy(const std::array<double, kNumTests>& per_test) : alpha(per_test) {
  for (double a : alpha) {
    if (!(a > 0.0 && a < 1.0)) throw ArgumentError("significance level must lie in (0, 1)");
  }
}

LabelVector labelize(const PValueReport& report, const LabelPolicy& policy) {
  LabelVector label{};
  for (std::size_t t = 0; t < kNumTests; ++t) label[t] = report.p[t] >= policy.alpha[t];
  return label;
}

std::string label_to_string(const LabelVector& label) {
  std::string out(kNumTests, '0');
  for (std::size_t t = 0; t < kNumTests; ++t) out[t] = label[t] ? '1' : '0';
  return out;
}

LabelVector label_from_string(std::string_view text) {
  if (text.size() != kNumTests) {
    throw FormatError("label must have 7 characters, got " + std::to_string(text.size()));
  }
  LabelVector label{};
  for (std::size_t t = 0; t < kNumTests; ++t) {
    if (text[t] != '0' && text[t] != '1') throw FormatError("label characters must be 0 or 1");
    label[t] = text[t] == '1';
  }
  return label;
}

std::string format_report_line(std::uint64_t id, const PValueReport& report, const LabelVector& label) {
  std::string line = std::to_string(id);
  char buf[32];
  for (auto t : kAllTests) {
    std::snprintf(buf, sizeof buf, "%.10g", report[t]);
    line += ',';
    line += test_name(t);
    line += ',';
    line += buf;
    line += label[index_of(t)] ? ",1" : ",0";
  }
  return line;
}

}  // namespace rngaudit::sts
