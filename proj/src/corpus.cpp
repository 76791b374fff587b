#include "rngaudit/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "rngaudit/errors.hpp"

namespace rngaudit::corpus {

namespace fs = std::filesystem;
using augment::AugmentKind;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t record_seed(std::uint64_t seed, std::uint64_t id) { return splitmix64(splitmix64(seed) ^ id); }

struct SplitSizes {
  std::size_t train, val, test;
};

SplitSizes split_sizes(std::size_t count) {
  const std::size_t train = count * 6 / 10;
  const std::size_t val = count * 2 / 10;
  return {train, val, count - train - val};
}

// Position of each id in the seeded shuffle.
std::vector<std::size_t> shuffled_positions(std::uint64_t seed, std::size_t count) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(splitmix64(seed ^ 0x5b1175eedULL));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> position(count);
  for (std::size_t p = 0; p < count; ++p) position[order[p]] = p;
  return position;
}

Split split_for_position(std::size_t position, const SplitSizes& sizes) {
  if (position < sizes.train) return Split::Train;
  if (position < sizes.train + sizes.val) return Split::Val;
  return Split::Test;
}

std::vector<AugmentKind> assign_kinds(const AugmentMix& mix, std::size_t count, std::uint64_t seed) {
  // Largest-remainder quotas, then a seeded shuffle.
  std::array<std::size_t, 6> quota{};
  std::array<double, 6> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 6; ++k) {
    const double exact = mix.fraction[k] * static_cast<double>(count);
    quota[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - std::floor(exact);
    assigned += quota[k];
  }
  std::array<std::size_t, 6> order{0, 1, 2, 3, 4, 5};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < count; ++i, ++assigned) ++quota[order[i % 6]];

  std::vector<AugmentKind> kinds;
  kinds.reserve(count);
  for (std::size_t k = 0; k < 6; ++k) kinds.insert(kinds.end(), quota[k], augment::kAllKinds[k]);
  std::mt19937_64 rng(splitmix64(seed ^ 0xa116e47ULL));
  std::shuffle(kinds.begin(), kinds.end(), rng);
  return kinds;
}

std::uint64_t parse_uint(const std::string& text, const std::string& what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) throw FormatError("bad " + what + " '" + text + "'");
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* split_file(Split s) {
  switch (s) {
    case Split::Train:
      return "train.csv";
    case Split::Val:
      return "val.csv";
    case Split::Test:
      return "test.csv";
  }
  return "";
}

}  // namespace

void AugmentMix::validate() const {
  double total = 0.0;
  for (double f : fraction) {
    if (!(f >= 0.0 && f <= 1.0)) throw ArgumentError("mix fractions must lie in [0, 1]");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("mix fractions must sum to 1");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ArgumentError("unknown split '" + name + "'");
}

const std::vector<LabeledSequence>& split_of(const Partitions& parts, Split split) {
  switch (split) {
    case Split::Train:
      return parts.train;
    case Split::Val:
      return parts.val;
    case Split::Test:
      return parts.test;
  }
  return parts.test;
}

Split assign_split(std::uint64_t seed, std::uint64_t id, std::size_t count) {
  if (id >= count) throw ArgumentError("record id out of range");
  return split_for_position(shuffled_positions(seed, count)[id], split_sizes(count));
}

Corpus build_corpus(std::size_t bits, std::size_t count, const AugmentMix& mix, std::uint64_t seed,
                    const sts::LabelPolicy& policy, unsigned threads) {
  if (!is_corpus_length(bits)) {
    throw ArgumentError("corpus sequences must be 512, 1024 or 2048 bits, got " + std::to_string(bits));
  }
  if (count == 0) throw ArgumentError("corpus count must be positive");
  mix.validate();

  const auto kinds = assign_kinds(mix, count, seed);
  std::vector<LabeledSequence> records(count);
  std::vector<BitSequence> seqs(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& rec = records[i];
    rec.id = i;
    rec.provenance = augment::sample_spec(kinds[i], bits, record_seed(seed, i));
    seqs[i] = augment::apply(rec.provenance, generate_one(bits, seed, i));
  }
  const auto reports = sts::run_batch(seqs, {}, threads);
  for (std::size_t i = 0; i < count; ++i) {
    records[i].seq = std::move(seqs[i]);
    records[i].label = sts::labelize(reports[i], policy);
  }

  Corpus corpus;
  auto& m = corpus.manifest;
  m.bits = bits;
  m.count = count;
  const auto sizes = split_sizes(count);
  m.train = sizes.train;
  m.val = sizes.val;
  m.test = sizes.test;
  m.seed = seed;
  m.mix = mix;
  m.alpha = policy.alpha[0];

  const auto position = shuffled_positions(seed, count);
  std::vector<std::size_t> order(count);
  for (std::size_t id = 0; id < count; ++id) order[position[id]] = id;
  for (std::size_t p = 0; p < count; ++p) {
    auto& rec = records[order[p]];
    switch (split_for_position(p, sizes)) {
      case Split::Train:
        corpus.parts.train.push_back(std::move(rec));
        break;
      case Split::Val:
        corpus.parts.val.push_back(std::move(rec));
        break;
      case Split::Test:
        corpus.parts.test.push_back(std::move(rec));
        break;
    }
  }
  return corpus;
}

std::string format_manifest(const CorpusManifest& m) {
  std::ostringstream out;
  char buf[64];
  out << "format = " << m.format_version << '\n'
      << "bits = " << m.bits << '\n'
      << "count = " << m.count << '\n'
      << "train = " << m.train << '\n'
      << "val = " << m.val << '\n'
      << "test = " << m.test << '\n'
      << "seed = " << m.seed << '\n';
  std::snprintf(buf, sizeof buf, "%.17g", m.alpha);
  out << "alpha = " << buf << '\n';
  for (auto k : augment::kAllKinds) {
    std::snprintf(buf, sizeof buf, "%.17g", m.mix[k]);
    out << "mix." << augment::kind_name(k) << " = " << buf << '\n';
  }
  return out.str();
}

CorpusManifest parse_manifest(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FormatError("manifest line " + std::to_string(number) + " is malformed");
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("manifest is missing '" + key + "'");
    return it->second;
  };
  CorpusManifest m;
  m.format_version = get("format");
  if (m.format_version != kFormatVersion) {
    throw FormatError("unsupported corpus format '" + m.format_version + "', expected " + kFormatVersion);
  }
  m.bits = parse_uint(get("bits"), "bits");
  m.count = parse_uint(get("count"), "count");
  m.train = parse_uint(get("train"), "train");
  m.val = parse_uint(get("val"), "val");
  m.test = parse_uint(get("test"), "test");
  m.seed = parse_uint(get("seed"), "seed");
  m.alpha = std::stod(get("alpha"));
  for (auto k : augment::kAllKinds) {
    m.mix.fraction[static_cast<std::size_t>(k)] = std::stod(get("mix." + std::string(augment::kind_name(k))));
  }
  if (m.train + m.val + m.test != m.count) throw IntegrityError("manifest split counts do not sum to count");
  return m;
}

std::string format_record(const LabeledSequence& rec) {
  return std::to_string(rec.id) + ',' + std::to_string(rec.seq.size()) + ',' + to_hex(rec.seq) + ',' +
         sts::label_to_string(rec.label);
}

LabeledSequence parse_record(const std::string& line, std::size_t line_number) {
  auto fail = [&](const std::string& why) -> FormatError {
    return FormatError("malformed record at line " + std::to_string(line_number) + ": " + why);
  };
  std::array<std::string, 4> fields;
  std::size_t start = 0;
  for (std::size_t f = 0; f < 4; ++f) {
    const auto comma = line.find(',', start);
    if ((comma == std::string::npos) != (f == 3)) throw fail("expected 4 comma-separated fields");
    fields[f] = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    start = comma + 1;
  }
  LabeledSequence rec;
  try {
    rec.id = parse_uint(fields[0], "id");
    const auto bits = parse_uint(fields[1], "bit count");
    rec.seq = from_hex(fields[2], bits);
    rec.label = sts::label_from_string(fields[3]);
  } catch (const std::exception& e) {
    throw fail(e.what());
  }
  return rec;
}

void write_corpus(const fs::path& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.txt", std::ios::binary);
    out << format_manifest(corpus.manifest);
    if (!out) throw std::runtime_error("failed writing " + (dir / "manifest.txt").string());
  }
  std::vector<const LabeledSequence*> all;
  for (auto split : {Split::Train, Split::Val, Split::Test}) {
    std::ofstream out(dir / split_file(split), std::ios::binary);
    for (const auto& rec : split_of(corpus.parts, split)) {
      out << format_record(rec) << '\n';
      all.push_back(&rec);
    }
    if (!out) throw std::runtime_error(std::string("failed writing ") + split_file(split));
  }
  std::sort(all.begin(), all.end(), [](auto a, auto b) { return a->id < b->id; });
  std::ofstream out(dir / "provenance.csv", std::ios::binary);
  for (const auto* rec : all) out << rec->id << ',' << augment::to_string(rec->provenance) << '\n';
  if (!out) throw std::runtime_error("failed writing provenance.csv");
}

Corpus read_corpus(const fs::path& dir) {
  Corpus corpus;
  corpus.manifest = parse_manifest(read_file(dir / "manifest.txt"));
  const auto& m = corpus.manifest;

  std::map<std::uint64_t, augment::AugmentSpec> provenance;
  if (fs::exists(dir / "provenance.csv")) {
    std::istringstream in(read_file(dir / "provenance.csv"));
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      const auto comma = line.find(',');
      if (comma == std::string::npos) {
        throw FormatError("malformed provenance at line " + std::to_string(number));
      }
      provenance[parse_uint(line.substr(0, comma), "id")] = augment::parse_spec(line.substr(comma + 1));
    }
  }

  for (auto split : {Split::Train, Split::Val, Split::Test}) {
    auto& records = split == Split::Train ? corpus.parts.train
                    : split == Split::Val ? corpus.parts.val
                                          : corpus.parts.test;
    std::istringstream in(read_file(dir / split_file(split)));
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (line.empty()) continue;
      auto rec = parse_record(line, number);
      if (rec.seq.size() != m.bits) {
        throw IntegrityError(std::string(split_file(split)) + " line " + std::to_string(number) + ": " +
                             std::to_string(rec.seq.size()) + " bits, manifest says " + std::to_string(m.bits));
      }
      if (auto it = provenance.find(rec.id); it != provenance.end()) rec.provenance = it->second;
      records.push_back(std::move(rec));
    }
  }
  if (corpus.parts.train.size() != m.train || corpus.parts.val.size() != m.val ||
      corpus.parts.test.size() != m.test) {
    throw IntegrityError("record counts (" + std::to_string(corpus.parts.train.size()) + "/" +
                         std::to_string(corpus.parts.val.size()) + "/" + std::to_string(corpus.parts.test.size()) +
                         ") disagree with manifest (" + std::to_string(m.train) + "/" + std::to_string(m.val) +
                         "/" + std::to_string(m.test) + ")");
  }
  return corpus;
}

VerifyReport verify_labels(const Partitions& parts, const sts::LabelPolicy& policy, double fraction,
                           std::uint64_t seed, unsigned threads) {
  std::vector<const LabeledSequence*> sample;
  for (const auto* split : {&parts.train, &parts.val, &parts.test}) {
    for (const auto& rec : *split) {
      const double u = static_cast<double>(splitmix64(seed ^ splitmix64(rec.id)) >> 11) * 0x1.0p-53;
      if (u < fraction) sample.push_back(&rec);
    }
  }
  std::vector<BitSequence> seqs;
  seqs.reserve(sample.size());
  for (const auto* rec : sample) seqs.push_back(rec->seq);
  const auto reports = sts::run_batch(seqs, {}, threads);
  VerifyReport report;
  report.checked = sample.size();
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (sts::labelize(reports[i], policy) != sample[i]->label) {
      ++report.mismatches;
      report.mismatched_ids.push_back(sample[i]->id);
    }
  }
  return report;
}

}  // namespace rngaudit::corpus
