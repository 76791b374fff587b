#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rngaudit/augment.hpp"
#include "rngaudit/bitstream.hpp"
#include "rngaudit/sts.hpp"

namespace rngaudit::corpus {

inline constexpr const char* kFormatVersion = "rngaudit-corpus-v1";

/// Fraction of records per augmentation kind, indexed like augment::kAllKinds.
struct AugmentMix {
  std::array<double, 6> fraction{0.5, 0.1, 0.1, 0.1, 0.1, 0.1};

  double operator[](augment::AugmentKind k) const { return fraction[static_cast<std::size_t>(k)]; }
  void validate() const;
};

struct LabeledSequence {
  std::uint64_t id = 0;
  BitSequence seq;
  sts::LabelVector label{};
  augment::AugmentSpec provenance;
};

struct CorpusManifest {
  std::string format_version = kFormatVersion;
  std::size_t bits = 0;
  std::size_t count = 0;
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::uint64_t seed = 0;
  AugmentMix mix;
  double alpha = 0.01;
};

struct Partitions {
  std::vector<LabeledSequence> train;
  std::vector<LabeledSequence> val;
  std::vector<LabeledSequence> test;
};

struct Corpus {
  CorpusManifest manifest;
  Partitions parts;
};

enum class Split { Train, Val, Test };
Split split_from_name(const std::string& name);
const std::vector<LabeledSequence>& split_of(const Partitions& parts, Split split);

/// Which partition record `id` lands in; a pure function of (seed, id, count).
Split assign_split(std::uint64_t seed, std::uint64_t id, std::size_t count);

/// Generates, augments and labels `count` sequences, then splits 60/20/20.
/// `threads` only parallelises labelling; output does not depend on it.
Corpus build_corpus(std::size_t bits, std::size_t count, const AugmentMix& mix, std::uint64_t seed,
                    const sts::LabelPolicy& policy, unsigned threads = 1);

/// Writes manifest.txt, train.csv, val.csv, test.csv and provenance.csv into `dir`.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir);

std::string format_manifest(const CorpusManifest& manifest);
CorpusManifest parse_manifest(const std::string& text);

/// `id,bits,hex,label7`
std::string format_record(const LabeledSequence& rec);
LabeledSequence parse_record(const std::string& line, std::size_t line_number);

struct VerifyReport {
  std::size_t checked = 0;
  std::size_t mismatches = 0;
  std::vector<std::uint64_t> mismatched_ids;
};

/// Recomputes labels for a deterministic `fraction` sample of records.
VerifyReport verify_labels(const Partitions& parts, const sts::LabelPolicy& policy, double fraction = 1.0,
                           std::uint64_t seed = 0, unsigned threads = 1);

}  // namespace rngaudit::corpus
