#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "rngaudit/corpus.hpp"
#include "rngaudit/errors.hpp"

using namespace rngaudit;
using namespace rngaudit::corpus;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("rngaudit_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void overwrite(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

std::vector<const LabeledSequence*> all_records(const Partitions& parts) {
  std::vector<const LabeledSequence*> out;
  for (const auto* split : {&parts.train, &parts.val, &parts.test}) {
    for (const auto& rec : *split) out.push_back(&rec);
  }
  return out;
}

}  // namespace

TEST_CASE("build_corpus splits 60/20/20 without overlap") {
  const auto c = build_corpus(512, 1000, {}, 42, sts::LabelPolicy{});
  CHECK(c.parts.train.size() == 600);
  CHECK(c.parts.val.size() == 200);
  CHECK(c.parts.test.size() == 200);
  CHECK(c.manifest.count == 1000);
  CHECK(c.manifest.bits == 512);
  std::set<std::uint64_t> ids;
  for (const auto* rec : all_records(c.parts)) {
    ids.insert(rec->id);
    CHECK(rec->seq.size() == 512);
  }
  CHECK(ids.size() == 1000);
  CHECK(*ids.rbegin() == 999);
  for (const auto& rec : c.parts.val) CHECK(assign_split(42, rec.id, 1000) == Split::Val);

  const auto odd = build_corpus(512, 7, {}, 1, sts::LabelPolicy{});
  CHECK(odd.parts.train.size() + odd.parts.val.size() + odd.parts.test.size() == 7);
}

TEST_CASE("augmentation mix is honoured exactly") {
  AugmentMix mix;
  mix.fraction = {0.25, 0.15, 0.15, 0.15, 0.15, 0.15};
  const auto c = build_corpus(512, 400, mix, 3, sts::LabelPolicy{});
  std::array<std::size_t, 6> seen{};
  for (const auto* rec : all_records(c.parts)) ++seen[static_cast<std::size_t>(rec->provenance.kind)];
  CHECK(seen == std::array<std::size_t, 6>{100, 60, 60, 60, 60, 60});

  mix.fraction = {0.5, 0.1, 0.1, 0.1, 0.1, 0.2};
  CHECK_THROWS_AS(build_corpus(512, 10, mix, 3, sts::LabelPolicy{}), ArgumentError);
  CHECK_THROWS_AS(build_corpus(500, 10, {}, 3, sts::LabelPolicy{}), ArgumentError);
  CHECK_THROWS_AS(build_corpus(512, 0, {}, 3, sts::LabelPolicy{}), ArgumentError);
}

TEST_CASE("labels come from the test suite") {
  const auto c = build_corpus(1024, 300, {}, 8, sts::LabelPolicy{});
  for (const auto* rec : all_records(c.parts)) {
    const auto fresh = augment::apply(rec->provenance, generate_one(1024, 8, rec->id));
    CHECK(fresh == rec->seq);
    CHECK(sts::labelize(sts::run_all(fresh), sts::LabelPolicy{}) == rec->label);
  }
}

TEST_CASE("default mix yields balanced labels") {
  const auto c = build_corpus(512, 10000, {}, 42, sts::LabelPolicy{}, 2);
  std::array<std::size_t, 7> fails{};
  for (const auto* rec : all_records(c.parts)) {
    for (std::size_t t = 0; t < 7; ++t) fails[t] += !rec->label[t];
  }
  for (std::size_t t = 0; t < 7; ++t) {
    const double rate = static_cast<double>(fails[t]) / 10000.0;
    CAPTURE(t);
    CHECK(rate >= 0.15);
    CHECK(rate <= 0.60);
  }
}

TEST_CASE("rebuild is byte-identical regardless of threads") {
  TempDir a("a"), b("b");
  write_corpus(a.path, build_corpus(512, 200, {}, 42, sts::LabelPolicy{}, 1));
  write_corpus(b.path, build_corpus(512, 200, {}, 42, sts::LabelPolicy{}, 3));
  for (const char* f : {"manifest.txt", "train.csv", "val.csv", "test.csv", "provenance.csv"}) {
    CAPTURE(f);
    CHECK(slurp(a.path / f) == slurp(b.path / f));
  }
  TempDir c("c");
  write_corpus(c.path, build_corpus(512, 200, {}, 43, sts::LabelPolicy{}, 1));
  CHECK(slurp(a.path / "train.csv") != slurp(c.path / "train.csv"));
}

TEST_CASE("write then read round trips") {
  TempDir dir("rt");
  const auto c = build_corpus(2048, 50, {}, 5, sts::LabelPolicy{0.05});
  write_corpus(dir.path, c);
  const auto back = read_corpus(dir.path);
  CHECK(back.manifest.count == 50);
  CHECK(back.manifest.bits == 2048);
  CHECK(back.manifest.seed == 5);
  CHECK(back.manifest.alpha == 0.05);
  CHECK(back.manifest.mix.fraction == c.manifest.mix.fraction);
  const auto x = all_records(c.parts);
  const auto y = all_records(back.parts);
  REQUIRE(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i]->id == y[i]->id);
    CHECK(x[i]->seq == y[i]->seq);
    CHECK(x[i]->label == y[i]->label);
    CHECK(x[i]->provenance == y[i]->provenance);
  }
  CHECK(slurp(dir.path / "manifest.txt").find("format = rngaudit-corpus-v1") != std::string::npos);
}

TEST_CASE("malformed and inconsistent files are rejected") {
  TempDir dir("bad");
  write_corpus(dir.path, build_corpus(512, 20, {}, 9, sts::LabelPolicy{}));
  const auto val = slurp(dir.path / "val.csv");
  const auto manifest = slurp(dir.path / "manifest.txt");

  SUBCASE("malformed record names its line") {
    const auto second = val.find('\n') + 1;
    overwrite(dir.path / "val.csv", val.substr(0, second) + "17,512,zz\n" + val.substr(second));
    try {
      read_corpus(dir.path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("malformed record at line 2") != std::string::npos);
    }
  }
  SUBCASE("missing record is an integrity error") {
    overwrite(dir.path / "val.csv", val.substr(val.find('\n') + 1));
    CHECK_THROWS_AS(read_corpus(dir.path), IntegrityError);
  }
  SUBCASE("bit count disagreeing with the manifest") {
    std::string m = manifest;
    m.replace(m.find("bits = 512"), 10, "bits = 1024");
    overwrite(dir.path / "manifest.txt", m);
    CHECK_THROWS_AS(read_corpus(dir.path), IntegrityError);
  }
  SUBCASE("unknown format version") {
    std::string m = manifest;
    m.replace(m.find("v1"), 2, "v9");
    overwrite(dir.path / "manifest.txt", m);
    CHECK_THROWS_AS(read_corpus(dir.path), FormatError);
  }
  SUBCASE("missing directory") { CHECK_THROWS_AS(read_corpus(dir.path / "nope"), FormatError); }
}

TEST_CASE("record text form") {
  LabeledSequence rec;
  rec.id = 12;
  rec.seq = from_hex("f0a5", 16);
  rec.label = sts::label_from_string("1011001");
  CHECK(format_record(rec) == "12,16,f0a5,1011001");
  const auto back = parse_record("12,16,f0a5,1011001", 1);
  CHECK(back.seq == rec.seq);
  CHECK(back.label == rec.label);
  CHECK_THROWS_AS(parse_record("12,16,f0a5", 4), FormatError);
  CHECK_THROWS_AS(parse_record("12,16,f0a5,10110", 4), FormatError);
  CHECK_THROWS_AS(parse_record("12,12,f0a5,1011001", 4), FormatError);
}

TEST_CASE("verify_labels") {
  auto c = build_corpus(512, 300, {}, 11, sts::LabelPolicy{});
  const auto clean = verify_labels(c.parts, sts::LabelPolicy{});
  CHECK(clean.checked == 300);
  CHECK(clean.mismatches == 0);

  c.parts.val[3].label[2] = !c.parts.val[3].label[2];
  const auto dirty = verify_labels(c.parts, sts::LabelPolicy{});
  CHECK(dirty.mismatches == 1);
  CHECK(dirty.mismatched_ids == std::vector<std::uint64_t>{c.parts.val[3].id});

  CHECK(verify_labels(c.parts, sts::LabelPolicy{}, 0.0).checked == 0);
  const auto part = verify_labels(c.parts, sts::LabelPolicy{}, 0.3, 4);
  CHECK(part.checked > 50);
  CHECK(part.checked < 130);
  CHECK(part.checked == verify_labels(c.parts, sts::LabelPolicy{}, 0.3, 4).checked);
}
