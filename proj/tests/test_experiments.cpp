#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "rngaudit/errors.hpp"
#include "rngaudit/experiments.hpp"

using namespace rngaudit;
using namespace rngaudit::experiments;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("rngaudit_exp_" + tag + "_" + std::to_string(::getpid()));
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

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

std::size_t line_count(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

const corpus::Corpus& small_corpus() {
  static const corpus::Corpus c = corpus::build_corpus(512, 300, {}, 17, sts::LabelPolicy{}, 1);
  return c;
}

SweepPlan tiny_plan() {
  SweepPlan plan = SweepPlan::desk(SweepParam::EncoderLayers);
  plan.values = {1, 2};
  plan.input_bits = {512};
  plan.defaults.d_model = 16;
  plan.defaults.n_heads = 2;
  plan.defaults.ffn_dim = 32;
  plan.seed = 5;
  plan.train.max_epochs = 2;
  plan.train.batch_size = 32;
  return plan;
}

SweepCell make_cell(std::size_t value, model::HeadType head, double f1) {
  SweepCell c;
  c.param = SweepParam::EncoderLayers;
  c.value = value;
  c.input_bits = 512;
  c.head = head;
  c.val_macro_f1 = f1;
  c.converged = f1 >= kConvergedF1;
  return c;
}

}  // namespace

TEST_CASE("sweep parameter names round trip") {
  for (auto p : {SweepParam::EncoderLayers, SweepParam::EmbeddingSize, SweepParam::AttentionHeads}) {
    CHECK(param_from_name(param_name(p)) == p);
  }
  CHECK_THROWS_AS(param_from_name("dropout"), ArgumentError);
}

TEST_CASE("desk grids and cell configurations") {
  CHECK(SweepPlan::desk(SweepParam::EncoderLayers).values == std::vector<std::size_t>{1, 2, 3, 4, 5});
  CHECK(SweepPlan::desk(SweepParam::EmbeddingSize).values ==
        std::vector<std::size_t>{192, 240, 288, 336, 384, 432});
  CHECK(SweepPlan::desk(SweepParam::AttentionHeads).values ==
        std::vector<std::size_t>{1, 2, 4, 8, 12, 16, 20, 24});

  const auto plan = SweepPlan::desk(SweepParam::EmbeddingSize);
  const auto c = plan.cell_config(288, 2048, model::HeadType::Flatten);
  CHECK(c.d_model == 288);
  CHECK(c.ffn_dim == 1152);
  CHECK(c.n_layers == 3);
  CHECK(c.n_heads == 8);
  CHECK(c.fixed_tokens == 128);
  CHECK(plan.cell_config(288, 512, model::HeadType::Average).fixed_tokens == 0);
  CHECK_NOTHROW(plan.validate());

  auto heads = SweepPlan::desk(SweepParam::AttentionHeads);
  CHECK_NOTHROW(heads.validate());
  heads.values.push_back(7);
  CHECK_THROWS_AS(heads.validate(), ArgumentError);

  auto bad = tiny_plan();
  bad.input_bits = {768};
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad = tiny_plan();
  bad.heads.clear();
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("a tiny sweep trains every cell deterministically") {
  const Corpora corpora{{512, small_corpus()}};
  const auto plan = tiny_plan();
  std::size_t reported = 0;
  SweepOptions options;
  options.on_cell = [&](const SweepCell&) { ++reported; };
  const auto cells = run_sweep(plan, corpora, options);

  REQUIRE(cells.size() == 4);
  CHECK(reported == 4);
  CHECK(cells[0].value == 1);
  CHECK(cells[0].head == model::HeadType::Flatten);
  CHECK(cells[1].head == model::HeadType::Average);
  CHECK(cells[3].value == 2);
  for (const auto& c : cells) {
    CHECK(c.error.empty());
    CHECK(c.epochs >= 1);
    CHECK(c.epochs <= 2);
    CHECK(c.test.has_value());
    CHECK(c.val_macro_f1 > 0.0);
    CHECK(c.converged == (c.val_macro_f1 >= kConvergedF1));
  }

  options.cell_threads = 2;
  options.threads = 2;
  const auto again = run_sweep(plan, corpora, options);
  REQUIRE(again.size() == cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CHECK(again[i].val_macro_f1 == cells[i].val_macro_f1);
    CHECK(again[i].test->macro == cells[i].test->macro);
  }
  CHECK(format_sweep_csv(again, plan.param) == format_sweep_csv(cells, plan.param));
}

TEST_CASE("a diverging cell is recorded and the sweep continues") {
  const Corpora corpora{{512, small_corpus()}};
  auto plan = tiny_plan();
  plan.values = {1};
  plan.heads = {model::HeadType::Average};
  plan.train.adam.lr = std::numeric_limits<double>::infinity();
  const auto cells = run_sweep(plan, corpora);
  REQUIRE(cells.size() == 1);
  CHECK_FALSE(cells[0].error.empty());
  CHECK_FALSE(cells[0].converged);
}

TEST_CASE("sweep rejects missing corpora") {
  auto plan = tiny_plan();
  plan.input_bits = {512, 1024};
  CHECK_THROWS_AS(run_sweep(plan, Corpora{{512, small_corpus()}}), ArgumentError);
}

TEST_CASE("sweep emission layout") {
  TempDir dir("sweep");
  CHECK_THROWS_AS(emit_sweep({}, dir.path), ArgumentError);

  std::vector<SweepCell> cells{make_cell(1, model::HeadType::Flatten, 0.91),
                               make_cell(5, model::HeadType::Average, 0.42)};
  cells[1].error = "non-finite, loss";
  emit_sweep(cells, dir.path);

  const auto csv = slurp(dir.path / "encoder_layers.csv");
  CHECK(csv ==
        "param_value,input_bits,head_type,macro_f1,converged\n"
        "1,512,flatten,0.910000,1\n"
        "5,512,average,0.420000,0\n");
  CHECK(csv == format_sweep_csv(cells, SweepParam::EncoderLayers));
  CHECK(format_sweep_csv(cells, SweepParam::AttentionHeads) == "param_value,input_bits,head_type,macro_f1,converged\n");
  CHECK_FALSE(fs::exists(dir.path / "attention_heads.csv"));

  const auto all = slurp(dir.path / "sweep_cells.csv");
  CHECK(first_line(all) ==
        "param,param_value,input_bits,head_type,val_macro_f1,test_micro_f1,test_macro_f1,test_weighted_f1,"
        "test_sample_f1,converged,epochs,error");
  CHECK(line_count(all) == 3);
  CHECK(all.find("non-finite; loss") != std::string::npos);
  const auto md = slurp(dir.path / "sweep_summary.md");
  CHECK(line_count(md) == 4);
  CHECK(md.find("| encoder_layers | 1 | 512 | flatten | 0.9100 | - | - | yes |") != std::string::npos);

  emit_sweep(cells, dir.path);
  CHECK(slurp(dir.path / "encoder_layers.csv") == csv);
}

TEST_CASE("bench runs techniques in order over one sequence list") {
  const auto& c = small_corpus();
  auto mcfg = tiny_plan().cell_config(1, 512, model::HeadType::Average);
  const auto transformer = model::Transformer::init(mcfg, 3);
  lstm::LstmConfig lcfg;
  lcfg.d_model = 8;
  lcfg.hidden = 8;
  const auto recurrent = lstm::Lstm::init(lcfg, 3);

  BenchInput in;
  in.input_bits = 512;
  in.test = c.parts.test;
  in.transformer = &transformer;
  in.lstm = &recurrent;
  const auto results = run_bench({in}, 1);
  REQUIRE(results.size() == 3);
  CHECK(results[0].technique == "Transformer");
  CHECK(results[1].technique == "LSTM");
  CHECK(results[2].technique == "STS");
  for (const auto& r : results) {
    CHECK(r.input_bits == 512);
    CHECK(r.sequences == c.parts.test.size());
    CHECK(r.compute_seconds > 0.0);
    CHECK(r.end_to_end_seconds >= r.compute_seconds);
    CHECK(r.per_sequence() == doctest::Approx(r.compute_seconds / r.sequences));
  }
  CHECK(results[0].metrics.has_value());
  CHECK(results[1].metrics.has_value());
  CHECK_FALSE(results[2].metrics.has_value());

  BenchInput only_sts = in;
  only_sts.transformer = nullptr;
  only_sts.lstm = nullptr;
  const auto sts_only = run_bench({only_sts}, 1);
  REQUIRE(sts_only.size() == 1);
  CHECK(sts_only[0].technique == "STS");

  BenchInput wrong = in;
  wrong.input_bits = 1024;
  CHECK_THROWS_AS(run_bench({wrong}, 1), ArgumentError);
  BenchInput empty = in;
  empty.test.clear();
  CHECK_THROWS_AS(run_bench({empty}, 1), ArgumentError);

  TempDir dir("bench");
  CHECK_THROWS_AS(emit_bench({}, dir.path), ArgumentError);
  emit_bench(results, dir.path);
  const auto times = slurp(dir.path / "time_vs_size.csv");
  CHECK(first_line(times) == "technique,input_bits,sequences,compute_s,end_to_end_s,per_sequence_s");
  CHECK(line_count(times) == 4);
  const auto table = slurp(dir.path / "bench_table.csv");
  CHECK(first_line(table) == "input_bits,technique,time_s,micro_f1,macro_f1,weighted_f1,sample_f1");
  CHECK(table.find("\n512,STS,") != std::string::npos);
  CHECK(table.find(",-,-,-,-\n") != std::string::npos);
  const auto text = format_bench_tables(results);
  CHECK(text.find("512-bit sequences (" + std::to_string(c.parts.test.size()) + " per technique)") == 0);
  CHECK(slurp(dir.path / "bench_summary.md").find(text) != std::string::npos);
}
