#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rngaudit/corpus.hpp"
#include "rngaudit/lstm.hpp"
#include "rngaudit/metrics.hpp"
#include "rngaudit/model.hpp"

namespace rngaudit::experiments {

/// Validation macro F1 at or above this marks a cell as converged.
inline constexpr double kConvergedF1 = 0.7;

enum class SweepParam { EncoderLayers, EmbeddingSize, AttentionHeads };

std::string param_name(SweepParam p);
SweepParam param_from_name(const std::string& name);

struct SweepPlan {
  SweepParam param = SweepParam::EncoderLayers;
  std::vector<std::size_t> values;
  model::ModelConfig defaults;  // 3 layers, 8 heads, 240 embedding
  std::vector<std::size_t> input_bits{512, 1024, 2048};
  std::vector<model::HeadType> heads{model::HeadType::Flatten, model::HeadType::Average};
  std::uint64_t seed = 0;
  nn::TrainConfig train;

  /// Grids: layers 1..5; embeddings 192..432 step 48; heads 1,2,4,8,12,16,20,24.
  static SweepPlan desk(SweepParam param);

  model::ModelConfig cell_config(std::size_t value, std::size_t bits, model::HeadType head) const;
  void validate() const;
};

struct SweepCell {
  SweepParam param = SweepParam::EncoderLayers;
  std::size_t value = 0;
  std::size_t input_bits = 0;
  model::HeadType head = model::HeadType::Average;
  double val_macro_f1 = 0.0;
  std::optional<metrics::MetricSummary> test;
  bool converged = false;
  std::size_t epochs = 0;
  double seconds = 0.0;
  std::string error;  // non-empty when the cell failed to train
};

using Corpora = std::map<std::size_t, corpus::Corpus>;

struct SweepOptions {
  unsigned cell_threads = 1;  // cells trained concurrently
  unsigned threads = 1;       // inference threads inside a cell
  std::function<void(const SweepCell&)> on_cell;
};

/// Trains every (value, input size, head) cell with the plan's seed. A cell
/// whose training throws is recorded with its error and the sweep continues.
std::vector<SweepCell> run_sweep(const SweepPlan& plan, const Corpora& corpora, const SweepOptions& options = {});

struct BenchResult {
  std::string technique;  // Transformer, LSTM or STS
  std::size_t input_bits = 0;
  std::size_t sequences = 0;
  double compute_seconds = 0.0;
  double end_to_end_seconds = 0.0;
  std::optional<metrics::MetricSummary> metrics;

  double per_sequence() const { return compute_seconds / static_cast<double>(sequences); }
};

struct BenchInput {
  std::size_t input_bits = 0;
  std::vector<corpus::LabeledSequence> test;
  const model::Transformer* transformer = nullptr;
  const lstm::Lstm* lstm = nullptr;
};

/// Times batched Transformer inference, LSTM inference and the test suite over
/// the identical sequence list, and scores both models against suite labels.
std::vector<BenchResult> run_bench(const std::vector<BenchInput>& inputs, unsigned threads = 1);

/// `<param>.csv` per swept parameter (param_value,input_bits,head_type,macro_f1,converged),
/// sweep_cells.csv with every aggregate, and sweep_summary.md.
void emit_sweep(const std::vector<SweepCell>& cells, const std::filesystem::path& dir);

/// time_vs_size.csv, bench_table.csv and bench_summary.md.
void emit_bench(const std::vector<BenchResult>& results, const std::filesystem::path& dir);

std::string format_sweep_csv(const std::vector<SweepCell>& cells, SweepParam param);
std::string format_bench_tables(const std::vector<BenchResult>& results);

}  // namespace rngaudit::experiments
