#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rngaudit/bitstream.hpp"
#include "rngaudit/corpus.hpp"
#include "rngaudit/sts.hpp"

// Building blocks shared by the Transformer and the LSTM baseline.
namespace rngaudit::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Col = Eigen::Matrix<S, Eigen::Dynamic, 1>;

inline constexpr std::size_t kLabels = sts::kNumTests;

/// Per-test pass probabilities in TestId order.
struct Prediction {
  std::array<double, kLabels> probs{};
};

/// probability >= threshold counts as pass.
sts::LabelVector classify(const Prediction& pred, double threshold = 0.5);

/// Mean binary cross entropy over the seven labels, probabilities clamped to [1e-7, 1 - 1e-7].
double loss(const Prediction& pred, const sts::LabelVector& label);

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kLayerNormEps = 1e-5;

/// Sinusoidal encoding: row p holds sin/cos pairs of p / 10000^(2i/d).
template <class S>
Mat<S> positional_table(std::size_t max_tokens, std::size_t d_model);

template <class S>
void fill_uniform(Mat<S>& m, double bound, std::mt19937_64& rng);

/// Inverted dropout mask with entries 0 or 1/(1-rate).
template <class S>
Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng);

template <class S>
struct LayerNormCache {
  Mat<S> xhat;
  Col<S> rstd;
};

/// Row-wise layer norm; gain and bias are 1 x d.
template <class S>
void layer_norm_forward(const Mat<S>& x, const Mat<S>& gain, const Mat<S>& bias, Mat<S>& y,
                        LayerNormCache<S>& cache);

/// Writes dx; accumulates into dgain and dbias.
template <class S>
void layer_norm_backward(const Mat<S>& dy, const Mat<S>& gain, const LayerNormCache<S>& cache, Mat<S>& dx,
                         Mat<S>& dgain, Mat<S>& dbias);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class S>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(const std::vector<Mat<S>*>& params, const std::vector<Mat<S>*>& grads);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Mat<S>> m_, v_;
  long t_ = 0;
};

struct Example {
  TokenSequence tokens;
  sts::LabelVector label{};
};
using Dataset = std::vector<Example>;

Dataset to_dataset(std::span<const corpus::LabeledSequence> records);
Dataset concat(const std::vector<const Dataset*>& parts);

/// One epoch of batches. Records are grouped by token length, shuffled within
/// each group and chunked; batches are then drawn from a uniformly chosen group
/// that still has batches left.
std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& data, std::size_t batch_size,
                                                    std::mt19937_64& rng);

/// Indices grouped by token length, in input order, for inference.
std::map<std::size_t, std::vector<std::size_t>> group_by_length(const Dataset& data);

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::function<void(const struct EpochRecord&)> on_epoch;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_batch_f1 = 0.0;
  double val_macro_f1 = 0.0;
  double val_micro_f1 = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_macro_f1 = 0.0;
  bool early_stopped = false;
};

/// `epoch,train_loss,train_batch_f1,val_macro_f1,val_micro_f1,seconds` with header.
std::string format_history(const TrainHistory& history);

/// Reads the 1 x 7 row of logits into probabilities.
template <class S>
Prediction to_prediction(const Eigen::Ref<const Mat<S>>& logits_row);

// Model files: magic line, `key value` config lines, `tensor name rows cols`
// lines, `end`, then every tensor as float32 little-endian in listed order.
struct TensorInfo {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

struct ModelFile {
  std::map<std::string, std::string> config;
  std::vector<TensorInfo> tensors;
  std::vector<std::vector<float>> data;
};

void write_model_file(const std::filesystem::path& path, const std::string& magic,
                      const std::vector<std::pair<std::string, std::string>>& config,
                      const std::vector<std::pair<std::string, const Mat<float>*>>& tensors);
ModelFile read_model_file(const std::filesystem::path& path, const std::string& magic);

/// Checks the file's tensor list against the expected one and copies data in.
void fill_tensors(const ModelFile& file, const std::vector<std::pair<std::string, Mat<float>*>>& tensors);

std::string config_value(const ModelFile& file, const std::string& key);

}  // namespace rngaudit::nn
