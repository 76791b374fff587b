#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rngaudit/nn.hpp"

// Recurrent baseline: embedding + positional encoding feeding an LSTM whose
// final hidden state goes through an affine map to seven sigmoid outputs.
namespace rngaudit::lstm {

using nn::Mat;
using nn::Prediction;

struct LstmConfig {
  std::size_t vocab_size = kVocabSize;
  std::size_t d_model = 192;
  std::size_t hidden = 192;
  std::size_t layers = 1;
  double dropout = 0.1;
  std::size_t max_tokens = 128;
  bool positional_encoding = true;
  static constexpr std::size_t n_labels = nn::kLabels;

  void validate() const;
  bool operator==(const LstmConfig&) const = default;
};

// Gate blocks along the 4*hidden axis are ordered input, forget, cell, output.
template <class S>
struct LstmLayerParams {
  Mat<S> wx;  // in x 4H
  Mat<S> wh;  // H x 4H
  Mat<S> b;   // 1 x 4H
};

template <class S>
struct LstmParams {
  Mat<S> embedding;
  std::vector<LstmLayerParams<S>> layers;
  Mat<S> head_w;  // H x 7
  Mat<S> head_b;  // 1 x 7
};

// Sequence matrices are time-major: row t * batch + b.
template <class S>
struct LstmLayerCache {
  Mat<S> input, input_mask;
  Mat<S> gates;  // activated i, f, g, o
  Mat<S> c, h;
};

template <class S>
struct LstmCache {
  const Token* tokens = nullptr;
  std::size_t batch = 0, length = 0;
  std::vector<LstmLayerCache<S>> layers;
  Mat<S> final, final_mask;
};

template <class S>
class LstmT {
 public:
  using Scalar = S;
  using Params = LstmParams<S>;
  using Cache = LstmCache<S>;

  explicit LstmT(LstmConfig config);
  /// Same scheme as the Transformer: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static LstmT init(const LstmConfig& config, std::uint64_t seed);

  const LstmConfig& config() const { return config_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }
  Params zeros_like() const;
  static std::vector<std::pair<std::string, Mat<S>*>> tensors(Params& p);

  void check_length(std::size_t tokens) const;

  Mat<S> logits(const Token* tokens, std::size_t batch, std::size_t length, bool train, std::mt19937_64* rng,
                Cache* cache) const;
  void backward(const Cache& cache, const Mat<S>& dlogits, Params& grads) const;

  Prediction forward(const TokenSequence& tokens) const;
  std::vector<Prediction> predict_batch(const std::vector<TokenSequence>& seqs, unsigned threads = 1) const;

  template <class T>
  LstmT<T> cast() const;

 private:
  LstmConfig config_;
  Params params_;
  Mat<S> pe_;
};

using Lstm = LstmT<float>;

nn::TrainHistory train(Lstm& model, const nn::Dataset& train_set, const nn::Dataset& val_set,
                       const nn::TrainConfig& cfg);

void save_model(const std::filesystem::path& path, const Lstm& model);
Lstm load_model(const std::filesystem::path& path);

inline constexpr const char* kModelMagic = "RLSTM1";

}  // namespace rngaudit::lstm
