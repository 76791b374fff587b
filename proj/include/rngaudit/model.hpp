#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rngaudit/nn.hpp"

namespace rngaudit::model {

using nn::Mat;
using nn::Prediction;

enum class HeadType { Average, Flatten };

std::string head_name(HeadType head);
HeadType head_from_name(const std::string& name);

struct ModelConfig {
  std::size_t vocab_size = kVocabSize;
  std::size_t d_model = 240;
  std::size_t n_layers = 3;
  std::size_t n_heads = 8;
  std::size_t ffn_dim = 960;
  HeadType head = HeadType::Average;
  std::size_t fixed_tokens = 0;  // Flatten only
  double dropout = 0.1;
  std::size_t max_tokens = 128;
  bool positional_encoding = true;
  static constexpr std::size_t n_labels = nn::kLabels;

  /// 1 layer, 1 head, d_model 192, ffn 768, Average.
  static ModelConfig optimal();

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t head_inputs() const { return head == HeadType::Flatten ? fixed_tokens * d_model : d_model; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <class S>
struct EncoderLayerParams {
  Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Mat<S> ln1_gain, ln1_bias;
  Mat<S> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Mat<S> ln2_gain, ln2_bias;
};

template <class S>
struct TransformerParams {
  Mat<S> embedding;  // vocab x d_model
  std::vector<EncoderLayerParams<S>> layers;
  Mat<S> head_w;  // head_inputs x 7
  Mat<S> head_b;  // 1 x 7
};

template <class S>
struct EncoderLayerCache {
  Mat<S> x_in, q, k, v;
  Mat<S> attn;  // row (b * heads + h) * L + i holds softmax weights of query i
  Mat<S> ctx, attn_mask;
  nn::LayerNormCache<S> ln1;
  Mat<S> y1, h_pre, ffn_mask;
  nn::LayerNormCache<S> ln2;
};

template <class S>
struct TransformerCache {
  const Token* tokens = nullptr;
  std::size_t batch = 0, length = 0;
  Mat<S> embed_mask;
  std::vector<EncoderLayerCache<S>> layers;
  Mat<S> out;     // (batch * length) x d_model, final encoder output
  Mat<S> pooled;  // batch x head_inputs
};

template <class S>
class TransformerT {
 public:
  using Scalar = S;
  using Params = TransformerParams<S>;
  using Cache = TransformerCache<S>;

  /// Zero parameters of the right shapes.
  explicit TransformerT(ModelConfig config);

  /// Seeded init: embeddings and linear weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
  /// biases 0, layer-norm gain 1 and offset 0.
  static TransformerT init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }
  Params zeros_like() const;

  static std::vector<std::pair<std::string, Mat<S>*>> tensors(Params& p);

  void check_length(std::size_t tokens) const;

  /// tokens holds `batch` rows of `length` tokens. Returns batch x 7 logits.
  /// Dropout is applied only when train is set (rng required then).
  Mat<S> logits(const Token* tokens, std::size_t batch, std::size_t length, bool train, std::mt19937_64* rng,
                Cache* cache) const;

  /// Accumulates parameter gradients of sum(dlogits .* logits) into grads.
  void backward(const Cache& cache, const Mat<S>& dlogits, Params& grads) const;

  Prediction forward(const TokenSequence& tokens) const;
  std::vector<Prediction> predict_batch(const std::vector<TokenSequence>& seqs, unsigned threads = 1) const;

  template <class T>
  TransformerT<T> cast() const;

 private:
  ModelConfig config_;
  Params params_;
  Mat<S> pe_;
};

using Transformer = TransformerT<float>;

nn::TrainHistory train(Transformer& model, const nn::Dataset& train_set, const nn::Dataset& val_set,
                       const nn::TrainConfig& cfg);

void save_model(const std::filesystem::path& path, const Transformer& model);
Transformer load_model(const std::filesystem::path& path);

inline constexpr const char* kModelMagic = "RTNN1";

}  // namespace rngaudit::model
