#include "rngaudit/lstm.hpp"

#include <cmath>
#include <cstdio>

#include "rngaudit/errors.hpp"
#include "rngaudit/trainer.hpp"

namespace rngaudit::lstm {

namespace {

std::size_t parse_size(const nn::ModelFile& file, const std::string& key) {
  const auto text = nn::config_value(file, key);
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(key);
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw FormatError("bad value for '" + key + "' in model header");
  }
}

template <class S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

}  // namespace

void LstmConfig::validate() const {
  if (vocab_size == 0 || d_model == 0 || hidden == 0 || layers == 0 || max_tokens == 0) {
    throw ArgumentError("LSTM sizes must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
}

template <class S>
LstmT<S>::LstmT(LstmConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const auto H = static_cast<Eigen::Index>(config_.hidden);
  params_.embedding = Mat<S>::Zero(static_cast<Eigen::Index>(config_.vocab_size), d);
  params_.layers.resize(config_.layers);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    auto& p = params_.layers[l];
    p.wx = Mat<S>::Zero(l == 0 ? d : H, 4 * H);
    p.wh = Mat<S>::Zero(H, 4 * H);
    p.b = Mat<S>::Zero(1, 4 * H);
  }
  params_.head_w = Mat<S>::Zero(H, static_cast<Eigen::Index>(nn::kLabels));
  params_.head_b = Mat<S>::Zero(1, static_cast<Eigen::Index>(nn::kLabels));
  pe_ = nn::positional_table<S>(config_.max_tokens, config_.d_model);
}

template <class S>
LstmT<S> LstmT<S>::init(const LstmConfig& config, std::uint64_t seed) {
  LstmT m(config);
  std::mt19937_64 rng(seed);
  auto& p = m.params_;
  nn::fill_uniform(p.embedding, 1.0 / std::sqrt(static_cast<double>(config.d_model)), rng);
  for (auto& l : p.layers) {
    nn::fill_uniform(l.wx, 1.0 / std::sqrt(static_cast<double>(l.wx.rows())), rng);
    nn::fill_uniform(l.wh, 1.0 / std::sqrt(static_cast<double>(config.hidden)), rng);
  }
  nn::fill_uniform(p.head_w, 1.0 / std::sqrt(static_cast<double>(config.hidden)), rng);
  return m;
}

template <class S>
typename LstmT<S>::Params LstmT<S>::zeros_like() const {
  Params z = params_;
  for (auto& [name, m] : tensors(z)) m->setZero();
  return z;
}

template <class S>
std::vector<std::pair<std::string, Mat<S>*>> LstmT<S>::tensors(Params& p) {
  std::vector<std::pair<std::string, Mat<S>*>> out{{"embedding", &p.embedding}};
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const std::string pre = "layer" + std::to_string(i) + ".";
    out.emplace_back(pre + "wx", &p.layers[i].wx);
    out.emplace_back(pre + "wh", &p.layers[i].wh);
    out.emplace_back(pre + "b", &p.layers[i].b);
  }
  out.emplace_back("head.w", &p.head_w);
  out.emplace_back("head.b", &p.head_b);
  return out;
}

template <class S>
void LstmT<S>::check_length(std::size_t tokens) const {
  if (tokens == 0 || tokens > config_.max_tokens) {
    throw ArgumentError("token count " + std::to_string(tokens) + " outside 1.." +
                        std::to_string(config_.max_tokens));
  }
}

template <class S>
Mat<S> LstmT<S>::logits(const Token* tokens, std::size_t batch, std::size_t length, bool train,
                        std::mt19937_64* rng, Cache* cache) const {
  check_length(length);
  if (batch == 0) throw ArgumentError("empty batch");
  const bool drop = train && config_.dropout > 0.0;
  if (drop && rng == nullptr) throw ArgumentError("training mode needs a random generator");
  const auto B = static_cast<Eigen::Index>(batch);
  const auto L = static_cast<Eigen::Index>(length);
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const auto H = static_cast<Eigen::Index>(config_.hidden);
  const auto sqrt_d = static_cast<S>(std::sqrt(static_cast<double>(config_.d_model)));

  Cache scratch;
  Cache& c = cache ? *cache : scratch;
  c.tokens = tokens;
  c.batch = batch;
  c.length = length;
  c.layers.resize(config_.layers);

  Mat<S> x(B * L, d);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index t = 0; t < L; ++t) {
      const Token tok = tokens[b * L + t];
      if (tok >= config_.vocab_size) {
        throw ArgumentError("token " + std::to_string(tok) + " outside vocabulary of " +
                            std::to_string(config_.vocab_size));
      }
      x.row(t * B + b) = params_.embedding.row(tok) * sqrt_d;
      if (config_.positional_encoding) x.row(t * B + b) += pe_.row(t);
    }
  }

  Mat<S> z, hprev;
  for (std::size_t li = 0; li < config_.layers; ++li) {
    const auto& p = params_.layers[li];
    auto& lc = c.layers[li];
    lc.input_mask.resize(0, 0);
    if (drop) {
      lc.input_mask = nn::dropout_mask<S>(x.rows(), x.cols(), config_.dropout, *rng);
      x.array() *= lc.input_mask.array();
    }
    lc.input = std::move(x);
    lc.gates.noalias() = lc.input * p.wx;
    lc.gates.rowwise() += p.b.row(0);
    lc.c.resize(B * L, H);
    lc.h.resize(B * L, H);
    hprev = Mat<S>::Zero(B, H);
    for (Eigen::Index t = 0; t < L; ++t) {
      auto g = lc.gates.middleRows(t * B, B);
      g.noalias() += hprev * p.wh;
      g.leftCols(2 * H) = g.leftCols(2 * H).unaryExpr([](S v) { return sigmoid(v); });
      g.middleCols(2 * H, H) = g.middleCols(2 * H, H).array().tanh().matrix();
      g.rightCols(H) = g.rightCols(H).unaryExpr([](S v) { return sigmoid(v); });
      auto ct = lc.c.middleRows(t * B, B);
      ct = g.leftCols(H).cwiseProduct(g.middleCols(2 * H, H));
      if (t > 0) ct += g.middleCols(H, H).cwiseProduct(lc.c.middleRows((t - 1) * B, B));
      lc.h.middleRows(t * B, B) = g.rightCols(H).cwiseProduct(ct.array().tanh().matrix());
      hprev = lc.h.middleRows(t * B, B);
    }
    x = lc.h;
  }

  c.final = x.middleRows((L - 1) * B, B);
  c.final_mask.resize(0, 0);
  if (drop) {
    c.final_mask = nn::dropout_mask<S>(B, H, config_.dropout, *rng);
    c.final.array() *= c.final_mask.array();
  }
  Mat<S> out = c.final * params_.head_w;
  out.rowwise() += params_.head_b.row(0);
  return out;
}

template <class S>
void LstmT<S>::backward(const Cache& c, const Mat<S>& dlogits, Params& g) const {
  const auto B = static_cast<Eigen::Index>(c.batch);
  const auto L = static_cast<Eigen::Index>(c.length);
  const auto H = static_cast<Eigen::Index>(config_.hidden);
  const auto sqrt_d = static_cast<S>(std::sqrt(static_cast<double>(config_.d_model)));

  g.head_w.noalias() += c.final.transpose() * dlogits;
  g.head_b += dlogits.colwise().sum();
  Mat<S> dfinal = dlogits * params_.head_w.transpose();
  if (c.final_mask.size() > 0) dfinal.array() *= c.final_mask.array();

  Mat<S> dseq = Mat<S>::Zero(B * L, H);
  dseq.middleRows((L - 1) * B, B) = dfinal;
  Mat<S> dz, dh, dc, dc_next, tc;
  for (std::size_t li = config_.layers; li-- > 0;) {
    const auto& p = params_.layers[li];
    const auto& lc = c.layers[li];
    auto& gl = g.layers[li];
    dz.resize(B * L, 4 * H);
    Mat<S> dh_next = Mat<S>::Zero(B, H);
    dc_next = Mat<S>::Zero(B, H);
    for (Eigen::Index t = L; t-- > 0;) {
      const auto gates = lc.gates.middleRows(t * B, B);
      const auto i = gates.leftCols(H).array();
      const auto f = gates.middleCols(H, H).array();
      const auto gg = gates.middleCols(2 * H, H).array();
      const auto o = gates.rightCols(H).array();
      dh = dseq.middleRows(t * B, B) + dh_next;
      tc = lc.c.middleRows(t * B, B).array().tanh().matrix();
      dc = dc_next.array() + dh.array() * o * (S(1) - tc.array().square());
      auto dzt = dz.middleRows(t * B, B);
      dzt.leftCols(H) = (dc.array() * gg * i * (S(1) - i)).matrix();
      if (t > 0) {
        dzt.middleCols(H, H) = (dc.array() * lc.c.middleRows((t - 1) * B, B).array() * f * (S(1) - f)).matrix();
      } else {
        dzt.middleCols(H, H).setZero();
      }
      dzt.middleCols(2 * H, H) = (dc.array() * i * (S(1) - gg.square())).matrix();
      dzt.rightCols(H) = (dh.array() * tc.array() * o * (S(1) - o)).matrix();
      dc_next = (dc.array() * f).matrix();
      dh_next.noalias() = dzt * p.wh.transpose();
      if (t > 0) gl.wh.noalias() += lc.h.middleRows((t - 1) * B, B).transpose() * dzt;
    }
    gl.wx.noalias() += lc.input.transpose() * dz;
    gl.b += dz.colwise().sum();
    dseq.noalias() = dz * p.wx.transpose();
    if (lc.input_mask.size() > 0) dseq.array() *= lc.input_mask.array();
  }

  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index t = 0; t < L; ++t) g.embedding.row(c.tokens[b * L + t]) += dseq.row(t * B + b) * sqrt_d;
  }
}

template <class S>
Prediction LstmT<S>::forward(const TokenSequence& tokens) const {
  const Mat<S> z = logits(tokens.data(), 1, tokens.size(), false, nullptr, nullptr);
  return nn::to_prediction<S>(z.row(0));
}

template <class S>
std::vector<Prediction> LstmT<S>::predict_batch(const std::vector<TokenSequence>& seqs, unsigned threads) const {
  nn::Dataset data;
  data.reserve(seqs.size());
  for (const auto& s : seqs) data.push_back({s, {}});
  return nn::predict_dataset(*this, data, threads);
}

template <class S>
template <class T>
LstmT<T> LstmT<S>::cast() const {
  LstmT<T> out(config_);
  auto src = tensors(const_cast<Params&>(params_));
  auto dst = LstmT<T>::tensors(out.params());
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<T>();
  return out;
}

template class LstmT<float>;
template class LstmT<double>;
template LstmT<double> LstmT<float>::cast<double>() const;
template LstmT<float> LstmT<double>::cast<float>() const;
template LstmT<float> LstmT<float>::cast<float>() const;
template LstmT<double> LstmT<double>::cast<double>() const;

nn::TrainHistory train(Lstm& model, const nn::Dataset& train_set, const nn::Dataset& val_set,
                       const nn::TrainConfig& cfg) {
  return nn::train_loop(model, train_set, val_set, cfg);
}

void save_model(const std::filesystem::path& path, const Lstm& model) {
  const auto& c = model.config();
  char dropout[40];
  std::snprintf(dropout, sizeof dropout, "%.17g", c.dropout);
  const std::vector<std::pair<std::string, std::string>> header = {
      {"vocab_size", std::to_string(c.vocab_size)},
      {"d_model", std::to_string(c.d_model)},
      {"hidden", std::to_string(c.hidden)},
      {"layers", std::to_string(c.layers)},
      {"dropout", dropout},
      {"max_tokens", std::to_string(c.max_tokens)},
      {"positional_encoding", c.positional_encoding ? "1" : "0"},
      {"n_labels", std::to_string(LstmConfig::n_labels)},
  };
  std::vector<std::pair<std::string, const Mat<float>*>> list;
  for (const auto& [name, m] : Lstm::tensors(const_cast<Lstm::Params&>(model.params()))) list.emplace_back(name, m);
  nn::write_model_file(path, kModelMagic, header, list);
}

Lstm load_model(const std::filesystem::path& path) {
  const auto file = nn::read_model_file(path, kModelMagic);
  LstmConfig c;
  c.vocab_size = parse_size(file, "vocab_size");
  c.d_model = parse_size(file, "d_model");
  c.hidden = parse_size(file, "hidden");
  c.layers = parse_size(file, "layers");
  c.max_tokens = parse_size(file, "max_tokens");
  c.positional_encoding = parse_size(file, "positional_encoding") != 0;
  if (parse_size(file, "n_labels") != LstmConfig::n_labels) throw FormatError("model has the wrong label count");
  try {
    c.dropout = std::stod(nn::config_value(file, "dropout"));
    c.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad model header: ") + e.what());
  }
  Lstm model(c);
  nn::fill_tensors(file, Lstm::tensors(model.params()));
  return model;
}

}  // namespace rngaudit::lstm
