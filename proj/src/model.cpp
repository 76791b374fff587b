#include "rngaudit/model.hpp"

#include <cmath>
#include <cstdio>

#include "rngaudit/errors.hpp"
#include "rngaudit/trainer.hpp"

namespace rngaudit::model {

using nn::Col;

namespace {

template <class S>
void add_bias(Mat<S>& m, const Mat<S>& bias) {
  m.rowwise() += bias.row(0);
}

template <class S>
void softmax_rows(Eigen::Block<Mat<S>> a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    auto row = a.row(i);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

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

}  // namespace

std::string head_name(HeadType head) { return head == HeadType::Average ? "average" : "flatten"; }

HeadType head_from_name(const std::string& name) {
  if (name == "average") return HeadType::Average;
  if (name == "flatten") return HeadType::Flatten;
  throw ArgumentError("unknown head type '" + name + "' (expected average or flatten)");
}

ModelConfig ModelConfig::optimal() {
  ModelConfig c;
  c.d_model = 192;
  c.n_layers = 1;
  c.n_heads = 1;
  c.ffn_dim = 4 * 192;
  c.head = HeadType::Average;
  return c;
}

void ModelConfig::validate() const {
  if (vocab_size == 0 || d_model == 0 || n_layers == 0 || n_heads == 0 || ffn_dim == 0 || max_tokens == 0) {
    throw ArgumentError("model sizes must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ArgumentError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(n_heads) +
                        " heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
  if (head == HeadType::Flatten) {
    if (fixed_tokens == 0) throw ArgumentError("flatten head requires fixed_tokens");
    if (fixed_tokens > max_tokens) throw ArgumentError("fixed_tokens exceeds max_tokens");
  } else if (fixed_tokens != 0) {
    throw ArgumentError("average head does not take fixed_tokens");
  }
}

template <class S>
TransformerT<S>::TransformerT(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const auto f = static_cast<Eigen::Index>(config_.ffn_dim);
  const auto labels = static_cast<Eigen::Index>(nn::kLabels);
  params_.embedding = Mat<S>::Zero(static_cast<Eigen::Index>(config_.vocab_size), d);
  params_.layers.resize(config_.n_layers);
  for (auto& l : params_.layers) {
    for (auto* w : {&l.wq, &l.wk, &l.wv, &l.wo}) *w = Mat<S>::Zero(d, d);
    for (auto* b : {&l.bq, &l.bk, &l.bv, &l.bo, &l.ln1_bias, &l.ln2_bias, &l.ffn_b2}) *b = Mat<S>::Zero(1, d);
    l.ln1_gain = Mat<S>::Ones(1, d);
    l.ln2_gain = Mat<S>::Ones(1, d);
    l.ffn_w1 = Mat<S>::Zero(d, f);
    l.ffn_b1 = Mat<S>::Zero(1, f);
    l.ffn_w2 = Mat<S>::Zero(f, d);
  }
  params_.head_w = Mat<S>::Zero(static_cast<Eigen::Index>(config_.head_inputs()), labels);
  params_.head_b = Mat<S>::Zero(1, labels);
  pe_ = nn::positional_table<S>(config_.max_tokens, config_.d_model);
}

template <class S>
TransformerT<S> TransformerT<S>::init(const ModelConfig& config, std::uint64_t seed) {
  TransformerT m(config);
  std::mt19937_64 rng(seed);
  auto& p = m.params_;
  const double d = static_cast<double>(config.d_model);
  nn::fill_uniform(p.embedding, 1.0 / std::sqrt(d), rng);
  for (auto& l : p.layers) {
    for (auto* w : {&l.wq, &l.wk, &l.wv, &l.wo, &l.ffn_w1}) nn::fill_uniform(*w, 1.0 / std::sqrt(d), rng);
    nn::fill_uniform(l.ffn_w2, 1.0 / std::sqrt(static_cast<double>(config.ffn_dim)), rng);
  }
  nn::fill_uniform(p.head_w, 1.0 / std::sqrt(static_cast<double>(config.head_inputs())), rng);
  return m;
}

template <class S>
typename TransformerT<S>::Params TransformerT<S>::zeros_like() const {
  Params z = params_;
  for (auto& [name, m] : tensors(z)) m->setZero();
  return z;
}

template <class S>
std::vector<std::pair<std::string, Mat<S>*>> TransformerT<S>::tensors(Params& p) {
  std::vector<std::pair<std::string, Mat<S>*>> out{{"embedding", &p.embedding}};
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    out.insert(out.end(), {{pre + "wq", &l.wq},
                           {pre + "bq", &l.bq},
                           {pre + "wk", &l.wk},
                           {pre + "bk", &l.bk},
                           {pre + "wv", &l.wv},
                           {pre + "bv", &l.bv},
                           {pre + "wo", &l.wo},
                           {pre + "bo", &l.bo},
                           {pre + "ln1_gain", &l.ln1_gain},
                           {pre + "ln1_bias", &l.ln1_bias},
                           {pre + "ffn_w1", &l.ffn_w1},
                           {pre + "ffn_b1", &l.ffn_b1},
                           {pre + "ffn_w2", &l.ffn_w2},
                           {pre + "ffn_b2", &l.ffn_b2},
                           {pre + "ln2_gain", &l.ln2_gain},
                           {pre + "ln2_bias", &l.ln2_bias}});
  }
  out.emplace_back("head.w", &p.head_w);
  out.emplace_back("head.b", &p.head_b);
  return out;
}

template <class S>
void TransformerT<S>::check_length(std::size_t tokens) const {
  if (config_.head == HeadType::Flatten) {
    if (tokens != config_.fixed_tokens) {
      throw ArgumentError("flatten head expects " + std::to_string(config_.fixed_tokens) + " tokens, got " +
                          std::to_string(tokens));
    }
  } else if (tokens == 0 || tokens > config_.max_tokens) {
    throw ArgumentError("token count " + std::to_string(tokens) + " outside 1.." +
                        std::to_string(config_.max_tokens));
  }
}

template <class S>
Mat<S> TransformerT<S>::logits(const Token* tokens, std::size_t batch, std::size_t length, bool train,
                               std::mt19937_64* rng, Cache* cache) const {
  check_length(length);
  if (batch == 0) throw ArgumentError("empty batch");
  const bool drop = train && config_.dropout > 0.0;
  if (drop && rng == nullptr) throw ArgumentError("training mode needs a random generator");
  const auto B = static_cast<Eigen::Index>(batch);
  const auto L = static_cast<Eigen::Index>(length);
  const auto N = B * L;
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const auto H = static_cast<Eigen::Index>(config_.n_heads);
  const auto dh = d / H;
  const auto sqrt_d = static_cast<S>(std::sqrt(static_cast<double>(config_.d_model)));
  const auto scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  Mat<S> x(N, d);
  for (Eigen::Index r = 0; r < N; ++r) {
    const Token t = tokens[r];
    if (t >= config_.vocab_size) {
      throw ArgumentError("token " + std::to_string(t) + " outside vocabulary of " +
                          std::to_string(config_.vocab_size));
    }
    x.row(r) = params_.embedding.row(t) * sqrt_d;
    if (config_.positional_encoding) x.row(r) += pe_.row(r % L);
  }
  Cache scratch_cache;
  Cache& c = cache ? *cache : scratch_cache;
  c.tokens = tokens;
  c.batch = batch;
  c.length = length;
  c.embed_mask.resize(0, 0);
  if (drop) {
    c.embed_mask = nn::dropout_mask<S>(N, d, config_.dropout, *rng);
    x.array() *= c.embed_mask.array();
  }
  c.layers.resize(config_.n_layers);

  for (std::size_t li = 0; li < config_.n_layers; ++li) {
    const auto& p = params_.layers[li];
    auto& lc = c.layers[li];
    lc.q.noalias() = x * p.wq;
    add_bias(lc.q, p.bq);
    lc.k.noalias() = x * p.wk;
    add_bias(lc.k, p.bk);
    lc.v.noalias() = x * p.wv;
    add_bias(lc.v, p.bv);
    lc.attn.resize(B * H * L, L);
    lc.ctx.resize(N, d);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index h = 0; h < H; ++h) {
        auto a = lc.attn.block((b * H + h) * L, 0, L, L);
        a.noalias() = lc.q.block(b * L, h * dh, L, dh) * lc.k.block(b * L, h * dh, L, dh).transpose();
        a *= scale;
        softmax_rows<S>(a);
        lc.ctx.block(b * L, h * dh, L, dh).noalias() = a * lc.v.block(b * L, h * dh, L, dh);
      }
    }
    Mat<S> att = lc.ctx * p.wo;
    add_bias(att, p.bo);
    lc.attn_mask.resize(0, 0);
    if (drop) {
      lc.attn_mask = nn::dropout_mask<S>(N, d, config_.dropout, *rng);
      att.array() *= lc.attn_mask.array();
    }
    lc.x_in = std::move(x);
    att += lc.x_in;
    nn::layer_norm_forward(att, p.ln1_gain, p.ln1_bias, lc.y1, lc.ln1);

    lc.h_pre.noalias() = lc.y1 * p.ffn_w1;
    add_bias(lc.h_pre, p.ffn_b1);
    Mat<S> f = lc.h_pre.cwiseMax(S(0)) * p.ffn_w2;
    add_bias(f, p.ffn_b2);
    lc.ffn_mask.resize(0, 0);
    if (drop) {
      lc.ffn_mask = nn::dropout_mask<S>(N, d, config_.dropout, *rng);
      f.array() *= lc.ffn_mask.array();
    }
    f += lc.y1;
    nn::layer_norm_forward(f, p.ln2_gain, p.ln2_bias, x, lc.ln2);
  }

  if (config_.head == HeadType::Average) {
    c.pooled.resize(B, d);
    for (Eigen::Index b = 0; b < B; ++b) {
      c.pooled.row(b) = x.block(b * L, 0, L, d).colwise().sum() / static_cast<S>(L);
    }
  } else {
    c.pooled = Eigen::Map<const Mat<S>>(x.data(), B, L * d);
  }
  c.out = std::move(x);
  Mat<S> z = c.pooled * params_.head_w;
  add_bias(z, params_.head_b);
  return z;
}

template <class S>
void TransformerT<S>::backward(const Cache& c, const Mat<S>& dlogits, Params& g) const {
  const auto B = static_cast<Eigen::Index>(c.batch);
  const auto L = static_cast<Eigen::Index>(c.length);
  const auto N = B * L;
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const auto H = static_cast<Eigen::Index>(config_.n_heads);
  const auto dh = d / H;
  const auto sqrt_d = static_cast<S>(std::sqrt(static_cast<double>(config_.d_model)));
  const auto scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  g.head_w.noalias() += c.pooled.transpose() * dlogits;
  g.head_b += dlogits.colwise().sum();
  const Mat<S> dpooled = dlogits * params_.head_w.transpose();
  Mat<S> dx(N, d);
  if (config_.head == HeadType::Average) {
    for (Eigen::Index b = 0; b < B; ++b) {
      dx.block(b * L, 0, L, d).rowwise() = dpooled.row(b) / static_cast<S>(L);
    }
  } else {
    dx = Eigen::Map<const Mat<S>>(dpooled.data(), N, d);
  }

  Mat<S> dz, dy1, dh_pre, dq, dk, dv, dctx, dA;
  for (std::size_t li = config_.n_layers; li-- > 0;) {
    const auto& p = params_.layers[li];
    const auto& lc = c.layers[li];
    auto& gl = g.layers[li];

    nn::layer_norm_backward(dx, p.ln2_gain, lc.ln2, dz, gl.ln2_gain, gl.ln2_bias);
    Mat<S> df = dz;
    if (lc.ffn_mask.size() > 0) df.array() *= lc.ffn_mask.array();
    gl.ffn_w2.noalias() += lc.h_pre.cwiseMax(S(0)).transpose() * df;
    gl.ffn_b2 += df.colwise().sum();
    dh_pre.noalias() = df * p.ffn_w2.transpose();
    dh_pre = (lc.h_pre.array() > S(0)).select(dh_pre, S(0));
    gl.ffn_w1.noalias() += lc.y1.transpose() * dh_pre;
    gl.ffn_b1 += dh_pre.colwise().sum();
    dy1 = dz;
    dy1.noalias() += dh_pre * p.ffn_w1.transpose();

    nn::layer_norm_backward(dy1, p.ln1_gain, lc.ln1, dz, gl.ln1_gain, gl.ln1_bias);
    Mat<S> datt = dz;
    if (lc.attn_mask.size() > 0) datt.array() *= lc.attn_mask.array();
    gl.wo.noalias() += lc.ctx.transpose() * datt;
    gl.bo += datt.colwise().sum();
    dctx.noalias() = datt * p.wo.transpose();

    dq.resize(N, d);
    dk.resize(N, d);
    dv.resize(N, d);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index h = 0; h < H; ++h) {
        const auto a = lc.attn.block((b * H + h) * L, 0, L, L);
        const auto dc = dctx.block(b * L, h * dh, L, dh);
        dA.noalias() = dc * lc.v.block(b * L, h * dh, L, dh).transpose();
        dv.block(b * L, h * dh, L, dh).noalias() = a.transpose() * dc;
        const Col<S> row_dot = (dA.array() * a.array()).rowwise().sum();
        dA = (a.array() * (dA.array().colwise() - row_dot.array())) * scale;
        dq.block(b * L, h * dh, L, dh).noalias() = dA * lc.k.block(b * L, h * dh, L, dh);
        dk.block(b * L, h * dh, L, dh).noalias() = dA.transpose() * lc.q.block(b * L, h * dh, L, dh);
      }
    }
    gl.wq.noalias() += lc.x_in.transpose() * dq;
    gl.bq += dq.colwise().sum();
    gl.wk.noalias() += lc.x_in.transpose() * dk;
    gl.bk += dk.colwise().sum();
    gl.wv.noalias() += lc.x_in.transpose() * dv;
    gl.bv += dv.colwise().sum();
    dx = dz;
    dx.noalias() += dq * p.wq.transpose();
    dx.noalias() += dk * p.wk.transpose();
    dx.noalias() += dv * p.wv.transpose();
  }

  if (c.embed_mask.size() > 0) dx.array() *= c.embed_mask.array();
  for (Eigen::Index r = 0; r < N; ++r) g.embedding.row(c.tokens[r]) += dx.row(r) * sqrt_d;
}

template <class S>
Prediction TransformerT<S>::forward(const TokenSequence& tokens) const {
  const Mat<S> z = logits(tokens.data(), 1, tokens.size(), false, nullptr, nullptr);
  return nn::to_prediction<S>(z.row(0));
}

template <class S>
std::vector<Prediction> TransformerT<S>::predict_batch(const std::vector<TokenSequence>& seqs,
                                                       unsigned threads) const {
  nn::Dataset data;
  data.reserve(seqs.size());
  for (const auto& s : seqs) data.push_back({s, {}});
  return nn::predict_dataset(*this, data, threads);
}

template <class S>
template <class T>
TransformerT<T> TransformerT<S>::cast() const {
  TransformerT<T> out(config_);
  auto src = tensors(const_cast<Params&>(params_));
  auto dst = TransformerT<T>::tensors(out.params());
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<T>();
  return out;
}

template class TransformerT<float>;
template class TransformerT<double>;
template TransformerT<double> TransformerT<float>::cast<double>() const;
template TransformerT<float> TransformerT<double>::cast<float>() const;
template TransformerT<float> TransformerT<float>::cast<float>() const;
template TransformerT<double> TransformerT<double>::cast<double>() const;

nn::TrainHistory train(Transformer& model, const nn::Dataset& train_set, const nn::Dataset& val_set,
                       const nn::TrainConfig& cfg) {
  return nn::train_loop(model, train_set, val_set, cfg);
}

void save_model(const std::filesystem::path& path, const Transformer& model) {
  const auto& c = model.config();
  const std::vector<std::pair<std::string, std::string>> header = {
      {"vocab_size", std::to_string(c.vocab_size)},
      {"d_model", std::to_string(c.d_model)},
      {"n_layers", std::to_string(c.n_layers)},
      {"n_heads", std::to_string(c.n_heads)},
      {"ffn_dim", std::to_string(c.ffn_dim)},
      {"head", head_name(c.head)},
      {"fixed_tokens", std::to_string(c.fixed_tokens)},
      {"dropout", format_double(c.dropout)},
      {"max_tokens", std::to_string(c.max_tokens)},
      {"positional_encoding", c.positional_encoding ? "1" : "0"},
      {"n_labels", std::to_string(ModelConfig::n_labels)},
  };
  std::vector<std::pair<std::string, const Mat<float>*>> list;
  for (const auto& [name, m] : Transformer::tensors(const_cast<Transformer::Params&>(model.params()))) {
    list.emplace_back(name, m);
  }
  nn::write_model_file(path, kModelMagic, header, list);
}

Transformer load_model(const std::filesystem::path& path) {
  const auto file = nn::read_model_file(path, kModelMagic);
  ModelConfig c;
  c.vocab_size = parse_size(file, "vocab_size");
  c.d_model = parse_size(file, "d_model");
  c.n_layers = parse_size(file, "n_layers");
  c.n_heads = parse_size(file, "n_heads");
  c.ffn_dim = parse_size(file, "ffn_dim");
  c.fixed_tokens = parse_size(file, "fixed_tokens");
  c.max_tokens = parse_size(file, "max_tokens");
  c.positional_encoding = parse_size(file, "positional_encoding") != 0;
  if (parse_size(file, "n_labels") != ModelConfig::n_labels) throw FormatError("model has the wrong label count");
  try {
    c.head = head_from_name(nn::config_value(file, "head"));
    c.dropout = std::stod(nn::config_value(file, "dropout"));
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad model header: ") + e.what());
  }
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("invalid model config: ") + e.what());
  }
  Transformer model(c);
  nn::fill_tensors(file, Transformer::tensors(model.params()));
  return model;
}

}  // namespace rngaudit::model
