#include "rngaudit/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rngaudit/errors.hpp"

namespace rngaudit::nn {

sts::LabelVector classify(const Prediction& pred, double threshold) {
  sts::LabelVector out{};
  for (std::size_t i = 0; i < kLabels; ++i) out[i] = pred.probs[i] >= threshold;
  return out;
}

double loss(const Prediction& pred, const sts::LabelVector& label) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kLabels; ++i) {
    const double p = std::clamp(pred.probs[i], kProbClamp, 1.0 - kProbClamp);
    sum -= label[i] ? std::log(p) : std::log1p(-p);
  }
  return sum / static_cast<double>(kLabels);
}

template <class S>
Mat<S> positional_table(std::size_t max_tokens, std::size_t d_model) {
  Mat<S> pe(static_cast<Eigen::Index>(max_tokens), static_cast<Eigen::Index>(d_model));
  for (std::size_t pos = 0; pos < max_tokens; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) * rate;
      pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(i)) =
          static_cast<S>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <class S>
void fill_uniform(Mat<S>& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
}

template <class S>
Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
  Mat<S> mask(rows, cols);
  const S keep = static_cast<S>(1.0 / (1.0 - rate));
  // 53-bit uniform draws keep the mask identical across Scalar types.
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask.data()[i] = u < rate ? S(0) : keep;
  }
  return mask;
}

template <class S>
void layer_norm_forward(const Mat<S>& x, const Mat<S>& gain, const Mat<S>& bias, Mat<S>& y,
                        LayerNormCache<S>& cache) {
  const auto d = static_cast<S>(x.cols());
  const Col<S> mean = x.rowwise().sum() / d;
  cache.xhat = x.colwise() - mean;
  const Col<S> var = cache.xhat.array().square().rowwise().sum() / d;
  cache.rstd = (var.array() + static_cast<S>(kLayerNormEps)).rsqrt();
  cache.xhat.array().colwise() *= cache.rstd.array();
  y = (cache.xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

template <class S>
void layer_norm_backward(const Mat<S>& dy, const Mat<S>& gain, const LayerNormCache<S>& cache, Mat<S>& dx,
                         Mat<S>& dgain, Mat<S>& dbias) {
  const auto d = static_cast<S>(dy.cols());
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const Mat<S> dxhat = dy.array().rowwise() * gain.row(0).array();
  const Col<S> sum_dxhat = dxhat.rowwise().sum();
  const Col<S> sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum();
  dx = (dxhat * d).colwise() - sum_dxhat;
  dx -= (cache.xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
  dx.array().colwise() *= cache.rstd.array() / d;
}

template <class S>
void Adam<S>::step(const std::vector<Mat<S>*>& params, const std::vector<Mat<S>*>& grads) {
  if (params.size() != grads.size()) throw ArgumentError("Adam: parameter and gradient lists differ");
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Mat<S>::Zero(p->rows(), p->cols()));
      v_.push_back(Mat<S>::Zero(p->rows(), p->cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<S>(cfg_.beta1);
  const auto b2 = static_cast<S>(cfg_.beta2);
  const auto step = static_cast<S>(cfg_.lr / c1);
  const auto inv_sqrt_c2 = static_cast<S>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<S>(cfg_.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i]->array();
    auto m = m_[i].array();
    auto v = v_[i].array();
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.square();
    params[i]->array() -= step * m / (v.sqrt() * inv_sqrt_c2 + eps);
  }
}

Dataset to_dataset(std::span<const corpus::LabeledSequence> records) {
  Dataset out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back({tokenize(rec.seq), rec.label});
  return out;
}

Dataset concat(const std::vector<const Dataset*>& parts) {
  Dataset out;
  for (const auto* part : parts) out.insert(out.end(), part->begin(), part->end());
  return out;
}

std::map<std::size_t, std::vector<std::size_t>> group_by_length(const Dataset& data) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i) groups[data[i].tokens.size()].push_back(i);
  return groups;
}

std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& data, std::size_t batch_size,
                                                    std::mt19937_64& rng) {
  std::vector<std::vector<std::vector<std::size_t>>> per_group;
  for (auto& [length, ids] : group_by_length(data)) {
    std::shuffle(ids.begin(), ids.end(), rng);
    auto& batches = per_group.emplace_back();
    for (std::size_t i = 0; i < ids.size(); i += batch_size) {
      batches.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(i),
                           ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), i + batch_size)));
    }
    std::reverse(batches.begin(), batches.end());
  }
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> live;
  for (std::size_t g = 0; g < per_group.size(); ++g) live.push_back(g);
  while (!live.empty()) {
    const auto pick = std::uniform_int_distribution<std::size_t>(0, live.size() - 1)(rng);
    auto& batches = per_group[live[pick]];
    out.push_back(std::move(batches.back()));
    batches.pop_back();
    if (batches.empty()) live.erase(live.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ArgumentError("batch size must be positive");
  if (max_epochs == 0) throw ArgumentError("max epochs must be positive");
  if (patience == 0) throw ArgumentError("patience must be positive");
  if (!(adam.lr > 0.0)) throw ArgumentError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ArgumentError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ArgumentError("Adam epsilon must be positive");
}

std::string format_history(const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,train_loss,train_batch_f1,val_macro_f1,val_micro_f1,seconds\n";
  char buf[160];
  for (const auto& e : history.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.3f\n", e.epoch, e.train_loss, e.train_batch_f1,
                  e.val_macro_f1, e.val_micro_f1, e.seconds);
    out << buf;
  }
  return out.str();
}

template <class S>
Prediction to_prediction(const Eigen::Ref<const Mat<S>>& logits_row) {
  Prediction p;
  for (std::size_t k = 0; k < kLabels; ++k) {
    const double z = static_cast<double>(logits_row(0, static_cast<Eigen::Index>(k)));
    p.probs[k] = 1.0 / (1.0 + std::exp(-z));
  }
  return p;
}

namespace {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

}  // namespace

void write_model_file(const std::filesystem::path& path, const std::string& magic,
                      const std::vector<std::pair<std::string, std::string>>& config,
                      const std::vector<std::pair<std::string, const Mat<float>*>>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << magic << '\n';
  for (const auto& [key, value] : config) out << key << ' ' << value << '\n';
  for (const auto& [name, m] : tensors) out << "tensor " << name << ' ' << m->rows() << ' ' << m->cols() << '\n';
  out << "end\n";
  for (const auto& [name, m] : tensors) {
    out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ModelFile read_model_file(const std::filesystem::path& path, const std::string& magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != magic) {
    throw FormatError("bad model magic in " + path.string() + ": expected " + magic);
  }
  ModelFile file;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "tensor") {
      TensorInfo info;
      if (!(fields >> info.name >> info.rows >> info.cols) || info.rows <= 0 || info.cols <= 0) {
        throw FormatError("malformed tensor line '" + line + "'");
      }
      file.tensors.push_back(info);
    } else {
      std::string value;
      if (!(fields >> value)) throw FormatError("malformed header line '" + line + "'");
      file.config[key] = value;
    }
  }
  if (!ended) throw FormatError("model header is not terminated");
  for (const auto& t : file.tensors) {
    auto& buf = file.data.emplace_back(static_cast<std::size_t>(t.rows * t.cols));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float))) {
      throw FormatError("model file truncated in tensor " + t.name + ": shape mismatch with header");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("model file has trailing data: shape mismatch with header");
  }
  return file;
}

void fill_tensors(const ModelFile& file, const std::vector<std::pair<std::string, Mat<float>*>>& tensors) {
  if (file.tensors.size() != tensors.size()) {
    throw FormatError("model file lists " + std::to_string(file.tensors.size()) + " tensors, config needs " +
                      std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& info = file.tensors[i];
    auto& [name, m] = tensors[i];
    if (info.name != name || info.rows != m->rows() || info.cols != m->cols()) {
      throw FormatError("shape mismatch: file has " + info.name + " " + std::to_string(info.rows) + "x" +
                        std::to_string(info.cols) + ", config expects " + name + " " + std::to_string(m->rows()) +
                        "x" + std::to_string(m->cols()));
    }
    std::memcpy(m->data(), file.data[i].data(), file.data[i].size() * sizeof(float));
  }
}

std::string config_value(const ModelFile& file, const std::string& key) {
  const auto it = file.config.find(key);
  if (it == file.config.end()) throw FormatError("model header is missing '" + key + "'");
  return it->second;
}

#define RNGAUDIT_NN_INSTANTIATE(S)                                                                             \
  template Mat<S> positional_table<S>(std::size_t, std::size_t);                                            \
  template void fill_uniform<S>(Mat<S>&, double, std::mt19937_64&);                                          \
  template Mat<S> dropout_mask<S>(Eigen::Index, Eigen::Index, double, std::mt19937_64&);                     \
  template void layer_norm_forward<S>(const Mat<S>&, const Mat<S>&, const Mat<S>&, Mat<S>&,                  \
                                      LayerNormCache<S>&);                                                    \
  template void layer_norm_backward<S>(const Mat<S>&, const Mat<S>&, const LayerNormCache<S>&, Mat<S>&,      \
                                       Mat<S>&, Mat<S>&);                                                     \
  template class Adam<S>;                                                                                    \
  template Prediction to_prediction<S>(const Eigen::Ref<const Mat<S>>&);

RNGAUDIT_NN_INSTANTIATE(float)
RNGAUDIT_NN_INSTANTIATE(double)

}  // namespace rngaudit::nn
