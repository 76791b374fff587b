#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>
#include <vector>

#include "rngaudit/errors.hpp"
#include "rngaudit/metrics.hpp"
#include "rngaudit/nn.hpp"

// Training and batched inference for any model exposing
//   Scalar, Params, Cache
//   Mat<S> logits(const Token*, batch, length, train, rng*, Cache*) const
//   void backward(const Cache&, const Mat<S>& dlogits, Params& grads) const
//   Params zeros_like() const; Params& params();
//   static std::vector<std::pair<std::string, Mat<S>*>> tensors(Params&)
//   void check_length(std::size_t tokens) const
namespace rngaudit::nn {

template <class Model>
std::vector<Prediction> predict_dataset(const Model& model, const Dataset& data, unsigned threads = 1,
                                        std::size_t chunk = 128) {
  using S = typename Model::Scalar;
  struct Job {
    std::size_t length;
    std::vector<std::size_t> ids;
  };
  std::vector<Job> jobs;
  for (const auto& [length, ids] : group_by_length(data)) {
    model.check_length(length);
    for (std::size_t i = 0; i < ids.size(); i += chunk) {
      jobs.push_back({length, {ids.begin() + i, ids.begin() + std::min(ids.size(), i + chunk)}});
    }
  }
  std::vector<Prediction> out(data.size());
  auto run = [&](std::size_t first, std::size_t stride) {
    std::vector<Token> tokens;
    for (std::size_t j = first; j < jobs.size(); j += stride) {
      const auto& job = jobs[j];
      tokens.clear();
      for (auto id : job.ids) tokens.insert(tokens.end(), data[id].tokens.begin(), data[id].tokens.end());
      const Mat<S> logits = model.logits(tokens.data(), job.ids.size(), job.length, false, nullptr, nullptr);
      for (std::size_t r = 0; r < job.ids.size(); ++r) {
        out[job.ids[r]] = to_prediction<S>(logits.row(static_cast<Eigen::Index>(r)));
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(run, t, threads);
  }
  return out;
}

template <class Model>
metrics::MetricSummary evaluate(const Model& model, const Dataset& data, unsigned threads = 1) {
  const auto preds = predict_dataset(model, data, threads);
  std::vector<sts::LabelVector> p, t;
  p.reserve(data.size());
  t.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    p.push_back(classify(preds[i]));
    t.push_back(data[i].label);
  }
  return metrics::summarize(p, t);
}

/// Mini-batch Adam with early stopping on validation macro F1. The model ends
/// holding the parameters of its best validation epoch.
template <class Model>
TrainHistory train_loop(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  using S = typename Model::Scalar;
  cfg.validate();
  if (train.empty() || val.empty()) throw ArgumentError("training and validation sets must be non-empty");
  for (const auto* set : {&train, &val}) {
    for (const auto& [length, ids] : group_by_length(*set)) model.check_length(length);
  }

  std::mt19937_64 rng(cfg.seed);
  Adam<S> adam(cfg.adam);
  auto grads = model.zeros_like();
  const auto param_list = Model::tensors(model.params());
  const auto grad_list = Model::tensors(grads);
  std::vector<Mat<S>*> params_ptr, grads_ptr;
  for (const auto& [name, m] : param_list) params_ptr.push_back(m);
  for (const auto& [name, m] : grad_list) grads_ptr.push_back(m);

  auto best = model.params();
  TrainHistory history;
  std::size_t since_best = 0;
  std::vector<Token> tokens;
  typename Model::Cache cache;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto batches = epoch_batches(train, cfg.batch_size, rng);
    double loss_sum = 0.0, f1_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& ids = batches[b];
      const std::size_t length = train[ids[0]].tokens.size();
      tokens.clear();
      for (auto id : ids) tokens.insert(tokens.end(), train[id].tokens.begin(), train[id].tokens.end());

      const Mat<S> logits = model.logits(tokens.data(), ids.size(), length, true, &rng, &cache);
      Mat<S> dlogits(logits.rows(), logits.cols());
      std::vector<sts::LabelVector> p(ids.size()), t(ids.size());
      double batch_loss = 0.0;
      const S scale = S(1) / static_cast<S>(kLabels * ids.size());
      for (std::size_t r = 0; r < ids.size(); ++r) {
        const auto pred = to_prediction<S>(logits.row(static_cast<Eigen::Index>(r)));
        const auto& label = train[ids[r]].label;
        batch_loss += loss(pred, label);
        p[r] = classify(pred);
        t[r] = label;
        for (std::size_t k = 0; k < kLabels; ++k) {
          const auto c = static_cast<Eigen::Index>(k);
          dlogits(static_cast<Eigen::Index>(r), c) = (static_cast<S>(pred.probs[k]) - S(label[k] ? 1 : 0)) * scale;
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite training loss", static_cast<int>(epoch), static_cast<int>(b));
      }
      for (auto* g : grads_ptr) g->setZero();
      model.backward(cache, dlogits, grads);
      adam.step(params_ptr, grads_ptr);

      loss_sum += batch_loss;
      seen += ids.size();
      f1_sum += metrics::summarize(p, t).macro;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_batch_f1 = f1_sum / static_cast<double>(batches.size());
    const auto val_metrics = evaluate(model, val, cfg.threads);
    rec.val_macro_f1 = val_metrics.macro;
    rec.val_micro_f1 = val_metrics.micro;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(rec);

    if (history.best_epoch == 0 || rec.val_macro_f1 > history.best_val_macro_f1) {
      history.best_epoch = epoch;
      history.best_val_macro_f1 = rec.val_macro_f1;
      best = model.params();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      history.early_stopped = true;
      break;
    }
  }
  model.params() = std::move(best);
  return history;
}

}  // namespace rngaudit::nn
