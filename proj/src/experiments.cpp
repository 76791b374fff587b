#include "rngaudit/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "rngaudit/errors.hpp"
#include "rngaudit/trainer.hpp"

namespace rngaudit::experiments {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::string param_name(SweepParam p) {
  switch (p) {
    case SweepParam::EncoderLayers:
      return "encoder_layers";
    case SweepParam::EmbeddingSize:
      return "embedding_size";
    case SweepParam::AttentionHeads:
      return "attention_heads";
  }
  return "?";
}

SweepParam param_from_name(const std::string& name) {
  for (auto p : {SweepParam::EncoderLayers, SweepParam::EmbeddingSize, SweepParam::AttentionHeads}) {
    if (param_name(p) == name) return p;
  }
  throw ArgumentError("unknown sweep parameter '" + name +
                      "' (expected encoder_layers, embedding_size or attention_heads)");
}

SweepPlan SweepPlan::desk(SweepParam param) {
  SweepPlan plan;
  plan.param = param;
  switch (param) {
    case SweepParam::EncoderLayers:
      plan.values = {1, 2, 3, 4, 5};
      break;
    case SweepParam::EmbeddingSize:
      plan.values = {192, 240, 288, 336, 384, 432};
      break;
    case SweepParam::AttentionHeads:
      plan.values = {1, 2, 4, 8, 12, 16, 20, 24};
      break;
  }
  return plan;
}

model::ModelConfig SweepPlan::cell_config(std::size_t value, std::size_t bits, model::HeadType head) const {
  auto c = defaults;
  switch (param) {
    case SweepParam::EncoderLayers:
      c.n_layers = value;
      break;
    case SweepParam::EmbeddingSize:
      c.d_model = value;
      c.ffn_dim = 4 * value;
      break;
    case SweepParam::AttentionHeads:
      c.n_heads = value;
      break;
  }
  c.head = head;
  c.fixed_tokens = head == model::HeadType::Flatten ? bits / kBitsPerToken : 0;
  c.max_tokens = std::max(c.max_tokens, bits / kBitsPerToken);
  return c;
}

void SweepPlan::validate() const {
  if (values.empty() || input_bits.empty() || heads.empty()) throw ArgumentError("sweep plan has an empty axis");
  train.validate();
  for (auto bits : input_bits) {
    if (!is_corpus_length(bits)) throw ArgumentError("sweep input size must be 512, 1024 or 2048");
    for (auto v : values) {
      for (auto h : heads) cell_config(v, bits, h).validate();
    }
  }
}

std::vector<SweepCell> run_sweep(const SweepPlan& plan, const Corpora& corpora, const SweepOptions& options) {
  plan.validate();
  struct Data {
    nn::Dataset train, val, test;
  };
  std::map<std::size_t, Data> data;
  for (auto bits : plan.input_bits) {
    const auto it = corpora.find(bits);
    if (it == corpora.end()) throw ArgumentError("no corpus for " + std::to_string(bits) + "-bit sequences");
    if (it->second.manifest.bits != bits) throw ArgumentError("corpus bit length disagrees with its key");
    data[bits] = {nn::to_dataset(it->second.parts.train), nn::to_dataset(it->second.parts.val),
                  nn::to_dataset(it->second.parts.test)};
  }

  std::vector<SweepCell> cells;
  for (auto v : plan.values) {
    for (auto bits : plan.input_bits) {
      for (auto h : plan.heads) {
        SweepCell cell;
        cell.param = plan.param;
        cell.value = v;
        cell.input_bits = bits;
        cell.head = h;
        cells.push_back(cell);
      }
    }
  }

  std::mutex report_mutex;
  auto run_cell = [&](SweepCell& cell) {
    const auto start = Clock::now();
    const auto& d = data.at(cell.input_bits);
    try {
      auto m = model::Transformer::init(plan.cell_config(cell.value, cell.input_bits, cell.head), plan.seed);
      auto cfg = plan.train;
      cfg.seed = plan.seed;
      cfg.threads = options.threads;
      cfg.on_epoch = nullptr;
      const auto history = model::train(m, d.train, d.val, cfg);
      cell.val_macro_f1 = history.best_val_macro_f1;
      cell.epochs = history.epochs.size();
      cell.test = nn::evaluate(m, d.test, options.threads);
      cell.converged = cell.val_macro_f1 >= kConvergedF1;
    } catch (const std::exception& e) {
      cell.error = e.what();
      cell.converged = false;
    }
    cell.seconds = seconds_since(start);
    if (options.on_cell) {
      std::lock_guard lock(report_mutex);
      options.on_cell(cell);
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.cell_threads, cells.size()));
  if (workers == 1) {
    for (auto& cell : cells) run_cell(cell);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
      });
    }
  }
  return cells;
}

std::vector<BenchResult> run_bench(const std::vector<BenchInput>& inputs, unsigned threads) {
  std::vector<BenchResult> out;
  for (const auto& in : inputs) {
    if (in.test.empty()) throw ArgumentError("bench needs a non-empty test split");
    std::vector<BitSequence> seqs;
    std::vector<sts::LabelVector> truth;
    for (const auto& rec : in.test) {
      if (rec.seq.size() != in.input_bits) throw ArgumentError("test split does not match the bench input size");
      seqs.push_back(rec.seq);
      truth.push_back(rec.label);
    }

    auto time_model = [&](const std::string& name, const auto* model) {
      if (model == nullptr) return;
      model->check_length(in.input_bits / kBitsPerToken);
      const auto start = Clock::now();
      nn::Dataset data;
      data.reserve(seqs.size());
      for (const auto& s : seqs) data.push_back({tokenize(s), {}});
      const auto compute_start = Clock::now();
      const auto preds = nn::predict_dataset(*model, data, threads);
      const double compute = seconds_since(compute_start);
      std::vector<sts::LabelVector> labels;
      labels.reserve(preds.size());
      for (const auto& p : preds) labels.push_back(nn::classify(p));
      const double total = seconds_since(start);
      out.push_back({name, in.input_bits, seqs.size(), compute, total, metrics::summarize(labels, truth)});
    };
    time_model("Transformer", in.transformer);
    time_model("LSTM", in.lstm);

    const auto start = Clock::now();
    const auto reports = sts::run_batch(seqs, {}, threads);
    const double compute = seconds_since(start);
    std::vector<sts::LabelVector> labels;
    for (const auto& r : reports) labels.push_back(sts::labelize(r));
    out.push_back({"STS", in.input_bits, seqs.size(), compute, seconds_since(start), std::nullopt});
  }
  return out;
}

std::string format_sweep_csv(const std::vector<SweepCell>& cells, SweepParam param) {
  std::ostringstream out;
  out << "param_value,input_bits,head_type,macro_f1,converged\n";
  for (const auto& c : cells) {
    if (c.param != param) continue;
    out << c.value << ',' << c.input_bits << ',' << model::head_name(c.head) << ','
        << fmt("%.6f", c.val_macro_f1) << ',' << (c.converged ? 1 : 0) << '\n';
  }
  return out.str();
}

void emit_sweep(const std::vector<SweepCell>& cells, const fs::path& dir) {
  if (cells.empty()) throw ArgumentError("no sweep results to emit");
  fs::create_directories(dir);
  std::set<SweepParam> params;
  for (const auto& c : cells) params.insert(c.param);
  for (auto p : params) write_text(dir / (param_name(p) + ".csv"), format_sweep_csv(cells, p));

  std::ostringstream all;
  all << "param,param_value,input_bits,head_type,val_macro_f1,test_micro_f1,test_macro_f1,test_weighted_f1,"
         "test_sample_f1,converged,epochs,error\n";
  std::ostringstream md;
  md << "| Parameter | Value | Input bits | Head | Val macro F1 | Test micro F1 | Test macro F1 | Converged |\n"
     << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& c : cells) {
    auto test_value = [&](double metrics::MetricSummary::*field) {
      return c.test ? fmt("%.6f", (*c.test).*field) : std::string("-");
    };
    std::string error = c.error;
    for (auto& ch : error) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    all << param_name(c.param) << ',' << c.value << ',' << c.input_bits << ',' << model::head_name(c.head) << ','
        << fmt("%.6f", c.val_macro_f1) << ',' << test_value(&metrics::MetricSummary::micro) << ','
        << test_value(&metrics::MetricSummary::macro) << ',' << test_value(&metrics::MetricSummary::weighted) << ','
        << test_value(&metrics::MetricSummary::sample) << ',' << (c.converged ? 1 : 0) << ',' << c.epochs << ','
        << error << '\n';
    md << "| " << param_name(c.param) << " | " << c.value << " | " << c.input_bits << " | "
       << model::head_name(c.head) << " | " << fmt("%.4f", c.val_macro_f1) << " | "
       << (c.test ? fmt("%.4f", c.test->micro) : "-") << " | " << (c.test ? fmt("%.4f", c.test->macro) : "-")
       << " | " << (c.error.empty() ? (c.converged ? "yes" : "no") : "failed: " + error) << " |\n";
  }
  write_text(dir / "sweep_cells.csv", all.str());
  write_text(dir / "sweep_summary.md", md.str());
}

std::string format_bench_tables(const std::vector<BenchResult>& results) {
  std::map<std::size_t, std::vector<metrics::TableRow>> per_size;
  std::map<std::size_t, std::size_t> counts;
  for (const auto& r : results) {
    per_size[r.input_bits].push_back({r.technique, r.compute_seconds, r.metrics});
    counts[r.input_bits] = r.sequences;
  }
  std::ostringstream out;
  for (const auto& [bits, rows] : per_size) {
    out << bits << "-bit sequences (" << counts[bits] << " per technique)\n"
        << metrics::format_table(rows) << '\n';
  }
  return out.str();
}

void emit_bench(const std::vector<BenchResult>& results, const fs::path& dir) {
  if (results.empty()) throw ArgumentError("no bench results to emit");
  fs::create_directories(dir);
  std::ostringstream times;
  times << "technique,input_bits,sequences,compute_s,end_to_end_s,per_sequence_s\n";
  for (const auto& r : results) {
    times << r.technique << ',' << r.input_bits << ',' << r.sequences << ',' << fmt("%.6f", r.compute_seconds)
          << ',' << fmt("%.6f", r.end_to_end_seconds) << ',' << fmt("%.9f", r.per_sequence()) << '\n';
  }
  write_text(dir / "time_vs_size.csv", times.str());

  std::ostringstream table;
  std::ostringstream md;
  md << "| Input bits | Technique | Inference Time (s) | Micro F1 | Macro F1 | Weighted F1 | Sample F1 |\n"
     << "|---|---|---|---|---|---|---|\n";
  table << "input_bits,technique,time_s,micro_f1,macro_f1,weighted_f1,sample_f1\n";
  for (const auto& r : results) {
    const auto m = [&](double metrics::MetricSummary::*f) {
      return r.metrics ? fmt("%.4f", (*r.metrics).*f) : std::string("-");
    };
    table << r.input_bits << ',' << r.technique << ',' << fmt("%.6f", r.compute_seconds) << ','
          << m(&metrics::MetricSummary::micro) << ',' << m(&metrics::MetricSummary::macro) << ','
          << m(&metrics::MetricSummary::weighted) << ',' << m(&metrics::MetricSummary::sample) << '\n';
    md << "| " << r.input_bits << " | " << r.technique << " | " << fmt("%.3f", r.compute_seconds) << " | "
       << m(&metrics::MetricSummary::micro) << " | " << m(&metrics::MetricSummary::macro) << " | "
       << m(&metrics::MetricSummary::weighted) << " | " << m(&metrics::MetricSummary::sample) << " |\n";
  }
  write_text(dir / "bench_table.csv", table.str());
  write_text(dir / "bench_summary.md", md.str() + "\n```\n" + format_bench_tables(results) + "```\n");
}

}  // namespace rngaudit::experiments
