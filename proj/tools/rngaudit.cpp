// rngaudit: command-line front end for the randomness-audit toolkit.
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "rngaudit/augment.hpp"
#include "rngaudit/bitstream.hpp"
#include "rngaudit/corpus.hpp"
#include "rngaudit/errors.hpp"
#include "rngaudit/experiments.hpp"
#include "rngaudit/lstm.hpp"
#include "rngaudit/metrics.hpp"
#include "rngaudit/model.hpp"
#include "rngaudit/sts.hpp"
#include "rngaudit/trainer.hpp"

using namespace rngaudit;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kTraining = 3 };

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  bool deterministic = false;

  unsigned workers() const { return deterministic ? 1u : threads; }
};

std::ostream& log() { return std::cerr; }

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (path != "-") {
    file.open(path);
    if (!file) throw FormatError("cannot open " + path);
    in = &file;
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(*in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

/// One sequence per line, either `bits` characters of 0/1 or bits/4 hex digits.
BitSequence parse_sequence_line(const std::string& line, std::size_t bits, std::size_t line_number) {
  try {
    if (line.size() == bits && line.find_first_not_of("01") == std::string::npos) return parse_text(line);
    if (bits % 4 == 0 && line.size() == bits / 4) return from_hex(line, bits);
  } catch (const std::exception& e) {
    throw FormatError("line " + std::to_string(line_number) + ": " + e.what());
  }
  throw FormatError("line " + std::to_string(line_number) + ": expected " + std::to_string(bits) +
                    " binary digits or " + std::to_string(bits / 4) + " hex digits, got " +
                    std::to_string(line.size()) + " characters");
}

std::vector<BitSequence> read_sequences(const std::string& path, std::size_t bits) {
  std::vector<BitSequence> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) out.push_back(parse_sequence_line(lines[i], bits, i + 1));
  return out;
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw std::runtime_error("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

corpus::AugmentMix parse_mix(const std::string& text) {
  corpus::AugmentMix mix;
  if (text.empty()) return mix;
  mix.fraction.fill(0.0);
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ArgumentError("mix entries look like kind=fraction, got '" + item + "'");
    const auto kind = augment::kind_from_name(item.substr(0, eq));
    mix.fraction[static_cast<std::size_t>(kind)] = std::stod(item.substr(eq + 1));
  }
  mix.validate();
  return mix;
}

std::string read_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file " + path);
  std::string magic;
  std::getline(in, magic);
  return magic;
}

// A loaded model of either family.
struct AnyModel {
  std::optional<model::Transformer> transformer;
  std::optional<lstm::Lstm> recurrent;

  static AnyModel load(const std::string& path) {
    AnyModel m;
    const auto magic = read_magic(path);
    if (magic == model::kModelMagic) {
      m.transformer.emplace(model::load_model(path));
    } else if (magic == lstm::kModelMagic) {
      m.recurrent.emplace(lstm::load_model(path));
    } else {
      throw FormatError("unrecognised model file " + path);
    }
    return m;
  }

  std::vector<nn::Prediction> predict(const nn::Dataset& data, unsigned threads) const {
    return transformer ? nn::predict_dataset(*transformer, data, threads)
                       : nn::predict_dataset(*recurrent, data, threads);
  }
};

nn::Dataset load_split(const std::vector<std::string>& dirs, corpus::Split split) {
  nn::Dataset out;
  for (const auto& dir : dirs) {
    const auto c = corpus::read_corpus(dir);
    const auto part = nn::to_dataset(corpus::split_of(c.parts, split));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

void print_epoch(const nn::EpochRecord& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "epoch %zu: loss %.5f batch-F1 %.4f val macro-F1 %.4f micro-F1 %.4f (%.1fs)",
                r.epoch, r.train_loss, r.train_batch_f1, r.val_macro_f1, r.val_micro_f1, r.seconds);
  log() << buf << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rngaudit: statistical randomness tests, labelled corpora and learned test predictors"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for labelling and inference")->capture_default_str();
  app.add_flag("--deterministic", g.deterministic, "Force a single thread");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate CSPRNG sequences, optionally augmented");
  std::size_t gen_bits = 512, gen_count = 1;
  std::string gen_augment = "identity", gen_format = "hex", gen_out;
  gen->add_option("--bits", gen_bits, "Bits per sequence")->capture_default_str();
  gen->add_option("--count", gen_count, "Number of sequences")->capture_default_str();
  gen->add_option("--augment", gen_augment, "identity, bias_bits, constant_blocks, inject_long_run, sort_chunks or stamp_template")
      ->capture_default_str();
  gen->add_option("--format", gen_format, "hex or text")->check(CLI::IsMember({"hex", "text"}))->capture_default_str();
  gen->add_option("--out", gen_out, "Output file (default stdout)");

  // sts
  auto* sts_cmd = app.add_subcommand("sts", "Run the seven tests on sequences, one per line");
  std::string sts_in = "-", sts_out;
  std::size_t sts_bits = 512, sts_block = 128;
  double sts_alpha = 0.01;
  sts_cmd->add_option("--in", sts_in, "Input file of binary or hex lines ('-' for stdin)")->capture_default_str();
  sts_cmd->add_option("--bits", sts_bits, "Bits per sequence")->capture_default_str();
  sts_cmd->add_option("--alpha", sts_alpha, "Significance level")->capture_default_str();
  sts_cmd->add_option("--block-bits", sts_block, "Block Frequency block size")->capture_default_str();
  sts_cmd->add_option("--out", sts_out, "Output file (default stdout)");

  // build-corpus
  auto* build = app.add_subcommand("build-corpus", "Generate, augment, label and split a corpus");
  std::size_t build_bits = 512, build_count = 20000;
  double build_alpha = 0.01;
  std::string build_mix, build_out;
  build->add_option("--bits", build_bits, "512, 1024 or 2048")->capture_default_str();
  build->add_option("--count", build_count, "Number of records")->capture_default_str();
  build->add_option("--alpha", build_alpha, "Significance level for labels")->capture_default_str();
  build->add_option("--mix", build_mix, "kind=fraction,... (default identity 0.5, each augment 0.1)");
  build->add_option("--out", build_out, "Output directory")->required();

  // verify
  auto* verify = app.add_subcommand("verify", "Recompute labels of a corpus sample");
  std::string verify_corpus;
  double verify_fraction = 1.0;
  verify->add_option("--corpus", verify_corpus, "Corpus directory")->required();
  verify->add_option("--fraction", verify_fraction, "Fraction of records to check")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a Transformer or LSTM on one or more corpora");
  std::vector<std::string> train_corpora;
  std::string train_arch = "transformer", train_head = "average", train_out, train_history;
  model::ModelConfig mcfg = model::ModelConfig::optimal();
  lstm::LstmConfig lcfg;
  nn::TrainConfig tcfg;
  std::size_t ffn = 0, hidden = 0;
  train_cmd->add_option("--corpus", train_corpora, "Corpus directory (repeat to mix lengths)")->required();
  train_cmd->add_option("--arch", train_arch, "transformer or lstm")
      ->check(CLI::IsMember({"transformer", "lstm"}))
      ->capture_default_str();
  train_cmd->add_option("--layers", mcfg.n_layers, "Encoder (or LSTM) layers")->capture_default_str();
  train_cmd->add_option("--heads", mcfg.n_heads, "Attention heads")->capture_default_str();
  train_cmd->add_option("--dmodel", mcfg.d_model, "Embedding size")->capture_default_str();
  train_cmd->add_option("--ffn", ffn, "Feed-forward width (default 4 x dmodel)");
  train_cmd->add_option("--hidden", hidden, "LSTM hidden size (default dmodel)");
  train_cmd->add_option("--head", train_head, "average or flatten")
      ->check(CLI::IsMember({"average", "flatten"}))
      ->capture_default_str();
  train_cmd->add_option("--dropout", mcfg.dropout, "Dropout rate")->capture_default_str();
  train_cmd->add_option("--batch-size", tcfg.batch_size, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--epochs", tcfg.max_epochs, "Maximum epochs")->capture_default_str();
  train_cmd->add_option("--patience", tcfg.patience, "Early-stopping patience")->capture_default_str();
  train_cmd->add_option("--lr", tcfg.adam.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--out", train_out, "Model file")->required();
  train_cmd->add_option("--history", train_history, "Write per-epoch history CSV here");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a model against a corpus split");
  std::string eval_model, eval_split = "test", eval_metrics;
  std::vector<std::string> eval_corpora;
  eval->add_option("--model", eval_model, "Model file")->required();
  eval->add_option("--corpus", eval_corpora, "Corpus directory (repeatable)")->required();
  eval->add_option("--split", eval_split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  eval->add_option("--metrics-out", eval_metrics, "Write the metric,value dump here");

  // predict
  auto* predict = app.add_subcommand("predict", "Per-test pass probabilities for sequences");
  std::string predict_model, predict_in = "-", predict_out;
  std::size_t predict_bits = 512;
  predict->add_option("--model", predict_model, "Model file")->required();
  predict->add_option("--in", predict_in, "Input file of binary or hex lines")->capture_default_str();
  predict->add_option("--bits", predict_bits, "Bits per sequence")->capture_default_str();
  predict->add_option("--out", predict_out, "Output file (default stdout)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Hyper-parameter sweep over encoder layers, embedding size or heads");
  std::string sweep_param = "encoder_layers", sweep_out;
  std::vector<std::string> sweep_corpora, sweep_heads{"flatten", "average"};
  std::vector<std::size_t> sweep_values;
  std::size_t sweep_epochs = 30, sweep_patience = 5;
  unsigned sweep_cells = 1;
  sweep->add_option("--param", sweep_param, "encoder_layers, embedding_size or attention_heads")
      ->capture_default_str();
  sweep->add_option("--values", sweep_values, "Grid (default: desk grid for the parameter)");
  sweep->add_option("--corpus", sweep_corpora, "Corpus directory per input size")->required();
  sweep->add_option("--head", sweep_heads, "Head types to sweep")->capture_default_str();
  sweep->add_option("--epochs", sweep_epochs, "Maximum epochs per cell")->capture_default_str();
  sweep->add_option("--patience", sweep_patience, "Early-stopping patience")->capture_default_str();
  sweep->add_option("--cell-threads", sweep_cells, "Cells trained concurrently")->capture_default_str();
  sweep->add_option("--out", sweep_out, "Result directory")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "Time Transformer, LSTM and the test suite on test splits");
  std::vector<std::string> bench_corpora, bench_transformers, bench_lstms;
  std::string bench_out;
  bench->add_option("--corpus", bench_corpora, "Corpus directory per input size")->required();
  bench->add_option("--transformer", bench_transformers,
                    "Transformer model per corpus, or one Average model for all");
  bench->add_option("--lstm", bench_lstms, "LSTM model per corpus, or one for all");
  bench->add_option("--out", bench_out, "Result directory (tables are also printed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (gen->parsed()) {
      const auto kind = augment::kind_from_name(gen_augment);
      Output out(gen_out);
      for (std::size_t i = 0; i < gen_count; ++i) {
        auto seq = generate_one(gen_bits, g.seed, i);
        if (kind != augment::AugmentKind::Identity) {
          seq = augment::apply(augment::sample_spec(kind, gen_bits, g.seed ^ (0x9e3779b97f4a7c15ULL * (i + 1))), seq);
        }
        out.stream() << (gen_format == "hex" ? to_hex(seq) : to_text(seq)) << '\n';
      }
    } else if (sts_cmd->parsed()) {
      const auto seqs = read_sequences(sts_in, sts_bits);
      sts::StsParams params;
      params.block_frequency_bits = sts_block;
      const sts::LabelPolicy policy(sts_alpha);
      const auto reports = sts::run_batch(seqs, params, g.workers());
      Output out(sts_out);
      for (std::size_t i = 0; i < reports.size(); ++i) {
        out.stream() << sts::format_report_line(i, reports[i], sts::labelize(reports[i], policy)) << '\n';
      }
    } else if (build->parsed()) {
      const auto c = corpus::build_corpus(build_bits, build_count, parse_mix(build_mix), g.seed,
                                          sts::LabelPolicy(build_alpha), g.workers());
      corpus::write_corpus(build_out, c);
      log() << "wrote " << c.manifest.count << " records (" << c.manifest.train << "/" << c.manifest.val << "/"
            << c.manifest.test << ") to " << build_out << '\n';
    } else if (verify->parsed()) {
      const auto c = corpus::read_corpus(verify_corpus);
      const auto r = corpus::verify_labels(c.parts, sts::LabelPolicy(c.manifest.alpha), verify_fraction, g.seed,
                                           g.workers());
      std::cout << "checked " << r.checked << " mismatches " << r.mismatches << '\n';
      for (auto id : r.mismatched_ids) std::cout << "mismatch " << id << '\n';
      if (r.mismatches > 0) return kData;
    } else if (train_cmd->parsed()) {
      const auto train_set = load_split(train_corpora, corpus::Split::Train);
      const auto val_set = load_split(train_corpora, corpus::Split::Val);
      tcfg.seed = g.seed;
      tcfg.threads = g.workers();
      tcfg.on_epoch = print_epoch;
      nn::TrainHistory history;
      if (train_arch == "transformer") {
        mcfg.ffn_dim = ffn ? ffn : 4 * mcfg.d_model;
        mcfg.head = model::head_from_name(train_head);
        std::size_t longest = 0;
        for (const auto& ex : train_set) longest = std::max(longest, ex.tokens.size());
        mcfg.max_tokens = std::max<std::size_t>(128, longest);
        if (mcfg.head == model::HeadType::Flatten) mcfg.fixed_tokens = longest;
        auto m = model::Transformer::init(mcfg, g.seed);
        history = model::train(m, train_set, val_set, tcfg);
        model::save_model(train_out, m);
      } else {
        lcfg.d_model = mcfg.d_model;
        lcfg.hidden = hidden ? hidden : mcfg.d_model;
        lcfg.layers = mcfg.n_layers;
        lcfg.dropout = mcfg.dropout;
        for (const auto& ex : train_set) lcfg.max_tokens = std::max(lcfg.max_tokens, ex.tokens.size());
        auto m = lstm::Lstm::init(lcfg, g.seed);
        history = lstm::train(m, train_set, val_set, tcfg);
        lstm::save_model(train_out, m);
      }
      log() << "best epoch " << history.best_epoch << " val macro-F1 " << history.best_val_macro_f1 << '\n';
      if (!train_history.empty()) Output(train_history).stream() << nn::format_history(history);
    } else if (eval->parsed()) {
      const auto m = AnyModel::load(eval_model);
      const auto data = load_split(eval_corpora, corpus::split_from_name(eval_split));
      const auto start = std::chrono::steady_clock::now();
      const auto preds = m.predict(data, g.workers());
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::vector<sts::LabelVector> p, t;
      for (std::size_t i = 0; i < data.size(); ++i) {
        p.push_back(nn::classify(preds[i]));
        t.push_back(data[i].label);
      }
      const auto summary = metrics::summarize(p, t);
      const std::vector<metrics::TableRow> rows{{m.transformer ? "Transformer" : "LSTM", secs, summary}};
      std::cout << metrics::format_table(rows) << '\n' << metrics::format_metric_dump(summary);
      if (!eval_metrics.empty()) Output(eval_metrics).stream() << metrics::format_metric_dump(summary);
    } else if (predict->parsed()) {
      const auto m = AnyModel::load(predict_model);
      nn::Dataset data;
      for (const auto& s : read_sequences(predict_in, predict_bits)) data.push_back({tokenize(s), {}});
      const auto preds = m.predict(data, g.workers());
      Output out(predict_out);
      char buf[32];
      for (std::size_t i = 0; i < preds.size(); ++i) {
        out.stream() << i;
        for (double v : preds[i].probs) {
          std::snprintf(buf, sizeof buf, ",%.6f", v);
          out.stream() << buf;
        }
        out.stream() << ',' << sts::label_to_string(nn::classify(preds[i])) << '\n';
      }
    } else if (sweep->parsed()) {
      auto plan = experiments::SweepPlan::desk(experiments::param_from_name(sweep_param));
      if (!sweep_values.empty()) plan.values = sweep_values;
      plan.seed = g.seed;
      plan.train.max_epochs = sweep_epochs;
      plan.train.patience = sweep_patience;
      plan.heads.clear();
      for (const auto& h : sweep_heads) plan.heads.push_back(model::head_from_name(h));
      experiments::Corpora corpora;
      plan.input_bits.clear();
      for (const auto& dir : sweep_corpora) {
        auto c = corpus::read_corpus(dir);
        plan.input_bits.push_back(c.manifest.bits);
        corpora[c.manifest.bits] = std::move(c);
      }
      experiments::SweepOptions options;
      options.cell_threads = g.deterministic ? 1 : sweep_cells;
      options.threads = g.workers();
      options.on_cell = [](const experiments::SweepCell& c) {
        log() << experiments::param_name(c.param) << "=" << c.value << " bits=" << c.input_bits
              << " head=" << model::head_name(c.head) << " val macro-F1 " << c.val_macro_f1
              << (c.converged ? " converged" : " not converged") << (c.error.empty() ? "" : " error: " + c.error)
              << '\n';
      };
      const auto cells = experiments::run_sweep(plan, corpora, options);
      experiments::emit_sweep(cells, sweep_out);
      std::cout << experiments::format_sweep_csv(cells, plan.param);
    } else if (bench->parsed()) {
      auto pick = [](const std::vector<std::string>& paths, std::size_t i) -> std::string {
        if (paths.empty()) return {};
        if (paths.size() == 1) return paths[0];
        if (i >= paths.size()) throw ArgumentError("need one model per corpus or a single model");
        return paths[i];
      };
      std::vector<corpus::Corpus> corpora;
      std::map<std::string, model::Transformer> transformers;
      std::map<std::string, lstm::Lstm> lstms;
      std::vector<experiments::BenchInput> inputs;
      for (std::size_t i = 0; i < bench_corpora.size(); ++i) {
        const auto c = corpus::read_corpus(bench_corpora[i]);
        experiments::BenchInput in;
        in.input_bits = c.manifest.bits;
        in.test = c.parts.test;
        if (const auto p = pick(bench_transformers, i); !p.empty()) {
          if (!transformers.contains(p)) transformers.emplace(p, model::load_model(p));
          in.transformer = &transformers.at(p);
        }
        if (const auto p = pick(bench_lstms, i); !p.empty()) {
          if (!lstms.contains(p)) lstms.emplace(p, lstm::load_model(p));
          in.lstm = &lstms.at(p);
        }
        inputs.push_back(std::move(in));
      }
      const auto results = experiments::run_bench(inputs, g.workers());
      std::cout << experiments::format_bench_tables(results);
      if (!bench_out.empty()) experiments::emit_bench(results, bench_out);
    }
  } catch (const TrainingError& e) {
    log() << "training error: " << e.what() << '\n';
    return kTraining;
  } catch (const std::exception& e) {
    log() << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
