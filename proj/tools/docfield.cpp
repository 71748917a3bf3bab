// Copyright (c) 2026 The docfield Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "docfield/dataio.hpp"
#include "docfield/docgraph.hpp"
#include "docfield/eval.hpp"
#include "docfield/model.hpp"
#include "docfield/synth.hpp"
#include "docfield/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace docfield;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Options whose value may also come from a section of the --config file.
/// Flags given on the command line win.
class Bindings {
 public:
  template <typename T>
  CLI::Option* option(CLI::App* app, const std::string& flag, const std::string& key, T& var,
                      const std::string& help) {
    CLI::Option* o = app->add_option(flag, var, help)->capture_default_str();
    keys_.insert(key);
    apply_.push_back([o, &var, key](const json& section) {
      if (o->count() == 0 && section.contains(key)) var = section.at(key).get<T>();
    });
    return o;
  }

  CLI::Option* flag(CLI::App* app, const std::string& flag, const std::string& key, bool& var,
                    const std::string& help) {
    CLI::Option* o = app->add_flag(flag, var, help);
    keys_.insert(key);
    apply_.push_back([o, &var, key](const json& section) {
      if (o->count() == 0 && section.contains(key)) var = section.at(key).get<bool>();
    });
    return o;
  }

  void apply(const json& section, const std::string& name) const {
    if (!section.is_object()) throw UsageError("config section '" + name + "' must be an object");
    for (const auto& [k, v] : section.items()) {
      if (!keys_.contains(k)) throw UsageError("config section '" + name + "': unknown key '" + k + "'");
    }
    for (const auto& f : apply_) {
      try {
        f(section);
      } catch (const json::exception& e) {
        throw UsageError("config section '" + name + "': " + e.what());
      }
    }
  }

 private:
  std::set<std::string> keys_;
  std::vector<std::function<void(const json&)>> apply_;
};

struct Global {
  std::uint64_t seed = 0;
  std::string config_path;
  bool quiet = false;
  json config = json::object();
};

void info(const Global& g, const std::string& msg) {
  if (!g.quiet) std::cerr << msg << '\n';
}

void write_json(const ordered_json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// synth -----------------------------------------------------------------------

struct SynthArgs {
  int templates = 16;
  int per_type = 30;
  std::string out;
  std::string preset = "default";
  bool force = false;
};

int run_synth(const Global& g, const SynthArgs& a) {
  if (a.templates < 1) throw UsageError("--templates must be at least 1");
  if (a.per_type < 2) throw UsageError("--per-type must be at least 2 (pairs need two documents)");
  if (a.out.empty()) throw UsageError("--out is required");
  SynthPreset preset;
  try {
    preset = synth_preset_from_string(a.preset);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path out(a.out);
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!a.force) {
      throw std::runtime_error("output directory " + out.string() +
                               " is not empty (use --force to overwrite)");
    }
    fs::remove_all(out);
  }
  const auto specs = make_templates(preset, a.templates, g.seed);
  DatasetManifest ds = synth_generate(specs, a.per_type, g.seed);
  ds.generator = {{"command", "synth"},
                  {"preset", a.preset},
                  {"templates", a.templates},
                  {"per_type", a.per_type},
                  {"seed", g.seed},
                  {"jitter", specs.empty() ? ordered_json() : to_json(specs.front().jitter)}};
  save_dataset(ds, out);
  info(g, "wrote " + std::to_string(ds.document_count()) + " documents of " +
              std::to_string(ds.types.size()) + " types to " + out.string());
  return 0;
}

// train -----------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string loss_csv;
  std::string resume;
  std::int64_t iters = 20000;
  int batch = 8;
  double lr = 0.01;
  double lr_decay = 0.1;
  std::int64_t lr_period = 5000;
  double momentum = 0.9;
  int bp_steps = 2;
  bool avg_attn = false;
  std::string unary = "lfattn";
  std::int64_t checkpoint_every = 0;
  int threads = 0;
};

int run_train(const Global& g, const TrainArgs& a) {
  if (a.data.empty() || a.out.empty()) throw UsageError("--data and --out are required");
  TrainConfig cfg;
  cfg.batch_size = a.batch;
  cfg.iterations = a.iters;
  cfg.base_lr = a.lr;
  cfg.lr_decay = a.lr_decay;
  cfg.lr_period = a.lr_period;
  cfg.momentum = a.momentum;
  cfg.seed = g.seed;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.model.bp_steps = a.bp_steps;
  cfg.model.avg_before_attention = a.avg_attn;
  try {
    cfg.model.unary_source = unary_source_from_string(a.unary);
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const DatasetManifest ds = load_dataset(a.data);
  Checkpoint start;
  if (!a.resume.empty()) {
    start = load_checkpoint(a.resume);
    if (to_json(start.config.model) != to_json(cfg.model)) {
      throw std::runtime_error("--resume checkpoint was trained with a different model config");
    }
    start.config.iterations = cfg.iterations;
  } else {
    start = initial_checkpoint(cfg);
  }
  const fs::path out(a.out);
  const fs::path csv = a.loss_csv.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.loss_csv);
  info(g, "config " + to_json(start.config).dump());

  TrainHooks hooks;
  hooks.threads = a.threads;
  double window = 0;
  int window_n = 0;
  double last_lr = -1;
  hooks.on_step = [&](const LossRecord& r) {
    if (r.lr != last_lr) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "iter %lld: lr %g", static_cast<long long>(r.iteration), r.lr);
      info(g, buf);
      last_lr = r.lr;
    }
    if (!std::isnan(r.loss)) {
      window += r.loss;
      ++window_n;
    }
    if ((r.iteration + 1) % 100 == 0) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "iter %lld: loss %.5f", static_cast<long long>(r.iteration + 1),
                    window_n > 0 ? window / window_n : 0.0);
      info(g, buf);
      window = 0;
      window_n = 0;
    }
  };
  hooks.on_checkpoint = [&](const Checkpoint& ck) {
    const fs::path p = a.out + "." + std::to_string(ck.iteration);
    save_checkpoint(ck, p);
    info(g, "checkpoint " + p.string());
  };

  const TrainResult result = train(ds, std::move(start), hooks);
  save_checkpoint(result.checkpoint, out);
  write_loss_csv(result.trace, csv);
  info(g, "wrote " + out.string() + " and " + csv.string());
  return 0;
}

// eval ------------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string ckpt;
  int shots = 1;
  bool drop_background = false;
  int landmark_drop = 0;
  std::string report;
  std::string confusion;
  std::string split = "test";
  int threads = 0;
};

int run_eval(const Global& g, const EvalArgs& a) {
  if (a.data.empty() || a.ckpt.empty()) throw UsageError("--data and --ckpt are required");
  if (a.shots != 1 && a.shots != 5) throw UsageError("--shots must be 1 or 5");
  if (a.landmark_drop < 0) throw UsageError("--landmark-drop must be non-negative");
  const DatasetManifest ds = load_dataset(a.data);
  const Checkpoint ck = load_checkpoint(a.ckpt);

  EvalSettings s;
  s.shots = a.shots;
  s.landmark_drop = a.landmark_drop;
  s.seed = g.seed;
  s.split = a.split;
  s.threads = a.threads;
  s.drop_background = a.drop_background;
  const EvalReport report = evaluate(ds, ck.params, s);

  ordered_json j = to_json(report);
  j["model"] = to_json(ck.config.model);
  j["checkpoint"] = {{"path", a.ckpt}, {"iteration", ck.iteration}, {"train", to_json(ck.config)}};
  j["dataset"] = {{"path", a.data}, {"generator", ds.generator}};

  std::cout << format_table(report);
  if (a.drop_background) {
    EvalSettings with = s;
    with.drop_background = false;
    const double acc_with = evaluate(ds, ck.params, with).overall;
    const double incre = report.overall - acc_with;
    char line[160];
    std::snprintf(line, sizeof(line), "with background %.4f  without %.4f  incre %+.4f\n",
                  acc_with, report.overall, incre);
    std::cout << line;
    j["background_impact"] = {
        {"acc_with_bg", acc_with}, {"acc_without_bg", report.overall}, {"incre", incre}};
  }
  if (!a.report.empty()) write_json(j, a.report);
  if (!a.confusion.empty()) write_confusion_csv(report, a.confusion);
  return 0;
}

// predict ---------------------------------------------------------------------

struct PredictArgs {
  std::string support;
  std::string query;
  std::string ckpt;
  std::string out;
};

int run_predict(const Global&, const PredictArgs& a) {
  if (a.support.empty() || a.query.empty() || a.ckpt.empty()) {
    throw UsageError("--support, --query and --ckpt are required");
  }
  const Document support = load_document(a.support);
  const Document query = load_document(a.query);
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const Prediction p = predict(support, query, ck.params);

  ordered_json regions = ordered_json::array();
  for (const auto& r : p.regions) {
    regions.push_back({{"id", r.region_id}, {"label", r.label}, {"probability", r.probability}});
  }
  ordered_json j;
  j["support"] = support.doc_id;
  j["query"] = query.doc_id;
  j["model"] = to_json(ck.config.model);
  j["labels"] = p.label_space.labels();
  j["regions"] = std::move(regions);
  if (a.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(j, a.out);
  }
  return 0;
}

// stats -----------------------------------------------------------------------

struct StatsArgs {
  std::string data;
  std::string out;
};

int run_stats(const Global& g, const StatsArgs& a) {
  if (a.data.empty()) throw UsageError("--data is required");
  const DatasetManifest ds = load_dataset(a.data);
  std::size_t width = 6;
  for (const auto& t : ds.types) {
    for (const auto& d : t.documents) width = std::max(width, d.doc_id.size());
  }
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %4s  %4s  %5s  %7s  %9s\n", static_cast<int>(width),
                "doc_id", "|F|", "|L|", "E", "beta", "reduction");
  std::cout << line;

  ordered_json docs = ordered_json::array();
  GraphStats mean;
  int n = 0;
  for (const auto& t : ds.types) {
    for (const auto& d : t.documents) {
      const LabelSpace labels = LabelSpace::from_support(d);
      const DocumentGraph graph = build_graph(d, nullptr, GraphSide::Support, labels);
      const GraphStats s = graph_stats(graph, labels.size());
      std::snprintf(line, sizeof(line), "%-*s  %4d  %4d  %5d  %7.3f  %8.2f%%\n",
                    static_cast<int>(width), d.doc_id.c_str(), s.n_fields, s.n_landmarks,
                    s.n_ff_edges, s.beta, 100.0 * s.reduction);
      std::cout << line;
      docs.push_back({{"doc_id", d.doc_id},
                      {"n_fields", s.n_fields},
                      {"n_landmarks", s.n_landmarks},
                      {"n_ff_edges", s.n_ff_edges},
                      {"beta", s.beta},
                      {"reduction", s.reduction}});
      mean.n_fields += s.n_fields;
      mean.n_landmarks += s.n_landmarks;
      mean.n_ff_edges += s.n_ff_edges;
      mean.beta += s.beta;
      mean.reduction += s.reduction;
      ++n;
    }
  }
  const double inv = n > 0 ? 1.0 / n : 0.0;
  std::snprintf(line, sizeof(line), "%-*s  %4.1f  %4.1f  %5.1f  %7.3f  %8.2f%%\n",
                static_cast<int>(width), "mean", mean.n_fields * inv, mean.n_landmarks * inv,
                mean.n_ff_edges * inv, mean.beta * inv, 100.0 * mean.reduction * inv);
  std::cout << line;
  if (!a.out.empty()) {
    write_json({{"dataset", a.data},
                {"documents", std::move(docs)},
                {"mean",
                 {{"n_fields", mean.n_fields * inv},
                  {"n_landmarks", mean.n_landmarks * inv},
                  {"n_ff_edges", mean.n_ff_edges * inv},
                  {"beta", mean.beta * inv},
                  {"reduction", mean.reduction * inv}}}},
               a.out);
  }
  (void)g;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Keep large tape buffers on the heap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"One-shot document field labeling with landmark and field attention"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  CLI::Option* seed_opt = app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--config", g.config_path, "JSON file with per-subcommand defaults");
  app.add_flag("--quiet,-q", g.quiet, "suppress progress output");

  Bindings synth_b, train_b, eval_b, predict_b, stats_b;

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_b.option(synth, "--templates", "templates", sa.templates, "number of templates");
  synth_b.option(synth, "--per-type", "per_type", sa.per_type, "documents per template");
  synth_b.option(synth, "--out", "out", sa.out, "output directory");
  synth_b.option(synth, "--preset", "preset", sa.preset, "default | crowded");
  synth_b.flag(synth, "--force", "force", sa.force, "replace a non-empty output directory");

  TrainArgs ta;
  CLI::App* trn = app.add_subcommand("train", "train a model on the train split");
  train_b.option(trn, "--data", "data", ta.data, "dataset directory");
  train_b.option(trn, "--out", "out", ta.out, "checkpoint path");
  train_b.option(trn, "--loss-csv", "loss_csv", ta.loss_csv, "loss trace (default <out>.loss.csv)");
  train_b.option(trn, "--resume", "resume", ta.resume, "continue from a checkpoint");
  train_b.option(trn, "--iters", "iterations", ta.iters, "training iterations");
  train_b.option(trn, "--batch", "batch_size", ta.batch, "pairs per batch");
  train_b.option(trn, "--lr", "base_lr", ta.lr, "base learning rate");
  train_b.option(trn, "--lr-decay", "lr_decay", ta.lr_decay, "learning rate decay factor");
  train_b.option(trn, "--lr-period", "lr_period", ta.lr_period, "iterations between decays");
  train_b.option(trn, "--momentum", "momentum", ta.momentum, "SGD momentum");
  train_b.option(trn, "--bp-steps", "bp_steps", ta.bp_steps, "belief propagation steps");
  train_b.flag(trn, "--avg-attn", "avg_before_attention", ta.avg_attn,
               "average landmarks before attention");
  train_b.option(trn, "--unary", "unary_source", ta.unary, "lfattn | uniform");
  train_b.option(trn, "--checkpoint-every", "checkpoint_every", ta.checkpoint_every,
                 "write <out>.<iter> every N iterations");
  train_b.option(trn, "--threads", "threads", ta.threads, "worker threads (0 = all cores)");

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval_b.option(ev, "--data", "data", ea.data, "dataset directory");
  eval_b.option(ev, "--ckpt", "ckpt", ea.ckpt, "checkpoint path");
  eval_b.option(ev, "--shots", "shots", ea.shots, "1 or 5");
  eval_b.flag(ev, "--drop-background", "drop_background", ea.drop_background,
              "exclude background regions from accuracy");
  eval_b.option(ev, "--landmark-drop", "landmark_drop", ea.landmark_drop,
                "matched landmarks removed per pair");
  eval_b.option(ev, "--report", "report", ea.report, "JSON report path");
  eval_b.option(ev, "--confusion", "confusion", ea.confusion, "confusion CSV path");
  eval_b.option(ev, "--split", "split", ea.split, "train | test");
  eval_b.option(ev, "--threads", "threads", ea.threads, "worker threads (0 = all cores)");

  PredictArgs pa;
  CLI::App* pred = app.add_subcommand("predict", "label the fields of one query document");
  predict_b.option(pred, "--support", "support", pa.support, "labeled support document");
  predict_b.option(pred, "--query", "query", pa.query, "query document");
  predict_b.option(pred, "--ckpt", "ckpt", pa.ckpt, "checkpoint path");
  predict_b.option(pred, "--out", "out", pa.out, "output JSON (default stdout)");

  StatsArgs st;
  CLI::App* stats = app.add_subcommand("stats", "graph size statistics of a dataset");
  stats_b.option(stats, "--data", "data", st.data, "dataset directory");
  stats_b.option(stats, "--out", "out", st.out, "optional JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (!g.config_path.empty()) {
      std::ifstream in(g.config_path, std::ios::binary);
      if (!in) throw UsageError("cannot open config " + g.config_path);
      try {
        g.config = json::parse(in);
      } catch (const json::parse_error& e) {
        throw UsageError(std::string("config: ") + e.what());
      }
      if (!g.config.is_object()) throw UsageError("config must be a JSON object");
      for (const auto& [k, v] : g.config.items()) {
        static const std::set<std::string> known{"seed",  "quiet",   "synth", "train",
                                                 "eval", "predict", "stats"};
        if (!known.contains(k)) throw UsageError("config: unknown key '" + k + "'");
      }
      if (seed_opt->count() == 0 && g.config.contains("seed")) {
        g.seed = g.config.at("seed").get<std::uint64_t>();
      }
      if (g.config.contains("quiet") && !g.quiet) g.quiet = g.config.at("quiet").get<bool>();
    }
    const auto section = [&](const char* name) {
      return g.config.contains(name) ? g.config.at(name) : json::object();
    };
    if (synth->parsed()) {
      synth_b.apply(section("synth"), "synth");
      return run_synth(g, sa);
    }
    if (trn->parsed()) {
      train_b.apply(section("train"), "train");
      return run_train(g, ta);
    }
    if (ev->parsed()) {
      eval_b.apply(section("eval"), "eval");
      return run_eval(g, ea);
    }
    if (pred->parsed()) {
      predict_b.apply(section("predict"), "predict");
      return run_predict(g, pa);
    }
    stats_b.apply(section("stats"), "stats");
    return run_stats(g, st);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NoCorrespondenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
