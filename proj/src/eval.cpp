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

#include "docfield/eval.hpp"

#include "docfield/parallel.hpp"
#include "docfield/random.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>

namespace docfield {

using nlohmann::ordered_json;

double pair_accuracy(const Labeling& predicted, const Labeling& truth) {
  if (predicted.region_ids.size() != predicted.labels.size() ||
      truth.region_ids.size() != truth.labels.size()) {
    throw std::invalid_argument("pair_accuracy: ids and labels differ in length");
  }
  if (predicted.region_ids.size() != truth.region_ids.size()) {
    throw std::invalid_argument("pair_accuracy: region-set mismatch");
  }
  if (truth.region_ids.empty()) throw std::invalid_argument("pair_accuracy: no regions to score");
  std::unordered_map<std::string_view, std::string_view> pred;
  for (std::size_t i = 0; i < predicted.region_ids.size(); ++i) {
    pred.emplace(predicted.region_ids[i], predicted.labels[i]);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.region_ids.size(); ++i) {
    const auto it = pred.find(truth.region_ids[i]);
    if (it == pred.end()) throw std::invalid_argument("pair_accuracy: region-set mismatch");
    if (it->second == truth.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(truth.region_ids.size());
}

Labeling scored_truth(const Document& query, bool drop_background) {
  Labeling t;
  for (const auto& r : query.regions) {
    if (r.role != Role::Field || !r.label) continue;
    if (drop_background && *r.label == kBackgroundLabel) continue;
    t.region_ids.push_back(r.id);
    t.labels.push_back(*r.label);
  }
  return t;
}

Labeling restrict_to(const Prediction& pred, const Labeling& truth) {
  std::unordered_map<std::string_view, std::string_view> by_id;
  for (const auto& r : pred.regions) by_id.emplace(r.region_id, r.label);
  Labeling out;
  for (const auto& id : truth.region_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) continue;
    out.region_ids.push_back(id);
    out.labels.emplace_back(it->second);
  }
  return out;
}

Eigen::MatrixXi confusion_matrix(std::span<const ScoredPair> pairs, const LabelSpace& labels) {
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(labels.size(), labels.size());
  const auto index = [&](const std::string& l) {
    const int k = labels.index_of(l);
    if (k < 0) throw std::invalid_argument("confusion_matrix: label '" + l + "' not in space");
    return k;
  };
  for (const auto& p : pairs) {
    std::unordered_map<std::string_view, std::string_view> pred;
    for (std::size_t i = 0; i < p.predicted.region_ids.size(); ++i) {
      pred.emplace(p.predicted.region_ids[i], p.predicted.labels[i]);
    }
    for (std::size_t i = 0; i < p.truth.region_ids.size(); ++i) {
      const auto it = pred.find(p.truth.region_ids[i]);
      if (it == pred.end()) continue;
      ++counts(index(p.truth.labels[i]), index(std::string(it->second)));
    }
  }
  return counts;
}

namespace {

struct Shot {
  std::optional<Prediction> prediction;  // empty: no correspondence
};

/// One-shot prediction of `query` from `support`, after removing up to
/// `drop` matched query landmarks (at least one stays).
std::optional<Prediction> one_shot(const Document& support, const Document& query,
                                   const ModelParams& params, int drop, Rng& rng) {
  LandmarkMatch match;
  try {
    match = match_landmarks(support, query);
  } catch (const NoCorrespondenceError&) {
    return std::nullopt;
  }
  const int n_drop = std::min<int>(drop, static_cast<int>(match.pairs.size()) - 1);
  if (n_drop <= 0) return predict(prepare_pair(support, query, match), params);

  std::vector<LandmarkPair> pairs = match.pairs;
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::set<std::string> removed;
  for (int i = 0; i < n_drop; ++i) removed.insert(pairs[order[i]].query_id);

  Document reduced = query;
  std::erase_if(reduced.regions, [&](const TextRegion& r) { return removed.contains(r.id); });
  LandmarkMatch kept;
  for (const auto& p : pairs) {
    if (!removed.contains(p.query_id)) kept.pairs.push_back(p);
  }
  return predict(prepare_pair(support, reduced, kept), params);
}

std::uint64_t binomial_capped(std::uint64_t n, std::uint64_t k, std::uint64_t cap) {
  if (k > n) return 0;
  std::uint64_t c = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
    if (c > cap) return cap + 1;
  }
  return c;
}

/// Support index subsets for one 5-shot query: every subset when there are at
/// most `max_subsets`, otherwise that many distinct seeded draws.
std::vector<std::vector<int>> support_subsets(const std::vector<int>& candidates, int shots,
                                              int max_subsets, Rng& rng) {
  const std::uint64_t total =
      binomial_capped(candidates.size(), static_cast<std::uint64_t>(shots), max_subsets);
  std::vector<std::vector<int>> out;
  if (total <= static_cast<std::uint64_t>(max_subsets)) {
    std::vector<int> pick(static_cast<std::size_t>(shots));
    const int n = static_cast<int>(candidates.size());
    for (int i = 0; i < shots; ++i) pick[i] = i;
    while (true) {
      std::vector<int> subset;
      for (int i : pick) subset.push_back(candidates[i]);
      out.push_back(std::move(subset));
      int i = shots - 1;
      while (i >= 0 && pick[i] == n - shots + i) --i;
      if (i < 0) break;
      ++pick[i];
      for (int j = i + 1; j < shots; ++j) pick[j] = pick[j - 1] + 1;
    }
    return out;
  }
  std::set<std::vector<int>> seen;
  while (static_cast<int>(out.size()) < max_subsets) {
    std::vector<int> pool = candidates;
    for (int i = 0; i < shots; ++i) {
      const int j = rng.uniform_int(i, static_cast<int>(pool.size()) - 1);
      std::swap(pool[i], pool[j]);
    }
    std::vector<int> subset(pool.begin(), pool.begin() + shots);
    std::sort(subset.begin(), subset.end());
    if (seen.insert(subset).second) out.push_back(std::move(subset));
  }
  return out;
}

}  // namespace

EvalReport evaluate(const DatasetManifest& ds, const ModelParams& params,
                    const EvalSettings& settings) {
  if (settings.shots != 1 && settings.shots != 5) {
    throw std::invalid_argument("evaluate: shots must be 1 or 5");
  }
  if (settings.landmark_drop < 0) throw std::invalid_argument("evaluate: negative landmark_drop");
  if (params.lf_mlp.input_dim() != 2 * kPairFeatureDim ||
      params.ff_mlp.input_dim() != 2 * kPairFeatureDim) {
    throw std::invalid_argument("evaluate: checkpoint feature dimension does not match");
  }
  const std::vector<const TypeGroup*> types = ds.types_in(settings.split);
  if (types.empty()) throw std::invalid_argument("evaluate: no types in split '" + settings.split + "'");
  for (const TypeGroup* t : types) {
    if (static_cast<int>(t->documents.size()) <= settings.shots) {
      throw std::invalid_argument("evaluate: type '" + t->type_id + "' needs more than " +
                                  std::to_string(settings.shots) + " documents");
    }
  }

  // All ordered (query, support) one-shot predictions, shared by both modes.
  struct Job {
    std::size_t type;
    int query;
    int support;
  };
  std::vector<Job> jobs;
  std::vector<std::size_t> type_offset;
  for (std::size_t t = 0; t < types.size(); ++t) {
    type_offset.push_back(jobs.size());
    const int n = static_cast<int>(types[t]->documents.size());
    for (int q = 0; q < n; ++q) {
      for (int s = 0; s < n; ++s) {
        jobs.push_back({t, q, s});
      }
    }
  }
  std::vector<std::optional<Prediction>> shots(jobs.size());
  parallel_for(jobs.size(), settings.threads, [&](std::size_t i) {
    const Job& j = jobs[i];
    if (j.query == j.support) return;
    const auto& docs = types[j.type]->documents;
    Rng rng{settings.seed, j.type, static_cast<std::uint64_t>(j.query),
            static_cast<std::uint64_t>(j.support)};
    shots[i] = one_shot(docs[j.support], docs[j.query], params, settings.landmark_drop, rng);
  });

  EvalReport report;
  report.settings = settings;
  double overall = 0;
  for (std::size_t t = 0; t < types.size(); ++t) {
    const TypeGroup& group = *types[t];
    const int n = static_cast<int>(group.documents.size());
    std::vector<std::string> all_labels;
    for (const auto& d : group.documents) {
      for (const auto& r : d.regions) {
        if (r.role == Role::Field && r.label) all_labels.push_back(*r.label);
      }
    }
    TypeResult tr{group.type_id, 0.0, LabelSpace(std::move(all_labels)), {}};
    std::vector<ScoredPair> scored;
    double type_sum = 0;
    for (int q = 0; q < n; ++q) {
      const Document& query = group.documents[q];
      const Labeling truth = scored_truth(query, settings.drop_background);
      QueryResult qr{group.type_id, query.doc_id, 0.0, 0, 0};
      const auto score = [&](const std::optional<Prediction>& p) {
        ++qr.trials;
        if (!p) {
          ++qr.no_correspondence;
          return 0.0;
        }
        Labeling pred = restrict_to(*p, truth);
        const double acc = pair_accuracy(pred, truth);
        scored.push_back({std::move(pred), truth});
        return acc;
      };
      double sum = 0;
      if (truth.region_ids.empty()) continue;
      const std::size_t base = type_offset[t] + static_cast<std::size_t>(q) * n;
      if (settings.shots == 1) {
        for (int s = 0; s < n; ++s) {
          if (s != q) sum += score(shots[base + s]);
        }
      } else {
        std::vector<int> candidates;
        for (int s = 0; s < n; ++s) {
          if (s != q) candidates.push_back(s);
        }
        Rng rng{settings.seed, t, static_cast<std::uint64_t>(q), 0x5b07ULL};
        for (const auto& subset : support_subsets(candidates, settings.shots, settings.max_subsets, rng)) {
          std::vector<const Prediction*> available;
          for (int s : subset) {
            if (shots[base + s]) available.push_back(&*shots[base + s]);
          }
          if (available.empty()) {
            sum += score(std::nullopt);
          } else {
            sum += score(average_predictions(available));
          }
        }
      }
      qr.accuracy = sum / qr.trials;
      type_sum += qr.accuracy;
      report.queries.push_back(qr);
    }
    const int scored_queries = static_cast<int>(std::count_if(
        report.queries.begin(), report.queries.end(),
        [&](const QueryResult& r) { return r.type_id == group.type_id; }));
    tr.accuracy = scored_queries > 0 ? type_sum / scored_queries : 0.0;
    tr.confusion = confusion_matrix(scored, tr.labels);
    overall += tr.accuracy;
    report.types.push_back(std::move(tr));
  }
  report.overall = overall / static_cast<double>(types.size());
  return report;
}

BackgroundImpact background_impact(const DatasetManifest& ds, const ModelParams& params,
                                   EvalSettings settings) {
  BackgroundImpact b;
  settings.drop_background = false;
  b.acc_with_bg = evaluate(ds, params, settings).overall;
  settings.drop_background = true;
  b.acc_without_bg = evaluate(ds, params, settings).overall;
  b.incre = b.acc_without_bg - b.acc_with_bg;
  return b;
}

ordered_json to_json(const EvalSettings& s) {
  return {{"shots", s.shots},
          {"drop_background", s.drop_background},
          {"landmark_drop", s.landmark_drop},
          {"seed", s.seed},
          {"max_subsets", s.max_subsets},
          {"split", s.split}};
}

ordered_json to_json(const EvalReport& r) {
  ordered_json j;
  j["settings"] = to_json(r.settings);
  j["overall"] = r.overall;
  ordered_json per_type = ordered_json::object();
  for (const auto& t : r.types) per_type[t.type_id] = t.accuracy;
  j["per_type"] = std::move(per_type);
  ordered_json queries = ordered_json::array();
  for (const auto& q : r.queries) {
    queries.push_back({{"type_id", q.type_id},
                       {"doc_id", q.doc_id},
                       {"accuracy", q.accuracy},
                       {"trials", q.trials},
                       {"no_correspondence", q.no_correspondence}});
  }
  j["per_query"] = std::move(queries);
  ordered_json confusion = ordered_json::object();
  for (const auto& t : r.types) {
    ordered_json counts = ordered_json::array();
    for (Eigen::Index a = 0; a < t.confusion.rows(); ++a) {
      ordered_json row = ordered_json::array();
      for (Eigen::Index b = 0; b < t.confusion.cols(); ++b) row.push_back(t.confusion(a, b));
      counts.push_back(std::move(row));
    }
    confusion[t.type_id] = {{"labels", t.labels.labels()}, {"counts", std::move(counts)}};
  }
  j["confusion"] = std::move(confusion);
  return j;
}

std::string format_table(const EvalReport& r) {
  std::size_t width = 7;
  for (const auto& t : r.types) width = std::max(width, t.type_id.size());
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %8s  %7s\n", static_cast<int>(width), "type",
                "accuracy", "queries");
  os << line;
  for (const auto& t : r.types) {
    const auto n = std::count_if(r.queries.begin(), r.queries.end(),
                                 [&](const QueryResult& q) { return q.type_id == t.type_id; });
    std::snprintf(line, sizeof(line), "%-*s  %8.4f  %7lld\n", static_cast<int>(width),
                  t.type_id.c_str(), t.accuracy, static_cast<long long>(n));
    os << line;
  }
  std::snprintf(line, sizeof(line), "%-*s  %8.4f\n", static_cast<int>(width), "overall", r.overall);
  os << line;
  return os.str();
}

void write_confusion_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "type_id,truth,predicted,count\n";
  for (const auto& t : r.types) {
    for (Eigen::Index a = 0; a < t.confusion.rows(); ++a) {
      for (Eigen::Index b = 0; b < t.confusion.cols(); ++b) {
        if (t.confusion(a, b) == 0) continue;
        out << t.type_id << ',' << t.labels.label(static_cast<int>(a)) << ','
            << t.labels.label(static_cast<int>(b)) << ',' << t.confusion(a, b) << '\n';
      }
    }
  }
}

}  // namespace docfield
