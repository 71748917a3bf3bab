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

#include "docfield/synth.hpp"

#include "docfield/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

namespace docfield {

namespace {

const std::vector<std::string>& landmark_phrases() {
  static const std::vector<std::string> p = {
      "Invoice No:", "Date:",        "Time:",       "Total:",      "Subtotal:",  "Tax:",
      "Customer:",   "Address:",     "Phone:",      "Cashier:",    "Order ID:",  "Due Date:",
      "Account:",    "Reference:",   "Amount Due:", "Payment:",    "Change:",    "Discount:",
      "Bill To:",    "Ship To:",     "Seller:",     "Buyer:",      "Terms:",     "Currency:",
      "Station:",    "Vehicle:",     "Driver:",     "Tel:",        "Fax:",       "Email:",
      "Table:",      "Guests:",      "Server:",     "Receipt No:", "Branch:",    "Counter:",
      "Member:",     "Points:",      "Card:",       "Approval:",   "Batch:",     "Terminal:"};
  return p;
}

const std::vector<std::string>& label_names() {
  static const std::vector<std::string> n = {
      "invoice_no", "date",       "time",      "total",     "subtotal",  "tax",
      "customer",   "address",    "phone",     "cashier",   "order_id",  "due_date",
      "account",    "reference",  "amount",    "payment",   "change",    "discount",
      "bill_to",    "ship_to",    "seller",    "buyer",     "terms",     "currency",
      "station",    "vehicle",    "driver",    "card_no",   "approval",  "terminal"};
  return n;
}

template <typename T>
std::vector<T> pick_distinct(Rng& rng, const std::vector<T>& pool, int n) {
  std::vector<T> copy = pool;
  rng.shuffle(copy);
  copy.resize(static_cast<std::size_t>(n));
  return copy;
}

std::string random_token(Rng& rng, int min_len, int max_len) {
  static const char kChars[] = "ABCDEFGHJKLMNPQRSTUVWXYZ0123456789";
  std::string s;
  const int n = rng.uniform_int(min_len, max_len);
  for (int i = 0; i < n; ++i) s.push_back(kChars[rng.uniform_int(0, sizeof(kChars) - 2)]);
  // Always carry a digit so field text never equals a landmark phrase.
  s.push_back(static_cast<char>('0' + rng.uniform_int(0, 9)));
  return s;
}

BBox box_at(double x, double y, double w, double h) { return {x, y, x + w, y + h}; }

}  // namespace

void TemplateSpec::validate() const {
  const auto inside = [&](const BBox& b) {
    return b.valid() && b.x_min >= 0 && b.y_min >= 0 && b.x_max <= width && b.y_max <= height;
  };
  if (!(width > 0 && height > 0)) throw std::invalid_argument(type_id + ": bad page size");
  if (landmarks.empty()) throw std::invalid_argument(type_id + ": no landmarks");
  if (fields.empty()) throw std::invalid_argument(type_id + ": no field slots");
  std::set<std::string> labels, texts;
  for (const auto& l : landmarks) {
    if (!inside(l.box)) throw std::invalid_argument(type_id + ": landmark off page");
    if (!texts.insert(l.text).second) throw std::invalid_argument(type_id + ": landmark text repeats");
  }
  for (const auto& f : fields) {
    if (f.multi_region < 1) throw std::invalid_argument(type_id + ": multi_region < 1");
    if (f.label == kBackgroundLabel || !labels.insert(f.label).second) {
      throw std::invalid_argument(type_id + ": field labels must be distinct");
    }
    for (int s = 0; s < f.multi_region; ++s) {
      const BBox b{f.box.x_min + s * f.sub_dx, f.box.y_min + s * f.sub_dy,
                   f.box.x_max + s * f.sub_dx, f.box.y_max + s * f.sub_dy};
      if (!inside(b)) throw std::invalid_argument(type_id + ": field slot off page");
    }
  }
  for (const auto& b : background_slots) {
    if (!inside(b)) throw std::invalid_argument(type_id + ": background slot off page");
  }
  const FieldSlot* first = nullptr;
  for (const auto& f : fields) {
    if (!f.table_column) continue;
    if (f.sub_dy <= 0 || f.sub_dx != 0 || f.multi_region < 2) {
      throw std::invalid_argument(type_id + ": table column must step down by rows");
    }
    if (!first) first = &f;
    if (f.box.y_min != first->box.y_min || f.multi_region != first->multi_region ||
        f.sub_dy != first->sub_dy) {
      throw std::invalid_argument(type_id + ": table columns disagree on rows");
    }
  }
  const auto& j = jitter;
  if (j.row_drop_max < 0 || (j.row_drop_max > 0 && !first) ||
      (first && j.row_drop_max >= first->multi_region)) {
    throw std::invalid_argument(type_id + ": row_drop_max out of range");
  }
  if (j.scale_lo <= 0 || j.scale_lo > j.scale_hi || j.translation_sigma < 0 ||
      j.region_sigma < 0 || j.landmark_dropout < 0 || j.landmark_dropout >= 1 ||
      j.background_min < 0 || j.background_min > j.background_max ||
      j.background_max > static_cast<int>(background_slots.size())) {
    throw std::invalid_argument(type_id + ": inconsistent jitter model");
  }
}

SynthPreset synth_preset_from_string(std::string_view s) {
  if (s == "default") return SynthPreset::Default;
  if (s == "crowded") return SynthPreset::Crowded;
  throw std::invalid_argument("unknown preset '" + std::string(s) + "'");
}

std::string_view to_string(SynthPreset p) { return p == SynthPreset::Default ? "default" : "crowded"; }

TemplateSpec default_template(std::uint64_t seed, int index) {
  Rng rng{seed, static_cast<std::uint64_t>(index), 0xd0c0ULL};
  TemplateSpec t;
  char id[32];
  std::snprintf(id, sizeof(id), "T%02d", index);
  t.type_id = id;
  t.width = 1000;
  t.height = 1400;

  constexpr int kRows = 13;
  constexpr double kRowPitch = 85;
  constexpr double kTop = 80;
  constexpr double kLine = 26;
  const double col_x[2] = {50, 530};
  constexpr double kColWidth = 420;

  const int n_fields = rng.uniform_int(8, 12);
  const int n_landmarks = rng.uniform_int(5, 8);
  const auto names = pick_distinct(rng, label_names(), n_fields);
  const auto phrases = pick_distinct(rng, landmark_phrases(), n_landmarks);

  std::vector<std::pair<int, int>> cells;
  for (int r = 0; r < kRows; ++r) {
    for (int c = 0; c < 2; ++c) cells.emplace_back(r, c);
  }
  rng.shuffle(cells);
  std::size_t next_cell = 0;
  int next_landmark = 0;

  for (int f = 0; f < n_fields; ++f) {
    const auto [row, col] = cells[next_cell++];
    const double y = kTop + row * kRowPitch;
    const double x0 = col_x[col];
    FieldSlot slot;
    slot.label = names[f];
    const double fw = rng.uniform(90, 180);
    if (next_landmark < n_landmarks && rng.bernoulli(0.6)) {
      const double lw = rng.uniform(90, 150);
      const double lx = x0 + rng.uniform(0, 60);
      t.landmarks.push_back({phrases[next_landmark++], box_at(lx, y, lw, kLine)});
      const double fx = std::min(lx + lw + rng.uniform(20, 40), x0 + kColWidth - fw);
      slot.box = box_at(fx, y, fw, kLine);
    } else {
      slot.box = box_at(x0 + rng.uniform(0, kColWidth - fw), y, fw, kLine);
    }
    if (rng.bernoulli(0.1)) {
      slot.multi_region = 2;
      slot.sub_dy = 34;
    }
    t.fields.push_back(std::move(slot));
  }
  while (next_landmark < n_landmarks) {
    const auto [row, col] = cells[next_cell++];
    const double lw = rng.uniform(100, 200);
    t.landmarks.push_back({phrases[next_landmark++],
                           box_at(col_x[col] + rng.uniform(0, kColWidth - lw),
                                  kTop + row * kRowPitch, lw, kLine)});
  }

  // Footer band below the grid.
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) {
      const double w = rng.uniform(120, 220);
      t.background_slots.push_back(box_at(60 + c * 310 + rng.uniform(0, 290 - w),
                                          kTop + kRows * kRowPitch + 20 + r * 45, w, kLine));
    }
  }
  t.jitter.background_min = 2;
  t.jitter.background_max = 4;
  t.validate();
  return t;
}

TemplateSpec crowded_template(std::uint64_t seed, int index) {
  Rng rng{seed, static_cast<std::uint64_t>(index), 0xc40dULL};
  TemplateSpec t;
  char id[32];
  std::snprintf(id, sizeof(id), "C%02d", index);
  t.type_id = id;
  t.width = 600;
  t.height = 1400;
  constexpr double kLine = 24;

  const auto phrases = pick_distinct(rng, landmark_phrases(), 2);
  // Title at the top, totals keyword below the item table.
  const double title_w = rng.uniform(160, 260);
  t.landmarks.push_back({phrases[0], box_at(300 - title_w / 2, 60, title_w, kLine)});

  double y = 110;
  t.fields.push_back({"store_name", box_at(rng.uniform(60, 160), y, rng.uniform(220, 320), kLine)});
  y += 40;
  FieldSlot addr{"address", box_at(rng.uniform(40, 120), y, rng.uniform(280, 400), kLine), 2, 0, 32};
  t.fields.push_back(addr);
  y += 72;
  t.fields.push_back({"date", box_at(rng.uniform(30, 60), y, rng.uniform(100, 140), kLine)});
  t.fields.push_back({"time", box_at(rng.uniform(380, 440), y, rng.uniform(80, 110), kLine)});
  y += 44;

  const int n_rows = rng.uniform_int(4, 7);
  const double pitch = rng.uniform(32, 38);
  const double name_x = rng.uniform(25, 45);
  const double qty_x = rng.uniform(285, 305);
  const double amount_x = rng.uniform(390, 420);
  t.fields.push_back(
      {"item_name", box_at(name_x, y, rng.uniform(200, 240), kLine), n_rows, 0, pitch, true});
  t.fields.push_back({"item_qty", box_at(qty_x, y, rng.uniform(40, 60), kLine), n_rows, 0, pitch, true});
  t.fields.push_back(
      {"item_amount", box_at(amount_x, y, rng.uniform(110, 150), kLine), n_rows, 0, pitch, true});
  y += n_rows * pitch + 10;

  const double total_w = rng.uniform(90, 130);
  t.landmarks.push_back({phrases[1], box_at(rng.uniform(30, 60), y, total_w, kLine)});
  const double value_x = amount_x + rng.uniform(-10, 10);
  t.fields.push_back({"total", box_at(value_x, y, rng.uniform(90, 140), kLine)});
  y += pitch;
  t.fields.push_back({"cash", box_at(value_x, y, rng.uniform(90, 140), kLine)});
  y += pitch;
  t.fields.push_back({"change", box_at(value_x, y, rng.uniform(80, 140), kLine)});
  y += 50;

  for (int r = 0; r < 3; ++r) {
    const double w = rng.uniform(200, 360);
    t.background_slots.push_back(box_at(300 - w / 2, y + r * pitch, w, kLine));
  }
  t.jitter.background_min = 1;
  t.jitter.background_max = 3;
  t.jitter.landmark_dropout = 0.0;
  t.jitter.region_sigma = 0.004;
  t.jitter.row_drop_max = n_rows - 1;
  t.validate();
  return t;
}

std::vector<TemplateSpec> make_templates(SynthPreset preset, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("make_templates: need at least one template");
  const int n_test = count >= 2 ? std::max(1, static_cast<int>(std::lround(count / 4.0))) : 0;
  std::vector<TemplateSpec> out;
  for (int i = 0; i < count; ++i) {
    TemplateSpec t = preset == SynthPreset::Default ? default_template(seed, i)
                                                    : crowded_template(seed, i);
    t.split = i >= count - n_test ? "test" : "train";
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

struct AxisFit {
  double scale = 1;
  double offset = 0;
};

/// Least squares observed = scale * nominal + offset.
AxisFit fit_axis(const std::vector<std::pair<double, double>>& pts) {
  double sn = 0, so = 0, snn = 0, sno = 0;
  for (const auto& [n, o] : pts) {
    sn += n;
    so += o;
    snn += n * n;
    sno += n * o;
  }
  const double m = static_cast<double>(pts.size());
  const double den = m * snn - sn * sn;
  if (pts.empty() || std::abs(den) < 1e-9) return {1, pts.empty() ? 0 : (so - sn) / m};
  const double scale = (m * sno - sn * so) / den;
  return {scale, (so - scale * sn) / m};
}

/// `spec` with the last `dropped` table rows removed. Everything starting
/// below the table moves up by as many row pitches.
TemplateSpec shortened(const TemplateSpec& spec, int dropped) {
  TemplateSpec out = spec;
  const FieldSlot* first = nullptr;
  for (const auto& f : spec.fields) {
    if (f.table_column) {
      first = &f;
      break;
    }
  }
  if (!first || dropped == 0) return out;
  const double bottom = first->box.y_max + (first->multi_region - 1) * first->sub_dy;
  const double shift = dropped * first->sub_dy;
  const auto lift = [&](BBox& b) {
    if (b.y_min < bottom) return;
    b.y_min -= shift;
    b.y_max -= shift;
  };
  for (auto& l : out.landmarks) lift(l.box);
  for (auto& f : out.fields) {
    if (f.table_column) f.multi_region -= dropped;
    else lift(f.box);
  }
  for (auto& b : out.background_slots) lift(b);
  return out;
}

}  // namespace

TemplateSpec instance_layout(const TemplateSpec& spec, const Document& instance) {
  const auto first = std::find_if(spec.fields.begin(), spec.fields.end(),
                                  [](const FieldSlot& f) { return f.table_column; });
  if (first == spec.fields.end()) return spec;
  const auto rows = std::count_if(instance.regions.begin(), instance.regions.end(), [&](const TextRegion& r) {
    return r.role == Role::Field && r.label == first->label;
  });
  if (rows < 1 || rows > first->multi_region) {
    throw std::invalid_argument("instance_layout: " + instance.doc_id + " has " +
                                std::to_string(rows) + " rows of " + first->label);
  }
  return shortened(spec, first->multi_region - static_cast<int>(rows));
}

std::string nearest_slot_label(const TemplateSpec& spec, const Document& instance,
                               const BBox& box) {
  std::vector<std::pair<double, double>> xs, ys;
  for (const auto& l : spec.landmarks) {
    for (const auto& r : instance.regions) {
      if (r.role != Role::Landmark || r.text != l.text) continue;
      xs.emplace_back(l.box.x_min, r.box.x_min);
      xs.emplace_back(l.box.x_max, r.box.x_max);
      ys.emplace_back(l.box.y_min, r.box.y_min);
      ys.emplace_back(l.box.y_max, r.box.y_max);
    }
  }
  const AxisFit fx = fit_axis(xs);
  const AxisFit fy = fit_axis(ys);
  const Point c = box.center();
  const Point nominal{(c.x - fx.offset) / fx.scale, (c.y - fy.offset) / fy.scale};

  double best = std::numeric_limits<double>::infinity();
  std::string label;
  const auto consider = [&](const BBox& b, const std::string& name) {
    const Point p = b.center();
    const double d = std::hypot(p.x - nominal.x, p.y - nominal.y);
    if (d < best) {
      best = d;
      label = name;
    }
  };
  for (const auto& f : spec.fields) {
    for (int s = 0; s < f.multi_region; ++s) {
      consider({f.box.x_min + s * f.sub_dx, f.box.y_min + s * f.sub_dy,
                f.box.x_max + s * f.sub_dx, f.box.y_max + s * f.sub_dy},
               f.label);
    }
  }
  for (const auto& b : spec.background_slots) consider(b, std::string(kBackgroundLabel));
  return label;
}

namespace {

struct Placed {
  BBox box;
  std::string text;
  Role role;
  std::optional<std::string> label;
};

std::optional<Document> try_instance(const TemplateSpec& full, Rng& rng, const std::string& doc_id) {
  const JitterModel& j = full.jitter;
  const TemplateSpec spec =
      j.row_drop_max > 0 ? shortened(full, rng.uniform_int(0, j.row_drop_max)) : full;
  const double w = spec.width, h = spec.height;
  const double s = rng.uniform(j.scale_lo, j.scale_hi);
  const double tx = rng.normal() * j.translation_sigma * w;
  const double ty = rng.normal() * j.translation_sigma * h;
  const auto place = [&](const BBox& b) {
    const auto mx = [&](double x) { return w / 2 + s * (x - w / 2) + tx; };
    const auto my = [&](double y) { return h / 2 + s * (y - h / 2) + ty; };
    const double dx = rng.normal() * j.region_sigma * w;
    const double dy = rng.normal() * j.region_sigma * h;
    const double dw = rng.normal() * j.region_sigma * w;
    BBox out{mx(b.x_min) + dx, my(b.y_min) + dy, mx(b.x_max) + dx + dw, my(b.y_max) + dy};
    out.x_max = std::max(out.x_max, out.x_min + 8.0);
    return out;
  };

  std::vector<Placed> regions;
  std::vector<int> kept;
  for (std::size_t l = 0; l < spec.landmarks.size(); ++l) {
    if (!rng.bernoulli(j.landmark_dropout)) kept.push_back(static_cast<int>(l));
  }
  if (kept.empty()) kept.push_back(rng.uniform_int(0, static_cast<int>(spec.landmarks.size()) - 1));
  for (int l : kept) {
    regions.push_back({place(spec.landmarks[l].box), spec.landmarks[l].text, Role::Landmark, {}});
  }
  for (const auto& f : spec.fields) {
    for (int k = 0; k < f.multi_region; ++k) {
      const BBox nominal{f.box.x_min + k * f.sub_dx, f.box.y_min + k * f.sub_dy,
                         f.box.x_max + k * f.sub_dx, f.box.y_max + k * f.sub_dy};
      regions.push_back({place(nominal), random_token(rng, 3, 9), Role::Field, f.label});
    }
  }
  std::vector<int> bg(spec.background_slots.size());
  for (std::size_t b = 0; b < bg.size(); ++b) bg[b] = static_cast<int>(b);
  rng.shuffle(bg);
  const int n_bg = rng.uniform_int(j.background_min, j.background_max);
  bg.resize(static_cast<std::size_t>(n_bg));
  std::sort(bg.begin(), bg.end());
  for (int b : bg) {
    regions.push_back({place(spec.background_slots[b]),
                       "note " + random_token(rng, 4, 12), Role::Field,
                       std::string(kBackgroundLabel)});
  }
  rng.shuffle(regions);

  Document doc;
  doc.doc_id = doc_id;
  doc.type_id = spec.type_id;
  doc.width = w;
  doc.height = h;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const BBox& b = regions[i].box;
    if (b.x_min < 0 || b.y_min < 0 || b.x_max > w || b.y_max > h) return std::nullopt;
    char rid[32];
    std::snprintf(rid, sizeof(rid), "r%03zu", i);
    doc.regions.push_back({rid, std::nullopt, b, regions[i].text, regions[i].role, regions[i].label});
  }
  for (const auto& r : doc.regions) {
    if (r.role == Role::Field && nearest_slot_label(spec, doc, r.box) != *r.label) return std::nullopt;
  }
  return doc;
}

}  // namespace

nlohmann::ordered_json to_json(const JitterModel& j) {
  return {{"translation_sigma", j.translation_sigma},
          {"scale_lo", j.scale_lo},
          {"scale_hi", j.scale_hi},
          {"region_sigma", j.region_sigma},
          {"landmark_dropout", j.landmark_dropout},
          {"background_min", j.background_min},
          {"background_max", j.background_max},
          {"row_drop_max", j.row_drop_max}};
}

DatasetManifest synth_generate(std::span<const TemplateSpec> specs, int per_type,
                               std::uint64_t seed) {
  if (per_type < 1) throw std::invalid_argument("synth_generate: per_type must be positive");
  DatasetManifest ds;
  for (std::size_t t = 0; t < specs.size(); ++t) {
    const TemplateSpec& spec = specs[t];
    spec.validate();
    TypeGroup group{spec.type_id, spec.split, {}};
    for (int i = 0; i < per_type; ++i) {
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%03d", spec.type_id.c_str(), i);
      Rng rng{seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i)};
      std::optional<Document> doc;
      for (int attempt = 0; attempt < 100 && !doc; ++attempt) doc = try_instance(spec, rng, id);
      if (!doc) {
        throw std::runtime_error("synth_generate: could not place instance " + std::string(id) +
                                 " after 100 attempts");
      }
      group.documents.push_back(std::move(*doc));
    }
    ds.types.push_back(std::move(group));
  }
  std::sort(ds.types.begin(), ds.types.end(),
            [](const TypeGroup& a, const TypeGroup& b) { return a.type_id < b.type_id; });
  return ds;
}

}  // namespace docfield
