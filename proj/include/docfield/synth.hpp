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

#pragma once

#include "docfield/dataio.hpp"
#include "docfield/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace docfield {

struct LandmarkSlot {
  std::string text;
  BBox box;
};

/// A field type. Multi-region fields repeat `box` shifted by (sub_dx, sub_dy)
/// per extra sub-box. Table columns are multi-region slots that share their
/// first row, row count and row pitch (sub_dy).
struct FieldSlot {
  std::string label;
  BBox box;
  int multi_region = 1;
  double sub_dx = 0;
  double sub_dy = 0;
  bool table_column = false;
};

/// Instance-to-instance variation of a template. Sigmas are fractions of the
/// page extent along the respective axis.
struct JitterModel {
  double translation_sigma = 0.05;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double region_sigma = 0.01;
  double landmark_dropout = 0.1;
  int background_min = 2;
  int background_max = 4;
  /// Up to this many trailing table rows are left out of an instance; the
  /// content below the table moves up by the same number of rows.
  int row_drop_max = 0;
};

/// One layout family. Background text lines are drawn from a fixed set of
/// template positions (headers, footers, disclaimers); each instance shows a
/// random subset of them.
struct TemplateSpec {
  std::string type_id;
  std::string split = "train";
  double width = 1000;
  double height = 1400;
  std::vector<LandmarkSlot> landmarks;
  std::vector<FieldSlot> fields;
  std::vector<BBox> background_slots;
  JitterModel jitter;

  /// Throws std::invalid_argument when boxes leave the page, labels repeat,
  /// or the jitter model is inconsistent.
  void validate() const;
};

enum class SynthPreset { Default, Crowded };

SynthPreset synth_preset_from_string(std::string_view s);
std::string_view to_string(SynthPreset p);

/// Random key/value form layouts: 5-8 landmarks, 8-12 field types, about one
/// in ten multi-region, background lines in a footer band.
TemplateSpec default_template(std::uint64_t seed, int index);
/// Receipt-like layouts: at most two landmarks, interleaved item columns
/// (name / quantity / amount rows) and totals far from any landmark.
TemplateSpec crowded_template(std::uint64_t seed, int index);

/// `count` templates of a preset; the last round(count/4) are tagged "test"
/// (at least one once count >= 2).
std::vector<TemplateSpec> make_templates(SynthPreset preset, int count, std::uint64_t seed);

/// Draws `per_type` instances of every template. Deterministic per seed.
/// Throws std::runtime_error when an instance cannot be placed on the page
/// (or fails the nearest-slot check) after 100 attempts.
DatasetManifest synth_generate(std::span<const TemplateSpec> specs, int per_type,
                               std::uint64_t seed);

/// The template as laid out in `instance`: table columns cut to the rows the
/// instance shows and everything below the table moved up. Templates without
/// table columns come back unchanged.
TemplateSpec instance_layout(const TemplateSpec& spec, const Document& instance);

/// Label whose nominal slot (field sub-box or background position) is closest
/// to `box` once the instance is mapped back into the template frame with a
/// per-axis scale/offset fitted on the landmarks present.
std::string nearest_slot_label(const TemplateSpec& spec, const Document& instance,
                               const BBox& box);

nlohmann::ordered_json to_json(const JitterModel& j);

}  // namespace docfield
