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

#include "docfield/document.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace docfield;

TEST_CASE("normalize_text folds width, case and whitespace") {
  CHECK(normalize_text("Total:") == "total:");
  CHECK(normalize_text("  Total \t  Due  ") == "total due");
  CHECK(normalize_text("\xEF\xBC\xB4\xEF\xBD\x8F\xEF\xBD\x94\xEF\xBD\x81\xEF\xBD\x8C") == "total");
  CHECK(normalize_text("STRASSE") == normalize_text("Stra\xC3\x9F" "e"));
  CHECK(normalize_text("\xE6\x97\xA5\xE6\x9C\x9F") == "\xE6\x97\xA5\xE6\x9C\x9F");
  CHECK(normalize_text("a\xE3\x80\x80" "b") == "a b");
  CHECK(normalize_text("") == "");
  CHECK(normalize_text(" \n ") == "");
}

TEST_CASE("role strings round trip") {
  CHECK(role_from_string(to_string(Role::Landmark)) == Role::Landmark);
  CHECK(role_from_string(to_string(Role::Field)) == Role::Field);
  CHECK_THROWS_AS(role_from_string("value"), std::invalid_argument);
}

TEST_CASE("clamp_to_page and find") {
  Document d = testing::make_doc("d", "t",
                                 {testing::field("a", {-5, 10, 50, 2000}, "x"),
                                  testing::landmark("b", {990, -3, 1200, 8}, "Date")},
                                 1000, 1000);
  clamp_to_page(d);
  CHECK(d.regions[0].box == BBox{0, 10, 50, 1000});
  CHECK(d.regions[1].box == BBox{990, 0, 1000, 8});
  REQUIRE(d.find("b") != nullptr);
  CHECK(d.find("b")->text == "Date");
  CHECK(d.find("zz") == nullptr);
}
