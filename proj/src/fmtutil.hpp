// Copyright 2026 The alrnet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace alr {

// printf-style %.Ng. Non-finite values print as "nan"/"inf", which JSON
// writers must special-case.
inline std::string fmt_g(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string fmt_g17(double v) { return fmt_g(v, 17); }
inline std::string fmt_g9(double v) { return fmt_g(v, 9); }

/// JSON number token; null for non-finite values.
inline std::string json_num(double v) { return std::isfinite(v) ? fmt_g17(v) : std::string("null"); }

}  // namespace alr
