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

#include "alrnet/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace alr {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::Info)};
std::mutex g_mu;
}  // namespace

void set_log_level(LogLevel level) noexcept { g_level.store(static_cast<int>(level)); }
LogLevel log_level() noexcept { return static_cast<LogLevel>(g_level.load()); }

void log_message(LogLevel level, std::string_view msg) {
  if (static_cast<int>(level) < g_level.load()) return;
  static constexpr const char* kTag[] = {"debug", "info", "warn", "error"};
  std::lock_guard lock(g_mu);
  std::fprintf(stderr, "[alrnet %s] %.*s\n", kTag[static_cast<int>(level)], static_cast<int>(msg.size()), msg.data());
}

}  // namespace alr
