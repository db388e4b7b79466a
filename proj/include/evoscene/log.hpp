// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

#include "json.hpp"

namespace evoscene {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kSilent = 4 };

// Process-wide event log. Every event is one JSON object; the default sink
// writes it as a single line to stderr.
class Log {
 public:
  using Sink = std::function<void(const nlohmann::json&)>;

  static Log& instance() {
    static Log log;
    return log;
  }

  void set_level(LogLevel level) { level_ = level; }
  LogLevel level() const { return level_; }

  void set_sink(Sink sink) {
    std::lock_guard<std::mutex> lock(mu_);
    sink_ = std::move(sink);
  }

  // Human-readable rendering: "[level] event key=value ...".
  void use_human_format(std::ostream& out = std::cerr) {
    set_sink([&out](const nlohmann::json& e) {
      out << "[" << e.value("level", "info") << "] " << e.value("event", "");
      for (auto it = e.begin(); it != e.end(); ++it) {
        if (it.key() == "level" || it.key() == "event") continue;
        out << " " << it.key() << "=" << it.value().dump();
      }
      out << "\n";
    });
  }

  void emit(LogLevel level, const std::string& event, nlohmann::json fields = nlohmann::json::object()) {
    if (level < level_) return;
    static constexpr const char* kNames[] = {"debug", "info", "warn", "error", "silent"};
    fields["level"] = kNames[static_cast<int>(level)];
    fields["event"] = event;
    std::lock_guard<std::mutex> lock(mu_);
    if (sink_) {
      sink_(fields);
    } else {
      std::cerr << fields.dump() << "\n";
    }
  }

 private:
  Log() = default;
  LogLevel level_ = LogLevel::kInfo;
  Sink sink_;
  std::mutex mu_;
};

inline void log_info(const std::string& event, nlohmann::json fields = nlohmann::json::object()) {
  Log::instance().emit(LogLevel::kInfo, event, std::move(fields));
}
inline void log_warn(const std::string& event, nlohmann::json fields = nlohmann::json::object()) {
  Log::instance().emit(LogLevel::kWarn, event, std::move(fields));
}
inline void log_debug(const std::string& event, nlohmann::json fields = nlohmann::json::object()) {
  Log::instance().emit(LogLevel::kDebug, event, std::move(fields));
}

}  // namespace evoscene
