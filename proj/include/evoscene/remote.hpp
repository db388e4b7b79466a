// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// HTTP transport for the backend protocol: a retrying client, the three
// remote backends built on it, a mock server hosting local backends, and
// record/replay wrappers.

#pragma once

#include <chrono>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "evoscene/completion.hpp"
#include "evoscene/errors.hpp"
#include "evoscene/interfaces.hpp"
#include "evoscene/log.hpp"
#include "evoscene/protocol.hpp"
#include "httplib.h"
#include "json.hpp"

namespace evoscene {

struct RetryPolicy {
  int retries = 3;              // after the first attempt
  double base_delay_s = 1.0;    // doubled after every failed attempt
  double timeout_s = 600.0;     // per attempt

  void validate() const {
    if (retries < 0) throw UsageError("retries must be >= 0");
    if (!(base_delay_s >= 0.0)) throw UsageError("retry delay must be >= 0");
    if (!(timeout_s > 0.0)) throw UsageError("timeout must be positive");
  }
};

// POSTs JSON to one endpoint. Calls are serialized. Connection failures and
// 502/503/504 are retried with exponential backoff; any other answer is
// final.
class RemoteClient {
 public:
  explicit RemoteClient(std::string url, RetryPolicy policy = {}) : url_(std::move(url)), policy_(policy) {
    policy_.validate();
    if (url_.find("://") == std::string::npos) url_ = "http://" + url_;
    while (!url_.empty() && url_.back() == '/') url_.pop_back();
    if (!url_.starts_with("http://")) throw UsageError("remote backend: only http:// endpoints are supported: " + url_);
  }

  const std::string& url() const { return url_; }
  int last_attempts() const { return last_attempts_; }
  const std::vector<std::string>& attempt_log() const { return log_; }

  nlohmann::json post(const std::string& route, const nlohmann::json& body) {
    std::lock_guard<std::mutex> lock(mu_);
    log_.clear();
    const std::string payload = body.dump();
    httplib::Client cli(url_);
    const auto timeout = std::chrono::duration<double>(policy_.timeout_s);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    for (int attempt = 0;; ++attempt) {
      last_attempts_ = attempt + 1;
      auto res = cli.Post(route, payload, "application/json");
      std::string failure;
      if (!res) {
        failure = "transport: " + httplib::to_string(res.error());
      } else if (res->status == 502 || res->status == 503 || res->status == 504) {
        failure = "HTTP " + std::to_string(res->status);
      } else if (res->status != 200) {
        std::string msg = res->body;
        try {
          msg = nlohmann::json::parse(res->body).value("error", res->body);
        } catch (const nlohmann::json::exception&) {
        }
        throw Error("remote " + route + ": HTTP " + std::to_string(res->status) + ": " + msg);
      } else {
        try {
          return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception&) {
          throw ContractError("response: body is not JSON");
        }
      }
      log_.push_back("attempt " + std::to_string(attempt + 1) + ": " + failure);
      log_warn("remote.attempt_failed", {{"route", route}, {"attempt", attempt + 1}, {"reason", failure}});
      if (attempt >= policy_.retries) {
        std::string all;
        for (const auto& l : log_) all += (all.empty() ? "" : "; ") + l;
        throw TransportError("remote " + url_ + route + ": giving up after " + std::to_string(attempt + 1) +
                             " attempts (" + all + ")");
      }
      std::this_thread::sleep_for(std::chrono::duration<double>(policy_.base_delay_s * std::ldexp(1.0, attempt)));
    }
  }

 private:
  std::string url_;
  RetryPolicy policy_;
  std::mutex mu_;
  int last_attempts_ = 0;
  std::vector<std::string> log_;
};

namespace detail {
// Encodes the request, posts it, decodes and always cleans up side-channel
// files from both directions.
template <typename Req, typename Decode>
auto remote_roundtrip(RemoteClient& client, proto::PayloadCodec& codec, const std::string& route, const Req& req,
                      Decode&& decode) {
  const nlohmann::json body = proto::encode(codec, req);
  nlohmann::json reply;
  try {
    reply = client.post(route, body);
  } catch (...) {
    codec.remove_files(body);
    throw;
  }
  codec.remove_files(body);
  try {
    auto out = decode(codec, reply);
    codec.remove_files(reply);
    return out;
  } catch (...) {
    codec.remove_files(reply);
    throw;
  }
}
}  // namespace detail

class RemoteDepth : public DepthEstimator {
 public:
  explicit RemoteDepth(std::string url, RetryPolicy policy = {}, DepthCapabilities caps = {true, true})
      : client_(std::move(url), policy), codec_(proto::PayloadCodec::from_environment("depth")), caps_(caps) {}
  DepthCapabilities capabilities() const override { return caps_; }
  DepthResult estimate(const DepthRequest& req) override {
    return detail::remote_roundtrip(client_, codec_, "/depth", req, proto::decode_depth_result);
  }
  RemoteClient& client() { return client_; }

 private:
  RemoteClient client_;
  proto::PayloadCodec codec_;
  DepthCapabilities caps_;
};

class RemoteCompleter : public SceneCompleter {
 public:
  explicit RemoteCompleter(std::string url, RetryPolicy policy = {})
      : client_(std::move(url), policy), codec_(proto::PayloadCodec::from_environment("complete")) {}
  CompletionResponse complete(const CompletionRequest& req) override {
    return detail::remote_roundtrip(client_, codec_, "/complete", req, proto::decode_completion_response);
  }
  RemoteClient& client() { return client_; }

 private:
  RemoteClient client_;
  proto::PayloadCodec codec_;
};

class RemoteSynthesizer : public ViewSynthesizer {
 public:
  explicit RemoteSynthesizer(std::string url, RetryPolicy policy = {})
      : client_(std::move(url), policy), codec_(proto::PayloadCodec::from_environment("synth")) {}
  SynthesisResponse synthesize(const SynthesisRequest& req) override {
    return detail::remote_roundtrip(client_, codec_, "/synthesize", req, proto::decode_synthesis_response);
  }
  RemoteClient& client() { return client_; }

 private:
  RemoteClient client_;
  proto::PayloadCodec codec_;
};

// ---------------------------------------------------------------------------
// Mock server: hosts local backends over the wire protocol. Requests are
// handled one at a time.

class MockServer {
 public:
  MockServer(DepthEstimator* depth, SceneCompleter* completer, ViewSynthesizer* synth)
      : depth_(depth), completer_(completer), synth_(synth), codec_(proto::PayloadCodec::from_environment("res")) {
    server_.Post("/depth", [this](const httplib::Request& rq, httplib::Response& rs) {
      handle(rq, rs, [this](const nlohmann::json& j) {
        if (!depth_) throw Error("no depth backend bound");
        return proto::encode(codec_, depth_->estimate(proto::decode_depth_request(codec_, j)));
      });
    });
    server_.Post("/complete", [this](const httplib::Request& rq, httplib::Response& rs) {
      handle(rq, rs, [this](const nlohmann::json& j) {
        if (!completer_) throw Error("no completion backend bound");
        return proto::encode(codec_, completer_->complete(proto::decode_completion_request(codec_, j)));
      });
    });
    server_.Post("/synthesize", [this](const httplib::Request& rq, httplib::Response& rs) {
      handle(rq, rs, [this](const nlohmann::json& j) {
        if (!synth_) throw Error("no synthesis backend bound");
        return proto::encode(codec_, synth_->synthesize(proto::decode_synthesis_request(codec_, j)));
      });
    });
    server_.Get("/health", [](const httplib::Request&, httplib::Response& rs) {
      rs.set_content(nlohmann::json({{"proto", proto::kVersion}}).dump(), "application/json");
    });
  }

  ~MockServer() { stop(); }
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  // The next `n` POSTs answer 503 (exercises client retries).
  void fail_next(int n) {
    std::lock_guard<std::mutex> lock(mu_);
    fail_next_ = n;
  }
  int requests_seen() const { return requests_; }

  // Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error("serve-mock: cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  // Serves on the calling thread until stop() is called from elsewhere.
  void run(const std::string& host, int port) {
    port_ = port;
    if (!server_.listen(host, port)) throw Error("serve-mock: cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  template <typename Fn>
  void handle(const httplib::Request& rq, httplib::Response& rs, Fn&& fn) {
    std::lock_guard<std::mutex> lock(mu_);
    ++requests_;
    if (fail_next_ > 0) {
      --fail_next_;
      rs.status = 503;
      rs.set_content(R"({"error":"injected failure"})", "application/json");
      return;
    }
    try {
      const auto body = nlohmann::json::parse(rq.body);
      rs.set_content(fn(body).dump(), "application/json");
    } catch (const nlohmann::json::exception& e) {
      rs.status = 400;
      rs.set_content(nlohmann::json({{"error", std::string("request is not valid JSON: ") + e.what()}}).dump(),
                     "application/json");
    } catch (const ContractError& e) {
      rs.status = 400;
      rs.set_content(nlohmann::json({{"error", e.what()}}).dump(), "application/json");
    } catch (const std::exception& e) {
      rs.status = 500;
      rs.set_content(nlohmann::json({{"error", e.what()}}).dump(), "application/json");
    }
  }

  DepthEstimator* depth_;
  SceneCompleter* completer_;
  ViewSynthesizer* synth_;
  proto::PayloadCodec codec_;
  httplib::Server server_;
  std::thread thread_;
  std::mutex mu_;
  int fail_next_ = 0;
  int requests_ = 0;
  int port_ = -1;
};

// ---------------------------------------------------------------------------
// Record / replay. Recording wrappers pass every response through the wire
// encoding (inline payloads) and keep the JSON; replay backends answer from
// such a tape in call order without any knowledge of the scene.

struct Tape {
  std::vector<nlohmann::json> depth, complete, synthesize;

  nlohmann::json to_json() const { return {{"depth", depth}, {"complete", complete}, {"synthesize", synthesize}}; }
  static Tape from_json(const nlohmann::json& j) {
    Tape t;
    t.depth = j.at("depth").get<std::vector<nlohmann::json>>();
    t.complete = j.at("complete").get<std::vector<nlohmann::json>>();
    t.synthesize = j.at("synthesize").get<std::vector<nlohmann::json>>();
    return t;
  }
};

class RecordingDepth : public DepthEstimator {
 public:
  RecordingDepth(DepthEstimator& inner, Tape& tape) : inner_(inner), tape_(tape) {}
  DepthCapabilities capabilities() const override { return inner_.capabilities(); }
  DepthResult estimate(const DepthRequest& req) override {
    tape_.depth.push_back(proto::encode(codec_, inner_.estimate(req)));
    return proto::decode_depth_result(codec_, tape_.depth.back());
  }

 private:
  DepthEstimator& inner_;
  Tape& tape_;
  proto::PayloadCodec codec_;
};

class RecordingCompleter : public SceneCompleter {
 public:
  RecordingCompleter(SceneCompleter& inner, Tape& tape) : inner_(inner), tape_(tape) {}
  CompletionResponse complete(const CompletionRequest& req) override {
    tape_.complete.push_back(proto::encode(codec_, inner_.complete(req)));
    return proto::decode_completion_response(codec_, tape_.complete.back());
  }

 private:
  SceneCompleter& inner_;
  Tape& tape_;
  proto::PayloadCodec codec_;
};

class RecordingSynthesizer : public ViewSynthesizer {
 public:
  RecordingSynthesizer(ViewSynthesizer& inner, Tape& tape) : inner_(inner), tape_(tape) {}
  SynthesisResponse synthesize(const SynthesisRequest& req) override {
    tape_.synthesize.push_back(proto::encode(codec_, inner_.synthesize(req)));
    return proto::decode_synthesis_response(codec_, tape_.synthesize.back());
  }

 private:
  ViewSynthesizer& inner_;
  Tape& tape_;
  proto::PayloadCodec codec_;
};

namespace detail {
inline const nlohmann::json& next_on_tape(const std::vector<nlohmann::json>& v, std::size_t& i, const char* what) {
  if (i >= v.size()) throw Error(std::string("replay: tape has no more ") + what + " responses");
  return v[i++];
}
}  // namespace detail

class ReplayDepth : public DepthEstimator {
 public:
  explicit ReplayDepth(const Tape& tape, DepthCapabilities caps = {true, true}) : tape_(tape), caps_(caps) {}
  DepthCapabilities capabilities() const override { return caps_; }
  DepthResult estimate(const DepthRequest&) override {
    return proto::decode_depth_result(codec_, detail::next_on_tape(tape_.depth, i_, "depth"));
  }

 private:
  const Tape& tape_;
  DepthCapabilities caps_;
  proto::PayloadCodec codec_;
  std::size_t i_ = 0;
};

class ReplayCompleter : public SceneCompleter {
 public:
  explicit ReplayCompleter(const Tape& tape) : tape_(tape) {}
  CompletionResponse complete(const CompletionRequest&) override {
    return proto::decode_completion_response(codec_, detail::next_on_tape(tape_.complete, i_, "completion"));
  }

 private:
  const Tape& tape_;
  proto::PayloadCodec codec_;
  std::size_t i_ = 0;
};

class ReplaySynthesizer : public ViewSynthesizer {
 public:
  explicit ReplaySynthesizer(const Tape& tape) : tape_(tape) {}
  SynthesisResponse synthesize(const SynthesisRequest&) override {
    return proto::decode_synthesis_response(codec_, detail::next_on_tape(tape_.synthesize, i_, "synthesis"));
  }

 private:
  const Tape& tape_;
  proto::PayloadCodec codec_;
  std::size_t i_ = 0;
};

}  // namespace evoscene
