#pragma once

// In-process HTTP backend speaking the /v1 protocol, answering from a
// SimPipeline. Knobs inject failures for the client tests.

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include "forge/simbench.hpp"
#include "forge/wire.hpp"
#include "httplib.h"

namespace forge::test {

class FakeBackendServer {
 public:
  explicit FakeBackendServer(sim::SimConfig cfg) : sim_(std::move(cfg)) {
    using nlohmann::json;
    auto handle = [this](const std::string& path, auto fn) {
      server_.Post(path, [this, path, fn](const httplib::Request& req, httplib::Response& res) {
        if (!admit(path, req, res)) return;
        const json body = json::parse(req.body);
        res.set_content(fn(body).dump(), "application/json");
      });
    };
    handle("/v1/embed", [this](const json& b) {
      const auto v = sim_.embed(b.at("text"), parse_space(b.at("space").get<std::string>()));
      return json{{"vector", v.values}, {"dim", v.dim()}};
    });
    handle("/v1/generate", [this](const json& b) {
      return wire::encode(sim_.generate(b.at("prompt"), b.at("seed")));
    });
    handle("/v1/score_frame", [this](const json& b) {
      return json{{"score", sim_.score_frame(wire::decode_frame(b.at("frame")), b.at("text"))}};
    });
    handle("/v1/caption", [this](const json& b) {
      return json{{"caption", sim_.caption(wire::decode_frames(b.at("frames")))}};
    });
    handle("/v1/mutate", [this](const json& b) {
      auto v = sim_.propose_variants(b.at("prompt"), b.at("count"), b.at("seed"));
      if (short_mutate && !v.empty()) v.pop_back();
      return json{{"variants", v}};
    });
    handle("/v1/judge", [this](const json& b) {
      const auto v = sim_.judge(b.at("prompt"), wire::decode_frames(b.at("frames")));
      return json{{"unsafe", v.unsafe}, {"score", v.score}};
    });
    server_.Get("/v1/health", [this](const httplib::Request& req, httplib::Response& res) {
      if (!admit("/v1/health", req, res)) return;
      res.set_content(json{{"status", "ok"}, {"backend", "fake"}, {"dim", health_dim.load()}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeBackendServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  int hits(const std::string& path) {
    std::lock_guard lock(mu_);
    return hits_[path];
  }

  // Knobs.
  std::atomic<int> fail_5xx{0};        // next N requests answer 503
  std::atomic<int> status_override{0};  // nonzero: every request answers this
  std::atomic<bool> short_mutate{false};
  std::atomic<std::size_t> health_dim{64};
  std::string required_token;  // set before use; checked as "Bearer <token>"

 private:
  bool admit(const std::string& path, const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lock(mu_);
      ++hits_[path];
    }
    if (!required_token.empty() &&
        req.get_header_value("Authorization") != "Bearer " + required_token) {
      res.status = 401;
      res.set_content("{\"error\":\"unauthorized\"}", "application/json");
      return false;
    }
    if (status_override) {
      res.status = status_override;
      res.set_content("{\"error\":\"injected\"}", "application/json");
      return false;
    }
    if (fail_5xx > 0) {
      --fail_5xx;
      res.status = 503;
      return false;
    }
    return true;
  }

  sim::SimPipeline sim_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::map<std::string, int> hits_;
};

}  // namespace forge::test
