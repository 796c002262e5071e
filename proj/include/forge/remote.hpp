#pragma once

// HTTP/JSON clients for remote backends.
//
// Retries use capped exponential backoff on transport failures and 5xx
// replies. A 4xx reply is a protocol rejection and is never retried. Budget
// accounting happens above this layer (see meter()), so a retried request is
// still one logical query.

#include <chrono>
#include <cstdlib>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "forge/backend.hpp"
#include "forge/core.hpp"
#include "forge/wire.hpp"
#include "httplib.h"
#include "json.hpp"

namespace forge::remote {

using nlohmann::json;

inline constexpr const char* kAuthTokenEnv = "FORGE_AUTH_TOKEN";

struct BackendEndpoint {
  std::string base_url;
  int timeout_ms = 30000;
  int max_retries = 2;
  std::optional<std::string> auth_token;
  int backoff_initial_ms = 100;
  int backoff_cap_ms = 2000;

  void validate() const {
    if (base_url.empty()) throw ConfigError("endpoint base_url is empty");
    if (timeout_ms <= 0) throw ConfigError("endpoint timeout must be > 0");
    if (max_retries < 0) throw ConfigError("endpoint max_retries must be >= 0");
    if (backoff_initial_ms < 0 || backoff_cap_ms < 0)
      throw ConfigError("endpoint backoff values must be >= 0");
  }
};

/// The six roles, in the order they are checked and reported.
inline constexpr std::array<std::string_view, 6> kRoles = {
    "embedder", "generator", "scorer", "captioner", "mutator", "judge"};

/// Endpoint per role. A "default" entry in the config file fills roles that
/// are not listed explicitly.
struct Endpoints {
  std::map<std::string, BackendEndpoint> by_role;

  const BackendEndpoint& at(std::string_view role) const {
    auto it = by_role.find(std::string(role));
    if (it == by_role.end()) throw ConfigError("no endpoint for role '" + std::string(role) + "'");
    return it->second;
  }
};

inline BackendEndpoint decode_endpoint(const json& j) {
  static const std::vector<std::string> kKnown = {
      "base_url", "timeout_ms", "max_retries", "auth_token", "backoff_initial_ms", "backoff_cap_ms"};
  if (!j.is_object()) throw ConfigError("endpoint must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::find(kKnown.begin(), kKnown.end(), k) == kKnown.end())
      throw ConfigError("unknown endpoint field '" + k + "'");
  }
  BackendEndpoint e;
  try {
    e.base_url = j.at("base_url").get<std::string>();
    e.timeout_ms = j.value("timeout_ms", e.timeout_ms);
    e.max_retries = j.value("max_retries", e.max_retries);
    if (j.contains("auth_token") && !j["auth_token"].is_null())
      e.auth_token = j["auth_token"].get<std::string>();
    e.backoff_initial_ms = j.value("backoff_initial_ms", e.backoff_initial_ms);
    e.backoff_cap_ms = j.value("backoff_cap_ms", e.backoff_cap_ms);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("endpoint: ") + ex.what());
  }
  if (const char* tok = std::getenv(kAuthTokenEnv); tok && *tok) e.auth_token = tok;
  e.validate();
  return e;
}

/// Auth tokens are never written out.
inline json encode_endpoint(const BackendEndpoint& e) {
  return json{{"base_url", e.base_url},
              {"timeout_ms", e.timeout_ms},
              {"max_retries", e.max_retries},
              {"backoff_initial_ms", e.backoff_initial_ms},
              {"backoff_cap_ms", e.backoff_cap_ms}};
}

inline Endpoints decode_endpoints(const json& j) {
  if (!j.is_object()) throw ConfigError("endpoints must be an object");
  Endpoints out;
  std::optional<BackendEndpoint> fallback;
  for (const auto& [k, v] : j.items()) {
    if (k == "default") {
      fallback = decode_endpoint(v);
      continue;
    }
    if (std::find(kRoles.begin(), kRoles.end(), k) == kRoles.end())
      throw ConfigError("unknown endpoint role '" + k + "'");
    out.by_role[k] = decode_endpoint(v);
  }
  for (auto role : kRoles) {
    if (!out.by_role.count(std::string(role))) {
      if (!fallback) throw ConfigError("no endpoint for role '" + std::string(role) + "'");
      out.by_role[std::string(role)] = *fallback;
    }
  }
  return out;
}

inline json encode_endpoints(const Endpoints& e) {
  json j = json::object();
  for (const auto& [role, ep] : e.by_role) j[role] = encode_endpoint(ep);
  return j;
}

// ---------------------------------------------------------------------------

/// One endpoint. Creates a fresh connection per attempt so it can be shared
/// across threads.
class HttpClient {
 public:
  explicit HttpClient(BackendEndpoint ep) : ep_(std::move(ep)) {
    ep_.validate();
    // Split "scheme://host:port/prefix" into the origin and the path prefix.
    const auto scheme_end = ep_.base_url.find("://");
    const auto path_start =
        ep_.base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    origin_ = ep_.base_url.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = ep_.base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  const BackendEndpoint& endpoint() const noexcept { return ep_; }

  json post(const std::string& path, const json& body) const {
    return call(path, &body);
  }

  json get(const std::string& path) const { return call(path, nullptr); }

 private:
  json call(const std::string& path, const json* body) const {
    const std::string full = prefix_ + path;
    std::string last_error;
    for (int attempt = 0; attempt <= ep_.max_retries; ++attempt) {
      if (attempt > 0) {
        long long delay = static_cast<long long>(ep_.backoff_initial_ms) << (attempt - 1);
        delay = std::min<long long>(delay, ep_.backoff_cap_ms);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
      httplib::Client cli(origin_);
      const auto secs = ep_.timeout_ms / 1000;
      const auto usecs = (ep_.timeout_ms % 1000) * 1000;
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      httplib::Headers headers;
      if (ep_.auth_token) headers.emplace("Authorization", "Bearer " + *ep_.auth_token);

      auto res = body ? cli.Post(full, headers, body->dump(), "application/json")
                      : cli.Get(full, headers);
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status >= 400)
        throw ProtocolError(ep_.base_url + full + " rejected the request: HTTP " +
                            std::to_string(res->status) + " " + res->body);
      if (res->status < 200 || res->status >= 300)
        throw ProtocolError(ep_.base_url + full + ": unexpected HTTP " + std::to_string(res->status));
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw ProtocolError(ep_.base_url + full + ": malformed JSON reply: " + e.what());
      }
    }
    throw TransportError(ep_.base_url + full + " failed after " +
                         std::to_string(ep_.max_retries + 1) + " attempt(s): " + last_error);
  }

  BackendEndpoint ep_;
  std::string origin_;
  std::string prefix_;
};

// ---------------------------------------------------------------------------
// Role clients

class RemoteEmbedder final : public TextEmbedder {
 public:
  explicit RemoteEmbedder(BackendEndpoint ep) : http_(std::move(ep)) {}
  EmbeddingVector embed(const std::string& text, Space space) override {
    const json reply =
        http_.post("/v1/embed", {{"text", text}, {"space", std::string(space_name(space))}});
    const json& vec = reply.contains("vector") ? reply["vector"] : json();
    wire::detail::require_number_array(vec, "embed reply vector");
    const auto dim = wire::detail::field<std::size_t>(reply, "dim", "embed reply");
    EmbeddingVector out{vec.get<std::vector<double>>(), space};
    if (out.dim() != dim)
      throw ProtocolError("embed reply: vector length " + std::to_string(out.dim()) +
                          " does not match dim " + std::to_string(dim));
    return out;
  }

 private:
  HttpClient http_;
};

class RemoteGenerator final : public VideoGenerator {
 public:
  explicit RemoteGenerator(BackendEndpoint ep) : http_(std::move(ep)) {}
  GenerationResult generate(const std::string& prompt, std::uint64_t seed) override {
    return wire::decode_generation(http_.post("/v1/generate", {{"prompt", prompt}, {"seed", seed}}));
  }

 private:
  HttpClient http_;
};

class RemoteScorer final : public FrameScorer {
 public:
  explicit RemoteScorer(BackendEndpoint ep) : http_(std::move(ep)) {}
  double score_frame(const FrameDescriptor& frame, const std::string& text) override {
    const json reply = http_.post("/v1/score_frame", {{"frame", wire::encode(frame)}, {"text", text}});
    const auto s = wire::detail::field<double>(reply, "score", "score_frame reply");
    if (s < -1.0 || s > 1.0) throw ProtocolError("score_frame reply: score outside [-1, 1]");
    return s;
  }

 private:
  HttpClient http_;
};

class RemoteCaptioner final : public Captioner {
 public:
  explicit RemoteCaptioner(BackendEndpoint ep) : http_(std::move(ep)) {}
  std::string caption(std::span<const FrameDescriptor> frames) override {
    const json reply = http_.post("/v1/caption", {{"frames", wire::encode(frames)}});
    auto c = wire::detail::field<std::string>(reply, "caption", "caption reply");
    if (c.empty()) throw ProtocolError("caption reply: empty caption");
    return c;
  }

 private:
  HttpClient http_;
};

class RemoteMutator final : public MutationAgent {
 public:
  explicit RemoteMutator(BackendEndpoint ep) : http_(std::move(ep)) {}
  std::vector<std::string> propose_variants(const std::string& prompt, std::size_t count,
                                            std::uint64_t seed) override {
    const json reply =
        http_.post("/v1/mutate", {{"prompt", prompt}, {"count", count}, {"seed", seed}});
    auto v = wire::detail::field<std::vector<std::string>>(reply, "variants", "mutate reply");
    if (v.size() != count)
      throw ProtocolError("mutate reply: expected " + std::to_string(count) + " variants, got " +
                          std::to_string(v.size()));
    return v;
  }

 private:
  HttpClient http_;
};

class RemoteJudge final : public Judge {
 public:
  explicit RemoteJudge(BackendEndpoint ep) : http_(std::move(ep)) {}
  Verdict judge(const std::string& prompt, std::span<const FrameDescriptor> frames) override {
    const json reply = http_.post("/v1/judge", {{"prompt", prompt}, {"frames", wire::encode(frames)}});
    Verdict v;
    v.unsafe = wire::detail::field<bool>(reply, "unsafe", "judge reply");
    v.score = wire::detail::field<double>(reply, "score", "judge reply");
    if (v.score < 0.0 || v.score > 1.0) throw ProtocolError("judge reply: score outside [0, 1]");
    return v;
  }

 private:
  HttpClient http_;
};

// ---------------------------------------------------------------------------
// Health

struct HealthEntry {
  std::string role;
  std::string base_url;
  bool ok = false;
  std::string backend;
  std::optional<std::size_t> dim;
  std::string error;
};

struct HealthReport {
  bool healthy = true;
  std::vector<HealthEntry> entries;
  std::vector<std::string> problems;
};

/// GET /v1/health on every role's endpoint, then checks that the embedder and
/// frame scorer agree on the embedding dimension.
inline HealthReport check_health(const Endpoints& endpoints) {
  HealthReport report;
  for (auto role : kRoles) {
    HealthEntry e;
    e.role = std::string(role);
    e.base_url = endpoints.at(role).base_url;
    try {
      const json reply = HttpClient(endpoints.at(role)).get("/v1/health");
      const auto status = wire::detail::field<std::string>(reply, "status", "health reply");
      e.backend = reply.value("backend", std::string());
      if (reply.contains("dim") && reply["dim"].is_number_unsigned())
        e.dim = reply["dim"].get<std::size_t>();
      e.ok = status == "ok";
      if (!e.ok) e.error = "status '" + status + "'";
    } catch (const Error& ex) {
      e.error = ex.what();
    }
    if (!e.ok) {
      report.healthy = false;
      report.problems.push_back(e.role + " (" + e.base_url + "): " + e.error);
    }
    report.entries.push_back(std::move(e));
  }
  const auto& emb = report.entries[0];
  const auto& sc = report.entries[2];
  if (emb.ok && sc.ok) {
    if (!emb.dim || !sc.dim) {
      report.healthy = false;
      report.problems.push_back("embedder and scorer must both report dim");
    } else if (*emb.dim != *sc.dim) {
      report.healthy = false;
      report.problems.push_back("dimension mismatch: embedder reports " + std::to_string(*emb.dim) +
                                ", scorer reports " + std::to_string(*sc.dim));
    }
  }
  return report;
}

/// Builds the bundle; `dim` comes from the embedder's health reply.
inline Backends make_backends(const Endpoints& endpoints, std::size_t dim) {
  Backends b;
  b.embedder = std::make_shared<RemoteEmbedder>(endpoints.at("embedder"));
  b.generator = std::make_shared<RemoteGenerator>(endpoints.at("generator"));
  b.scorer = std::make_shared<RemoteScorer>(endpoints.at("scorer"));
  b.captioner = std::make_shared<RemoteCaptioner>(endpoints.at("captioner"));
  b.mutator = std::make_shared<RemoteMutator>(endpoints.at("mutator"));
  b.judge = std::make_shared<RemoteJudge>(endpoints.at("judge"));
  b.dim = dim;
  return b;
}

}  // namespace forge::remote
