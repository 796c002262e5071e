#pragma once

// The six backend roles the harness talks to. Each has an in-process
// simulation (simbench.hpp) and an HTTP client (remote.hpp).

#include <atomic>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/core.hpp"

namespace forge {

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual EmbeddingVector embed(const std::string& text, Space space) = 0;
};

/// Generator with its safety filters folded in: one black-box call.
class VideoGenerator {
 public:
  virtual ~VideoGenerator() = default;
  virtual GenerationResult generate(const std::string& prompt, std::uint64_t seed) = 0;
};

class FrameScorer {
 public:
  virtual ~FrameScorer() = default;
  /// Cross-modal similarity of a frame and a text, in [-1, 1].
  virtual double score_frame(const FrameDescriptor& frame, const std::string& text) = 0;
};

class Captioner {
 public:
  virtual ~Captioner() = default;
  virtual std::string caption(std::span<const FrameDescriptor> frames) = 0;
};

class MutationAgent {
 public:
  virtual ~MutationAgent() = default;
  /// Exactly `count` rewrites of `prompt`.
  virtual std::vector<std::string> propose_variants(const std::string& prompt,
                                                    std::size_t count,
                                                    std::uint64_t seed) = 0;
};

struct Verdict {
  bool unsafe = false;
  double score = 0.0;
};

class Judge {
 public:
  virtual ~Judge() = default;
  virtual Verdict judge(const std::string& prompt, std::span<const FrameDescriptor> frames) = 0;
};

inline constexpr std::string_view kBlackScreenCaption = "a black screen";

struct Backends {
  std::shared_ptr<TextEmbedder> embedder;
  std::shared_ptr<VideoGenerator> generator;
  std::shared_ptr<FrameScorer> scorer;
  std::shared_ptr<Captioner> captioner;
  std::shared_ptr<MutationAgent> mutator;
  std::shared_ptr<Judge> judge;
  /// Embedding dimension, used to build black frames for blocked videos.
  std::size_t dim = 0;

  void require_complete() const {
    if (!embedder || !generator || !scorer || !captioner || !mutator || !judge)
      throw UsageError("backend bundle is missing a role");
  }
};

// ---------------------------------------------------------------------------
// Query accounting

/// Counter with an optional hard limit. acquire() reserves one query with a
/// compare-and-increment and fails before dispatch when the limit is reached.
class QueryBudget {
 public:
  explicit QueryBudget(std::optional<std::uint64_t> limit = std::nullopt) : limit_(limit) {}

  void acquire() {
    std::uint64_t cur = spent_.load(std::memory_order_relaxed);
    for (;;) {
      if (limit_ && cur >= *limit_)
        throw BudgetExceeded("query budget of " + std::to_string(*limit_) + " exhausted");
      if (spent_.compare_exchange_weak(cur, cur + 1, std::memory_order_acq_rel)) return;
    }
  }

  std::uint64_t spent() const noexcept { return spent_.load(std::memory_order_acquire); }
  std::optional<std::uint64_t> limit() const noexcept { return limit_; }

 private:
  std::optional<std::uint64_t> limit_;
  std::atomic<std::uint64_t> spent_{0};
};

namespace detail {

class MeteredEmbedder final : public TextEmbedder {
 public:
  MeteredEmbedder(std::shared_ptr<TextEmbedder> inner, std::shared_ptr<QueryBudget> b)
      : inner_(std::move(inner)), budget_(std::move(b)) {}
  EmbeddingVector embed(const std::string& text, Space space) override {
    budget_->acquire();
    return inner_->embed(text, space);
  }

 private:
  std::shared_ptr<TextEmbedder> inner_;
  std::shared_ptr<QueryBudget> budget_;
};

class MeteredGenerator final : public VideoGenerator {
 public:
  MeteredGenerator(std::shared_ptr<VideoGenerator> inner, std::shared_ptr<QueryBudget> b)
      : inner_(std::move(inner)), budget_(std::move(b)) {}
  GenerationResult generate(const std::string& prompt, std::uint64_t seed) override {
    budget_->acquire();
    return inner_->generate(prompt, seed);
  }

 private:
  std::shared_ptr<VideoGenerator> inner_;
  std::shared_ptr<QueryBudget> budget_;
};

class MeteredScorer final : public FrameScorer {
 public:
  MeteredScorer(std::shared_ptr<FrameScorer> inner, std::shared_ptr<QueryBudget> b)
      : inner_(std::move(inner)), budget_(std::move(b)) {}
  double score_frame(const FrameDescriptor& frame, const std::string& text) override {
    budget_->acquire();
    return inner_->score_frame(frame, text);
  }

 private:
  std::shared_ptr<FrameScorer> inner_;
  std::shared_ptr<QueryBudget> budget_;
};

class MeteredCaptioner final : public Captioner {
 public:
  MeteredCaptioner(std::shared_ptr<Captioner> inner, std::shared_ptr<QueryBudget> b)
      : inner_(std::move(inner)), budget_(std::move(b)) {}
  std::string caption(std::span<const FrameDescriptor> frames) override {
    budget_->acquire();
    return inner_->caption(frames);
  }

 private:
  std::shared_ptr<Captioner> inner_;
  std::shared_ptr<QueryBudget> budget_;
};

class MeteredMutator final : public MutationAgent {
 public:
  MeteredMutator(std::shared_ptr<MutationAgent> inner, std::shared_ptr<QueryBudget> b)
      : inner_(std::move(inner)), budget_(std::move(b)) {}
  std::vector<std::string> propose_variants(const std::string& prompt, std::size_t count,
                                            std::uint64_t seed) override {
    budget_->acquire();
    return inner_->propose_variants(prompt, count, seed);
  }

 private:
  std::shared_ptr<MutationAgent> inner_;
  std::shared_ptr<QueryBudget> budget_;
};

class MeteredJudge final : public Judge {
 public:
  MeteredJudge(std::shared_ptr<Judge> inner, std::shared_ptr<QueryBudget> b)
      : inner_(std::move(inner)), budget_(std::move(b)) {}
  Verdict judge(const std::string& prompt, std::span<const FrameDescriptor> frames) override {
    budget_->acquire();
    return inner_->judge(prompt, frames);
  }

 private:
  std::shared_ptr<Judge> inner_;
  std::shared_ptr<QueryBudget> budget_;
};

}  // namespace detail

/// Wraps the bundle so that every logical call charges `budget` once before
/// dispatch. Generator calls are always charged; the other roles only when
/// `scope` is all_calls.
inline Backends meter(const Backends& in, std::shared_ptr<QueryBudget> budget,
                      BudgetScope scope) {
  Backends out = in;
  out.generator = std::make_shared<detail::MeteredGenerator>(in.generator, budget);
  if (scope == BudgetScope::all_calls) {
    out.embedder = std::make_shared<detail::MeteredEmbedder>(in.embedder, budget);
    out.scorer = std::make_shared<detail::MeteredScorer>(in.scorer, budget);
    out.captioner = std::make_shared<detail::MeteredCaptioner>(in.captioner, budget);
    out.mutator = std::make_shared<detail::MeteredMutator>(in.mutator, budget);
    out.judge = std::make_shared<detail::MeteredJudge>(in.judge, budget);
  }
  return out;
}

}  // namespace forge
