#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fire/errors.hpp"
#include "fire/logit_pipeline.hpp"

namespace fire {

// Anything that maps a token context to next-token logits.
// Implementations must be deterministic and safe to share read-only across threads.
class ModelSource {
 public:
  virtual ~ModelSource() = default;

  virtual LogitVector next_logits(std::span<const TokenId> context) const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::string token_text(TokenId id) const = 0;
  virtual TokenId end_token() const = 0;
  virtual std::vector<TokenId> tokenize(std::string_view text) const = 0;

  // Inserted between rendered tokens.
  virtual std::string separator() const { return " "; }

  std::string render(std::span<const TokenId> tokens) const {
    std::string out;
    const std::string sep = separator();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i > 0) out += sep;
      out += token_text(tokens[i]);
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) out.push_back(word);
  return out;
}

}  // namespace detail

// Explicit context -> logits table. Lookup uses the longest entry key that is a
// suffix of the context (an empty key matches every context); contexts with no
// matching key get the fallback vector.
class TableModel : public ModelSource {
 public:
  TableModel(std::vector<std::string> vocab, TokenId end_token, LogitVector fallback,
             std::string separator = " ")
      : vocab_(std::move(vocab)),
        end_(end_token),
        fallback_(std::move(fallback)),
        separator_(std::move(separator)) {
    if (vocab_.empty()) throw ConfigError("table model needs a non-empty vocabulary");
    if (end_ >= vocab_.size()) throw ConfigError("table model end token out of range");
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
      if (!index_.emplace(vocab_[i], static_cast<TokenId>(i)).second)
        throw ConfigError("duplicate vocabulary entry '" + vocab_[i] + "'");
    }
    check_width(fallback_);
  }

  void set(std::vector<TokenId> context, LogitVector logits) {
    check_width(logits);
    for (TokenId t : context)
      if (t >= vocab_.size()) throw ConfigError("table key token out of range");
    max_key_ = std::max(max_key_, context.size());
    entries_.insert_or_assign(std::move(context), std::move(logits));
  }

  LogitVector next_logits(std::span<const TokenId> context) const override {
    const std::size_t longest = std::min(context.size(), max_key_);
    for (std::size_t len = longest + 1; len-- > 0;) {
      std::vector<TokenId> key(context.end() - static_cast<std::ptrdiff_t>(len), context.end());
      if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    return fallback_;
  }

  std::size_t vocab_size() const override { return vocab_.size(); }
  std::string token_text(TokenId id) const override { return vocab_.at(id); }
  TokenId end_token() const override { return end_; }
  std::string separator() const override { return separator_; }

  // Whitespace-separated vocabulary strings; unknown words are a SourceError.
  std::vector<TokenId> tokenize(std::string_view text) const override {
    std::vector<TokenId> out;
    for (const auto& word : detail::split_whitespace(text)) out.push_back(id_of(word));
    return out;
  }

  TokenId id_of(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) throw SourceError("token '" + word + "' is not in the table vocabulary");
    return it->second;
  }

  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  const LogitVector& fallback() const noexcept { return fallback_; }
  const std::map<std::vector<TokenId>, LogitVector>& entries() const noexcept { return entries_; }

 private:
  void check_width(const LogitVector& logits) const {
    if (logits.size() != vocab_.size())
      throw ConfigError("table logits have " + std::to_string(logits.size()) +
                        " entries, vocabulary has " + std::to_string(vocab_.size()));
  }

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId end_;
  LogitVector fallback_;
  std::string separator_;
  std::map<std::vector<TokenId>, LogitVector> entries_;
  std::size_t max_key_ = 0;
};

enum class TokenizerMode { whitespace, character };

struct NGramOptions {
  int order = 3;
  double alpha = 0.01;
  TokenizerMode tokenizer = TokenizerMode::whitespace;
};

// Additively smoothed n-gram model trained on a line-oriented corpus. Each
// non-empty line is one sequence, left-padded with <s> and closed with </s>.
// <s> and <unk> only ever appear in contexts; they are masked as outputs.
class NGramModel : public ModelSource {
 public:
  static constexpr TokenId kEnd = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kUnk = 2;

  static NGramModel train(std::string_view corpus, NGramOptions options = {}) {
    return NGramModel(corpus, options);
  }

  LogitVector next_logits(std::span<const TokenId> context) const override {
    const auto history = history_of(context);
    const Counts* counts = nullptr;
    if (auto it = table_.find(history); it != table_.end()) counts = &it->second;

    const double outputs = static_cast<double>(vocab_.size() - 2);
    const double total = (counts ? static_cast<double>(counts->total) : 0.0) + alpha_ * outputs;
    std::vector<double> scores(vocab_.size(), 0.0);
    std::vector<std::uint8_t> kept(vocab_.size(), 1);
    kept[kBos] = 0;
    kept[kUnk] = 0;
    for (std::size_t w = 0; w < vocab_.size(); ++w) {
      if (!kept[w]) continue;
      double c = 0.0;
      if (counts) {
        if (auto f = counts->next.find(static_cast<TokenId>(w)); f != counts->next.end())
          c = static_cast<double>(f->second);
      }
      scores[w] = std::log((c + alpha_) / total);
    }
    return LogitVector(std::move(scores), std::move(kept));
  }

  std::size_t vocab_size() const override { return vocab_.size(); }
  std::string token_text(TokenId id) const override { return vocab_.at(id); }
  TokenId end_token() const override { return kEnd; }
  std::string separator() const override {
    return mode_ == TokenizerMode::whitespace ? " " : "";
  }

  // Unknown words map to <unk>.
  std::vector<TokenId> tokenize(std::string_view text) const override {
    std::vector<TokenId> out;
    for (const auto& piece : pieces(text)) {
      auto it = index_.find(piece);
      out.push_back(it == index_.end() ? kUnk : it->second);
    }
    return out;
  }

  int order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  // Output vocabulary learned from the corpus (excludes </s>, <s>, <unk>).
  std::vector<std::string> corpus_vocabulary() const { return {vocab_.begin() + 3, vocab_.end()}; }

 private:
  struct Counts {
    std::unordered_map<TokenId, std::size_t> next;
    std::size_t total = 0;
  };

  NGramModel(std::string_view corpus, NGramOptions options)
      : order_(options.order), alpha_(options.alpha), mode_(options.tokenizer) {
    if (order_ < 2 || order_ > 5) throw ConfigError("n-gram order must be in [2, 5]");
    if (!(alpha_ > 0.0) || !std::isfinite(alpha_))
      throw ConfigError("n-gram smoothing alpha must be positive");
    vocab_ = {"</s>", "<s>", "<unk>"};
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], static_cast<TokenId>(i));

    std::istringstream lines{std::string(corpus)};
    std::string line;
    while (std::getline(lines, line)) {
      std::vector<TokenId> seq;
      for (const auto& piece : pieces(line)) seq.push_back(intern(piece));
      if (seq.empty()) continue;
      seq.push_back(kEnd);
      std::vector<TokenId> ctx;
      for (TokenId t : seq) {
        Counts& c = table_[history_of(ctx)];
        ++c.next[t];
        ++c.total;
        ctx.push_back(t);
      }
    }
    if (vocab_.size() == 3) throw ConfigError("n-gram corpus contains no tokens");
  }

  TokenId intern(const std::string& piece) {
    auto [it, inserted] = index_.emplace(piece, static_cast<TokenId>(vocab_.size()));
    if (inserted) vocab_.push_back(piece);
    return it->second;
  }

  std::vector<std::string> pieces(std::string_view text) const {
    if (mode_ == TokenizerMode::whitespace) return detail::split_whitespace(text);
    std::vector<std::string> out;
    for (char ch : text)
      if (ch != '\n' && ch != '\r') out.emplace_back(1, ch);
    return out;
  }

  std::vector<TokenId> history_of(std::span<const TokenId> context) const {
    const std::size_t width = static_cast<std::size_t>(order_ - 1);
    std::vector<TokenId> h(width, kBos);
    const std::size_t take = std::min(width, context.size());
    std::copy(context.end() - static_cast<std::ptrdiff_t>(take), context.end(),
              h.end() - static_cast<std::ptrdiff_t>(take));
    return h;
  }

  int order_;
  double alpha_;
  TokenizerMode mode_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
  std::map<std::vector<TokenId>, Counts> table_;
};

}  // namespace fire
