#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "charlink/text.hpp"

namespace charlink {

using Ngram = std::u32string;
using NgramId = std::uint32_t;

/// Sorted, duplicate-free set of n-gram window sizes (all >= 1).
class WindowSet {
 public:
  WindowSet() = default;
  /// Throws std::invalid_argument if empty or any size is < 1.
  explicit WindowSet(std::vector<int> sizes);
  /// Parses "2,3,4,5".
  static WindowSet parse(std::string_view text);
  static WindowSet defaults() { return WindowSet({2, 3, 4, 5}); }

  std::span<const int> sizes() const noexcept { return sizes_; }
  int max() const noexcept { return sizes_.back(); }
  bool contains(int n) const;
  std::string to_string() const;

  friend bool operator==(const WindowSet&, const WindowSet&) = default;

 private:
  std::vector<int> sizes_;
};

/// Multiset of n-grams. Ordered so iteration is deterministic.
using NgramBag = std::map<Ngram, std::uint32_t>;

/// Wraps `text` in one start and one end symbol and visits every contiguous
/// window of each configured size, ending position first, window size second.
template <typename Fn>
void for_each_ngram(std::u32string_view text, const WindowSet& windows, Fn&& fn) {
  std::u32string wrapped;
  wrapped.reserve(text.size() + 2);
  wrapped.push_back(kStartSymbol);
  wrapped.append(text);
  wrapped.push_back(kEndSymbol);
  const std::u32string_view view(wrapped);
  for (std::size_t end = 0; end < view.size(); ++end) {
    for (int n : windows.sizes()) {
      const auto len = static_cast<std::size_t>(n);
      if (end + 1 >= len) fn(view.substr(end + 1 - len, len));
    }
  }
}

/// Bag of boundary-wrapped character n-grams. Throws std::invalid_argument
/// for an empty string.
NgramBag extract_ngrams(std::u32string_view text, const WindowSet& windows);

/// Σ_{n∈N} max(0, m − n + 1) where m = |text| + 2.
std::size_t ngram_token_count(std::size_t text_length, const WindowSet& windows);

/// Which side of the training data an n-gram was seen on.
enum class NgramSide : std::uint8_t { Source = 1, Target = 2, Both = 3 };

struct BagEntry {
  NgramId id;
  std::uint32_t count;

  friend bool operator==(const BagEntry&, const BagEntry&) = default;
};

/// In-vocabulary bag, ascending by id. Out-of-vocabulary n-grams are absent.
using SparseBag = std::vector<BagEntry>;

struct U32Hash {
  using is_transparent = void;
  std::size_t operator()(std::u32string_view s) const noexcept {
    return std::hash<std::u32string_view>{}(s);
  }
};

/// Frozen n-gram → id map. Ids are contiguous and follow lexicographic
/// (code point) order of the n-grams.
class NgramVocabulary {
 public:
  NgramVocabulary() = default;

  /// Union of the n-grams of every source string and every target string.
  /// Strings are expected to be prepared already (NFC, optional lowercase).
  static NgramVocabulary build(std::span<const std::u32string> sources,
                               std::span<const std::u32string> targets,
                               const WindowSet& windows);

  /// Rebuilds from stored n-grams (must be strictly ascending) and sides.
  static NgramVocabulary from_parts(std::vector<Ngram> ngrams, std::vector<NgramSide> sides,
                                    WindowSet windows);

  std::size_t size() const noexcept { return ngrams_.size(); }
  const WindowSet& windows() const noexcept { return windows_; }
  const Ngram& ngram(NgramId id) const { return ngrams_[id]; }
  NgramSide side(NgramId id) const { return sides_[id]; }
  std::span<const Ngram> ngrams() const noexcept { return ngrams_; }
  std::span<const NgramSide> sides() const noexcept { return sides_; }

  std::optional<NgramId> find(std::u32string_view ngram) const;

  /// Bag of in-vocabulary n-grams of `text`. An empty text yields an empty bag.
  SparseBag bag(std::u32string_view text) const;

  friend bool operator==(const NgramVocabulary& a, const NgramVocabulary& b) {
    return a.windows_ == b.windows_ && a.ngrams_ == b.ngrams_ && a.sides_ == b.sides_;
  }

 private:
  void reindex();

  WindowSet windows_;
  std::vector<Ngram> ngrams_;
  std::vector<NgramSide> sides_;
  std::unordered_map<Ngram, NgramId, U32Hash, std::equal_to<>> index_;
};

/// |T_a ∩ T_b| / |T_a| over n-gram types of all windows. Asymmetric: corpus_a
/// is the low-resource side whose coverage is measured.
double ngram_overlap(std::span<const std::u32string> corpus_a,
                     std::span<const std::u32string> corpus_b, const WindowSet& windows);

struct PivotCandidate {
  std::string name;
  std::vector<std::u32string> corpus;
  std::optional<double> dev_recall;  // unknown recall is not filtered
};

struct PivotScore {
  std::string name;
  double overlap = 0.0;
  bool eligible = false;
};

/// Every candidate with its overlap against the LRL corpus. Eligible
/// candidates (dev recall >= threshold) come first, each group ordered by
/// descending overlap then name. Throws std::runtime_error("no eligible
/// pivot") when nothing survives the recall filter.
std::vector<PivotScore> select_pivot(std::span<const std::u32string> lrl_corpus,
                                     std::span<const PivotCandidate> candidates,
                                     const WindowSet& windows, double recall_threshold = 0.75);

}  // namespace charlink
