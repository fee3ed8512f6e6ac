#include "charlink/ngram.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace charlink {

WindowSet::WindowSet(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.empty()) throw std::invalid_argument("window set is empty");
  std::sort(sizes_.begin(), sizes_.end());
  sizes_.erase(std::unique(sizes_.begin(), sizes_.end()), sizes_.end());
  if (sizes_.front() < 1) throw std::invalid_argument("window sizes must be >= 1");
}

WindowSet WindowSet::parse(std::string_view text) {
  std::vector<int> sizes;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto token = text.substr(0, comma);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
      throw std::invalid_argument("bad window size '" + std::string(token) + "'");
    }
    sizes.push_back(value);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return WindowSet(std::move(sizes));
}

bool WindowSet::contains(int n) const {
  return std::binary_search(sizes_.begin(), sizes_.end(), n);
}

std::string WindowSet::to_string() const {
  std::string out;
  for (int n : sizes_) {
    if (!out.empty()) out += ',';
    out += std::to_string(n);
  }
  return out;
}

NgramBag extract_ngrams(std::u32string_view text, const WindowSet& windows) {
  if (text.empty()) throw std::invalid_argument("cannot extract n-grams from an empty string");
  NgramBag bag;
  for_each_ngram(text, windows, [&bag](std::u32string_view g) { ++bag[Ngram(g)]; });
  return bag;
}

std::size_t ngram_token_count(std::size_t text_length, const WindowSet& windows) {
  const std::size_t m = text_length + 2;
  std::size_t total = 0;
  for (int n : windows.sizes()) {
    const auto len = static_cast<std::size_t>(n);
    if (m >= len) total += m - len + 1;
  }
  return total;
}

NgramVocabulary NgramVocabulary::build(std::span<const std::u32string> sources,
                                       std::span<const std::u32string> targets,
                                       const WindowSet& windows) {
  if (sources.empty() && targets.empty()) {
    throw std::invalid_argument("cannot build a vocabulary from empty input");
  }
  std::map<Ngram, std::uint8_t> seen;
  auto collect = [&](std::span<const std::u32string> strings, NgramSide side) {
    for (const auto& s : strings) {
      if (s.empty()) continue;
      for_each_ngram(s, windows, [&](std::u32string_view g) {
        seen[Ngram(g)] |= static_cast<std::uint8_t>(side);
      });
    }
  };
  collect(sources, NgramSide::Source);
  collect(targets, NgramSide::Target);

  NgramVocabulary vocab;
  vocab.windows_ = windows;
  vocab.ngrams_.reserve(seen.size());
  vocab.sides_.reserve(seen.size());
  for (auto& [g, side] : seen) {
    vocab.ngrams_.push_back(g);
    vocab.sides_.push_back(static_cast<NgramSide>(side));
  }
  vocab.reindex();
  return vocab;
}

NgramVocabulary NgramVocabulary::from_parts(std::vector<Ngram> ngrams,
                                            std::vector<NgramSide> sides, WindowSet windows) {
  if (ngrams.size() != sides.size()) {
    throw std::invalid_argument("n-gram and side tables differ in length");
  }
  for (std::size_t i = 0; i < ngrams.size(); ++i) {
    const auto len = static_cast<int>(ngrams[i].size());
    if (!windows.contains(len)) {
      throw std::invalid_argument("n-gram length " + std::to_string(len) +
                                  " is not in the window set");
    }
    if (i > 0 && !(ngrams[i - 1] < ngrams[i])) {
      throw std::invalid_argument("n-grams are not strictly ascending");
    }
    const auto side = static_cast<std::uint8_t>(sides[i]);
    if (side < 1 || side > 3) throw std::invalid_argument("bad n-gram side tag");
  }
  NgramVocabulary vocab;
  vocab.windows_ = std::move(windows);
  vocab.ngrams_ = std::move(ngrams);
  vocab.sides_ = std::move(sides);
  vocab.reindex();
  return vocab;
}

void NgramVocabulary::reindex() {
  index_.clear();
  index_.reserve(ngrams_.size());
  for (std::size_t i = 0; i < ngrams_.size(); ++i) {
    index_.emplace(ngrams_[i], static_cast<NgramId>(i));
  }
}

std::optional<NgramId> NgramVocabulary::find(std::u32string_view ngram) const {
  const auto it = index_.find(ngram);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SparseBag NgramVocabulary::bag(std::u32string_view text) const {
  SparseBag bag;
  if (text.empty()) return bag;
  std::vector<NgramId> ids;
  ids.reserve(ngram_token_count(text.size(), windows_));
  for_each_ngram(text, windows_, [&](std::u32string_view g) {
    if (const auto it = index_.find(g); it != index_.end()) ids.push_back(it->second);
  });
  std::sort(ids.begin(), ids.end());
  for (NgramId id : ids) {
    if (!bag.empty() && bag.back().id == id) {
      ++bag.back().count;
    } else {
      bag.push_back({id, 1});
    }
  }
  return bag;
}

namespace {

std::unordered_set<Ngram, U32Hash, std::equal_to<>> ngram_types(
    std::span<const std::u32string> corpus, const WindowSet& windows) {
  std::unordered_set<Ngram, U32Hash, std::equal_to<>> types;
  for (const auto& s : corpus) {
    if (s.empty()) continue;
    for_each_ngram(s, windows, [&](std::u32string_view g) {
      if (types.find(g) == types.end()) types.emplace(g);
    });
  }
  return types;
}

}  // namespace

double ngram_overlap(std::span<const std::u32string> corpus_a,
                     std::span<const std::u32string> corpus_b, const WindowSet& windows) {
  if (corpus_a.empty() || corpus_b.empty()) {
    throw std::invalid_argument("n-gram overlap needs two non-empty corpora");
  }
  const auto types_a = ngram_types(corpus_a, windows);
  if (types_a.empty()) throw std::invalid_argument("corpus_a contains no strings");
  const auto types_b = ngram_types(corpus_b, windows);
  std::size_t shared = 0;
  for (const auto& g : types_a) shared += types_b.count(g);
  return static_cast<double>(shared) / static_cast<double>(types_a.size());
}

std::vector<PivotScore> select_pivot(std::span<const std::u32string> lrl_corpus,
                                     std::span<const PivotCandidate> candidates,
                                     const WindowSet& windows, double recall_threshold) {
  if (candidates.empty()) throw std::invalid_argument("no pivot candidates given");
  std::vector<PivotScore> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates) {
    PivotScore s;
    s.name = c.name;
    s.overlap = ngram_overlap(lrl_corpus, c.corpus, windows);
    s.eligible = !c.dev_recall || *c.dev_recall >= recall_threshold;
    scores.push_back(std::move(s));
  }
  std::sort(scores.begin(), scores.end(), [](const PivotScore& a, const PivotScore& b) {
    if (a.eligible != b.eligible) return a.eligible;
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    return a.name < b.name;
  });
  if (!scores.front().eligible) throw std::runtime_error("no eligible pivot");
  return scores;
}

}  // namespace charlink
