#pragma once

// Shared fixtures and reference implementations for the test suites. The
// reference code here is deliberately naive: plain loops, no shared helpers
// with the library beyond the public types.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <unistd.h>

#include "charlink/charagram.hpp"
#include "charlink/kb.hpp"
#include "charlink/ngram.hpp"
#include "charlink/random.hpp"
#include "charlink/retrieval.hpp"
#include "charlink/text.hpp"

namespace testing {

namespace fs = std::filesystem;
using namespace charlink;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("charlink_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// --- random data ---------------------------------------------------------

/// Code points from several scripts, including astral ones. Excludes the
/// reserved boundary symbols and surrogates by construction.
inline char32_t random_code_point(Rng& rng) {
  static constexpr std::pair<char32_t, char32_t> kRanges[] = {
      {U'a', U'z'},           {U' ', U' '},           {0x00C0, 0x00FF},
      {0x0410, 0x044F},       {0x0905, 0x0939},       {0x4E00, 0x4E40},
      {0x1F600, 0x1F64F},     {0x10400, 0x1044F},
  };
  const auto& [lo, hi] = kRanges[uniform_below(rng, std::size(kRanges))];
  return lo + static_cast<char32_t>(uniform_below(rng, hi - lo + 1));
}

inline std::u32string random_text(Rng& rng, std::size_t min_len, std::size_t max_len) {
  const auto len = min_len + uniform_below(rng, max_len - min_len + 1);
  std::u32string s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(random_code_point(rng));
  return s;
}

/// Random string over a small alphabet, so n-grams repeat.
inline std::string random_word(Rng& rng, std::string_view alphabet, std::size_t min_len,
                               std::size_t max_len) {
  const auto len = min_len + uniform_below(rng, max_len - min_len + 1);
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[uniform_below(rng, alphabet.size())]);
  return s;
}

inline WindowSet random_windows(Rng& rng) {
  std::vector<int> sizes;
  for (int n = 1; n <= 6; ++n) {
    if (uniform_below(rng, 2) == 0) sizes.push_back(n);
  }
  if (sizes.empty()) sizes.push_back(1 + static_cast<int>(uniform_below(rng, 6)));
  return WindowSet(sizes);
}

// --- reference implementations --------------------------------------------

/// Every substring of the wrapped text whose length is a window size.
inline NgramBag brute_force_bag(std::u32string_view text, const WindowSet& windows) {
  std::u32string wrapped;
  wrapped += kStartSymbol;
  wrapped += text;
  wrapped += kEndSymbol;
  NgramBag bag;
  for (std::size_t i = 0; i < wrapped.size(); ++i) {
    for (std::size_t j = i + 1; j <= wrapped.size(); ++j) {
      if (windows.contains(static_cast<int>(j - i))) ++bag[wrapped.substr(i, j - i)];
    }
  }
  return bag;
}

/// tanh(b + Σ count·W[g]) with the bag built by brute force, summed in id order.
inline std::vector<double> reference_encode(const CharagramModel& model, std::string_view utf8) {
  const auto bag = brute_force_bag(model.prepare(utf8), model.vocabulary().windows());
  std::map<NgramId, std::uint32_t> counts;
  for (const auto& [g, c] : bag) {
    if (auto id = model.vocabulary().find(g)) counts[*id] += c;
  }
  std::vector<double> v(model.bias().begin(), model.bias().end());
  for (const auto& [id, c] : counts) {
    const auto w = model.row(id);
    for (std::size_t j = 0; j < v.size(); ++j) v[j] += static_cast<double>(c) * w[j];
  }
  for (double& x : v) x = std::tanh(x);
  return v;
}

inline double reference_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

/// Model over single characters (window {1}) whose strings encode to chosen
/// vectors: the string "x" has bag {x:1}, so its embedding is tanh(W[x]) with
/// b = 0. Every target component must lie in (−1, 1).
inline CharagramModel unigram_model(const std::map<char32_t, std::vector<double>>& targets) {
  std::vector<Ngram> ngrams;
  std::vector<NgramSide> sides;
  for (const auto& [c, v] : targets) {
    ngrams.push_back(Ngram(1, c));
    sides.push_back(NgramSide::Both);
  }
  const auto dim = targets.begin()->second.size();
  CharagramModel model(NgramVocabulary::from_parts(ngrams, sides, WindowSet({1})), dim);
  for (const auto& [c, v] : targets) {
    auto row = model.row(*model.vocabulary().find(Ngram(1, c)));
    for (std::size_t j = 0; j < dim; ++j) row[j] = std::atanh(v[j]);
  }
  return model;
}

/// 2-d vector of length r at angle acos(c) from the x axis; cos to (r,0) is c.
inline std::vector<double> at_cosine(double c, double r = 0.5) {
  return {r * c, r * std::sqrt(std::max(0.0, 1.0 - c * c))};
}

/// KB of `n` entities q000..q{n-1} with random lowercase names.
inline KnowledgeBase random_kb(Rng& rng, std::size_t n, std::size_t max_aliases = 0,
                               bool with_hrl = false) {
  std::vector<KbEntity> entities;
  for (std::size_t i = 0; i < n; ++i) {
    KbEntity e;
    char id[32];
    std::snprintf(id, sizeof(id), "q%05zu", i);
    e.id = id;
    e.canonical_name = random_word(rng, "abcdefghij", 3, 9) + std::to_string(i);
    const auto n_alias = max_aliases ? uniform_below(rng, max_aliases + 1) : 0;
    for (std::size_t a = 0; a < n_alias; ++a) e.aliases.push_back(random_word(rng, "abcdefghij", 3, 9));
    if (with_hrl && uniform_below(rng, 2) == 0) e.hrl_name = random_word(rng, "klmnopqrst", 3, 9);
    entities.push_back(std::move(e));
  }
  return KnowledgeBase::from_entities(std::move(entities));
}

/// Vocabulary over random words of a small alphabet; used for small models.
inline NgramVocabulary small_vocabulary(Rng& rng, std::size_t n_words, std::string_view alphabet,
                                        const WindowSet& windows) {
  std::vector<std::u32string> src, tgt;
  for (std::size_t i = 0; i < n_words; ++i) {
    src.push_back(decode_utf8(random_word(rng, alphabet, 1, 6)));
    tgt.push_back(decode_utf8(random_word(rng, alphabet, 1, 6)));
  }
  return NgramVocabulary::build(src, tgt, windows);
}

/// Naive exact top-k over unit float rows: per-entity max of a sequential
/// float dot product, then a full sort by (score desc, entity asc).
inline std::vector<ScoredEntity> brute_force_topk(std::span<const float> rows, std::size_t dim,
                                                  std::span<const EntityOrdinal> row_entity,
                                                  std::size_t n_entities,
                                                  std::span<const float> query, std::size_t k) {
  std::vector<float> best(n_entities, -INFINITY);
  std::vector<bool> seen(n_entities, false);
  for (std::size_t r = 0; r < row_entity.size(); ++r) {
    float norm = 0.0f;
    float s = 0.0f;
    for (std::size_t j = 0; j < dim; ++j) {
      norm += rows[r * dim + j] * rows[r * dim + j];
      s += query[j] * rows[r * dim + j];
    }
    if (norm == 0.0f) continue;  // degenerate rows never score
    const auto e = row_entity[r];
    if (!seen[e] || s > best[e]) best[e] = s;
    seen[e] = true;
  }
  std::vector<ScoredEntity> all;
  for (std::size_t e = 0; e < n_entities; ++e) {
    if (seen[e]) all.push_back({static_cast<EntityOrdinal>(e), best[e]});
  }
  std::sort(all.begin(), all.end(), [](const ScoredEntity& a, const ScoredEntity& b) {
    return a.score > b.score || (a.score == b.score && a.entity < b.entity);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

/// Random unit rows with 1..max_variants rows per entity, a few zero rows,
/// and a few rows copied from other entities to force exact score ties.
struct RandomIndexData {
  std::size_t dim = 0;
  std::vector<float> rows;
  std::vector<EntityOrdinal> row_entity;
  std::vector<std::string> ids;
};

inline RandomIndexData random_index_data(Rng& rng, std::size_t n_entities, std::size_t dim,
                                         std::size_t max_variants) {
  RandomIndexData d;
  d.dim = dim;
  for (std::size_t e = 0; e < n_entities; ++e) {
    char id[32];
    std::snprintf(id, sizeof(id), "e%06zu", e);
    d.ids.push_back(id);
    const auto n_rows = 1 + uniform_below(rng, max_variants);
    for (std::size_t v = 0; v < n_rows; ++v) {
      std::vector<float> row(dim);
      const auto kind = uniform_below(rng, 50);
      if (kind == 0) {
        // zero row
      } else if (kind < 4 && !d.row_entity.empty()) {
        const auto src = uniform_below(rng, d.row_entity.size());
        std::copy_n(d.rows.begin() + static_cast<std::ptrdiff_t>(src * dim), dim, row.begin());
      } else {
        double norm = 0.0;
        std::vector<double> x(dim);
        for (auto& xi : x) {
          xi = 2.0 * uniform_unit(rng) - 1.0;
          norm += xi * xi;
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<float>(x[j] / norm);
      }
      d.rows.insert(d.rows.end(), row.begin(), row.end());
      d.row_entity.push_back(static_cast<EntityOrdinal>(e));
    }
  }
  return d;
}

inline std::vector<float> random_unit_query(Rng& rng, std::size_t dim) {
  std::vector<double> x(dim);
  for (auto& xi : x) xi = 2.0 * uniform_unit(rng) - 1.0;
  return unit_query(x);
}

}  // namespace testing
