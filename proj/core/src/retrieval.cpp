#include "charlink/retrieval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_set>

#include "charlink/errors.hpp"
#include "charlink/text.hpp"
#include "tsv.hpp"

namespace charlink {

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine of vectors of different length");
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw UndefinedSimilarity("cosine of a zero-norm vector");
  const double c = dot / (std::sqrt(uu) * std::sqrt(vv));
  return std::clamp(c, -1.0, 1.0);
}

double score_entity(const CharagramModel& model, std::span<const double> mention_embedding,
                    const KbEntity& entity, NameVariants variants) {
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  std::vector<double> v(model.dim());
  auto consider = [&](const std::string& name) {
    model.encode(model.bag(name), v);
    try {
      best = std::max(best, cosine(mention_embedding, v));
      any = true;
    } catch (const UndefinedSimilarity&) {
    }
  };
  consider(entity.canonical_name);
  if (variants.aliases) {
    for (const auto& a : entity.aliases) consider(a);
  }
  if (variants.hrl && entity.hrl_name) consider(*entity.hrl_name);
  if (!any) {
    throw UndefinedSimilarity("every name variant of '" + entity.id + "' is degenerate");
  }
  return best;
}

double score_entity(const CharagramModel& model, std::string_view mention, const KbEntity& entity,
                    NameVariants variants) {
  return score_entity(model, model.encode(mention), entity, variants);
}

std::vector<float> unit_query(std::span<const double> embedding) {
  double sq = 0.0;
  for (double x : embedding) sq += x * x;
  if (sq == 0.0) throw UndefinedSimilarity("mention embeds to the zero vector");
  const double norm = std::sqrt(sq);
  std::vector<float> out(embedding.size());
  for (std::size_t j = 0; j < embedding.size(); ++j) {
    out[j] = static_cast<float>(embedding[j] / norm);
  }
  return out;
}

bool is_well_formed(const CandidateList& list) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < list.items.size(); ++i) {
    const auto& c = list.items[i];
    if (!std::isfinite(c.score) || !seen.insert(c.entity_id).second) return false;
    if (i > 0) {
      const auto& p = list.items[i - 1];
      const bool ordered = p.score > c.score || (p.score == c.score && p.entity_id < c.entity_id);
      if (!ordered) return false;
    }
  }
  return true;
}

namespace {

CandidateList to_candidates(const Mention& mention, const EmbeddingIndex& index,
                            const std::vector<ScoredEntity>& hits) {
  CandidateList list;
  list.mention = mention;
  list.items.reserve(hits.size());
  for (const auto& h : hits) {
    list.items.push_back({index.entity_id(h.entity), static_cast<double>(h.score)});
  }
  return list;
}

}  // namespace

CandidateList retrieve_topk(const CharagramModel& model, const Mention& mention,
                            const EmbeddingIndex& index, std::size_t k, unsigned workers) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  const auto query = unit_query(model.encode(mention.surface));
  return to_candidates(mention, index, index.search(query, k, workers));
}

std::vector<CandidateList> retrieve_topk_batch(const CharagramModel& model,
                                               std::span<const Mention> mentions,
                                               const EmbeddingIndex& index, std::size_t k,
                                               unsigned workers) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  std::vector<CandidateList> out(mentions.size());
  std::vector<float> queries;
  std::vector<std::size_t> slot;
  queries.reserve(mentions.size() * index.dim());
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    const auto embedding = model.encode(mentions[i].surface);
    try {
      const auto q = unit_query(embedding);
      queries.insert(queries.end(), q.begin(), q.end());
      slot.push_back(i);
    } catch (const UndefinedSimilarity&) {
      out[i].mention = mentions[i];  // no similarity is defined: no candidates
    }
  }
  if (slot.empty()) return out;
  const auto hits = index.search_batch(queries, k, workers);
  for (std::size_t s = 0; s < slot.size(); ++s) {
    out[slot[s]] = to_candidates(mentions[slot[s]], index, hits[s]);
  }
  return out;
}

LookupTable LookupTable::load(const std::filesystem::path& path) {
  LookupTable table;
  detail::for_each_row(path, [&](std::span<const std::string_view> cols, std::size_t line) {
    if (cols.size() != 3) {
      throw ParseError(path.string(), line,
                       "expected 3 columns, got " + std::to_string(cols.size()));
    }
    const auto text = std::string(trim(cols[2]));
    std::size_t used = 0;
    double score = 0.0;
    try {
      score = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size() || text.empty() || !std::isfinite(score)) {
      throw ParseError(path.string(), line, "bad score '" + text + "'");
    }
    table.add(normalize_nfc(trim(cols[0])), std::string(trim(cols[1])), score);
  });
  return table;
}

void LookupTable::add(const std::string& surface, const std::string& entity_id, double score) {
  if (!std::isfinite(score)) throw std::invalid_argument("lookup scores must be finite");
  auto& entries = table_[surface];
  auto [it, inserted] = entries.emplace(entity_id, score);
  if (!inserted) it->second = std::max(it->second, score);
}

std::vector<Candidate> LookupTable::entries(std::string_view surface) const {
  std::vector<Candidate> out;
  const auto it = table_.find(std::string(surface));
  if (it == table_.end()) return out;
  for (const auto& [id, score] : it->second) out.push_back({id, score});
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    return a.score > b.score || (a.score == b.score && a.entity_id < b.entity_id);
  });
  return out;
}

CandidateList lookup_generator(const LookupTable& table, const Mention& mention, std::size_t k) {
  CandidateList list;
  list.mention = mention;
  list.items = table.entries(mention.surface);
  if (list.items.size() > k) list.items.resize(k);
  return list;
}

CandidateList merge_scores(const CandidateList& lookup, const CandidateList& charagram,
                           const MergeParams& params) {
  if (!(params.beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(params.alpha >= 0.0 && params.alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1]");
  }
  if (charagram.items.size() > 30) {
    throw std::invalid_argument("charagram list longer than the 30-entry softmax domain");
  }

  std::map<std::string, double> merged;
  for (const auto& c : lookup.items) merged[c.entity_id] += params.alpha * c.score;
  if (!charagram.items.empty()) {
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& c : charagram.items) top = std::max(top, params.beta * c.score);
    std::vector<double> weights;
    weights.reserve(charagram.items.size());
    double total = 0.0;
    for (const auto& c : charagram.items) {
      weights.push_back(std::exp(params.beta * c.score - top));
      total += weights.back();
    }
    for (std::size_t i = 0; i < charagram.items.size(); ++i) {
      merged[charagram.items[i].entity_id] += (1.0 - params.alpha) * (weights[i] / total);
    }
  }

  CandidateList out;
  out.mention = charagram.items.empty() ? lookup.mention : charagram.mention;
  for (auto& [id, score] : merged) out.items.push_back({id, score});
  std::sort(out.items.begin(), out.items.end(), [](const Candidate& a, const Candidate& b) {
    return a.score > b.score || (a.score == b.score && a.entity_id < b.entity_id);
  });
  if (out.items.size() > params.top_n) out.items.resize(params.top_n);
  return out;
}

void write_candidates(const std::filesystem::path& path, std::span<const CandidateList> lists) {
  auto out = detail::open_output(path);
  char buf[64];
  for (const auto& list : lists) {
    for (std::size_t r = 0; r < list.items.size(); ++r) {
      const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), list.items[r].score);
      out << list.mention.surface << '\t' << (r + 1) << '\t' << list.items[r].entity_id << '\t'
          << std::string_view(buf, static_cast<std::size_t>(end - buf)) << '\n';
    }
  }
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

std::vector<CandidateList> read_candidates(const std::filesystem::path& path) {
  std::vector<CandidateList> lists;
  std::map<std::string, std::size_t> slot;
  std::vector<std::vector<std::pair<std::size_t, Candidate>>> ranked;
  detail::for_each_row(path, [&](std::span<const std::string_view> cols, std::size_t line) {
    if (cols.size() != 4) {
      throw ParseError(path.string(), line,
                       "expected 4 columns, got " + std::to_string(cols.size()));
    }
    const std::string surface = normalize_nfc(trim(cols[0]));
    std::size_t rank = 0;
    const auto rank_text = trim(cols[1]);
    const auto [rp, rec] =
        std::from_chars(rank_text.data(), rank_text.data() + rank_text.size(), rank);
    if (rec != std::errc{} || rp != rank_text.data() + rank_text.size() || rank == 0) {
      throw ParseError(path.string(), line, "bad rank '" + std::string(rank_text) + "'");
    }
    const auto score_text = trim(cols[3]);
    double score = 0.0;
    const auto [sp, sec] =
        std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
    if (sec != std::errc{} || sp != score_text.data() + score_text.size()) {
      throw ParseError(path.string(), line, "bad score '" + std::string(score_text) + "'");
    }
    auto [it, inserted] = slot.emplace(surface, lists.size());
    if (inserted) {
      lists.push_back({Mention{surface, std::nullopt}, {}});
      ranked.emplace_back();
    }
    ranked[it->second].push_back({rank, Candidate{std::string(trim(cols[2])), score}});
  });
  for (std::size_t i = 0; i < lists.size(); ++i) {
    auto& rows = ranked[i];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [rank, c] : rows) lists[i].items.push_back(std::move(c));
  }
  return lists;
}

}  // namespace charlink
