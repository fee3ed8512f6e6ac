#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "charlink/charagram.hpp"
#include "charlink/kb.hpp"

namespace charlink {

/// Standard cosine similarity. Throws UndefinedSimilarity on a zero-norm
/// input and std::invalid_argument on a length mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

/// Entity score: the maximum cosine between the mention and any
/// enabled name variant (canonical, aliases, HRL counterpart). Degenerate
/// variants are skipped; throws UndefinedSimilarity only if all are.
double score_entity(const CharagramModel& model, std::string_view mention, const KbEntity& entity,
                    NameVariants variants = {});

/// Same, with the mention already encoded.
double score_entity(const CharagramModel& model, std::span<const double> mention_embedding,
                    const KbEntity& entity, NameVariants variants = {});

struct ScoredEntity {
  EntityOrdinal entity;
  float score;

  friend bool operator==(const ScoredEntity&, const ScoredEntity&) = default;
};

/// Total ranking order: higher score first, then smaller ordinal (= id).
inline bool ranks_before(const ScoredEntity& a, const ScoredEntity& b) {
  return a.score > b.score || (a.score == b.score && a.entity < b.entity);
}

/// L2-normalized single-precision name-variant rows laid out for a blocked
/// exact scan. Rows are grouped into blocks of kBlock rows stored
/// dimension-major, so a block is scored with one query pass while each
/// individual dot product still accumulates in plain dimension order.
/// Immutable after construction; safe for concurrent searches.
class EmbeddingIndex {
 public:
  static constexpr std::size_t kBlock = 16;

  EmbeddingIndex() = default;

  /// Normalizes every row of `embeddings`. Zero rows are kept but never score.
  static EmbeddingIndex build(const KbEmbeddings& embeddings, const KnowledgeBase& kb);

  /// `rows` is num_rows x dim, row-major, already unit length (or all zero).
  /// `row_entity` must be non-decreasing and index into `entity_ids`.
  static EmbeddingIndex from_rows(std::size_t dim, std::span<const float> rows,
                                  std::vector<EntityOrdinal> row_entity,
                                  std::vector<std::string> entity_ids,
                                  std::vector<VariantKind> kinds = {});

  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_rows() const noexcept { return row_entity_.size(); }
  std::size_t num_entities() const noexcept { return entity_ids_.size(); }
  const std::string& entity_id(EntityOrdinal e) const { return entity_ids_[e]; }
  EntityOrdinal row_entity(std::size_t r) const { return row_entity_[r]; }
  VariantKind row_kind(std::size_t r) const { return kinds_[r]; }
  bool row_degenerate(std::size_t r) const { return degenerate_[r] != 0; }

  /// Copies row r back out of the blocked layout.
  std::vector<float> row(std::size_t r) const;

  /// Exact top-k entities for a unit-length query. Each entity's score is the
  /// max over its rows. `workers` > 1 partitions the scan by entity ranges and
  /// merges the partial heaps; the result does not depend on the count.
  std::vector<ScoredEntity> search(std::span<const float> unit_query, std::size_t k,
                                   unsigned workers = 1) const;

  /// search() for many queries (num_queries x dim) in one pass over the rows.
  std::vector<std::vector<ScoredEntity>> search_batch(std::span<const float> unit_queries,
                                                      std::size_t k, unsigned workers = 1) const;

  void save(const std::filesystem::path& path) const;
  static EmbeddingIndex load(const std::filesystem::path& path);

 private:
  void search_range(const float* queries, std::size_t num_queries, std::size_t first_entity,
                    std::size_t last_entity, std::size_t k,
                    std::vector<std::vector<ScoredEntity>>& heaps) const;

  std::size_t dim_ = 0;
  std::vector<float> blocks_;  // ceil(rows/kBlock) x dim x kBlock
  std::vector<EntityOrdinal> row_entity_;
  std::vector<VariantKind> kinds_;
  std::vector<std::uint8_t> degenerate_;
  std::vector<std::size_t> entity_begin_;  // num_entities + 1 row offsets
  std::vector<std::string> entity_ids_;
};

/// Unit-length single-precision query. Throws UndefinedSimilarity if the
/// mention embeds to the zero vector.
std::vector<float> unit_query(std::span<const double> embedding);

struct Candidate {
  std::string entity_id;
  double score = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Ranked candidates for one mention: descending score, ties by ascending
/// entity id, ids unique.
struct CandidateList {
  Mention mention;
  std::vector<Candidate> items;
};

bool is_well_formed(const CandidateList& list);

/// Exact top-k retrieval over the full index. Throws std::invalid_argument if k < 1.
CandidateList retrieve_topk(const CharagramModel& model, const Mention& mention,
                            const EmbeddingIndex& index, std::size_t k, unsigned workers = 1);

/// Batched retrieve_topk; identical results, one scan for all mentions.
std::vector<CandidateList> retrieve_topk_batch(const CharagramModel& model,
                                               std::span<const Mention> mentions,
                                               const EmbeddingIndex& index, std::size_t k,
                                               unsigned workers = 1);

/// External lookup-based generator scores: surface -> [(entity_id, score_wm)].
class LookupTable {
 public:
  /// Reads `mention<TAB>entity_id<TAB>score_wm`. Non-finite scores are a
  /// ParseError. A repeated (mention, entity) pair keeps the larger score.
  static LookupTable load(const std::filesystem::path& path);

  void add(const std::string& surface, const std::string& entity_id, double score);

  /// Entries for an exact surface, sorted descending (ties by id). Empty if absent.
  std::vector<Candidate> entries(std::string_view surface) const;

  std::size_t size() const noexcept { return table_.size(); }

 private:
  std::unordered_map<std::string, std::unordered_map<std::string, double>> table_;
};

CandidateList lookup_generator(const LookupTable& table, const Mention& mention, std::size_t k);

struct MergeParams {
  double alpha = 0.6;
  double beta = 100.0;
  std::size_t top_n = 30;
};

/// score_merge(e) = α·score_wm(e) + (1−α)·softmax_list(β·score_ca)(e), where
/// the softmax runs over the charagram list only and an entity missing from
/// a list contributes 0 for that term. Output is the union, re-ranked and
/// truncated to top_n.
CandidateList merge_scores(const CandidateList& lookup, const CandidateList& charagram,
                           const MergeParams& params = {});

/// `mention<TAB>rank<TAB>entity_id<TAB>score`, rank 1-based, scores printed
/// with round-trip precision.
void write_candidates(const std::filesystem::path& path, std::span<const CandidateList> lists);

/// Groups rows by mention in order of first appearance and re-sorts each list.
std::vector<CandidateList> read_candidates(const std::filesystem::path& path);

}  // namespace charlink
