#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <thread>

#include "binary_io.hpp"
#include "charlink/errors.hpp"
#include "charlink/retrieval.hpp"

namespace charlink {

namespace {

constexpr std::string_view kIndexMagic = "CGRAMIDX";
constexpr std::uint32_t kIndexVersion = 1;
constexpr std::size_t kQueryTile = 4;
constexpr std::size_t kChunkBlocks = 32;
constexpr float kNoScore = -std::numeric_limits<float>::infinity();

// Heap whose front is the worst kept entry.
void heap_offer(std::vector<ScoredEntity>& heap, std::size_t k, ScoredEntity item) {
  if (heap.size() < k) {
    heap.push_back(item);
    std::push_heap(heap.begin(), heap.end(), ranks_before);
  } else if (ranks_before(item, heap.front())) {
    std::pop_heap(heap.begin(), heap.end(), ranks_before);
    heap.back() = item;
    std::push_heap(heap.begin(), heap.end(), ranks_before);
  }
}

// One lane per row of a block.
using Lanes = float __attribute__((vector_size(EmbeddingIndex::kBlock * sizeof(float))));

// Scores G consecutive blocks against Tile queries. Every lane keeps its own
// accumulator and walks the dimensions in order, so each score is
// bit-identical to a sequential float dot product; the G x Tile independent
// accumulators are only there to hide add latency.
template <std::size_t Tile, std::size_t G>
void score_blocks(const float* blocks, const float* queries, std::size_t dim, float* out,
                  std::size_t out_stride) {
  constexpr std::size_t B = EmbeddingIndex::kBlock;
  const std::size_t block_stride = dim * B;
  Lanes acc[Tile][G] = {};
  for (std::size_t j = 0; j < dim; ++j) {
    Lanes col[G];
    for (std::size_t g = 0; g < G; ++g) std::memcpy(&col[g], blocks + g * block_stride + j * B, sizeof(Lanes));
    for (std::size_t t = 0; t < Tile; ++t) {
      const float qj = queries[t * dim + j];
      for (std::size_t g = 0; g < G; ++g) acc[t][g] += qj * col[g];
    }
  }
  for (std::size_t t = 0; t < Tile; ++t) {
    for (std::size_t g = 0; g < G; ++g) std::memcpy(out + t * out_stride + g * B, &acc[t][g], sizeof(Lanes));
  }
}

// Scores blocks [0, n_blocks) of a chunk; output row r of query t lands at
// out[t * out_stride + r].
template <std::size_t Tile>
void score_chunk(std::size_t n_blocks, const float* blocks, const float* queries,
                 std::size_t dim, float* out, std::size_t out_stride) {
  constexpr std::size_t B = EmbeddingIndex::kBlock;
  constexpr std::size_t G = Tile == 1 ? 8 : 4;
  std::size_t b = 0;
  for (; b + G <= n_blocks; b += G) {
    score_blocks<Tile, G>(blocks + b * dim * B, queries, dim, out + b * B, out_stride);
  }
  for (; b < n_blocks; ++b) {
    score_blocks<Tile, 1>(blocks + b * dim * B, queries, dim, out + b * B, out_stride);
  }
}

void score_chunk_tile(std::size_t tile, std::size_t n_blocks, const float* blocks,
                      const float* queries, std::size_t dim, float* out, std::size_t out_stride) {
  switch (tile) {
    case 1:
      score_chunk<1>(n_blocks, blocks, queries, dim, out, out_stride);
      break;
    case 2:
      score_chunk<2>(n_blocks, blocks, queries, dim, out, out_stride);
      break;
    case 3:
      score_chunk<3>(n_blocks, blocks, queries, dim, out, out_stride);
      break;
    default:
      score_chunk<4>(n_blocks, blocks, queries, dim, out, out_stride);
      break;
  }
}

}  // namespace

EmbeddingIndex EmbeddingIndex::build(const KbEmbeddings& embeddings, const KnowledgeBase& kb) {
  const std::size_t dim = embeddings.dim;
  std::vector<float> unit(embeddings.size() * dim, 0.0f);
  for (std::size_t r = 0; r < embeddings.size(); ++r) {
    const auto row = embeddings.row(r);
    double sq = 0.0;
    for (double x : row) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm == 0.0) continue;
    for (std::size_t j = 0; j < dim; ++j) unit[r * dim + j] = static_cast<float>(row[j] / norm);
  }
  std::vector<EntityOrdinal> row_entity;
  std::vector<VariantKind> kinds;
  row_entity.reserve(embeddings.size());
  kinds.reserve(embeddings.size());
  for (const auto& ref : embeddings.refs) {
    row_entity.push_back(ref.entity);
    kinds.push_back(ref.kind);
  }
  std::vector<std::string> ids;
  ids.reserve(kb.size());
  for (const auto& e : kb.entities()) ids.push_back(e.id);
  return from_rows(dim, unit, std::move(row_entity), std::move(ids), std::move(kinds));
}

EmbeddingIndex EmbeddingIndex::from_rows(std::size_t dim, std::span<const float> rows,
                                         std::vector<EntityOrdinal> row_entity,
                                         std::vector<std::string> entity_ids,
                                         std::vector<VariantKind> kinds) {
  if (dim == 0) throw std::invalid_argument("index dimension must be positive");
  const std::size_t n = row_entity.size();
  if (rows.size() != n * dim) throw std::invalid_argument("row data does not match row count");
  if (kinds.empty()) kinds.assign(n, VariantKind::Canonical);
  if (kinds.size() != n) throw std::invalid_argument("variant kinds do not match row count");
  for (std::size_t r = 0; r < n; ++r) {
    if (row_entity[r] >= entity_ids.size()) throw std::invalid_argument("row entity out of range");
    if (r > 0 && row_entity[r] < row_entity[r - 1]) {
      throw std::invalid_argument("rows must be grouped by ascending entity");
    }
  }

  EmbeddingIndex index;
  index.dim_ = dim;
  const std::size_t num_blocks = (n + kBlock - 1) / kBlock;
  index.blocks_.assign(num_blocks * dim * kBlock, 0.0f);
  index.degenerate_.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    float* block = index.blocks_.data() + (r / kBlock) * dim * kBlock;
    const std::size_t lane = r % kBlock;
    bool all_zero = true;
    for (std::size_t j = 0; j < dim; ++j) {
      const float x = rows[r * dim + j];
      if (!std::isfinite(x)) throw std::invalid_argument("non-finite index row");
      all_zero = all_zero && x == 0.0f;
      block[j * kBlock + lane] = x;
    }
    index.degenerate_[r] = all_zero ? 1 : 0;
  }
  index.entity_begin_.assign(entity_ids.size() + 1, 0);
  for (std::size_t r = 0; r < n; ++r) ++index.entity_begin_[row_entity[r] + 1];
  for (std::size_t e = 0; e < entity_ids.size(); ++e) {
    index.entity_begin_[e + 1] += index.entity_begin_[e];
  }
  index.row_entity_ = std::move(row_entity);
  index.kinds_ = std::move(kinds);
  index.entity_ids_ = std::move(entity_ids);
  return index;
}

std::vector<float> EmbeddingIndex::row(std::size_t r) const {
  std::vector<float> out(dim_);
  const float* block = blocks_.data() + (r / kBlock) * dim_ * kBlock;
  for (std::size_t j = 0; j < dim_; ++j) out[j] = block[j * kBlock + r % kBlock];
  return out;
}

void EmbeddingIndex::search_range(const float* queries, std::size_t num_queries,
                                  std::size_t first_entity, std::size_t last_entity,
                                  std::size_t k,
                                  std::vector<std::vector<ScoredEntity>>& heaps) const {
  const std::size_t r0 = entity_begin_[first_entity];
  const std::size_t r1 = entity_begin_[last_entity];
  if (r0 == r1) return;
  constexpr std::size_t cap = kChunkBlocks * kBlock;
  std::vector<float> best(num_queries, kNoScore);
  std::vector<float> scores(kQueryTile * cap);

  auto flush = [&](std::size_t q, EntityOrdinal entity) {
    if (best[q] != kNoScore) heap_offer(heaps[q], k, {entity, best[q]});
    best[q] = kNoScore;
  };

  const std::size_t first_block = r0 / kBlock;
  const std::size_t end_block = (r1 - 1) / kBlock + 1;
  for (std::size_t cb = first_block; cb < end_block; cb += kChunkBlocks) {
    const std::size_t cb_end = std::min(cb + kChunkBlocks, end_block);
    const std::size_t chunk_r0 = std::max(cb * kBlock, r0);
    const std::size_t chunk_r1 = std::min(cb_end * kBlock, r1);
    for (std::size_t q0 = 0; q0 < num_queries; q0 += kQueryTile) {
      const std::size_t tile = std::min(kQueryTile, num_queries - q0);
      score_chunk_tile(tile, cb_end - cb, blocks_.data() + cb * dim_ * kBlock,
                       queries + q0 * dim_, dim_, scores.data(), cap);
      for (std::size_t t = 0; t < tile; ++t) {
        const std::size_t q = q0 + t;
        const float* s = scores.data() + t * cap;
        for (std::size_t r = chunk_r0; r < chunk_r1; ++r) {
          if (r > r0 && row_entity_[r] != row_entity_[r - 1]) flush(q, row_entity_[r - 1]);
          if (degenerate_[r] != 0) continue;
          const float score = s[r - cb * kBlock];
          if (score > best[q]) best[q] = score;
        }
      }
    }
  }
  for (std::size_t q = 0; q < num_queries; ++q) flush(q, row_entity_[r1 - 1]);
}

std::vector<std::vector<ScoredEntity>> EmbeddingIndex::search_batch(
    std::span<const float> unit_queries, std::size_t k, unsigned workers) const {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (unit_queries.size() % dim_ != 0) {
    throw std::invalid_argument("query length does not match index dimension");
  }
  const std::size_t nq = unit_queries.size() / dim_;
  const std::size_t n_entities = num_entities();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(
                                                         std::max<std::size_t>(1, n_entities))));

  // Entity ranges with roughly equal row counts.
  std::vector<std::size_t> bounds{0};
  for (unsigned w = 1; w < workers; ++w) {
    const std::size_t target = num_rows() * w / workers;
    const auto it = std::lower_bound(entity_begin_.begin(), entity_begin_.end(), target);
    bounds.push_back(std::max(bounds.back(),
                              static_cast<std::size_t>(it - entity_begin_.begin())));
  }
  bounds.push_back(n_entities);

  std::vector<std::vector<std::vector<ScoredEntity>>> partial(
      workers, std::vector<std::vector<ScoredEntity>>(nq));
  if (workers == 1) {
    search_range(unit_queries.data(), nq, 0, n_entities, k, partial[0]);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        search_range(unit_queries.data(), nq, bounds[w], bounds[w + 1], k, partial[w]);
      });
    }
  }

  std::vector<std::vector<ScoredEntity>> results(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    auto& out = results[q];
    for (auto& p : partial) out.insert(out.end(), p[q].begin(), p[q].end());
    std::sort(out.begin(), out.end(), ranks_before);
    if (out.size() > k) out.resize(k);
  }
  return results;
}

std::vector<ScoredEntity> EmbeddingIndex::search(std::span<const float> unit_query,
                                                 std::size_t k, unsigned workers) const {
  if (unit_query.size() != dim_) {
    throw std::invalid_argument("query length does not match index dimension");
  }
  return std::move(search_batch(unit_query, k, workers).front());
}

void EmbeddingIndex::save(const std::filesystem::path& path) const {
  detail::BinaryWriter out(path);
  out.put_bytes(kIndexMagic);
  out.put<std::uint32_t>(kIndexVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(dim_));
  out.put<std::uint64_t>(entity_ids_.size());
  out.put<std::uint64_t>(num_rows());
  for (const auto& id : entity_ids_) out.put_string(id);
  for (std::size_t r = 0; r < num_rows(); ++r) {
    out.put<std::uint32_t>(row_entity_[r]);
    out.put<std::uint8_t>(static_cast<std::uint8_t>(kinds_[r]));
  }
  for (std::size_t r = 0; r < num_rows(); ++r) {
    const auto values = row(r);
    out.put_span(std::span<const float>(values));
  }
  out.finish();
}

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path) {
  detail::BinaryReader in(path);
  if (in.get_bytes(kIndexMagic.size(), "magic") != kIndexMagic) {
    throw FormatError("magic", "not a charagram index file");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kIndexVersion) {
    throw FormatError("version", "unsupported version " + std::to_string(version));
  }
  const auto dim = in.get<std::uint32_t>("dim");
  if (dim == 0) throw FormatError("dim", "must be positive");
  const auto n_entities = in.get<std::uint64_t>("num_entities");
  const auto n_rows = in.get<std::uint64_t>("num_rows");
  if (n_entities > in.remaining() / 4 || n_rows > in.remaining() / 5) {
    throw FormatError("num_rows", "exceeds file size");
  }
  std::vector<std::string> ids;
  ids.reserve(n_entities);
  for (std::uint64_t e = 0; e < n_entities; ++e) ids.push_back(in.get_string("entity_ids"));
  std::vector<EntityOrdinal> row_entity(n_rows);
  std::vector<VariantKind> kinds(n_rows);
  for (std::uint64_t r = 0; r < n_rows; ++r) {
    row_entity[r] = in.get<std::uint32_t>("row_entity");
    const auto kind = in.get<std::uint8_t>("row_kind");
    if (kind > 2) throw FormatError("row_kind", "unknown variant kind");
    kinds[r] = static_cast<VariantKind>(kind);
  }
  if (in.remaining() != n_rows * dim * sizeof(float)) {
    throw FormatError("rows", "dimension mismatch: expected " +
                                  std::to_string(n_rows * dim * sizeof(float)) + " bytes, found " +
                                  std::to_string(in.remaining()));
  }
  std::vector<float> rows(n_rows * dim);
  in.get_span(std::span<float>(rows), "rows");
  in.expect_end();
  try {
    return from_rows(dim, rows, std::move(row_entity), std::move(ids), std::move(kinds));
  } catch (const std::invalid_argument& e) {
    throw FormatError("rows", e.what());
  }
}

}  // namespace charlink
