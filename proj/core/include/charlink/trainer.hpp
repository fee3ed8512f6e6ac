#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charlink/charagram.hpp"
#include "charlink/kb.hpp"
#include "charlink/random.hpp"

namespace charlink {

/// How per-pair gradients in a minibatch combine before the SGD step.
enum class BatchReduction { Mean, Sum };

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 0.1;
  std::size_t negatives = 32;  // B, negatives per positive pair
  double margin = 1.0;
  std::size_t patience = 50;
  std::size_t max_epochs = 200;
  std::size_t eval_top_k = 30;
  std::uint64_t seed = 0;
  BatchReduction reduction = BatchReduction::Mean;
  NameVariants dev_variants{};  // name variants used when scoring dev mentions
  unsigned eval_workers = 1;

  /// Throws std::invalid_argument on zero counts, negative learning rate or
  /// a non-positive margin.
  void validate() const;
};

enum class StopReason { Patience, MaxEpochs };

std::string_view to_string(StopReason reason);
std::string_view to_string(BatchReduction reduction);
/// "mean" or "sum"; throws std::invalid_argument otherwise.
BatchReduction parse_reduction(std::string_view text);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean pair loss over the epoch
  double dev_recall = 0.0;
  double best_recall = 0.0;  // best dev recall so far, including this epoch
  std::size_t skipped_pairs = 0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_recall = 0.0;
  StopReason stop = StopReason::MaxEpochs;

  /// epoch, loss, dev_recall, best_recall, skipped_pairs with a header row.
  void write_tsv(std::ostream& out) const;

  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

/// Dense gradient buffer that remembers which embedding rows were touched,
/// so clearing and applying only cost the rows actually used.
class Gradient {
 public:
  Gradient(std::size_t vocab_size, std::size_t dim);

  void add_row(NgramId id, double scale, std::span<const double> values);
  void add_bias(std::span<const double> values);

  std::span<const double> row(NgramId id) const { return {rows_.data() + id * dim_, dim_}; }
  std::span<const double> bias() const noexcept { return bias_; }
  std::span<const NgramId> touched() const noexcept { return touched_; }
  bool is_touched(NgramId id) const { return flags_[id] != 0; }

  /// parameters -= learning_rate * gradient.
  void apply(CharagramModel& model, double learning_rate) const;
  void clear();

 private:
  std::size_t dim_;
  std::vector<double> rows_;
  std::vector<double> bias_;
  std::vector<std::uint8_t> flags_;
  std::vector<NgramId> touched_;
};

struct PairLossResult {
  double loss = 0.0;
  std::size_t active = 0;  // hinge terms with positive loss
  bool skipped = false;    // a zero-norm embedding made cosine undefined
};

/// Σ_i max(0, margin − cos(v_m, v_pos) + cos(v_m, v_neg_i)). When `grad` is
/// non-null the analytic gradient (through cosine and tanh) is accumulated
/// into it. Inactive hinge terms add nothing; a skipped pair adds nothing.
PairLossResult pair_loss(const CharagramModel& model, const SparseBag& mention,
                         const SparseBag& positive, std::span<const SparseBag> negatives,
                         double margin, Gradient* grad = nullptr);

/// String convenience overload. Throws std::invalid_argument for empty
/// strings or an empty negative list.
PairLossResult pair_loss(const CharagramModel& model, std::string_view mention,
                         std::string_view positive, std::span<const std::string> negatives,
                         double margin, Gradient* grad = nullptr);

/// B distinct ordinals drawn uniformly from [0, kb_size) \ {positive}.
/// Throws std::invalid_argument if kb_size < B + 1.
std::vector<EntityOrdinal> sample_negatives(std::size_t kb_size, EntityOrdinal positive,
                                            std::size_t count, Rng& rng);

/// Canonical names of sample_negatives(kb.size(), positive, count, rng).
std::vector<std::string> sample_negative_names(const KnowledgeBase& kb, EntityOrdinal positive,
                                               std::size_t count, Rng& rng);

/// Fraction of dev pairs whose entity is in the model's top-k over the full KB.
double dev_recall(const CharagramModel& model, const PairDataset& dev, const KnowledgeBase& kb,
                  std::size_t top_k, NameVariants variants = {}, unsigned workers = 1);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch SGD (step = learning_rate x mean or sum of the batch's pair
/// gradients) with early stopping on dev top-k recall. On return the
/// model holds the parameters of the best epoch. Throws NumericError with
/// epoch/batch coordinates if a loss or parameter becomes non-finite.
TrainReport train(CharagramModel& model, const PairDataset& train_set, const PairDataset& dev_set,
                  const KnowledgeBase& kb, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace charlink
