#include "charlink/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

#include "charlink/errors.hpp"
#include "charlink/retrieval.hpp"

namespace charlink {

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (negatives == 0) throw std::invalid_argument("negatives must be positive");
  if (patience == 0) throw std::invalid_argument("patience must be positive");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (eval_top_k == 0) throw std::invalid_argument("eval_top_k must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be finite and non-negative");
  }
  if (!(margin > 0.0) || !std::isfinite(margin)) {
    throw std::invalid_argument("margin must be positive");
  }
}

std::string_view to_string(StopReason reason) {
  return reason == StopReason::Patience ? "patience" : "max-epochs";
}

std::string_view to_string(BatchReduction reduction) {
  return reduction == BatchReduction::Mean ? "mean" : "sum";
}

BatchReduction parse_reduction(std::string_view text) {
  if (text == "mean") return BatchReduction::Mean;
  if (text == "sum") return BatchReduction::Sum;
  throw std::invalid_argument("batch reduction must be 'mean' or 'sum', got '" +
                              std::string(text) + "'");
}

void TrainReport::write_tsv(std::ostream& out) const {
  auto shortest = [](double x) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, end);
  };
  out << "epoch\tloss\tdev_recall\tbest_recall\tskipped_pairs\n";
  for (const auto& e : epochs) {
    out << e.epoch << '\t' << shortest(e.loss) << '\t' << shortest(e.dev_recall) << '\t'
        << shortest(e.best_recall) << '\t' << e.skipped_pairs << '\n';
  }
}

Gradient::Gradient(std::size_t vocab_size, std::size_t dim)
    : dim_(dim), rows_(vocab_size * dim, 0.0), bias_(dim, 0.0), flags_(vocab_size, 0) {}

void Gradient::add_row(NgramId id, double scale, std::span<const double> values) {
  if (flags_[id] == 0) {
    flags_[id] = 1;
    touched_.push_back(id);
  }
  double* row = rows_.data() + static_cast<std::size_t>(id) * dim_;
  for (std::size_t j = 0; j < dim_; ++j) row[j] += scale * values[j];
}

void Gradient::add_bias(std::span<const double> values) {
  for (std::size_t j = 0; j < dim_; ++j) bias_[j] += values[j];
}

void Gradient::apply(CharagramModel& model, double learning_rate) const {
  for (NgramId id : touched_) {
    auto dst = model.row(id);
    const auto src = row(id);
    for (std::size_t j = 0; j < dim_; ++j) dst[j] -= learning_rate * src[j];
  }
  auto b = model.bias();
  for (std::size_t j = 0; j < dim_; ++j) b[j] -= learning_rate * bias_[j];
}

void Gradient::clear() {
  for (NgramId id : touched_) {
    std::fill_n(rows_.begin() + static_cast<std::ptrdiff_t>(id * dim_), dim_, 0.0);
    flags_[id] = 0;
  }
  touched_.clear();
  std::fill(bias_.begin(), bias_.end(), 0.0);
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// d cos(a, b) / d a = b / (|a||b|) - cos · a / |a|², added with weight `w`.
void add_cosine_grad(std::span<double> out, double w, std::span<const double> a, double norm_a,
                     std::span<const double> b, double norm_b, double cos_ab) {
  const double inv = 1.0 / (norm_a * norm_b);
  const double self = cos_ab / (norm_a * norm_a);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * (b[j] * inv - self * a[j]);
}

// Back through tanh into the bag's rows and the bias.
void backprop(Gradient& grad, const SparseBag& bag, std::span<const double> v,
              std::span<double> dv) {
  for (std::size_t j = 0; j < dv.size(); ++j) dv[j] *= 1.0 - v[j] * v[j];
  grad.add_bias(dv);
  for (const auto& [id, count] : bag) grad.add_row(id, static_cast<double>(count), dv);
}

}  // namespace

PairLossResult pair_loss(const CharagramModel& model, const SparseBag& mention,
                         const SparseBag& positive, std::span<const SparseBag> negatives,
                         double margin, Gradient* grad) {
  if (negatives.empty()) throw std::invalid_argument("pair_loss needs at least one negative");
  const std::size_t d = model.dim();
  const std::size_t nn = negatives.size();
  std::vector<double> vm(d), vp(d), vn(nn * d);
  model.encode(mention, vm);
  model.encode(positive, vp);
  for (std::size_t i = 0; i < nn; ++i) model.encode(negatives[i], std::span(vn).subspan(i * d, d));

  PairLossResult result;
  const double nm = std::sqrt(dot(vm, vm));
  const double np = std::sqrt(dot(vp, vp));
  std::vector<double> norms(nn);
  bool degenerate = nm == 0.0 || np == 0.0;
  for (std::size_t i = 0; i < nn && !degenerate; ++i) {
    const auto v = std::span<const double>(vn).subspan(i * d, d);
    norms[i] = std::sqrt(dot(v, v));
    degenerate = norms[i] == 0.0;
  }
  if (degenerate) {
    result.skipped = true;
    return result;
  }

  const double cos_p = dot(vm, vp) / (nm * np);
  std::vector<double> cos_n(nn);
  std::vector<std::uint8_t> active(nn, 0);
  for (std::size_t i = 0; i < nn; ++i) {
    const auto v = std::span<const double>(vn).subspan(i * d, d);
    cos_n[i] = dot(vm, v) / (nm * norms[i]);
    const double hinge = margin - cos_p + cos_n[i];
    if (hinge > 0.0) {
      result.loss += hinge;
      active[i] = 1;
      ++result.active;
    }
  }
  if (grad == nullptr || result.active == 0) return result;

  std::vector<double> gm(d, 0.0), gp(d, 0.0), gn(d, 0.0);
  const auto n_active = static_cast<double>(result.active);
  add_cosine_grad(gm, -n_active, vm, nm, vp, np, cos_p);
  add_cosine_grad(gp, -n_active, vp, np, vm, nm, cos_p);
  for (std::size_t i = 0; i < nn; ++i) {
    if (active[i] == 0) continue;
    const auto v = std::span<const double>(vn).subspan(i * d, d);
    add_cosine_grad(gm, 1.0, vm, nm, v, norms[i], cos_n[i]);
    std::fill(gn.begin(), gn.end(), 0.0);
    add_cosine_grad(gn, 1.0, v, norms[i], vm, nm, cos_n[i]);
    backprop(*grad, negatives[i], v, gn);
  }
  backprop(*grad, mention, vm, gm);
  backprop(*grad, positive, vp, gp);
  return result;
}

PairLossResult pair_loss(const CharagramModel& model, std::string_view mention,
                         std::string_view positive, std::span<const std::string> negatives,
                         double margin, Gradient* grad) {
  if (mention.empty() || positive.empty()) {
    throw std::invalid_argument("pair_loss strings must be non-empty");
  }
  std::vector<SparseBag> neg_bags;
  neg_bags.reserve(negatives.size());
  for (const auto& n : negatives) {
    if (n.empty()) throw std::invalid_argument("pair_loss strings must be non-empty");
    neg_bags.push_back(model.bag(n));
  }
  return pair_loss(model, model.bag(mention), model.bag(positive), neg_bags, margin, grad);
}

std::vector<EntityOrdinal> sample_negatives(std::size_t kb_size, EntityOrdinal positive,
                                            std::size_t count, Rng& rng) {
  if (kb_size < count + 1) {
    throw std::invalid_argument("KB has " + std::to_string(kb_size) + " entities; need at least " +
                                std::to_string(count + 1) + " to draw " + std::to_string(count) +
                                " negatives");
  }
  // Floyd's sampling over the kb_size - 1 non-positive ordinals.
  const std::size_t pool = kb_size - 1;
  std::vector<EntityOrdinal> picked;
  picked.reserve(count);
  std::unordered_set<std::size_t> seen;
  seen.reserve(count * 2);
  for (std::size_t j = pool - count; j < pool; ++j) {
    std::size_t t = uniform_below(rng, j + 1);
    if (!seen.insert(t).second) {
      t = j;
      seen.insert(t);
    }
    picked.push_back(static_cast<EntityOrdinal>(t >= positive ? t + 1 : t));
  }
  return picked;
}

std::vector<std::string> sample_negative_names(const KnowledgeBase& kb, EntityOrdinal positive,
                                               std::size_t count, Rng& rng) {
  std::vector<std::string> names;
  for (EntityOrdinal e : sample_negatives(kb.size(), positive, count, rng)) {
    names.push_back(kb[e].canonical_name);
  }
  return names;
}

double dev_recall(const CharagramModel& model, const PairDataset& dev, const KnowledgeBase& kb,
                  std::size_t top_k, NameVariants variants, unsigned workers) {
  if (dev.empty()) throw std::invalid_argument("dev set is empty");
  const auto index = EmbeddingIndex::build(encode_kb(model, kb, variants), kb);
  std::vector<Mention> mentions;
  mentions.reserve(dev.size());
  for (const auto& p : dev.pairs) mentions.push_back({p.source, kb[p.entity].id});
  const auto lists = retrieve_topk_batch(model, mentions, index, top_k, workers);
  std::size_t hits = 0;
  for (const auto& list : lists) {
    for (const auto& c : list.items) {
      if (c.entity_id == *list.mention.gold_entity_id) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(dev.size());
}

namespace {

void check_update(const CharagramModel& model, const Gradient& grad, std::size_t epoch,
                  std::size_t batch) {
  auto fail = [&](const std::string& what) {
    throw NumericError("non-finite " + what + " at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch));
  };
  for (NgramId id : grad.touched()) {
    for (double w : model.row(id)) {
      if (!std::isfinite(w)) fail("parameter W[" + std::to_string(id) + "]");
    }
  }
  for (double b : model.bias()) {
    if (!std::isfinite(b)) fail("parameter b");
  }
}

}  // namespace

TrainReport train(CharagramModel& model, const PairDataset& train_set, const PairDataset& dev_set,
                  const KnowledgeBase& kb, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  if (dev_set.empty()) throw std::invalid_argument("dev set is empty");
  if (kb.size() < cfg.negatives + 1) {
    throw std::invalid_argument("KB too small for " + std::to_string(cfg.negatives) +
                                " negatives per positive");
  }

  std::vector<SparseBag> source_bags;
  source_bags.reserve(train_set.size());
  for (const auto& p : train_set.pairs) source_bags.push_back(model.bag(p.source));
  std::vector<SparseBag> name_bags;
  name_bags.reserve(kb.size());
  for (const auto& e : kb.entities()) name_bags.push_back(model.bag(e.canonical_name));

  Rng rng(cfg.seed);
  Gradient grad(model.vocabulary().size(), model.dim());
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<SparseBag> negatives(cfg.negatives);

  TrainReport report;
  double best = -1.0;
  std::size_t since_best = 0;
  std::vector<double> best_weights(model.weights().begin(), model.weights().end());
  std::vector<double> best_bias(model.bias().begin(), model.bias().end());

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    EpochRecord record;
    record.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      grad.clear();
      for (std::size_t i = start; i < end; ++i) {
        const auto& pair = train_set.pairs[order[i]];
        const auto sampled = sample_negatives(kb.size(), pair.entity, cfg.negatives, rng);
        for (std::size_t n = 0; n < sampled.size(); ++n) negatives[n] = name_bags[sampled[n]];
        const auto r = pair_loss(model, source_bags[order[i]], name_bags[pair.entity], negatives,
                                 cfg.margin, &grad);
        if (r.skipped) {
          ++record.skipped_pairs;
          continue;
        }
        if (!std::isfinite(r.loss)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch));
        }
        loss_sum += r.loss;
      }
      const double step = cfg.reduction == BatchReduction::Mean
                              ? cfg.learning_rate / static_cast<double>(end - start)
                              : cfg.learning_rate;
      grad.apply(model, step);
      check_update(model, grad, epoch, batch);
    }
    if (record.skipped_pairs > 0) {
      std::clog << "warning: epoch " << epoch << ": skipped " << record.skipped_pairs
                << " pairs with a zero-norm embedding\n";
    }
    record.loss = loss_sum / static_cast<double>(train_set.size());
    record.dev_recall =
        dev_recall(model, dev_set, kb, cfg.eval_top_k, cfg.dev_variants, cfg.eval_workers);
    if (record.dev_recall > best) {
      best = record.dev_recall;
      since_best = 0;
      report.best_epoch = epoch;
      std::copy(model.weights().begin(), model.weights().end(), best_weights.begin());
      std::copy(model.bias().begin(), model.bias().end(), best_bias.begin());
    } else {
      ++since_best;
    }
    record.best_recall = best;
    report.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (since_best >= cfg.patience) {
      report.stop = StopReason::Patience;
      break;
    }
  }
  if (report.epochs.size() == cfg.max_epochs && since_best < cfg.patience) {
    report.stop = StopReason::MaxEpochs;
  }
  report.best_recall = best;
  std::copy(best_weights.begin(), best_weights.end(), model.weights().begin());
  std::copy(best_bias.begin(), best_bias.end(), model.bias().begin());
  model.check_finite();
  return report;
}

}  // namespace charlink
