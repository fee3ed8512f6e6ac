// charlink: command-line front end for training, retrieval and evaluation.

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "charlink/charagram.hpp"
#include "charlink/errors.hpp"
#include "charlink/eval.hpp"
#include "charlink/kb.hpp"
#include "charlink/ngram.hpp"
#include "charlink/pipeline.hpp"
#include "charlink/retrieval.hpp"
#include "charlink/synthetic.hpp"
#include "charlink/text.hpp"
#include "charlink/trainer.hpp"

namespace fs = std::filesystem;
using namespace charlink;

namespace {

using Json = nlohmann::ordered_json;

std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<std::u32string> read_corpus(const fs::path& path, bool lowercase) {
  std::vector<std::u32string> out;
  for (const auto& line : read_lines(path)) out.push_back(prepare_text(line, lowercase));
  return out;
}

std::string fmt(double x) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

// --- train ---------------------------------------------------------------

struct TrainArgs {
  std::string kb, aliases, hrl_map, train_ee, train_me, out;
  double dev_fraction = 0.05;
  std::size_t dim = CharagramModel::kDefaultDim;
  std::string windows = "2,3,4,5";
  bool lowercase = false;
  double init_scale = CharagramModel::kDefaultInitScale;
  std::string reduction = "mean";
  TrainConfig cfg;
};

void add_train(CLI::App& app) {
  auto args = std::make_shared<TrainArgs>();
  auto* sub = app.add_subcommand("train", "Train a charagram encoder on entity/mention pairs");
  sub->add_option("--kb", args->kb, "KB file: id<TAB>name[<TAB>hrl_name]")->required();
  sub->add_option("--aliases", args->aliases, "alias file: id<TAB>alias");
  sub->add_option("--hrl-map", args->hrl_map, "HRL map: id<TAB>hrl_name");
  sub->add_option("--train-ee", args->train_ee, "entity-entity pairs: source<TAB>id");
  sub->add_option("--train-me", args->train_me, "mention-entity pairs: source<TAB>id");
  sub->add_option("--dev-fraction", args->dev_fraction, "share of pairs held out for early stopping")
      ->capture_default_str();
  sub->add_option("--batch-size", args->cfg.batch_size)->capture_default_str();
  sub->add_option("--lr", args->cfg.learning_rate)->capture_default_str();
  sub->add_option("--negatives", args->cfg.negatives, "negatives per positive pair")
      ->capture_default_str();
  sub->add_option("--margin", args->cfg.margin)->capture_default_str();
  sub->add_option("--patience", args->cfg.patience)->capture_default_str();
  sub->add_option("--max-epochs", args->cfg.max_epochs)->capture_default_str();
  sub->add_option("--top-k", args->cfg.eval_top_k, "k for dev recall")->capture_default_str();
  sub->add_option("--seed", args->cfg.seed)->capture_default_str();
  sub->add_option("--dim", args->dim)->capture_default_str();
  sub->add_option("--windows", args->windows)->capture_default_str();
  sub->add_flag("--lowercase", args->lowercase, "lowercase all strings before n-gram extraction");
  sub->add_option("--init-scale", args->init_scale)->capture_default_str();
  sub->add_option("--batch-reduction", args->reduction, "mean or sum of per-pair gradients")
      ->check(CLI::IsMember({"mean", "sum"}))
      ->capture_default_str();
  sub->add_option("--workers", args->cfg.eval_workers, "threads for dev evaluation")
      ->capture_default_str();
  sub->add_option("--out", args->out, "model file")->required();

  sub->callback([args] {
    if (args->train_ee.empty() && args->train_me.empty()) {
      throw CLI::ValidationError("train", "need --train-ee and/or --train-me");
    }
    auto& cfg = args->cfg;
    cfg.reduction = parse_reduction(args->reduction);
    cfg.validate();
    const auto kb = KnowledgeBase::load(args->kb, opt_path(args->aliases), opt_path(args->hrl_map));
    PairDataset all;
    if (!args->train_ee.empty()) {
      all = concat(std::move(all), load_pairs(args->train_ee, kb, PairKind::EntityEntity));
    }
    if (!args->train_me.empty()) {
      all = concat(std::move(all), load_pairs(args->train_me, kb, PairKind::MentionEntity));
    }
    if (all.dropped) std::cerr << "dropped " << all.dropped << " pairs with unknown entity ids\n";
    auto [train_set, dev_set] = split_dev(all, args->dev_fraction, cfg.seed);
    auto vocab = build_vocabulary(train_set, kb, WindowSet::parse(args->windows), args->lowercase);
    auto model = CharagramModel::initialize(std::move(vocab), args->dim,
                                            cfg.seed ^ 0x9e3779b97f4a7c15ULL, args->lowercase,
                                            args->init_scale);
    std::cerr << "train " << train_set.size() << " pairs, dev " << dev_set.size() << ", |V| "
              << model.vocabulary().size() << ", d " << model.dim() << "\n";
    const auto report = train(model, train_set, dev_set, kb, cfg, [](const EpochRecord& e) {
      std::cerr << "epoch " << e.epoch << " loss " << e.loss << " dev " << e.dev_recall << "\n";
    });
    save_model(model, args->out);
    report.write_tsv(std::cout);

    Json summary;
    summary["model"] = fs::path(args->out).filename().string();
    summary["kb_entities"] = kb.size();
    summary["train_pairs"] = train_set.size();
    summary["dev_pairs"] = dev_set.size();
    summary["dropped_pairs"] = all.dropped;
    summary["vocab_size"] = model.vocabulary().size();
    summary["dim"] = model.dim();
    summary["windows"] = model.vocabulary().windows().to_string();
    summary["lowercase"] = model.lowercase();
    summary["batch_size"] = cfg.batch_size;
    summary["learning_rate"] = cfg.learning_rate;
    summary["batch_reduction"] = std::string(to_string(cfg.reduction));
    summary["negatives"] = cfg.negatives;
    summary["margin"] = cfg.margin;
    summary["patience"] = cfg.patience;
    summary["max_epochs"] = cfg.max_epochs;
    summary["top_k"] = cfg.eval_top_k;
    summary["seed"] = cfg.seed;
    summary["epochs_run"] = report.epochs.size();
    summary["best_epoch"] = report.best_epoch;
    summary["best_dev_recall"] = report.best_recall;
    summary["stop"] = std::string(to_string(report.stop));
    auto json_path = fs::path(args->out);
    json_path.replace_extension(".json");
    open_out(json_path) << summary.dump(2) << '\n';
  });
}

// --- encode --------------------------------------------------------------

void add_encode(CLI::App& app) {
  struct Args {
    std::string model, input, output, precision = "f64";
  };
  auto args = std::make_shared<Args>();
  auto* sub = app.add_subcommand("encode", "Embed strings with a trained model");
  sub->add_option("--model", args->model)->required()->check(CLI::ExistingFile);
  sub->add_option("--input", args->input, "one string per line (first TSV column is used)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--output", args->output, "binary embeddings file")->required();
  sub->add_option("--precision", args->precision)
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  sub->callback([args] {
    const auto model = load_model(args->model);
    EmbeddingMatrix m;
    m.dim = model.dim();
    for (const auto& line : read_lines(args->input)) {
      const auto text = line.substr(0, line.find('\t'));
      const auto v = model.encode(text);
      m.rows.insert(m.rows.end(), v.begin(), v.end());
    }
    save_embeddings(m, args->output, args->precision == "f32");
    std::cerr << "encoded " << m.size() << " strings\n";
  });
}

// --- index ---------------------------------------------------------------

void add_index(CLI::App& app) {
  struct Args {
    std::string model, kb, aliases, hrl_map, out;
    bool no_aliases = false, no_hrl = false;
  };
  auto args = std::make_shared<Args>();
  auto* sub = app.add_subcommand("index", "Embed every KB name variant into a search index");
  sub->add_option("--model", args->model)->required()->check(CLI::ExistingFile);
  sub->add_option("--kb", args->kb)->required()->check(CLI::ExistingFile);
  sub->add_option("--aliases", args->aliases);
  sub->add_option("--hrl-map", args->hrl_map);
  sub->add_flag("--no-aliases", args->no_aliases, "score canonical names only (plus HRL)");
  sub->add_flag("--no-hrl", args->no_hrl, "ignore HRL counterpart names");
  sub->add_option("--out", args->out)->required();
  sub->callback([args] {
    const auto model = load_model(args->model);
    const auto kb = KnowledgeBase::load(args->kb, opt_path(args->aliases), opt_path(args->hrl_map));
    const NameVariants variants{!args->no_aliases, !args->no_hrl};
    const auto index = EmbeddingIndex::build(encode_kb(model, kb, variants), kb);
    index.save(args->out);
    std::cerr << "indexed " << index.num_rows() << " rows for " << index.num_entities()
              << " entities\n";
  });
}

// --- retrieve ------------------------------------------------------------

void add_retrieve(CLI::App& app) {
  struct Args {
    std::string model, kb_index, mentions, out;
    std::size_t top_k = 30;
    unsigned workers = 1;
  };
  auto args = std::make_shared<Args>();
  auto* sub = app.add_subcommand("retrieve", "Exact top-k candidate retrieval for mentions");
  sub->add_option("--model", args->model)->required()->check(CLI::ExistingFile);
  sub->add_option("--kb-index", args->kb_index, "index written by `index`")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--mentions", args->mentions, "surface[<TAB>gold_id]")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--top-k", args->top_k)->capture_default_str();
  sub->add_option("--workers", args->workers)->capture_default_str();
  sub->add_option("--out", args->out)->required();
  sub->callback([args] {
    const auto model = load_model(args->model);
    const auto index = EmbeddingIndex::load(args->kb_index);
    const auto mentions = load_mentions(args->mentions);
    const auto lists =
        retrieve_topk_batch(model, mentions.mentions, index, args->top_k, args->workers);
    std::size_t empty = 0;
    for (const auto& l : lists) empty += l.items.empty();
    if (empty) std::cerr << empty << " mentions embedded to the zero vector; no candidates\n";
    write_candidates(args->out, lists);
  });
}

// --- merge ---------------------------------------------------------------

void add_merge(CLI::App& app) {
  struct Args {
    std::string lookup, charagram, out;
    MergeParams params;
  };
  auto args = std::make_shared<Args>();
  auto* sub = app.add_subcommand("merge", "Combine lookup scores with charagram candidates");
  sub->add_option("--lookup", args->lookup, "mention<TAB>entity_id<TAB>score_wm")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--charagram", args->charagram, "candidates from `retrieve`")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--alpha", args->params.alpha)->capture_default_str();
  sub->add_option("--beta", args->params.beta)->capture_default_str();
  sub->add_option("--top-n", args->params.top_n)->capture_default_str();
  sub->add_option("--out", args->out)->required();
  sub->callback([args] {
    const auto table = LookupTable::load(args->lookup);
    auto charagram = read_candidates(args->charagram);
    std::vector<CandidateList> merged;
    merged.reserve(charagram.size());
    for (auto& list : charagram) {
      // Lists longer than the softmax domain are cut to its top entries.
      if (list.items.size() > args->params.top_n) list.items.resize(args->params.top_n);
      const auto lookup = lookup_generator(table, list.mention, args->params.top_n);
      merged.push_back(merge_scores(lookup, list, args->params));
    }
    write_candidates(args->out, merged);
  });
}

// --- evaluate ------------------------------------------------------------

void add_evaluate(CLI::App& app) {
  struct Args {
    std::string candidates, mentions, kb, out, json;
    std::size_t top_k = 30;
  };
  auto args = std::make_shared<Args>();
  auto* sub = app.add_subcommand("evaluate", "Gold candidate recall at k");
  sub->add_option("--candidates", args->candidates)->required()->check(CLI::ExistingFile);
  sub->add_option("--mentions", args->mentions, "surface<TAB>gold_id")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--top-k", args->top_k)->capture_default_str();
  sub->add_option("--kb", args->kb, "drop mentions whose gold id is not in this KB");
  sub->add_option("--out", args->out, "TSV report (default: stdout)");
  sub->add_option("--json", args->json, "JSON report (default: <out>.json, or none)");
  sub->callback([args] {
    std::optional<KnowledgeBase> kb;
    if (!args->kb.empty()) kb = KnowledgeBase::load(args->kb);
    const auto mentions = load_mentions(args->mentions, kb ? &*kb : nullptr);
    const auto candidates = read_candidates(args->candidates);
    const auto lists = attach_gold(mentions.mentions, candidates);
    auto report = evaluate_recall(lists, args->top_k);
    report.n_mentions_total += mentions.dropped_unlinkable + (mentions.mentions.size() - lists.size());
    if (args->out.empty()) {
      write_recall_tsv(std::cout, report);
    } else {
      auto out = open_out(args->out);
      write_recall_tsv(out, report);
    }
    std::string json_path = args->json;
    if (json_path.empty() && !args->out.empty()) {
      json_path = fs::path(args->out).replace_extension(".json").string();
    }
    if (!json_path.empty()) open_out(json_path) << recall_json(report) << '\n';
  });
}

// --- neighbors -----------------------------------------------------------

void add_neighbors(CLI::App& app) {
  struct Args {
    std::string model, queries;
    std::size_t k = 5;
  };
  auto args = std::make_shared<Args>();
  auto* sub = app.add_subcommand("neighbors", "Nearest source-side n-grams of query n-grams");
  sub->add_option("--model", args->model)->required()->check(CLI::ExistingFile);
  sub->add_option("--queries", args->queries, "one n-gram per line; <s> and </s> mark boundaries")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--k", args->k)->capture_default_str();
  sub->callback([args] {
    const auto model = load_model(args->model);
    std::vector<std::u32string> queries;
    for (const auto& line : read_lines(args->queries)) {
      queries.push_back(parse_display_ngram(trim(line)));
    }
    std::cout << "query\trank\tneighbor\tcosine\n";
    for (const auto& r : ngram_neighbors(model, queries, args->k)) {
      const auto q = display_ngram(r.query);
      if (r.out_of_vocabulary) {
        std::cerr << "out of vocabulary: " << q << '\n';
        continue;
      }
      for (std::size_t i = 0; i < r.neighbors.size(); ++i) {
        std::cout << q << '\t' << i + 1 << '\t' << display_ngram(r.neighbors[i].ngram) << '\t'
                  << fmt(r.neighbors[i].cosine) << '\n';
      }
    }
  });
}

// --- select-pivot --------------------------------------------------------

// NAME=PATH[:RECALL]; the recall suffix is only taken if it parses as a number.
PivotCandidate parse_candidate(const std::string& spec, bool lowercase) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw CLI::ValidationError("--candidate", "expected NAME=PATH[:RECALL], got '" + spec + "'");
  }
  PivotCandidate c;
  c.name = spec.substr(0, eq);
  std::string path = spec.substr(eq + 1);
  if (const auto colon = path.rfind(':'); colon != std::string::npos) {
    const auto tail = path.substr(colon + 1);
    double recall = 0.0;
    const auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), recall);
    if (ec == std::errc{} && ptr == tail.data() + tail.size() && !tail.empty()) {
      c.dev_recall = recall;
      path.resize(colon);
    }
  }
  c.corpus = read_corpus(path, lowercase);
  return c;
}

void add_select_pivot(CLI::App& app) {
  struct Args {
    std::string lrl_corpus, windows = "2,3,4,5";
    std::vector<std::string> candidates;
    double threshold = 0.75;
    bool lowercase = false;
  };
  auto args = std::make_shared<Args>();
  auto* sub = app.add_subcommand("select-pivot", "Rank pivot HRLs by n-gram overlap with the LRL");
  sub->add_option("--lrl-corpus", args->lrl_corpus, "one string per line")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--candidate", args->candidates, "NAME=CORPUS_PATH[:RECALL]; repeatable")
      ->required();
  sub->add_option("--threshold", args->threshold, "minimum dev recall")->capture_default_str();
  sub->add_option("--windows", args->windows)->capture_default_str();
  sub->add_flag("--lowercase", args->lowercase);
  sub->callback([args] {
    const auto lrl = read_corpus(args->lrl_corpus, args->lowercase);
    std::vector<PivotCandidate> cands;
    for (const auto& c : args->candidates) cands.push_back(parse_candidate(c, args->lowercase));
    const auto scores =
        select_pivot(lrl, cands, WindowSet::parse(args->windows), args->threshold);
    std::cout << "name\toverlap\teligible\n";
    for (const auto& s : scores) {
      std::cout << s.name << '\t' << fmt(s.overlap) << '\t' << (s.eligible ? "true" : "false")
                << '\n';
    }
  });
}

// --- run / synth ---------------------------------------------------------

void add_run(CLI::App& app) {
  auto config = std::make_shared<std::string>();
  auto* sub = app.add_subcommand("run", "End-to-end run driven by a key = value config file");
  sub->add_option("--config", *config)->required()->check(CLI::ExistingFile);
  sub->callback([config] {
    const auto cfg = RunConfig::parse(*config);
    const auto result = run_pipeline(cfg);
    std::cerr << "best epoch " << result.train_report.best_epoch << " of "
              << result.train_report.epochs.size() << "\n";
    if (result.recall) {
      std::cout << "recall@" << result.recall->top_k << '\t' << fmt(result.recall->recall) << '\n';
    }
    std::cout << "manifest\t" << result.manifest.string() << '\n';
  });
}

void add_synth(CLI::App& app) {
  auto cfg = std::make_shared<SyntheticConfig>();
  auto out = std::make_shared<std::string>();
  auto* sub = app.add_subcommand("synth", "Write a synthetic cipher transliteration task");
  sub->add_option("--entities", cfg->num_entities)->capture_default_str();
  sub->add_option("--heldout-fraction", cfg->heldout_fraction)->capture_default_str();
  sub->add_option("--perturb-fraction", cfg->perturb_fraction)->capture_default_str();
  sub->add_option("--alias-fraction", cfg->alias_fraction)->capture_default_str();
  sub->add_option("--seed", cfg->seed)->capture_default_str();
  sub->add_option("--out-dir", *out)->required();
  sub->callback([cfg, out] {
    const auto task = make_cipher_task(*cfg);
    task.write(*out);
    std::cerr << "wrote " << task.kb.size() << " entities to " << *out << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"charlink: character n-gram candidate generation for cross-lingual entity linking"};
  app.require_subcommand(1);
  add_train(app);
  add_encode(app);
  add_index(app);
  add_retrieve(app);
  add_merge(app);
  add_evaluate(app);
  add_neighbors(app);
  add_select_pivot(app);
  add_run(app);
  add_synth(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
