#include "charlink/pipeline.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "charlink/synthetic.hpp"
#include "charlink/text.hpp"

namespace charlink {

namespace {

using Json = nlohmann::ordered_json;

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw StageError("config", "bad value for '" + key + "': '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw StageError("config", "bad value for '" + key + "': '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw StageError("config", "bad boolean for '" + key + "': '" + value + "'");
}

std::string fmt_real(double x) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

// An output file written under "<name>.partial" and renamed on commit().
class Artifact {
 public:
  explicit Artifact(std::filesystem::path final_path)
      : final_(std::move(final_path)), partial_(final_.string() + ".partial") {}

  const std::filesystem::path& partial() const { return partial_; }
  const std::filesystem::path& path() const { return final_; }

  void commit() const { std::filesystem::rename(partial_, final_); }

 private:
  std::filesystem::path final_;
  std::filesystem::path partial_;
};

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

RunConfig RunConfig::parse(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path.parent_path());
}

RunConfig RunConfig::parse_text(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  auto resolve = [&](const std::string& v) {
    std::filesystem::path p(v);
    return (p.is_absolute() ? p : base_dir / p).lexically_normal();
  };
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters{
      {"kb", [&](auto&, auto& v) { cfg.kb = resolve(v); }},
      {"aliases", [&](auto&, auto& v) { cfg.aliases = resolve(v); }},
      {"hrl_map", [&](auto&, auto& v) { cfg.hrl_map = resolve(v); }},
      {"train_ee", [&](auto&, auto& v) { cfg.train_ee = resolve(v); }},
      {"train_me", [&](auto&, auto& v) { cfg.train_me = resolve(v); }},
      {"test_mentions", [&](auto&, auto& v) { cfg.test_mentions = resolve(v); }},
      {"out_dir", [&](auto&, auto& v) { cfg.out_dir = resolve(v); }},
      {"synthetic_entities",
       [&](auto& k, auto& v) { cfg.synthetic_entities = parse_number<std::size_t>(k, v); }},
      {"synthetic_seed",
       [&](auto& k, auto& v) { cfg.synthetic_seed = parse_number<std::uint64_t>(k, v); }},
      {"synthetic_alias_fraction",
       [&](auto& k, auto& v) { cfg.synthetic_alias_fraction = parse_real(k, v); }},
      {"dim", [&](auto& k, auto& v) { cfg.dim = parse_number<std::size_t>(k, v); }},
      {"windows",
       [&](auto& k, auto& v) {
         try {
           cfg.windows = WindowSet::parse(v);
         } catch (const std::exception& e) {
           throw StageError("config", "bad value for '" + k + "': " + e.what());
         }
       }},
      {"lowercase", [&](auto& k, auto& v) { cfg.lowercase = parse_bool(k, v); }},
      {"init_scale", [&](auto& k, auto& v) { cfg.init_scale = parse_real(k, v); }},
      {"dev_fraction", [&](auto& k, auto& v) { cfg.dev_fraction = parse_real(k, v); }},
      {"top_k", [&](auto& k, auto& v) { cfg.top_k = parse_number<std::size_t>(k, v); }},
      {"workers", [&](auto& k, auto& v) { cfg.workers = parse_number<unsigned>(k, v); }},
      {"batch_size",
       [&](auto& k, auto& v) { cfg.train.batch_size = parse_number<std::size_t>(k, v); }},
      {"lr", [&](auto& k, auto& v) { cfg.train.learning_rate = parse_real(k, v); }},
      {"negatives",
       [&](auto& k, auto& v) { cfg.train.negatives = parse_number<std::size_t>(k, v); }},
      {"margin", [&](auto& k, auto& v) { cfg.train.margin = parse_real(k, v); }},
      {"patience",
       [&](auto& k, auto& v) { cfg.train.patience = parse_number<std::size_t>(k, v); }},
      {"max_epochs",
       [&](auto& k, auto& v) { cfg.train.max_epochs = parse_number<std::size_t>(k, v); }},
      {"batch_reduction",
       [&](auto& k, auto& v) {
         try {
           cfg.train.reduction = parse_reduction(v);
         } catch (const std::exception& e) {
           throw StageError("config", "bad value for '" + k + "': " + e.what());
         }
       }},
      {"seed", [&](auto& k, auto& v) { cfg.train.seed = parse_number<std::uint64_t>(k, v); }},
  };

  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw StageError("config", "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw StageError("config", "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    it->second(key, value);
  }

  if (cfg.out_dir.empty()) throw StageError("config", "missing required key 'out_dir'");
  if (!cfg.synthetic_entities) {
    if (!cfg.kb) throw StageError("config", "missing required key 'kb'");
    if (!cfg.train_ee && !cfg.train_me) {
      throw StageError("config", "need at least one of 'train_ee' or 'train_me'");
    }
  }
  if (cfg.dim == 0) throw StageError("config", "'dim' must be positive");
  if (cfg.top_k == 0) throw StageError("config", "'top_k' must be positive");
  if (cfg.workers == 0) throw StageError("config", "'workers' must be positive");
  if (!(cfg.dev_fraction > 0.0 && cfg.dev_fraction < 1.0)) {
    throw StageError("config", "'dev_fraction' must lie in (0, 1)");
  }
  cfg.train.eval_top_k = cfg.top_k;
  cfg.train.eval_workers = cfg.workers;
  try {
    cfg.train.validate();
  } catch (const std::exception& e) {
    throw StageError("config", e.what());
  }
  return cfg;
}

std::map<std::string, std::string> RunConfig::effective() const {
  std::map<std::string, std::string> out;
  auto put_path = [&](const char* key, const std::optional<std::filesystem::path>& p) {
    if (p) out[key] = p->lexically_normal().string();
  };
  put_path("kb", kb);
  put_path("aliases", aliases);
  put_path("hrl_map", hrl_map);
  put_path("train_ee", train_ee);
  put_path("train_me", train_me);
  put_path("test_mentions", test_mentions);
  out["out_dir"] = out_dir.lexically_normal().string();
  if (synthetic_entities) {
    out["synthetic_entities"] = std::to_string(*synthetic_entities);
    out["synthetic_seed"] = std::to_string(synthetic_seed);
    out["synthetic_alias_fraction"] = fmt_real(synthetic_alias_fraction);
  }
  out["dim"] = std::to_string(dim);
  out["windows"] = windows.to_string();
  out["lowercase"] = lowercase ? "true" : "false";
  out["init_scale"] = fmt_real(init_scale);
  out["dev_fraction"] = fmt_real(dev_fraction);
  out["top_k"] = std::to_string(top_k);
  out["workers"] = std::to_string(workers);
  out["batch_size"] = std::to_string(train.batch_size);
  out["lr"] = fmt_real(train.learning_rate);
  out["negatives"] = std::to_string(train.negatives);
  out["margin"] = fmt_real(train.margin);
  out["patience"] = std::to_string(train.patience);
  out["max_epochs"] = std::to_string(train.max_epochs);
  out["seed"] = std::to_string(train.seed);
  out["batch_reduction"] = std::string(to_string(train.reduction));
  return out;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

RunResult run_pipeline(const RunConfig& input) {
  RunConfig cfg = input;
  stage("setup", [&] { std::filesystem::create_directories(cfg.out_dir); });
  Json manifest;
  Json artifacts = Json::object();
  const auto rel = [&](const std::filesystem::path& p) {
    return p.lexically_relative(cfg.out_dir).string();
  };

  if (cfg.synthetic_entities) {
    stage("generate", [&] {
      SyntheticConfig sc;
      sc.num_entities = *cfg.synthetic_entities;
      sc.seed = cfg.synthetic_seed;
      sc.alias_fraction = cfg.synthetic_alias_fraction;
      const auto task = make_cipher_task(sc);
      const auto dir = cfg.out_dir / "data";
      task.write(dir);
      cfg.kb = dir / "kb.tsv";
      cfg.aliases = dir / "aliases.tsv";
      cfg.hrl_map = dir / "hrl.tsv";
      cfg.train_ee = dir / "train_ee.tsv";
      cfg.train_me = dir / "train_me.tsv";
      cfg.test_mentions = dir / "test_mentions.tsv";
    });
  }

  KnowledgeBase kb;
  PairDataset train_set;
  PairDataset dev_set;
  std::optional<MentionSet> test;
  Json counts;
  stage("load", [&] {
    kb = KnowledgeBase::load(*cfg.kb, cfg.aliases, cfg.hrl_map);
    PairDataset all;
    if (cfg.train_ee) all = concat(std::move(all), load_pairs(*cfg.train_ee, kb, PairKind::EntityEntity));
    if (cfg.train_me) all = concat(std::move(all), load_pairs(*cfg.train_me, kb, PairKind::MentionEntity));
    std::tie(train_set, dev_set) = split_dev(all, cfg.dev_fraction, cfg.train.seed);
    if (cfg.test_mentions) test = load_mentions(*cfg.test_mentions, &kb);
    counts["entities"] = kb.size();
    counts["effective_names"] = kb.effective_name_count();
    counts["pairs_dropped"] = all.dropped;
    counts["train_pairs"] = train_set.size();
    counts["dev_pairs"] = dev_set.size();
    if (test) {
      counts["test_mentions"] = test->mentions.size();
      counts["test_mentions_dropped"] = test->dropped_unlinkable;
    }
  });

  CharagramModel model;
  stage("vocabulary", [&] {
    auto vocab = build_vocabulary(train_set, kb, cfg.windows, cfg.lowercase);
    counts["vocabulary"] = vocab.size();
    model = CharagramModel::initialize(std::move(vocab), cfg.dim,
                                       cfg.train.seed ^ 0x9e3779b97f4a7c15ull, cfg.lowercase,
                                       cfg.init_scale);
  });

  RunResult result;
  stage("train", [&] {
    Artifact model_file(cfg.out_dir / "model.bin");
    Artifact report_file(cfg.out_dir / "train_report.tsv");
    result.train_report = train(model, train_set, dev_set, kb, cfg.train);
    save_model(model, model_file.partial());
    {
      std::ofstream out(report_file.partial(), std::ios::binary);
      result.train_report.write_tsv(out);
      if (!out) throw std::runtime_error("cannot write " + report_file.partial().string());
    }
    model_file.commit();
    report_file.commit();
    artifacts["model"] = rel(model_file.path());
    artifacts["model_digest"] = file_digest(model_file.path());
    artifacts["train_report"] = rel(report_file.path());
  });

  EmbeddingIndex index;
  stage("index", [&] {
    Artifact index_file(cfg.out_dir / "kb_index.bin");
    index = EmbeddingIndex::build(encode_kb(model, kb), kb);
    index.save(index_file.partial());
    index_file.commit();
    artifacts["kb_index"] = rel(index_file.path());
    artifacts["kb_index_digest"] = file_digest(index_file.path());
  });

  if (test) {
    std::vector<CandidateList> lists;
    stage("retrieve", [&] {
      Artifact cand_file(cfg.out_dir / "candidates.tsv");
      lists = retrieve_topk_batch(model, test->mentions, index, cfg.top_k, cfg.workers);
      write_candidates(cand_file.partial(), lists);
      cand_file.commit();
      artifacts["candidates"] = rel(cand_file.path());
      artifacts["candidates_digest"] = file_digest(cand_file.path());
    });
    stage("evaluate", [&] {
      Artifact tsv(cfg.out_dir / "recall.tsv");
      Artifact json(cfg.out_dir / "recall.json");
      auto report = evaluate_recall(lists, cfg.top_k);
      report.n_mentions_total += test->dropped_unlinkable;
      {
        std::ofstream out(tsv.partial(), std::ios::binary);
        write_recall_tsv(out, report);
        std::ofstream jout(json.partial(), std::ios::binary);
        jout << recall_json(report) << '\n';
        if (!out || !jout) throw std::runtime_error("cannot write recall report");
      }
      tsv.commit();
      json.commit();
      artifacts["recall_tsv"] = rel(tsv.path());
      artifacts["recall_json"] = rel(json.path());
      result.recall = report;
    });
  }

  stage("manifest", [&] {
    Json config = Json::object();
    for (const auto& [k, v] : cfg.effective()) {
      if (k == "out_dir") continue;
      const std::filesystem::path p(v);
      // Inputs under out_dir are recorded relative to it so manifests compare
      // equal across output locations.
      config[k] = (p.is_absolute() && v.rfind(cfg.out_dir.lexically_normal().string(), 0) == 0)
                      ? rel(p)
                      : v;
    }
    manifest["config"] = config;
    manifest["counts"] = counts;
    Json tr;
    tr["epochs_run"] = result.train_report.epochs.size();
    tr["best_epoch"] = result.train_report.best_epoch;
    tr["best_dev_recall"] = result.train_report.best_recall;
    tr["stop_reason"] = std::string(to_string(result.train_report.stop));
    manifest["training"] = tr;
    if (result.recall) {
      manifest["recall"] = Json::parse(recall_json(*result.recall));
    }
    manifest["artifacts"] = artifacts;
    Artifact file(cfg.out_dir / "manifest.json");
    {
      std::ofstream out(file.partial(), std::ios::binary);
      out << manifest.dump(2) << '\n';
      if (!out) throw std::runtime_error("cannot write manifest");
    }
    file.commit();
    result.manifest = file.path();
  });
  return result;
}

}  // namespace charlink
