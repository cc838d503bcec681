// Copyright 2026 The dprel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dprel/cli.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "dprel/accountant.h"
#include "dprel/checkpoint.h"
#include "dprel/evaluation.h"
#include "dprel/graph_store.h"
#include "dprel/rr_baseline.h"
#include "dprel/trainer.h"
#include "json.hpp"

#ifndef DPREL_VERSION
#define DPREL_VERSION "unknown"
#endif

namespace dprel {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Config keys by section. Each key overrides the flag "--" + key with '_'
// replaced by '-'; a key only applies to subcommands that define that flag.
const std::map<std::string, std::vector<std::string>>& ConfigSections() {
  static const auto* sections =
      new std::map<std::string, std::vector<std::string>>{
          {"run", {"seed", "threads", "data", "out_dir", "out", "checkpoint",
                   "manifest"}},
          {"graph", {"entities", "relations", "labels", "format", "vocab",
                     "max_len", "vocab_size"}},
          {"synth", {"num_entities", "communities", "p_in", "p_out",
                     "min_tokens", "max_tokens", "topic_weight"}},
          {"split", {"eval_fraction"}},
          {"sampler", {"negatives", "batch", "sampling_ratio"}},
          {"encoder", {"dims", "mode", "rank", "alpha"}},
          {"objective", {"loss", "temperature", "margin"}},
          {"privacy", {"clip", "sigma", "epsilon", "delta", "noise_placement",
                       "non_private"}},
          {"optimizer", {"optimizer", "lr", "schedule", "warmup", "beta1",
                         "beta2", "adam_eps"}},
          {"train", {"steps"}},
          {"accountant", {"q", "jsonl"}},
          {"evaluation", {"eval_batch", "shots", "pairs", "bins", "histogram",
                          "members", "non_members"}},
          {"rr", {"allow_large"}},
      };
  return *sections;
}

std::string FlagOf(const std::string& key) {
  std::string flag = "--" + key;
  std::replace(flag.begin(), flag.end(), '_', '-');
  return flag;
}

struct ConfigEntry {
  std::string section;
  std::string key;
  std::vector<std::string> values;
};

std::string JsonScalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

absl::StatusOr<std::vector<ConfigEntry>> ReadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open config ", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  std::vector<ConfigEntry> entries;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    // A run manifest: its "config" object has the same section layout.
    const json manifest = json::parse(text, nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("config") ||
        !manifest["config"].is_object()) {
      return absl::InvalidArgumentError(
          absl::StrCat(path, ": not a manifest with a config object"));
    }
    for (const auto& [section, keys] : manifest["config"].items()) {
      if (!keys.is_object()) {
        return absl::InvalidArgumentError(
            absl::StrCat(path, ": section ", section, " is not an object"));
      }
      for (const auto& [key, value] : keys.items()) {
        ConfigEntry e{section, key, {}};
        if (value.is_null()) continue;
        if (value.is_array()) {
          for (const json& v : value) e.values.push_back(JsonScalar(v));
        } else {
          e.values.push_back(JsonScalar(value));
        }
        entries.push_back(std::move(e));
      }
    }
  } else {
    std::istringstream stream(text);
    std::vector<CLI::ConfigItem> items;
    try {
      items = CLI::ConfigTOML().from_config(stream);
    } catch (const CLI::Error& e) {
      return absl::InvalidArgumentError(absl::StrCat(path, ": ", e.what()));
    }
    for (const CLI::ConfigItem& item : items) {
      if (item.name == "++" || item.name == "--") continue;
      if (item.parents.size() != 1) {
        return absl::InvalidArgumentError(absl::StrCat(
            path, ": key '", item.fullname(), "' must sit in one [section]"));
      }
      entries.push_back({item.parents[0], item.name, item.inputs});
    }
  }
  for (const ConfigEntry& e : entries) {
    const auto it = ConfigSections().find(e.section);
    if (it == ConfigSections().end() ||
        std::find(it->second.begin(), it->second.end(), e.key) ==
            it->second.end()) {
      return absl::InvalidArgumentError(absl::StrCat(
          path, ": unknown config key ", e.section, ".", e.key));
    }
  }
  return entries;
}

bool ArgsMention(const std::vector<std::string>& args, const std::string& flag) {
  for (const std::string& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Every option value by config key, for the manifest.
json EffectiveConfig(const CLI::App& sub) {
  json config = json::object();
  for (const auto& [section, keys] : ConfigSections()) {
    for (const std::string& key : keys) {
      const CLI::Option* opt = sub.get_option_no_throw(FlagOf(key));
      if (opt == nullptr) continue;
      std::vector<std::string> values;
      if (opt->count() > 0) {
        values = opt->results();
      } else if (!opt->get_default_str().empty()) {
        values = {opt->get_default_str()};
      } else {
        continue;
      }
      config[section][key] = values.size() == 1 && opt->get_expected_max() <= 1
                                 ? json(values[0])
                                 : json(values);
    }
  }
  return config;
}

struct Options {
  uint64_t seed = 0;
  int threads = 1;
  std::string config;
  std::string data;
  std::string out_dir;
  std::string out;
  std::string checkpoint;
  std::string manifest;
  // graph
  std::string entities;
  std::string relations;
  std::string labels;
  std::string format = "ids";
  std::string vocab;
  int max_len = kDefaultMaxLen;
  int vocab_size = 0;
  SynthParams synth;
  double eval_fraction = 0.1;
  // training
  int negatives = 8;
  int batch = 256;
  double sampling_ratio = 0.0;
  std::string dims = "32,32,32";
  std::string mode = "full";
  int rank = 8;
  double alpha = 16.0;
  std::string loss = "infonce";
  double temperature = 1.0;
  double margin = 1.0;
  double clip = 1.0;
  double sigma = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  std::string noise_placement = "once";
  bool non_private = false;
  std::string optimizer = "adam";
  double lr = 1e-2;
  std::string schedule = "constant";
  int64_t warmup = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t steps = 2000;
  // accountant
  std::vector<double> qs;
  std::vector<double> sigmas;
  std::vector<int64_t> step_list;
  bool jsonl = false;
  // evaluation
  int eval_batch = kDefaultEvalBatch;
  int shots = 8;
  int pairs = kDefaultMiaPairs;
  int bins = 20;
  std::string histogram;
  std::string members;
  std::string non_members;
  bool allow_large = false;
};

struct CliError {
  int code;
  std::string message;
};

CliError FromStatus(const absl::Status& s) {
  switch (s.code()) {
    case absl::StatusCode::kNotFound:
    case absl::StatusCode::kInvalidArgument:
    case absl::StatusCode::kDataLoss:
    case absl::StatusCode::kFailedPrecondition:
    case absl::StatusCode::kOutOfRange:
      return {kExitInput, std::string(s.message())};
    default:
      return {kExitRuntime, std::string(s.message())};
  }
}

CliError Usage(std::string message) { return {kExitUsage, std::move(message)}; }

using Result = std::optional<CliError>;

#define DPREL_TRY(expr)                                      \
  do {                                                       \
    if (absl::Status _s = (expr); !_s.ok()) return FromStatus(_s); \
  } while (0)

#define DPREL_ASSIGN(lhs, expr)                              \
  auto lhs##_or = (expr);                                    \
  if (!lhs##_or.ok()) return FromStatus(lhs##_or.status());  \
  auto& lhs = *lhs##_or

absl::Status WriteText(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot write ", path));
  out << text;
  return out ? absl::OkStatus()
             : absl::DataLossError(absl::StrCat("short write to ", path));
}

absl::Status EnsureDir(const std::string& dir) {
  if (dir.empty()) return absl::InvalidArgumentError("--out-dir is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    return absl::UnavailableError(
        absl::StrCat("cannot create ", dir, ": ", ec.message()));
  }
  return absl::OkStatus();
}

std::string InDir(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

json GraphMeta(const TextAttributedGraph& g) {
  return {{"num_entities", g.num_entities()},
          {"num_relations", g.relations().size()},
          {"vocab_size", g.vocab_size()},
          {"max_len", g.max_len()}};
}

absl::Status WriteDataGraph(const TextAttributedGraph& g,
                            const std::string& dir) {
  if (absl::Status s = SaveGraph(g, InDir(dir, "entities.tsv"),
                                 InDir(dir, "relations.tsv"));
      !s.ok()) {
    return s;
  }
  return WriteText(InDir(dir, "graph.json"), GraphMeta(g).dump(2) + "\n");
}

// A data directory holds entities.tsv, relations.tsv and graph.json, plus
// train.tsv / eval.tsv after `split` and optionally labels.tsv.
absl::StatusOr<TextAttributedGraph> LoadDataGraph(const std::string& dir) {
  if (dir.empty()) return absl::InvalidArgumentError("--data is required");
  LoadOptions opts;
  std::ifstream meta_in(InDir(dir, "graph.json"));
  if (meta_in) {
    const json meta = json::parse(meta_in, nullptr, false);
    if (meta.is_discarded()) {
      return absl::DataLossError(absl::StrCat(dir, "/graph.json is malformed"));
    }
    opts.vocab_size = meta.value("vocab_size", 0);
    opts.max_len = meta.value("max_len", kDefaultMaxLen);
  }
  return LoadGraph(InDir(dir, "entities.tsv"), InDir(dir, "relations.tsv"),
                   opts);
}

absl::StatusOr<std::vector<Relation>> LoadRelationsOr(
    const std::string& path, const std::string& fallback, int n) {
  return LoadRelations(path.empty() ? fallback : path, n);
}

absl::StatusOr<GraphSplit> LoadDataSplit(const std::string& dir,
                                         const TextAttributedGraph& g) {
  GraphSplit split;
  split.num_entities = g.num_entities();
  auto train = LoadRelations(InDir(dir, "train.tsv"), g.num_entities());
  if (!train.ok()) return train.status();
  auto eval = LoadRelations(InDir(dir, "eval.tsv"), g.num_entities());
  if (!eval.ok()) return eval.status();
  split.train = std::move(*train);
  split.eval = std::move(*eval);
  return split;
}

absl::StatusOr<std::vector<int>> ParseDims(const std::string& text) {
  std::vector<int> dims;
  for (absl::string_view part : absl::StrSplit(text, ',', absl::SkipEmpty())) {
    int v = 0;
    if (!absl::SimpleAtoi(part, &v) || v < 1) {
      return absl::InvalidArgumentError(
          absl::StrCat("--dims expects positive integers, got '", text, "'"));
    }
    dims.push_back(v);
  }
  if (dims.size() < 2) {
    return absl::InvalidArgumentError("--dims needs at least two widths");
  }
  return dims;
}

json ReportJson(const PrivacyReport& r) {
  return {{"C", r.clip_norm},         {"sigma", r.sigma},
          {"q", r.q},                 {"T", r.steps},
          {"delta", r.delta},         {"epsilon", r.epsilon},
          {"best_order", r.best_order}, {"accountant_kind", r.accountant_kind}};
}

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int Run(const std::vector<std::string>& raw_args);

 private:
  void Define(CLI::App& app);
  Result Dispatch(const std::string& name, CLI::App& sub);
  absl::Status WriteManifest(const CLI::App& sub, const std::string& path,
                             const json& extra);
  std::string ManifestPath(const std::string& default_path) const {
    return opt_.manifest.empty() ? default_path : opt_.manifest;
  }

  Result Ingest(CLI::App& sub);
  Result Synth(CLI::App& sub);
  Result Split(CLI::App& sub);
  Result Train(CLI::App& sub);
  Result Eval(CLI::App& sub);
  Result Probe(CLI::App& sub);
  Result Attack(CLI::App& sub);
  Result Account(CLI::App& sub);
  Result Calibrate(CLI::App& sub);
  Result RrBaseline(CLI::App& sub);

  absl::StatusOr<RowMatrix> EmbedFromCheckpoint(const TextAttributedGraph& g);
  absl::Status EmitRecord(const CLI::App& sub, const json& record);

  std::ostream& out_;
  std::ostream& err_;
  Options opt_;
};

void AddCommon(CLI::App* sub, Options& o, bool data, bool seed, bool threads) {
  sub->add_option("--config", o.config,
                  "config file (key = value sections) or run manifest");
  sub->add_option("--manifest", o.manifest, "manifest path override");
  if (data) sub->add_option("--data", o.data, "data directory");
  if (seed) sub->add_option("--seed", o.seed, "master seed");
  if (threads) {
    sub->add_option("--threads", o.threads, "worker threads")
        ->check(CLI::PositiveNumber);
  }
}

void Runner::Define(CLI::App& app) {
  Options& o = opt_;
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "validate and canonicalize a graph");
  AddCommon(ingest, o, false, false, false);
  ingest->add_option("--entities", o.entities, "entities file")->required();
  ingest->add_option("--relations", o.relations, "relations file")->required();
  ingest->add_option("--labels", o.labels, "optional labels file");
  ingest->add_option("--format", o.format, "entity record format")
      ->check(CLI::IsMember({"ids", "text"}));
  ingest->add_option("--vocab", o.vocab, "vocabulary file for --format text");
  ingest->add_option("--max-len", o.max_len, "token sequence width");
  ingest->add_option("--vocab-size", o.vocab_size, "0 infers from the data");
  ingest->add_option("--out-dir", o.out_dir, "output data directory");

  auto* synth = app.add_subcommand("synth", "generate a planted-partition graph");
  AddCommon(synth, o, false, true, false);
  synth->add_option("--num-entities", o.synth.num_entities);
  synth->add_option("--communities", o.synth.num_communities);
  synth->add_option("--p-in", o.synth.p_in);
  synth->add_option("--p-out", o.synth.p_out);
  synth->add_option("--vocab-size", o.synth.vocab_size);
  synth->add_option("--max-len", o.synth.max_len);
  synth->add_option("--min-tokens", o.synth.min_tokens);
  synth->add_option("--max-tokens", o.synth.max_tokens);
  synth->add_option("--topic-weight", o.synth.topic_weight);
  synth->add_option("--out-dir", o.out_dir, "output data directory");

  auto* split = app.add_subcommand("split", "split relations into train/eval");
  AddCommon(split, o, true, true, false);
  split->add_option("--eval-fraction", o.eval_fraction);
  split->add_option("--out-dir", o.out_dir, "defaults to --data");

  auto* train = app.add_subcommand("train", "train an encoder");
  AddCommon(train, o, true, true, true);
  train->add_option("--out-dir", o.out_dir, "run directory");
  train->add_option("--negatives", o.negatives, "negatives per tuple (k)");
  train->add_option("--batch", o.batch, "expected batch size (b)");
  train->add_option("--sampling-ratio", o.sampling_ratio,
                    "Poisson rate; 0 means batch / |E_train|");
  train->add_option("--dims", o.dims, "layer widths, embedding first");
  train->add_option("--mode", o.mode)->check(CLI::IsMember({"full", "adapter"}));
  train->add_option("--rank", o.rank, "adapter rank");
  train->add_option("--alpha", o.alpha, "adapter scale numerator");
  train->add_option("--loss", o.loss)->check(CLI::IsMember({"infonce", "hinge"}));
  train->add_option("--temperature", o.temperature);
  train->add_option("--margin", o.margin);
  train->add_option("--clip", o.clip, "per-tuple clipping norm C");
  // No captured defaults: recording them in a manifest would make the pair
  // look explicitly set, and the two are mutually exclusive.
  train->add_option("--sigma", o.sigma, "noise multiplier")->default_str("");
  train->add_option("--epsilon", o.epsilon, "target epsilon (calibrates sigma)")
      ->default_str("");
  train->add_option("--delta", o.delta, "0 means 1 / |E_train|");
  train->add_option("--noise-placement", o.noise_placement)
      ->check(CLI::IsMember({"once", "per-tuple"}));
  train->add_flag("--non-private", o.non_private,
                  "no clipping and no noise");
  train->add_option("--optimizer", o.optimizer)
      ->check(CLI::IsMember({"sgd", "adam"}));
  train->add_option("--lr", o.lr);
  train->add_option("--schedule", o.schedule)
      ->check(CLI::IsMember({"constant", "linear", "cosine"}));
  train->add_option("--warmup", o.warmup);
  train->add_option("--beta1", o.beta1);
  train->add_option("--beta2", o.beta2);
  train->add_option("--adam-eps", o.adam_eps);
  train->add_option("--steps", o.steps);

  auto* eval = app.add_subcommand("eval", "PREC@1 / MRR on held-out relations");
  AddCommon(eval, o, true, true, true);
  eval->add_option("--checkpoint", o.checkpoint)->required();
  eval->add_option("--relations", o.relations, "defaults to <data>/eval.tsv");
  eval->add_option("--eval-batch", o.eval_batch);
  eval->add_option("--out", o.out, "also write the record here");

  auto* probe = app.add_subcommand("probe", "few-shot linear probe F1");
  AddCommon(probe, o, true, true, true);
  probe->add_option("--checkpoint", o.checkpoint)->required();
  probe->add_option("--labels", o.labels, "defaults to <data>/labels.tsv");
  probe->add_option("--shots", o.shots);
  probe->add_option("--out", o.out, "also write the record here");

  auto* attack = app.add_subcommand("attack", "membership inference audit");
  AddCommon(attack, o, true, true, true);
  attack->add_option("--checkpoint", o.checkpoint)->required();
  attack->add_option("--members", o.members, "defaults to <data>/train.tsv");
  attack->add_option("--non-members", o.non_members,
                     "defaults to <data>/eval.tsv");
  attack->add_option("--pairs", o.pairs);
  attack->add_option("--histogram", o.histogram, "score histogram table");
  attack->add_option("--bins", o.bins);
  attack->add_option("--out", o.out, "also write the record here");

  auto* account = app.add_subcommand("account", "epsilon for (q, sigma, T)");
  AddCommon(account, o, false, false, false);
  account->add_option("--q", o.qs, "sampling ratios")->required();
  account->add_option("--sigma", o.sigmas, "noise multipliers")->required();
  account->add_option("--steps", o.step_list, "step counts")->required();
  account->add_option("--delta", o.delta)->required();
  account->add_flag("--jsonl", o.jsonl, "line-delimited records");
  account->add_option("--out", o.out, "also write the records here");

  auto* calibrate = app.add_subcommand("calibrate", "sigma for a target epsilon");
  AddCommon(calibrate, o, false, false, false);
  calibrate->add_option("--epsilon", o.epsilon)->required();
  calibrate->add_option("--delta", o.delta)->required();
  calibrate->add_option("--q", o.qs)->required()->expected(1);
  calibrate->add_option("--steps", o.steps)->required();
  calibrate->add_option("--out", o.out, "also write the record here");

  auto* rr = app.add_subcommand("rr-baseline", "randomized-response relations");
  AddCommon(rr, o, true, true, false);
  rr->add_option("--epsilon", o.epsilon)->required();
  rr->add_flag("--allow-large", o.allow_large, "lift the 5000-entity guard");
  rr->add_option("--out", o.out, "output relations file")->required();
}

absl::Status Runner::WriteManifest(const CLI::App& sub, const std::string& path,
                                   const json& extra) {
  if (path.empty()) return absl::OkStatus();
  json m;
  m["tool"] = "dprel";
  m["version"] = DPREL_VERSION;
  m["command"] = sub.get_name();
  m["config"] = EffectiveConfig(sub);
  m["seeds"] = {{"seed", opt_.seed},
                {"streams", {"init", "split", "synth", "sampling", "negatives",
                             "noise", "eval", "rr"}}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  return WriteText(path, m.dump(2) + "\n");
}

absl::Status Runner::EmitRecord(const CLI::App& sub, const json& record) {
  out_ << record.dump() << "\n";
  if (opt_.out.empty()) return WriteManifest(sub, opt_.manifest, {{"result", record}});
  if (absl::Status s = WriteText(opt_.out, record.dump() + "\n"); !s.ok()) {
    return s;
  }
  return WriteManifest(sub, ManifestPath(opt_.out + ".manifest.json"),
                       {{"result", record}});
}

Result Runner::Ingest(CLI::App& sub) {
  LoadOptions lo;
  lo.format = opt_.format == "text" ? EntityFormat::kRawText
                                    : EntityFormat::kTokenIds;
  lo.vocab_path = opt_.vocab;
  lo.max_len = opt_.max_len;
  lo.vocab_size = opt_.vocab_size;
  DPREL_ASSIGN(graph, LoadGraph(opt_.entities, opt_.relations, lo));
  DPREL_TRY(EnsureDir(opt_.out_dir));
  DPREL_TRY(WriteDataGraph(graph, opt_.out_dir));
  if (!opt_.labels.empty()) {
    DPREL_ASSIGN(labels, LoadLabels(opt_.labels, graph.num_entities()));
    DPREL_TRY(SaveLabels(labels, InDir(opt_.out_dir, "labels.tsv")));
  }
  const json meta = GraphMeta(graph);
  out_ << meta.dump() << "\n";
  DPREL_TRY(WriteManifest(sub, ManifestPath(InDir(opt_.out_dir, "manifest.json")),
                          {{"graph", meta}}));
  return std::nullopt;
}

Result Runner::Synth(CLI::App& sub) {
  SynthParams p = opt_.synth;
  p.seed = opt_.seed;
  DPREL_ASSIGN(synth, SynthGraph(p));
  DPREL_TRY(EnsureDir(opt_.out_dir));
  DPREL_TRY(WriteDataGraph(synth.graph, opt_.out_dir));
  DPREL_TRY(SaveLabels(synth.community, InDir(opt_.out_dir, "labels.tsv")));
  const json meta = GraphMeta(synth.graph);
  out_ << meta.dump() << "\n";
  DPREL_TRY(WriteManifest(sub, ManifestPath(InDir(opt_.out_dir, "manifest.json")),
                          {{"graph", meta}}));
  return std::nullopt;
}

Result Runner::Split(CLI::App& sub) {
  DPREL_ASSIGN(graph, LoadDataGraph(opt_.data));
  DPREL_ASSIGN(split, SplitRelations(graph, opt_.eval_fraction, opt_.seed));
  const std::string dir = opt_.out_dir.empty() ? opt_.data : opt_.out_dir;
  DPREL_TRY(EnsureDir(dir));
  DPREL_TRY(SaveRelations(split.train, InDir(dir, "train.tsv")));
  DPREL_TRY(SaveRelations(split.eval, InDir(dir, "eval.tsv")));
  const json summary = {{"train", split.train.size()},
                        {"eval", split.eval.size()}};
  out_ << summary.dump() << "\n";
  DPREL_TRY(WriteManifest(
      sub, ManifestPath(InDir(dir, "split.manifest.json")), {{"split", summary}}));
  return std::nullopt;
}

Result Runner::Train(CLI::App& sub) {
  const bool has_eps = sub.get_option("--epsilon")->count() > 0;
  const bool has_sigma = sub.get_option("--sigma")->count() > 0;
  if (has_eps && has_sigma) {
    return Usage("conflict: --epsilon and --sigma are both set (config or flags)");
  }
  if (opt_.non_private && (has_eps || has_sigma)) {
    return Usage("conflict: --non-private excludes --epsilon and --sigma");
  }
  DPREL_ASSIGN(graph, LoadDataGraph(opt_.data));
  DPREL_ASSIGN(split, LoadDataSplit(opt_.data, graph));
  DPREL_ASSIGN(dims, ParseDims(opt_.dims));

  TrainConfig c;
  c.encoder.vocab_size = graph.vocab_size();
  c.encoder.dims = dims;
  c.encoder.mode = opt_.mode == "adapter" ? TrainMode::kAdapter : TrainMode::kFull;
  c.encoder.rank = c.encoder.mode == TrainMode::kAdapter ? opt_.rank : 0;
  c.encoder.alpha = opt_.alpha;
  c.loss.kind = opt_.loss == "hinge" ? LossKind::kHinge : LossKind::kInfoNce;
  c.loss.temperature = opt_.temperature;
  c.loss.margin = opt_.margin;
  c.negatives = opt_.negatives;
  c.expected_batch = opt_.batch;
  c.steps = opt_.steps;
  if (opt_.sampling_ratio > 0.0) c.sampling_ratio = opt_.sampling_ratio;
  c.clip_norm = opt_.non_private ? kNoClipping : opt_.clip;
  c.sigma = opt_.non_private ? 0.0 : opt_.sigma;
  if (has_eps) c.target_epsilon = opt_.epsilon;
  c.delta = opt_.delta;
  c.noise_placement = opt_.noise_placement == "per-tuple"
                          ? NoisePlacement::kPerTuple
                          : NoisePlacement::kOnce;
  c.optimizer = opt_.optimizer == "sgd" ? OptimizerKind::kSgd
                                        : OptimizerKind::kAdam;
  c.schedule.kind = opt_.schedule == "linear"   ? ScheduleKind::kLinear
                    : opt_.schedule == "cosine" ? ScheduleKind::kCosine
                                                : ScheduleKind::kConstant;
  c.schedule.base = opt_.lr;
  c.schedule.warmup_steps = opt_.warmup;
  c.beta1 = opt_.beta1;
  c.beta2 = opt_.beta2;
  c.adam_eps = opt_.adam_eps;
  c.seed = opt_.seed;
  c.threads = opt_.threads;
  if (!opt_.non_private && !has_eps && !has_sigma) {
    err_ << "warning: neither --epsilon nor --sigma given; training with "
            "clipping but no noise (no privacy guarantee)\n";
  }

  DPREL_TRY(EnsureDir(opt_.out_dir));
  std::ofstream log(InDir(opt_.out_dir, "train_log.jsonl"),
                    std::ios::binary | std::ios::trunc);
  if (!log) return FromStatus(absl::UnavailableError("cannot write train log"));
  DPREL_ASSIGN(result, dprel::Train(graph, split, c, [&](const StepRecord& r) {
    log << json{{"step", r.step},
                {"realized_batch", r.realized_batch},
                {"loss", r.loss},
                {"grad_norm_median", r.grad_norm_median},
                {"epsilon_so_far", r.epsilon_so_far},
                {"lr", r.learning_rate}}
               .dump()
        << "\n";
  }));
  log.close();

  const json report = ReportJson(result.report);
  DPREL_TRY(WriteText(InDir(opt_.out_dir, "privacy_report.json"),
                      report.dump(2) + "\n"));
  const json lineage = {{"command", "train"},
                        {"seed", opt_.seed},
                        {"version", DPREL_VERSION}};
  DPREL_TRY(SaveCheckpoint(InDir(opt_.out_dir, "checkpoint.bin"),
                           {result.params, lineage.dump()}));
  out_ << report.dump() << "\n";
  DPREL_TRY(WriteManifest(sub, ManifestPath(InDir(opt_.out_dir, "manifest.json")),
                          {{"privacy_report", report}}));
  return std::nullopt;
}

absl::StatusOr<RowMatrix> Runner::EmbedFromCheckpoint(
    const TextAttributedGraph& g) {
  auto ckpt = LoadCheckpoint(opt_.checkpoint);
  if (!ckpt.ok()) return ckpt.status();
  if (ckpt->params.config().vocab_size != g.vocab_size()) {
    return absl::InvalidArgumentError(
        "checkpoint vocabulary does not match the graph");
  }
  return EmbedEntities(ckpt->params, g, opt_.threads);
}

Result Runner::Eval(CLI::App& sub) {
  DPREL_ASSIGN(graph, LoadDataGraph(opt_.data));
  DPREL_ASSIGN(rels, LoadRelationsOr(opt_.relations, InDir(opt_.data, "eval.tsv"),
                                     graph.num_entities()));
  DPREL_ASSIGN(emb, EmbedFromCheckpoint(graph));
  DPREL_ASSIGN(m, EvaluateRanking(emb, rels, opt_.eval_batch, opt_.seed));
  DPREL_TRY(EmitRecord(sub, {{"prec1", m.prec1},
                             {"mrr", m.mrr},
                             {"queries", m.queries},
                             {"eval_batch", opt_.eval_batch}}));
  return std::nullopt;
}

Result Runner::Probe(CLI::App& sub) {
  DPREL_ASSIGN(graph, LoadDataGraph(opt_.data));
  DPREL_ASSIGN(labels,
               LoadLabels(opt_.labels.empty() ? InDir(opt_.data, "labels.tsv")
                                              : opt_.labels,
                          graph.num_entities()));
  DPREL_ASSIGN(emb, EmbedFromCheckpoint(graph));
  ProbeOptions po;
  po.shots = opt_.shots;
  DPREL_ASSIGN(r, LinearProbe(emb, labels, po, opt_.seed));
  DPREL_TRY(EmitRecord(sub, {{"macro_f1", r.test.macro_f1},
                             {"micro_f1", r.test.micro_f1},
                             {"learning_rate", r.learning_rate},
                             {"num_test", r.num_test},
                             {"shots", opt_.shots}}));
  return std::nullopt;
}

Result Runner::Attack(CLI::App& sub) {
  DPREL_ASSIGN(graph, LoadDataGraph(opt_.data));
  const int n = graph.num_entities();
  DPREL_ASSIGN(members,
               LoadRelationsOr(opt_.members, InDir(opt_.data, "train.tsv"), n));
  DPREL_ASSIGN(non_members, LoadRelationsOr(opt_.non_members,
                                            InDir(opt_.data, "eval.tsv"), n));
  DPREL_ASSIGN(emb, EmbedFromCheckpoint(graph));
  DPREL_ASSIGN(report, Audit(emb, members, non_members, opt_.pairs, opt_.seed));
  json tpr = json::object();
  for (const TprPoint& p : report.tpr_at_fpr) {
    tpr[absl::StrCat(p.fpr)] = p.tpr;
  }
  if (!opt_.histogram.empty()) {
    std::string table = "bin\tmember\tnon_member\n";
    const auto hm = ScoreHistogram(report.member_scores, opt_.bins, -1.0, 1.0);
    const auto hn =
        ScoreHistogram(report.non_member_scores, opt_.bins, -1.0, 1.0);
    for (size_t i = 0; i < hm.size(); ++i) {
      absl::StrAppend(&table, 0.5 * (hm[i].lo + hm[i].hi), "\t", hm[i].count,
                      "\t", hn[i].count, "\n");
    }
    DPREL_TRY(WriteText(opt_.histogram, table));
  }
  DPREL_TRY(EmitRecord(sub, {{"n_pairs", report.n_pairs},
                             {"tpr_at_fpr", tpr},
                             {"wilcoxon_p", report.wilcoxon_p}}));
  return std::nullopt;
}

Result Runner::Account(CLI::App& sub) {
  std::vector<json> records;
  for (double q : opt_.qs) {
    for (double sigma : opt_.sigmas) {
      for (int64_t steps : opt_.step_list) {
        RdpAccountant acc;
        DPREL_TRY(acc.Compose(q, sigma, steps));
        DPREL_ASSIGN(eps, acc.ToEpsilon(opt_.delta));
        records.push_back({{"q", q},
                           {"sigma", sigma},
                           {"T", steps},
                           {"delta", opt_.delta},
                           {"epsilon", eps.epsilon},
                           {"order", eps.order},
                           {"accountant_kind", kAccountantKind}});
      }
    }
  }
  std::string text;
  if (opt_.jsonl) {
    for (const json& r : records) absl::StrAppend(&text, r.dump(), "\n");
  } else {
    absl::StrAppend(&text, "q\tsigma\tT\tdelta\tepsilon\torder\n");
    for (const json& r : records) {
      absl::StrAppend(&text, r["q"].get<double>(), "\t",
                      r["sigma"].get<double>(), "\t", r["T"].get<int64_t>(),
                      "\t", r["delta"].get<double>(), "\t",
                      r["epsilon"].get<double>(), "\t",
                      r["order"].get<double>(), "\n");
    }
  }
  out_ << text;
  if (!opt_.out.empty()) {
    DPREL_TRY(WriteText(opt_.out, text));
    DPREL_TRY(WriteManifest(sub, ManifestPath(opt_.out + ".manifest.json"),
                            {{"result", records}}));
  } else {
    DPREL_TRY(WriteManifest(sub, opt_.manifest, {{"result", records}}));
  }
  return std::nullopt;
}

Result Runner::Calibrate(CLI::App& sub) {
  const double q = opt_.qs.front();
  DPREL_ASSIGN(sigma, CalibrateSigma(opt_.epsilon, opt_.delta, q, opt_.steps));
  DPREL_ASSIGN(achieved, ComputeEpsilon(q, sigma, opt_.steps, opt_.delta));
  DPREL_TRY(EmitRecord(sub, {{"sigma", sigma},
                             {"target_epsilon", opt_.epsilon},
                             {"epsilon", achieved},
                             {"q", q},
                             {"T", opt_.steps},
                             {"delta", opt_.delta},
                             {"accountant_kind", kAccountantKind}}));
  return std::nullopt;
}

Result Runner::RrBaseline(CLI::App& sub) {
  DPREL_ASSIGN(graph, LoadDataGraph(opt_.data));
  if (graph.num_entities() > kRrMaxEntities) {
    err_ << "randomized response over " << graph.num_entities()
         << " entities enumerates " << PairCount(graph.num_entities())
         << " pairs\n";
  }
  RrOptions ro;
  ro.allow_large = opt_.allow_large;
  DPREL_ASSIGN(rels, RandomizedResponse(graph, opt_.epsilon, opt_.seed, ro));
  DPREL_TRY(SaveRelations(rels, opt_.out));
  const json summary = {{"input_relations", graph.relations().size()},
                        {"output_relations", rels.size()},
                        {"pairs", PairCount(graph.num_entities())},
                        {"flip_probability", FlipProbability(opt_.epsilon)}};
  out_ << summary.dump() << "\n";
  DPREL_TRY(WriteManifest(sub, ManifestPath(opt_.out + ".manifest.json"),
                          {{"result", summary}}));
  return std::nullopt;
}

Result Runner::Dispatch(const std::string& name, CLI::App& sub) {
  if (name == "ingest") return Ingest(sub);
  if (name == "synth") return Synth(sub);
  if (name == "split") return Split(sub);
  if (name == "train") return Train(sub);
  if (name == "eval") return Eval(sub);
  if (name == "probe") return Probe(sub);
  if (name == "attack") return Attack(sub);
  if (name == "account") return Account(sub);
  if (name == "calibrate") return Calibrate(sub);
  return RrBaseline(sub);
}

int Runner::Run(const std::vector<std::string>& raw_args) {
  CLI::App app{"dprel: differentially private relational learning"};
  app.name("dprel");
  Define(app);

  // Config values are spliced in ahead of the user's flags unless the flag
  // is given explicitly.
  std::vector<std::string> args = raw_args;
  std::string config_path;
  for (size_t i = 0; i < raw_args.size(); ++i) {
    if (raw_args[i] == "--config" && i + 1 < raw_args.size()) {
      config_path = raw_args[i + 1];
    } else if (raw_args[i].rfind("--config=", 0) == 0) {
      config_path = raw_args[i].substr(9);
    }
  }
  if (!config_path.empty() && !raw_args.empty()) {
    CLI::App* sub = nullptr;
    try {
      sub = app.get_subcommand(raw_args[0]);
    } catch (const CLI::Error&) {
      sub = nullptr;
    }
    if (sub != nullptr) {
      auto entries = ReadConfig(config_path);
      if (!entries.ok()) {
        const CliError e = FromStatus(entries.status());
        err_ << "error: " << e.message << "\n";
        return entries.status().code() == absl::StatusCode::kNotFound
                   ? kExitInput
                   : kExitUsage;
      }
      std::vector<std::string> injected;
      for (const ConfigEntry& e : *entries) {
        const std::string flag = FlagOf(e.key);
        const CLI::Option* opt = sub->get_option_no_throw(flag);
        if (opt == nullptr || e.values.empty()) continue;
        if (ArgsMention(raw_args, flag)) {
          err_ << "warning: " << flag << " on the command line overrides "
               << e.section << "." << e.key << " from " << config_path << "\n";
          continue;
        }
        if (e.values.size() == 1) {
          injected.push_back(flag + "=" + e.values[0]);
        } else {
          injected.push_back(flag);
          for (const std::string& v : e.values) injected.push_back(v);
        }
      }
      args.insert(args.begin() + 1, injected.begin(), injected.end());
    }
  }

  std::vector<const char*> argv = {"dprel"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out_, err_);
    return code == 0 ? kExitOk : kExitUsage;
  }
  CLI::App* sub = app.get_subcommands().front();
  Result r;
  try {
    r = Dispatch(sub->get_name(), *sub);
  } catch (const std::exception& e) {
    r = CliError{kExitRuntime, e.what()};
  }
  if (!r) return kExitOk;
  static const char* const kCategory[] = {"ok", "", "usage", "input", "runtime"};
  err_ << "error [" << kCategory[r->code] << "]: " << r->message << "\n";
  return r->code;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  Runner runner(out, err);
  return runner.Run(args);
}

}  // namespace dprel
