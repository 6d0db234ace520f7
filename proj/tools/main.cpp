// Command-line front end for the skill-routed search runtime: pool sampling,
// bank evolution, trajectory synthesis/validation, supervision packing,
// rollouts, evaluation, diagnostics, reward scoring, and trace replay.

#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "skillagent/backend.hpp"
#include "skillagent/eval.hpp"
#include "skillagent/packer.hpp"
#include "skillagent/retriever.hpp"
#include "skillagent/rollout.hpp"
#include "skillagent/sampler.hpp"
#include "skillagent/skillbank.hpp"
#include "skillagent/text.hpp"
#include "skillagent/trajectory.hpp"

namespace sa = skillagent;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config plumbing: CLI flag > config file > built-in default. Each report
// embeds the resolved snapshot.

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json doc;
  in >> doc;
  return doc;
}

template <typename T>
void apply_config(const CLI::App& app, const json& config, const std::string& flag,
                  const std::string& key, T& value) {
  const auto* opt = app.get_option_no_throw(flag);
  if (opt && opt->count() > 0) return;  // explicit flag wins
  if (config.contains(key)) value = config[key].get<T>();
}

void fail(const std::string& kind, const std::string& message) {
  json err;
  err["error"] = kind;
  err["message"] = message;
  std::cerr << err.dump() << std::endl;
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Backend wiring. Scripted scripts live in JSON files; auth tokens for HTTP
// backends come from an environment variable, never a flag.

struct BackendSpec {
  std::string kind;  // "scripted" | "http"
  std::string arg;   // script path or base url
  std::string model;
  std::string auth_env = "SKILLAGENT_API_KEY";
};

BackendSpec parse_backend_spec(const std::string& spec) {
  auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw std::runtime_error("backend spec must be scripted:<file> or http:<url>");
  }
  BackendSpec out;
  out.kind = spec.substr(0, colon);
  out.arg = spec.substr(colon + 1);
  if (out.kind != "scripted" && out.kind != "http") {
    throw std::runtime_error("unknown backend kind: " + out.kind);
  }
  return out;
}

// Script file formats: a JSON array of strings (one conversation), an array
// of arrays (per-question scripts), or an object {key: [strings]} keyed by
// example id or question.
json load_script_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open script file: " + path);
  json doc;
  in >> doc;
  return doc;
}

std::vector<std::string> script_for(const json& scripts, const std::string& key,
                                    size_t index) {
  if (scripts.is_object()) {
    if (!scripts.contains(key)) {
      throw std::runtime_error("no script entry for key: " + key);
    }
    return scripts[key].get<std::vector<std::string>>();
  }
  if (scripts.is_array() && !scripts.empty() && scripts.front().is_array()) {
    if (index >= scripts.size()) {
      throw std::runtime_error("script file has fewer entries than questions");
    }
    return scripts[index].get<std::vector<std::string>>();
  }
  return scripts.get<std::vector<std::string>>();
}

std::unique_ptr<sa::env::ChatBackend> make_backend(const BackendSpec& spec,
                                                   const json& scripts,
                                                   const std::string& key,
                                                   size_t index) {
  if (spec.kind == "scripted") {
    return std::make_unique<sa::env::ScriptedBackend>(
        sa::env::ScriptedBackend::from_responses(script_for(scripts, key, index)));
  }
  sa::env::HttpBackendConfig config;
  config.base_url = spec.arg;
  config.model = spec.model;
  config.auth_env_var = spec.auth_env;
  return std::make_unique<sa::env::HttpChatBackend>(config);
}

std::unique_ptr<sa::env::Retriever> make_retriever(const std::string& corpus,
                                                   const std::string& url) {
  if (!url.empty()) return std::make_unique<sa::env::HttpRetriever>(url);
  if (corpus.empty()) throw std::runtime_error("either --corpus or --retriever-url is required");
  return std::make_unique<sa::env::TfIdfIndex>(sa::env::TfIdfIndex::build(corpus));
}

std::vector<sa::eval::EvalExample> load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file: " + path);
  std::vector<sa::eval::EvalExample> split;
  std::string line;
  while (std::getline(in, line)) {
    if (sa::text::trim(line).empty()) continue;
    auto doc = json::parse(line);
    sa::eval::EvalExample ex;
    ex.example_id = doc.contains("example_id") ? doc["example_id"].get<std::string>()
                                               : doc.value("id", "");
    ex.dataset = doc.value("dataset", "default");
    ex.question = doc.at("question").get<std::string>();
    if (doc.contains("golds")) {
      ex.golds = doc["golds"].get<std::vector<std::string>>();
    } else if (doc.contains("gold_answers")) {
      ex.golds = doc["gold_answers"].get<std::vector<std::string>>();
    } else if (doc.contains("answers")) {
      ex.golds = doc["answers"].get<std::vector<std::string>>();
    }
    split.push_back(std::move(ex));
  }
  return split;
}

sa::skillbank::SkillBankVersion load_bank_maybe_ablated(const std::string& path,
                                                        const std::string& ablation,
                                                        const std::string& category) {
  auto bank = sa::skillbank::load_bank(path);
  if (ablation.empty()) return bank;
  auto mode = sa::skillbank::ablation_mode_from_name(ablation);
  if (!mode) throw std::runtime_error("unknown ablation mode: " + ablation);
  std::optional<sa::skillbank::Category> cat;
  if (!category.empty()) cat = sa::skillbank::category_from_name(category);
  return sa::skillbank::ablate(bank, *mode, cat);
}

json diagnostics_to_json(const sa::eval::DiagnosticsReport& d) {
  return {{"first_query_copy_rate", d.first_query_copy_rate},
          {"atomic_hop_rate", d.atomic_hop_rate},
          {"avg_searches", d.avg_searches},
          {"correct_at_3", d.correct_at_3}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skill-routed search agent pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override it")
      ->configurable(false);

  // ---- sample -------------------------------------------------------------
  auto* sample = app.add_subcommand("sample", "Coverage-capped pool sampling");
  struct {
    std::string pool, dataset = "default", bank, eval_split, failures, out,
                report;
    size_t target = 0, cap = 100, rare = 3;
    uint64_t seed = 0;
    double replay_ratio = 0.0;
  } s;
  sample->add_option("--pool", s.pool, "Pool JSONL")->required();
  sample->add_option("--dataset", s.dataset, "Dataset label for unlabeled rows");
  sample->add_option("--bank", s.bank, "Skill bank JSON")->required();
  sample->add_option("--target", s.target, "Exact sample size")->required();
  sample->add_option("--cap", s.cap, "Per-signature cap");
  sample->add_option("--rare-threshold", s.rare, "Fully include signatures this small");
  sample->add_option("--seed", s.seed, "Sampling seed");
  sample->add_option("--eval-split", s.eval_split, "Eval JSONL for de-overlap");
  sample->add_option("--replay-failures", s.failures, "Failed-trajectory JSONL");
  sample->add_option("--replay-ratio", s.replay_ratio, "Failure-replay share [0,1)");
  sample->add_option("--out", s.out, "Manifest JSONL output")->required();
  sample->add_option("--report", s.report, "Sampling report JSON");

  // ---- evolve-bank --------------------------------------------------------
  auto* evolve = app.add_subcommand("evolve-bank", "Apply staged bank updates");
  struct {
    std::string bank, out;
    std::vector<std::string> updates, labels;
    std::string ablation, category;
  } e;
  evolve->add_option("--bank", e.bank, "Starting bank JSON")->required();
  evolve->add_option("--update", e.updates, "Update JSON, repeatable, applied in order");
  evolve->add_option("--label", e.labels, "Label per update (defaults derived)");
  evolve->add_option("--ablate", e.ablation, "empty|strip-content|remove-category");
  evolve->add_option("--category", e.category, "Category for remove-category");
  evolve->add_option("--out", e.out, "Resulting bank JSON")->required();

  // ---- synthesize ---------------------------------------------------------
  auto* synth = app.add_subcommand("synthesize", "Teacher-driven trajectory synthesis");
  struct {
    std::string manifest, bank, corpus, retriever_url, backend, model, out;
    int budget = 5, top_k = 3;
    bool heuristic_finalizer = true;
  } sy;
  synth->add_option("--manifest", sy.manifest, "Manifest JSONL")->required();
  synth->add_option("--bank", sy.bank, "Skill bank JSON")->required();
  synth->add_option("--corpus", sy.corpus, "Corpus JSONL for the embedded index");
  synth->add_option("--retriever-url", sy.retriever_url, "External retriever URL");
  synth->add_option("--backend", sy.backend, "scripted:<file> or http:<url>")->required();
  synth->add_option("--model", sy.model, "Model name for HTTP backends");
  synth->add_option("--budget", sy.budget, "Retrieval budget per example");
  synth->add_option("--top-k", sy.top_k, "Passages per search");
  synth->add_option("--out", sy.out, "Trajectory JSONL output")->required();

  // ---- validate -----------------------------------------------------------
  auto* validate = app.add_subcommand("validate", "Canonical-trajectory filters");
  struct {
    std::string in, bank, out, accepted;
    bool dedup = false;
  } v;
  validate->add_option("--in", v.in, "Trajectory JSONL")->required();
  validate->add_option("--bank", v.bank, "Skill bank JSON")->required();
  validate->add_option("--out", v.out, "Per-trajectory report JSONL")->required();
  validate->add_option("--accepted", v.accepted, "Accepted trajectories JSONL");
  validate->add_flag("--dedup", v.dedup, "Keep best per example before filtering");

  // ---- pack ---------------------------------------------------------------
  auto* pack = app.add_subcommand("pack", "Two-stage supervision packing");
  struct {
    std::string in, bank, out, export_dir;
    int stage = 1;
    double eval_fraction = 0.1;
    uint64_t seed = 0;
    bool allow_unvalidated = false;
  } p;
  pack->add_option("--stage", p.stage, "1 (flat) or 2 (two-phase rewrite)")->required();
  pack->add_option("--in", p.in, "Trajectory JSONL")->required();
  pack->add_option("--bank", p.bank, "Skill bank JSON")->required();
  pack->add_option("--out", p.out, "Record JSONL output")->required();
  pack->add_option("--export-dir", p.export_dir, "Write train/eval split here");
  pack->add_option("--eval-fraction", p.eval_fraction, "Holdout share for --export-dir");
  pack->add_option("--seed", p.seed, "Split hashing seed");
  pack->add_flag("--allow-unvalidated", p.allow_unvalidated,
                 "Pack trajectories that fail validation");

  // ---- rollout ------------------------------------------------------------
  auto* rollout = app.add_subcommand("rollout", "Select-read-act policy rollout");
  struct {
    std::string question, questions, bank, corpus, retriever_url, backend, model,
        out, ablation, category;
    int budget = 5, top_k = 3, parallelism = 1;
    bool strict = false;
  } r;
  rollout->add_option("--question", r.question, "Single question");
  rollout->add_option("--questions", r.questions, "Question JSONL");
  rollout->add_option("--bank", r.bank, "Skill bank JSON")->required();
  rollout->add_option("--corpus", r.corpus, "Corpus JSONL");
  rollout->add_option("--retriever-url", r.retriever_url, "External retriever URL");
  rollout->add_option("--backend", r.backend, "scripted:<file> or http:<url>")->required();
  rollout->add_option("--model", r.model, "Model name for HTTP backends");
  rollout->add_option("--budget", r.budget, "Search budget");
  rollout->add_option("--top-k", r.top_k, "Passages per search");
  rollout->add_option("--parallelism", r.parallelism, "Worker threads");
  rollout->add_flag("--strict", r.strict, "Strict tag parsing");
  rollout->add_option("--ablate", r.ablation, "Bank ablation mode");
  rollout->add_option("--category", r.category, "Category for remove-category");
  rollout->add_option("--out", r.out, "Trace JSONL output")->required();

  // ---- eval ---------------------------------------------------------------
  auto* evalc = app.add_subcommand("eval", "Benchmark a policy over a split");
  struct {
    std::string split, bank, corpus, retriever_url, backend, model, out, ablation,
        category;
    int budget = 5, top_k = 3, parallelism = 1;
  } ev;
  evalc->add_option("--split", ev.split, "Eval JSONL")->required();
  evalc->add_option("--bank", ev.bank, "Skill bank JSON")->required();
  evalc->add_option("--corpus", ev.corpus, "Corpus JSONL");
  evalc->add_option("--retriever-url", ev.retriever_url, "External retriever URL");
  evalc->add_option("--backend", ev.backend, "scripted:<file> or http:<url>")->required();
  evalc->add_option("--model", ev.model, "Model name for HTTP backends");
  evalc->add_option("--budget", ev.budget, "Search budget");
  evalc->add_option("--top-k", ev.top_k, "Passages per search");
  evalc->add_option("--parallelism", ev.parallelism, "Worker threads");
  evalc->add_option("--ablate", ev.ablation, "Bank ablation mode");
  evalc->add_option("--category", ev.category, "Category for remove-category");
  evalc->add_option("--out", ev.out, "Report JSON output")->required();

  // ---- diagnose -----------------------------------------------------------
  auto* diagnose = app.add_subcommand("diagnose", "Query-planning diagnostics");
  struct {
    std::string traces, split, out;
    double near_copy = 0.8;
  } d;
  diagnose->add_option("--traces", d.traces, "Trace JSONL")->required();
  diagnose->add_option("--split", d.split, "Eval JSONL (gold answers)")->required();
  diagnose->add_option("--near-copy-threshold", d.near_copy, "Jaccard threshold");
  diagnose->add_option("--out", d.out, "Report JSON output")->required();

  // ---- score-reward -------------------------------------------------------
  auto* score = app.add_subcommand("score-reward", "Offline trajectory reward");
  struct {
    std::string traces, split, out;
    double lambda_e = 0.2, lambda_d = 0.1;
  } sc;
  score->add_option("--traces", sc.traces, "Trace JSONL")->required();
  score->add_option("--split", sc.split, "Eval JSONL (gold answers)")->required();
  score->add_option("--lambda-e", sc.lambda_e, "Evidence bonus weight");
  score->add_option("--lambda-d", sc.lambda_d, "Duplicate-query penalty weight");
  score->add_option("--out", sc.out, "Per-trace reward JSONL")->required();

  // ---- replay -------------------------------------------------------------
  auto* replay = app.add_subcommand("replay", "Re-execute recorded searches");
  struct {
    std::string traces, corpus, retriever_url, out;
    int top_k = 3;
    bool strict = false;
  } rp;
  replay->add_option("--traces", rp.traces, "Trace fixture JSONL")->required();
  replay->add_option("--corpus", rp.corpus, "Corpus JSONL");
  replay->add_option("--retriever-url", rp.retriever_url, "External retriever URL");
  replay->add_option("--top-k", rp.top_k, "Passages per search");
  replay->add_flag("--strict", rp.strict, "Exit nonzero on any mismatch");
  replay->add_option("--out", rp.out, "Replay report JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const json config = load_config_file(config_path);

    if (sample->parsed()) {
      apply_config(*sample, config, "--cap", "cap", s.cap);
      apply_config(*sample, config, "--rare-threshold", "rare_threshold", s.rare);
      apply_config(*sample, config, "--seed", "seed", s.seed);
      apply_config(*sample, config, "--replay-ratio", "replay_ratio", s.replay_ratio);

      auto pool = sa::sampler::load_pool(s.pool, s.dataset);
      if (!s.eval_split.empty()) {
        auto eval_split = load_split(s.eval_split);
        std::vector<std::string> ids, questions;
        for (const auto& ex : eval_split) {
          ids.push_back(ex.example_id);
          questions.push_back(ex.question);
        }
        pool = sa::sampler::filter_eval_overlap(pool, ids, questions);
      }
      std::vector<sa::sampler::ExampleProfile> profiles;
      profiles.reserve(pool.size());
      for (const auto& ex : pool) profiles.push_back(sa::sampler::profile_example(ex));
      auto signatures = sa::sampler::group_signatures(profiles);

      sa::sampler::SampleConfig sample_config{s.target, s.cap, s.rare, s.seed};
      auto ids = sa::sampler::sample_capped(profiles, sample_config);
      std::unordered_set<std::string> chosen(ids.begin(), ids.end());
      std::vector<sa::sampler::RawExample> selected;
      for (const auto& ex : pool) {
        if (chosen.count(ex.example_id)) selected.push_back(ex);
      }

      std::vector<sa::trajectory::Trajectory> failures;
      if (!s.failures.empty()) failures = sa::trajectory::load_trajectories(s.failures);
      auto bank = sa::skillbank::load_bank(s.bank);
      auto manifest = sa::sampler::build_manifest(selected, profiles, failures, bank,
                                                  {s.replay_ratio});
      sa::trajectory::save_manifest(manifest, s.out);

      if (!s.report.empty()) {
        json report;
        report["config"] = {{"pool", s.pool},       {"target", s.target},
                            {"cap", s.cap},         {"rare_threshold", s.rare},
                            {"seed", s.seed},       {"replay_ratio", s.replay_ratio},
                            {"bank", s.bank}};
        report["pool_size"] = pool.size();
        report["signature_count"] = signatures.size();
        report["selected"] = ids.size();
        report["manifest_entries"] = manifest.size();
        write_json(s.report, report);
      }
      return 0;
    }

    if (evolve->parsed()) {
      auto bank = sa::skillbank::load_bank(e.bank);
      for (size_t i = 0; i < e.updates.size(); ++i) {
        auto update = sa::skillbank::load_update(e.updates[i]);
        std::string label = i < e.labels.size()
                                ? e.labels[i]
                                : bank.label + "+u" + std::to_string(i + 1);
        bank = sa::skillbank::apply_update(bank, update, label);
      }
      if (!e.ablation.empty()) {
        auto mode = sa::skillbank::ablation_mode_from_name(e.ablation);
        if (!mode) throw std::runtime_error("unknown ablation mode: " + e.ablation);
        std::optional<sa::skillbank::Category> cat;
        if (!e.category.empty()) cat = sa::skillbank::category_from_name(e.category);
        bank = sa::skillbank::ablate(bank, *mode, cat);
      } else {
        sa::skillbank::validate_bank(bank);
      }
      sa::skillbank::save_bank(bank, e.out);
      std::cout << bank.label << ": " << bank.cards.size() << " cards\n";
      return 0;
    }

    if (synth->parsed()) {
      apply_config(*synth, config, "--budget", "budget", sy.budget);
      apply_config(*synth, config, "--top-k", "top_k", sy.top_k);
      auto bank = sa::skillbank::load_bank(sy.bank);
      auto retriever = make_retriever(sy.corpus, sy.retriever_url);
      auto manifest = sa::trajectory::load_manifest(sy.manifest);
      auto spec = parse_backend_spec(sy.backend);
      spec.model = sy.model;
      json scripts =
          spec.kind == "scripted" ? load_script_file(spec.arg) : json::object();

      std::vector<sa::trajectory::Trajectory> trajs;
      sa::trajectory::SynthesisConfig synth_config{sy.budget, sy.top_k};
      for (size_t i = 0; i < manifest.size(); ++i) {
        auto teacher = make_backend(spec, scripts, manifest[i].example_id, i);
        auto traj = sa::trajectory::synthesize(manifest[i], bank, *teacher,
                                               *retriever, nullptr, synth_config);
        traj.source_order = i;
        trajs.push_back(std::move(traj));
      }
      sa::trajectory::save_trajectories(trajs, sy.out);
      return 0;
    }

    if (validate->parsed()) {
      auto bank = sa::skillbank::load_bank(v.bank);
      auto trajs = sa::trajectory::load_trajectories(v.in);
      if (v.dedup) trajs = sa::trajectory::dedup_keep_best(trajs, bank);
      std::ofstream out(v.out);
      if (!out) throw std::runtime_error("cannot write: " + v.out);
      std::vector<sa::trajectory::Trajectory> accepted;
      for (const auto& traj : trajs) {
        auto report = sa::trajectory::validate_trajectory(traj, bank);
        json row;
        row["example_id"] = traj.example_id;
        row["accepted"] = report.accepted;
        for (const auto& [name, check] : report.checks) {
          row["checks"][name] = {{"passed", check.passed}, {"reason", check.reason}};
        }
        out << row.dump() << "\n";
        if (report.accepted) accepted.push_back(traj);
      }
      if (!v.accepted.empty()) sa::trajectory::save_trajectories(accepted, v.accepted);
      return 0;
    }

    if (pack->parsed()) {
      apply_config(*pack, config, "--eval-fraction", "eval_fraction", p.eval_fraction);
      apply_config(*pack, config, "--seed", "seed", p.seed);
      if (p.stage != 1 && p.stage != 2) throw std::runtime_error("--stage must be 1 or 2");
      auto bank = sa::skillbank::load_bank(p.bank);
      auto trajs = sa::trajectory::load_trajectories(p.in);
      sa::packer::PackerConfig packer_config;
      packer_config.allow_unvalidated = p.allow_unvalidated;
      std::vector<sa::packer::SupervisionRecord> records;
      for (const auto& traj : trajs) {
        records.push_back(p.stage == 1
                              ? sa::packer::pack_stage1(traj, bank, packer_config)
                              : sa::packer::rewrite_stage2(traj, bank, packer_config));
      }
      std::ofstream out(p.out);
      if (!out) throw std::runtime_error("cannot write: " + p.out);
      for (const auto& rec : records) out << sa::packer::record_to_json(rec).dump() << "\n";
      if (!p.export_dir.empty()) {
        sa::packer::export_records(records, p.export_dir, {p.eval_fraction, p.seed});
      }
      return 0;
    }

    if (rollout->parsed()) {
      apply_config(*rollout, config, "--budget", "budget", r.budget);
      apply_config(*rollout, config, "--top-k", "top_k", r.top_k);
      auto bank = load_bank_maybe_ablated(r.bank, r.ablation, r.category);
      auto retriever = make_retriever(r.corpus, r.retriever_url);
      std::vector<std::string> questions;
      if (!r.question.empty()) questions.push_back(r.question);
      if (!r.questions.empty()) {
        for (const auto& ex : load_split(r.questions)) questions.push_back(ex.question);
      }
      if (questions.empty()) throw std::runtime_error("--question or --questions required");

      auto spec = parse_backend_spec(r.backend);
      spec.model = r.model;
      json scripts =
          spec.kind == "scripted" ? load_script_file(spec.arg) : json::object();
      sa::rollout::RolloutConfig rollout_config;
      rollout_config.budget = r.budget;
      rollout_config.top_k = r.top_k;
      rollout_config.strict_tags = r.strict;
      rollout_config.system_prompt = sa::rollout::default_system_prompt();
      auto outcomes = sa::rollout::run_batch(
          questions, bank,
          [&](size_t i) { return make_backend(spec, scripts, questions[i], i); },
          *retriever, rollout_config, r.parallelism);
      sa::rollout::write_trace_file(outcomes, r.out);
      return 0;
    }

    if (evalc->parsed()) {
      apply_config(*evalc, config, "--budget", "budget", ev.budget);
      apply_config(*evalc, config, "--top-k", "top_k", ev.top_k);
      auto bank = load_bank_maybe_ablated(ev.bank, ev.ablation, ev.category);
      auto retriever = make_retriever(ev.corpus, ev.retriever_url);
      auto split = load_split(ev.split);
      auto spec = parse_backend_spec(ev.backend);
      spec.model = ev.model;
      json scripts =
          spec.kind == "scripted" ? load_script_file(spec.arg) : json::object();
      sa::rollout::RolloutConfig rollout_config;
      rollout_config.budget = ev.budget;
      rollout_config.top_k = ev.top_k;
      rollout_config.system_prompt = sa::rollout::default_system_prompt();
      auto result = sa::eval::run_benchmark(
          split, bank,
          [&](size_t i) { return make_backend(spec, scripts, split[i].example_id, i); },
          *retriever, rollout_config, {}, ev.parallelism);

      json report;
      report["config"] = {{"split", ev.split},   {"bank", ev.bank},
                          {"budget", ev.budget}, {"top_k", ev.top_k},
                          {"backend", ev.backend}, {"ablation", ev.ablation}};
      report["per_dataset_em"] = result.eval.per_dataset_em;
      report["macro_avg"] = result.eval.macro_avg;
      report["diagnostics"] = diagnostics_to_json(result.diagnostics);
      write_json(ev.out, report);
      return 0;
    }

    if (diagnose->parsed()) {
      auto traces = sa::rollout::read_trace_file(d.traces);
      auto split = load_split(d.split);
      std::vector<std::vector<std::string>> golds;
      for (const auto& ex : split) golds.push_back(ex.golds);
      sa::eval::DiagnosticsConfig diag_config;
      diag_config.near_copy_threshold = d.near_copy;
      auto report = sa::eval::compute_diagnostics(traces, golds, diag_config);
      json doc;
      doc["config"] = {{"traces", d.traces},
                       {"split", d.split},
                       {"near_copy_threshold", d.near_copy}};
      doc["diagnostics"] = diagnostics_to_json(report);
      write_json(d.out, doc);
      return 0;
    }

    if (score->parsed()) {
      apply_config(*score, config, "--lambda-e", "lambda_e", sc.lambda_e);
      apply_config(*score, config, "--lambda-d", "lambda_d", sc.lambda_d);
      auto traces = sa::rollout::read_trace_file(sc.traces);
      auto split = load_split(sc.split);
      if (split.size() < traces.size()) {
        throw std::runtime_error("split has fewer rows than traces");
      }
      std::ofstream out(sc.out);
      if (!out) throw std::runtime_error("cannot write: " + sc.out);
      for (size_t i = 0; i < traces.size(); ++i) {
        auto reward =
            sa::eval::score_reward(traces[i], split[i].golds, sc.lambda_e, sc.lambda_d);
        json row;
        row["example_id"] = split[i].example_id;
        row["r_em"] = reward.r_em;
        row["r_evi"] = reward.r_evi;
        row["r_dup"] = reward.r_dup;
        row["lambda_e"] = reward.lambda_e;
        row["lambda_d"] = reward.lambda_d;
        row["total"] = reward.total;
        out << row.dump() << "\n";
      }
      return 0;
    }

    if (replay->parsed()) {
      auto retriever = make_retriever(rp.corpus, rp.retriever_url);
      auto fixtures = sa::rollout::read_trace_file(rp.traces);
      json doc;
      doc["config"] = {{"traces", rp.traces}, {"top_k", rp.top_k}};
      doc["reports"] = json::array();
      bool all_match = true;
      for (const auto& fixture : fixtures) {
        auto report = sa::rollout::replay_trace(fixture, *retriever, rp.top_k);
        all_match = all_match && report.all_match;
        json jr;
        jr["question"] = fixture.question;
        jr["final_answer"] = report.final_answer;
        jr["all_match"] = report.all_match;
        jr["steps"] = json::array();
        for (const auto& step : report.steps) {
          jr["steps"].push_back({{"query", step.query},
                                 {"expected", step.expected_doc_ids},
                                 {"actual", step.actual_doc_ids},
                                 {"match", step.match}});
        }
        doc["reports"].push_back(std::move(jr));
      }
      doc["all_match"] = all_match;
      write_json(rp.out, doc);
      return rp.strict && !all_match ? 3 : 0;
    }
  } catch (const std::exception& ex) {
    fail("runtime", ex.what());
    return 2;
  }
  return 0;
}
