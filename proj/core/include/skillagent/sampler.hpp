#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skillagent/skillbank.hpp"
#include "skillagent/trajectory.hpp"

namespace skillagent::sampler {

inline constexpr std::array<const char*, 6> kCueNames = {
    "temporal", "numerical", "comparison", "alias", "verification",
    "relation-chain"};

struct RawExample {
  std::string example_id;
  std::string dataset;
  std::string question;
  std::vector<std::string> answers;
  std::optional<std::string> native_type;
  std::optional<int> hop_count;
};

struct ProfileConfig {
  size_t short_max_tokens = 8;   // question length <= this is "short"
  size_t long_min_tokens = 20;   // question length >= this is "long"
};

struct ExampleProfile {
  std::string example_id;
  std::string dataset;
  std::string question;
  std::string answer_form;    // entity|date|number|yes-no|span|other
  std::string wh_type;        // who|what|when|where|which|why|how|none
  std::string length_bucket;  // short|medium|long
  int entity_count = 0;
  std::map<std::string, bool> cues;  // keys are kCueNames
  std::optional<std::string> native_type;
  std::optional<int> hop_count;
};

/// Deterministic heuristic profiling. Throws std::invalid_argument on an
/// empty question.
ExampleProfile profile_example(const RawExample& example,
                               const ProfileConfig& config = {});

struct Signature {
  std::string key;  // canonical dataset/type/hop/form/wh/cue tuple
  std::vector<std::string> members;  // example ids
};

std::string signature_key(const ExampleProfile& profile);

/// Partitions profiles into signatures, sorted by key; members keep a sorted
/// canonical order so grouping is input-order invariant.
std::vector<Signature> group_signatures(const std::vector<ExampleProfile>& profiles);

struct SampleConfig {
  size_t target = 0;
  size_t cap = 100;            // per-signature contribution cap
  size_t rare_threshold = 3;   // signatures this small are fully included
  uint64_t seed = 0;
};

/// Signature-capped coverage sampling: rare signatures are fully included,
/// larger ones contribute up to the cap, chosen by greedy marginal coverage of
/// (answer form x wh type x cue) cells. Deterministic under a fixed seed and
/// invariant to input order; returns exactly `target` ids. If the caps alone
/// cannot reach the target, the remainder is refilled in ranked signature
/// order. Throws std::invalid_argument when target exceeds the pool.
std::vector<std::string> sample_capped(const std::vector<ExampleProfile>& profiles,
                                       const SampleConfig& config);

/// Drops pool examples that collide with the evaluation split, matching by
/// example_id when present, else by normalized question text.
std::vector<RawExample> filter_eval_overlap(
    const std::vector<RawExample>& pool, const std::vector<std::string>& eval_ids,
    const std::vector<std::string>& eval_questions = {});

/// Maps a cue flag to the skill category its examples should draw candidate
/// skills from; cues without a mapping fall back to direct lookup.
skillbank::Category category_for_cue(const std::string& cue);

struct ManifestConfig {
  double replay_ratio = 0.0;  // replay share of the final manifest, in [0,1)
};

/// Assembles manifest entries for the selected pool, attaching candidate
/// primary skills and suggested support skills from the bank via the cue
/// mapping, and interleaves round(pool * ratio / (1 - ratio)) failure-replay
/// entries drawn from the given failed trajectories.
std::vector<trajectory::ManifestEntry> build_manifest(
    const std::vector<RawExample>& selected,
    const std::vector<ExampleProfile>& profiles,
    const std::vector<trajectory::Trajectory>& failures,
    const skillbank::SkillBankVersion& bank, const ManifestConfig& config = {});

/// Line-delimited {id|example_id, question, answers, dataset?, type?, hop?}.
std::vector<RawExample> load_pool(const std::filesystem::path& path,
                                  const std::string& default_dataset = "");

}  // namespace skillagent::sampler
