#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssd/rng.hpp"

namespace ssd::hpo {

struct Dimension {
  enum class Kind { log_uniform, categorical, integer_set };

  std::string name;
  Kind kind = Kind::categorical;
  double lo = 0.0, hi = 0.0;   ///< log_uniform bounds
  std::vector<double> values;  ///< categorical / integer_set members
  /// Consumed only by external-model sweeps (e.g. LoRA settings); sampled but
  /// ignored by the stand-in trainer.
  bool external_only = false;

  static Dimension log_uniform(std::string name, double lo, double hi);
  static Dimension categorical(std::string name, std::vector<double> values, bool external_only = false);
  static Dimension integers(std::string name, std::vector<double> values, bool external_only = false);

  bool contains(double v) const noexcept;
  bool discrete() const noexcept { return kind != Kind::log_uniform; }
};

using Config = std::map<std::string, double>;

struct SearchSpace {
  std::string name;
  std::vector<Dimension> dims;

  void validate() const;
  bool contains(const Config& c) const noexcept;
  bool fully_discrete() const noexcept;
  /// Number of grid points; only meaningful when fully discrete.
  std::size_t cardinality() const noexcept;
  const Dimension* find(const std::string& dim) const noexcept;
};

nlohmann::json to_json(const SearchSpace& s);

SearchSpace asr_space();
SearchSpace classification_space();
/// {asr, classification}
std::pair<SearchSpace, SearchSpace> builtin_spaces();

enum class TrialStatus { complete, failed };

struct Trial {
  int id = 0;
  Config config;
  std::optional<double> objective;  ///< maximized
  TrialStatus status = TrialStatus::complete;
  std::uint64_t seed = 0;
  std::string error;
};

nlohmann::json to_json(const Trial& t);
Trial trial_from_json(const nlohmann::json& j);
std::vector<Trial> load_history(const std::filesystem::path& path);

/// Returns the objective, or nullopt / throws to mark the trial failed.
using Objective = std::function<std::optional<double>(const Config&, std::uint64_t trial_seed)>;

/// Log-uniform for continuous dimensions, uniform over members otherwise.
Config sample_uniform(const SearchSpace& space, Rng& rng);

struct TpeOptions {
  double gamma = 0.25;
  int n_startup = 10;
  int n_candidates = 24;
  double prior_weight = 1.0;
};

/// Tree-structured Parzen estimator proposal. Completed trials are split at the
/// gamma quantile of the objective; each dimension gets a "good" and a "bad"
/// density (truncated Gaussian KDE with Scott bandwidth in log space plus a
/// broad prior component, or smoothed counts for discrete dimensions), and the
/// candidate maximizing sum(log good - log bad) is returned. With fewer than
/// n_startup completed trials it falls back to sample_uniform.
Config tpe_suggest(const std::vector<Trial>& history, const SearchSpace& space, Rng& rng,
                   const TpeOptions& options = {});

enum class Strategy { random, tpe };

std::optional<Strategy> parse_strategy(std::string_view s) noexcept;

struct SearchOptions {
  Strategy strategy = Strategy::tpe;
  int budget = 50;  ///< total trials, including any resumed history
  std::uint64_t seed = 0;
  /// Fully discrete spaces: walk a seeded permutation of the grid instead of
  /// sampling with replacement (random strategy only).
  bool deduplicate = false;
  int parallelism = 1;  ///< results are reproducible only at 1
  TpeOptions tpe;
  std::optional<std::filesystem::path> history_path;  ///< appended per trial; resumed if present
};

struct SearchResult {
  std::optional<Trial> best;  ///< highest objective, earliest on ties
  std::vector<Trial> history;
};

/// Throws runtime_error if every trial failed.
SearchResult run_search(const SearchSpace& space, const Objective& objective, const SearchOptions& options);
SearchResult random_search(const SearchSpace& space, const Objective& objective, int budget, std::uint64_t seed,
                           bool deduplicate = false);

}  // namespace ssd::hpo
