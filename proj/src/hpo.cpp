#include "ssd/hpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numbers>
#include <numeric>

#include "ssd/error.hpp"

namespace ssd::hpo {

using nlohmann::json;

Dimension Dimension::log_uniform(std::string name, double lo, double hi) {
  Dimension d;
  d.name = std::move(name);
  d.kind = Kind::log_uniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

Dimension Dimension::categorical(std::string name, std::vector<double> values, bool external_only) {
  Dimension d;
  d.name = std::move(name);
  d.kind = Kind::categorical;
  d.values = std::move(values);
  d.external_only = external_only;
  return d;
}

Dimension Dimension::integers(std::string name, std::vector<double> values, bool external_only) {
  Dimension d = categorical(std::move(name), std::move(values), external_only);
  d.kind = Kind::integer_set;
  return d;
}

bool Dimension::contains(double v) const noexcept {
  if (kind == Kind::log_uniform) return v >= lo && v <= hi;
  return std::find(values.begin(), values.end(), v) != values.end();
}

void SearchSpace::validate() const {
  for (const auto& d : dims) {
    if (d.kind == Dimension::Kind::log_uniform && !(d.lo > 0.0 && d.lo < d.hi))
      throw usage_error("dimension '" + d.name + "': need 0 < lo < hi");
    if (d.discrete() && d.values.empty()) throw usage_error("dimension '" + d.name + "': empty value set");
  }
}

bool SearchSpace::contains(const Config& c) const noexcept {
  if (c.size() != dims.size()) return false;
  for (const auto& d : dims) {
    auto it = c.find(d.name);
    if (it == c.end() || !d.contains(it->second)) return false;
  }
  return true;
}

bool SearchSpace::fully_discrete() const noexcept {
  return std::all_of(dims.begin(), dims.end(), [](const Dimension& d) { return d.discrete(); });
}

std::size_t SearchSpace::cardinality() const noexcept {
  std::size_t n = 1;
  for (const auto& d : dims) n *= d.discrete() ? d.values.size() : 0;
  return n;
}

const Dimension* SearchSpace::find(const std::string& dim) const noexcept {
  for (const auto& d : dims)
    if (d.name == dim) return &d;
  return nullptr;
}

json to_json(const SearchSpace& s) {
  json dims = json::array();
  for (const auto& d : s.dims) {
    json j{{"name", d.name}, {"external_only", d.external_only}};
    switch (d.kind) {
      case Dimension::Kind::log_uniform:
        j["kind"] = "log-uniform";
        j["lo"] = d.lo;
        j["hi"] = d.hi;
        break;
      case Dimension::Kind::categorical:
        j["kind"] = "categorical";
        j["values"] = d.values;
        break;
      case Dimension::Kind::integer_set:
        j["kind"] = "integer-set";
        j["values"] = d.values;
        break;
    }
    dims.push_back(j);
  }
  return json{{"name", s.name}, {"dimensions", dims}};
}

SearchSpace asr_space() {
  return {"asr",
          {Dimension::log_uniform("learning_rate", 1e-5, 5e-4),
           Dimension::integers("lora_rank", {64, 96, 128}, true),
           Dimension::categorical("lora_dropout", {0.0, 0.1, 0.15, 0.2, 0.3}, true),
           Dimension::categorical("noise_prob", {0.4, 0.5, 0.6, 0.7, 0.8}),
           Dimension::categorical("noise_max_amplitude", {0.025, 0.035, 0.04, 0.05}),
           Dimension::integers("pitch_max_semitones", {4, 6, 8, 10})}};
}

SearchSpace classification_space() {
  return {"classification",
          {Dimension::log_uniform("learning_rate", 1e-5, 1e-3),
           Dimension::integers("grad_accum_steps", {2, 4, 6}),
           Dimension::integers("oversampling", {1, 3, 5, 8}),
           Dimension::categorical("pitch_prob", {0.2, 0.3, 0.5}),
           Dimension::integers("pitch_min_semitones", {0, 1, 3, 4}),
           Dimension::integers("pitch_max_semitones", {0, 4, 6, 8})}};
}

std::pair<SearchSpace, SearchSpace> builtin_spaces() { return {asr_space(), classification_space()}; }

json to_json(const Trial& t) {
  return json{{"trial_id", t.id},
              {"config", t.config},
              {"objective", t.objective ? json(*t.objective) : json()},
              {"status", t.status == TrialStatus::complete ? "complete" : "failed"},
              {"seed", t.seed},
              {"error", t.error}};
}

Trial trial_from_json(const json& j) {
  Trial t;
  t.id = j.at("trial_id").get<int>();
  t.config = j.at("config").get<Config>();
  if (!j.at("objective").is_null()) t.objective = j.at("objective").get<double>();
  t.status = j.at("status").get<std::string>() == "complete" ? TrialStatus::complete : TrialStatus::failed;
  t.seed = j.at("seed").get<std::uint64_t>();
  t.error = j.value("error", "");
  return t;
}

std::vector<Trial> load_history(const std::filesystem::path& path) {
  std::vector<Trial> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(trial_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw data_error("trial history line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::optional<Strategy> parse_strategy(std::string_view s) noexcept {
  if (s == "random") return Strategy::random;
  if (s == "tpe" || s == "bayesian") return Strategy::tpe;
  return std::nullopt;
}

Config sample_uniform(const SearchSpace& space, Rng& rng) {
  Config c;
  for (const auto& d : space.dims) {
    if (d.kind == Dimension::Kind::log_uniform)
      c[d.name] = std::exp(uniform(rng, std::log(d.lo), std::log(d.hi)));
    else
      c[d.name] = d.values[uniform_index(rng, d.values.size())];
  }
  return c;
}

// ---------------------------------------------------------------------------
// TPE

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Mixture of Gaussians truncated to [lo, hi] (log space), equal weight per
/// observation plus one broad prior component.
struct Parzen {
  std::vector<double> mu, sigma, weight;
  double lo = 0.0, hi = 0.0;

  Parzen(const std::vector<double>& points, double lo_, double hi_, double prior_weight) : lo(lo_), hi(hi_) {
    const double range = hi - lo;
    const double n = static_cast<double>(points.size());
    double bw = range;
    if (points.size() > 1) {
      const double mean = std::accumulate(points.begin(), points.end(), 0.0) / n;
      double var = 0.0;
      for (double p : points) var += (p - mean) * (p - mean);
      const double sd = std::sqrt(var / (n - 1.0));
      bw = 1.06 * sd * std::pow(n, -0.2);  // Scott's rule
    }
    bw = std::clamp(bw, range / std::min(100.0, 1.0 + n), range);
    for (double p : points) {
      mu.push_back(p);
      sigma.push_back(bw);
      weight.push_back(1.0);
    }
    mu.push_back(0.5 * (lo + hi));
    sigma.push_back(range);
    weight.push_back(prior_weight);
  }

  double pdf(double x) const {
    double total_w = std::accumulate(weight.begin(), weight.end(), 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double z = (x - mu[i]) / sigma[i];
      const double mass = normal_cdf((hi - mu[i]) / sigma[i]) - normal_cdf((lo - mu[i]) / sigma[i]);
      const double dens = std::exp(-0.5 * z * z) / (sigma[i] * std::sqrt(2.0 * std::numbers::pi));
      acc += weight[i] * dens / std::max(mass, 1e-300);
    }
    return acc / total_w;
  }

  double sample(Rng& rng) const {
    const double total_w = std::accumulate(weight.begin(), weight.end(), 0.0);
    double u = uniform01(rng) * total_w;
    std::size_t i = 0;
    while (i + 1 < weight.size() && u >= weight[i]) u -= weight[i++];
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double x = mu[i] + sigma[i] * standard_normal(rng);
      if (x >= lo && x <= hi) return x;
    }
    return std::clamp(mu[i], lo, hi);
  }
};

/// Smoothed categorical: (count_v + prior) / (n + K * prior).
std::vector<double> categorical_probs(const std::vector<double>& values, const std::vector<double>& observed,
                                      double prior_weight) {
  std::vector<double> p(values.size(), prior_weight);
  for (double o : observed)
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i] == o) p[i] += 1.0;
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

Config tpe_suggest(const std::vector<Trial>& history, const SearchSpace& space, Rng& rng, const TpeOptions& options) {
  std::vector<const Trial*> done;
  for (const auto& t : history)
    if (t.status == TrialStatus::complete && t.objective) done.push_back(&t);
  if (static_cast<int>(done.size()) < options.n_startup || done.empty()) return sample_uniform(space, rng);

  std::stable_sort(done.begin(), done.end(), [](const Trial* a, const Trial* b) { return *a->objective > *b->objective; });
  const auto n_good = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(options.gamma * static_cast<double>(done.size()))));

  struct DimModel {
    std::optional<Parzen> good, bad;
    std::vector<double> good_p, bad_p;
  };
  std::vector<DimModel> models;
  for (const auto& d : space.dims) {
    std::vector<double> good, bad;
    for (std::size_t i = 0; i < done.size(); ++i) {
      auto it = done[i]->config.find(d.name);
      if (it == done[i]->config.end()) continue;
      const double v = d.kind == Dimension::Kind::log_uniform ? std::log(it->second) : it->second;
      (i < n_good ? good : bad).push_back(v);
    }
    DimModel m;
    if (d.kind == Dimension::Kind::log_uniform) {
      m.good.emplace(good, std::log(d.lo), std::log(d.hi), options.prior_weight);
      m.bad.emplace(bad, std::log(d.lo), std::log(d.hi), options.prior_weight);
    } else {
      m.good_p = categorical_probs(d.values, good, options.prior_weight);
      m.bad_p = categorical_probs(d.values, bad, options.prior_weight);
    }
    models.push_back(std::move(m));
  }

  Config best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < std::max(1, options.n_candidates); ++c) {
    Config cand;
    double score = 0.0;
    for (std::size_t k = 0; k < space.dims.size(); ++k) {
      const auto& d = space.dims[k];
      const auto& m = models[k];
      if (d.kind == Dimension::Kind::log_uniform) {
        const double x = m.good->sample(rng);
        cand[d.name] = std::clamp(std::exp(x), d.lo, d.hi);
        score += std::log(m.good->pdf(x)) - std::log(m.bad->pdf(x));
      } else {
        double u = uniform01(rng);
        std::size_t i = 0;
        while (i + 1 < m.good_p.size() && u >= m.good_p[i]) u -= m.good_p[i++];
        cand[d.name] = d.values[i];
        score += std::log(m.good_p[i]) - std::log(m.bad_p[i]);
      }
    }
    if (score > best_score) {
      best_score = score;
      best = std::move(cand);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Config> grid(const SearchSpace& space) {
  std::vector<Config> out{Config{}};
  for (const auto& d : space.dims) {
    std::vector<Config> next;
    for (const auto& partial : out)
      for (double v : d.values) {
        Config c = partial;
        c[d.name] = v;
        next.push_back(std::move(c));
      }
    out = std::move(next);
  }
  return out;
}

Trial evaluate(const Objective& objective, int id, Config config, std::uint64_t seed) {
  Trial t;
  t.id = id;
  t.config = std::move(config);
  t.seed = seed;
  try {
    auto value = objective(t.config, seed);
    if (value && std::isfinite(*value)) {
      t.objective = value;
      t.status = TrialStatus::complete;
    } else {
      t.status = TrialStatus::failed;
      t.error = value ? "non-finite objective" : "objective returned no value";
    }
  } catch (const std::exception& e) {
    t.status = TrialStatus::failed;
    t.error = e.what();
  }
  return t;
}

}  // namespace

SearchResult run_search(const SearchSpace& space, const Objective& objective, const SearchOptions& options) {
  space.validate();
  if (options.budget < 1) throw usage_error("search budget must be >= 1");
  if (options.parallelism < 1) throw usage_error("parallelism must be >= 1");

  SearchResult result;
  if (options.history_path) result.history = load_history(*options.history_path);
  for (const auto& t : result.history)
    if (!space.contains(t.config))
      throw data_error("resumed trial " + std::to_string(t.id) + " lies outside the '" + space.name + "' space");
  int next_id = 0;
  for (const auto& t : result.history) next_id = std::max(next_id, t.id + 1);

  std::vector<Config> permutation;
  if (options.strategy == Strategy::random && options.deduplicate && space.fully_discrete()) {
    permutation = grid(space);
    Rng g(derive_seed(options.seed, std::string_view("grid")));
    shuffle(permutation, g);
  }

  std::ofstream log;
  if (options.history_path) {
    log.open(*options.history_path, std::ios::app);
    if (!log) throw runtime_error("cannot append trial history: " + options.history_path->string());
  }

  while (static_cast<int>(result.history.size()) < options.budget) {
    const int slots = std::min(options.parallelism, options.budget - static_cast<int>(result.history.size()));
    std::vector<std::pair<int, Config>> batch;
    for (int s = 0; s < slots; ++s) {
      const int id = next_id++;
      Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(id)));
      Config c;
      if (!permutation.empty()) c = permutation[static_cast<std::size_t>(id) % permutation.size()];
      else if (options.strategy == Strategy::tpe) c = tpe_suggest(result.history, space, rng, options.tpe);
      else c = sample_uniform(space, rng);
      batch.emplace_back(id, std::move(c));
    }
    std::vector<Trial> done;
    if (batch.size() == 1) {
      done.push_back(evaluate(objective, batch[0].first, batch[0].second,
                              derive_seed(options.seed ^ 0x5eedULL, static_cast<std::uint64_t>(batch[0].first))));
    } else {
      std::vector<std::future<Trial>> futures;
      for (auto& [id, c] : batch)
        futures.push_back(std::async(std::launch::async, evaluate, std::cref(objective), id, c,
                                     derive_seed(options.seed ^ 0x5eedULL, static_cast<std::uint64_t>(id))));
      for (auto& f : futures) done.push_back(f.get());
    }
    for (auto& t : done) {
      if (log.is_open()) log << to_json(t).dump() << '\n' << std::flush;
      result.history.push_back(std::move(t));
    }
  }

  for (const auto& t : result.history) {
    if (t.status != TrialStatus::complete) continue;
    if (!result.best || *t.objective > *result.best->objective) result.best = t;
  }
  if (!result.best) throw runtime_error("objective failed on every trial");
  return result;
}

SearchResult random_search(const SearchSpace& space, const Objective& objective, int budget, std::uint64_t seed,
                           bool deduplicate) {
  SearchOptions o;
  o.strategy = Strategy::random;
  o.budget = budget;
  o.seed = seed;
  o.deduplicate = deduplicate;
  return run_search(space, objective, o);
}

}  // namespace ssd::hpo
