#include "ssd/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ssd/metrics.hpp"
#include "ssd/rng.hpp"

namespace ssd {

using nlohmann::json;

std::size_t ProbDist::argmax() const noexcept {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

bool ProbDist::valid(double tol) const noexcept {
  if (p.empty()) return false;
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

ProbDist softmax(std::span<const double> logits) {
  ProbDist d;
  if (logits.empty()) return d;
  const double top = *std::max_element(logits.begin(), logits.end());
  d.p.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    d.p[i] = std::exp(logits[i] - top);
    sum += d.p[i];
  }
  for (double& v : d.p) v /= sum;
  return d;
}

CrossEntropy weighted_ce(const ProbDist& dist, int gold, std::span<const double> weights) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= dist.size()) throw usage_error("gold class out of range");
  if (!weights.empty() && weights.size() != dist.size()) throw usage_error("class weight count mismatch");
  const auto g = static_cast<std::size_t>(gold);
  const double w = weights.empty() ? 1.0 : weights[g];
  CrossEntropy ce;
  double pg = dist.p[g];
  if (pg < kProbFloor) {
    pg = kProbFloor;
    ce.clamped = true;
  }
  ce.loss = -w * std::log(pg);
  ce.grad.resize(dist.size());
  for (std::size_t c = 0; c < dist.size(); ++c) ce.grad[c] = w * (dist.p[c] - (c == g ? 1.0 : 0.0));
  return ce;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw usage_error("learning rate must be positive");
  if (epochs < 1) throw usage_error("epochs must be >= 1");
  if (batch_size < 1) throw usage_error("batch size must be >= 1");
  if (grad_accum_steps < 1) throw usage_error("gradient accumulation steps must be >= 1");
  if (hidden_units < 0) throw usage_error("hidden units must be >= 0");
  for (double w : class_weights)
    if (!(w > 0.0) || !std::isfinite(w)) throw usage_error("class weights must be positive");
}

json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
              {"batch_size", c.batch_size},       {"grad_accum_steps", c.grad_accum_steps},
              {"class_weights", c.class_weights}, {"hidden_units", c.hidden_units},
              {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.grad_accum_steps = j.value("grad_accum_steps", c.grad_accum_steps);
    c.class_weights = j.value("class_weights", c.class_weights);
    c.hidden_units = j.value("hidden_units", c.hidden_units);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw usage_error(std::string("malformed train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

ClassifierModel::ClassifierModel(LabelSpace labels, std::size_t input_dim, std::uint64_t fingerprint,
                                 std::size_t hidden)
    : labels_(std::move(labels)), input_dim_(input_dim), hidden_(hidden), fingerprint_(fingerprint) {
  const std::size_t k = labels_.size();
  feature_mean.assign(input_dim, 0.0);
  feature_scale.assign(input_dim, 1.0);
  hidden_weights.assign(input_dim * hidden, 0.0);
  hidden_bias.assign(hidden, 0.0);
  weights.assign((hidden > 0 ? hidden : input_dim) * k, 0.0);
  bias.assign(k, 0.0);
}

namespace {

/// Forward pass with intermediates kept for backprop.
struct Forward {
  std::vector<double> z;       // standardized input
  std::vector<double> h;       // hidden activations (empty for linear)
  std::vector<double> logits;
};

Forward forward(const ClassifierModel& m, std::span<const double> x) {
  Forward f;
  const std::size_t d = m.input_dim(), hdim = m.hidden_units(), k = m.labels().size();
  f.z.resize(d);
  for (std::size_t i = 0; i < d; ++i) f.z[i] = (x[i] - m.feature_mean[i]) * m.feature_scale[i];
  const std::vector<double>* in = &f.z;
  if (hdim > 0) {
    f.h.assign(m.hidden_bias.begin(), m.hidden_bias.end());
    for (std::size_t i = 0; i < d; ++i) {
      const double zi = f.z[i];
      const double* row = &m.hidden_weights[i * hdim];
      for (std::size_t j = 0; j < hdim; ++j) f.h[j] += zi * row[j];
    }
    for (double& v : f.h) v = std::tanh(v);
    in = &f.h;
  }
  f.logits.assign(m.bias.begin(), m.bias.end());
  for (std::size_t i = 0; i < in->size(); ++i) {
    const double xi = (*in)[i];
    const double* row = &m.weights[i * k];
    for (std::size_t c = 0; c < k; ++c) f.logits[c] += xi * row[c];
  }
  return f;
}

void check_features(const ClassifierModel& m, const FeatureVector& f) {
  if (f.fingerprint != m.fingerprint())
    throw usage_error("feature fingerprint does not match the model's feature configuration");
  if (f.values.size() != m.input_dim())
    throw usage_error("feature dimension " + std::to_string(f.values.size()) + " != model input " +
                      std::to_string(m.input_dim()));
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::vector<double> ClassifierModel::logits(std::span<const double> x) const {
  if (x.size() != input_dim_) throw usage_error("input dimension mismatch");
  return forward(*this, x).logits;
}

ProbDist ClassifierModel::predict(const FeatureVector& f) const {
  check_features(*this, f);
  return softmax(forward(*this, f.values).logits);
}

bool ClassifierModel::parameters_finite() const noexcept {
  return all_finite(weights) && all_finite(bias) && all_finite(hidden_weights) && all_finite(hidden_bias) &&
         all_finite(feature_mean) && all_finite(feature_scale);
}

namespace {

void write_floats(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) {
    const float f = static_cast<float>(d);
    std::uint32_t raw;
    std::memcpy(&raw, &f, sizeof raw);
    const char le[4] = {static_cast<char>(raw & 0xff), static_cast<char>((raw >> 8) & 0xff),
                        static_cast<char>((raw >> 16) & 0xff), static_cast<char>((raw >> 24) & 0xff)};
    out.write(le, 4);
  }
}

void read_floats(std::istream& in, std::vector<double>& v) {
  for (double& d : v) {
    unsigned char le[4];
    if (!in.read(reinterpret_cast<char*>(le), 4)) throw data_error("model file truncated");
    const std::uint32_t raw = le[0] | (le[1] << 8) | (le[2] << 16) | (static_cast<std::uint32_t>(le[3]) << 24);
    float f;
    std::memcpy(&f, &raw, sizeof f);
    d = f;
  }
}

}  // namespace

void ClassifierModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw runtime_error("cannot write model: " + path.string());
  const json header{{"format", "ssd-classifier/1"},
                    {"task", std::string(to_string(labels_.task))},
                    {"classes", labels_.classes},
                    {"includes_typical", labels_.includes_typical},
                    {"input_dim", input_dim_},
                    {"hidden_units", hidden_},
                    {"fingerprint", fingerprint_},
                    {"layout", {"feature_mean", "feature_scale", "hidden_weights", "hidden_bias", "weights", "bias"}},
                    {"dtype", "float32-le"}};
  out << header.dump() << '\n';
  for (const auto* v : {&feature_mean, &feature_scale, &hidden_weights, &hidden_bias, &weights, &bias})
    write_floats(out, *v);
  if (!out) throw runtime_error("short write: " + path.string());
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open model: " + path.string());
  std::string line;
  std::getline(in, line);
  json header;
  try {
    header = json::parse(line);
    if (header.at("format") != "ssd-classifier/1") throw data_error("unknown model format in " + path.string());
    LabelSpace labels;
    const auto task = parse_task(header.at("task").get<std::string>());
    if (!task) throw data_error("unknown task in model header");
    labels.task = *task;
    labels.classes = header.at("classes").get<std::vector<std::string>>();
    labels.includes_typical = header.at("includes_typical").get<bool>();
    ClassifierModel m(labels, header.at("input_dim").get<std::size_t>(), header.at("fingerprint").get<std::uint64_t>(),
                      header.at("hidden_units").get<std::size_t>());
    for (auto* v : {&m.feature_mean, &m.feature_scale, &m.hidden_weights, &m.hidden_bias, &m.weights, &m.bias})
      read_floats(in, *v);
    return m;
  } catch (const json::exception& e) {
    throw data_error("malformed model header in " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

namespace {

double evaluate_f1(const ClassifierModel& m, const LabeledFeatures& data) {
  std::vector<int> preds(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    preds[i] = static_cast<int>(softmax(forward(m, data.x[i].values).logits).argmax());
  return macro_f1(preds, data.y, m.labels());
}

void check_set(const LabeledFeatures& s, const LabelSpace& labels, std::size_t dim, std::uint64_t fp,
               const char* what) {
  if (s.x.size() != s.y.size()) throw usage_error(std::string(what) + ": features and labels differ in length");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.x[i].values.size() != dim) throw usage_error(std::string(what) + ": inconsistent feature dimension");
    if (s.x[i].fingerprint != fp) throw usage_error(std::string(what) + ": mixed feature fingerprints");
    if (s.y[i] < 0 || static_cast<std::size_t>(s.y[i]) >= labels.size())
      throw usage_error(std::string(what) + ": label outside " + labels.name());
  }
}

}  // namespace

TrainResult train(const LabeledFeatures& train_set, const LabeledFeatures& val_set, const LabelSpace& labels,
                  const TrainConfig& config) {
  return train([&](int) { return train_set; }, val_set, labels, config);
}

TrainResult train(const EpochData& epochs, const LabeledFeatures& val_set, const LabelSpace& labels,
                  const TrainConfig& config) {
  config.validate();
  if (!config.class_weights.empty() && config.class_weights.size() != labels.size())
    throw usage_error("class weight count does not match " + labels.name());

  LabeledFeatures data = epochs(0);
  if (data.size() == 0) throw data_error("empty training set");
  const std::size_t dim = data.x.front().values.size();
  const std::uint64_t fp = data.x.front().fingerprint;
  check_set(data, labels, dim, fp, "training set");
  check_set(val_set, labels, dim, fp, "validation set");
  {
    std::vector<bool> present(labels.size(), false);
    for (int y : data.y) present[static_cast<std::size_t>(y)] = true;
    if (std::count(present.begin(), present.end(), true) < 2)
      throw data_error("training labels for " + labels.name() + " cover fewer than two classes");
  }

  const std::size_t k = labels.size();
  const auto hdim = static_cast<std::size_t>(config.hidden_units);
  ClassifierModel model(labels, dim, fp, hdim);

  // Standardize with epoch-0 statistics.
  for (std::size_t i = 0; i < dim; ++i) {
    double mean = 0.0;
    for (const auto& x : data.x) mean += x.values[i];
    mean /= static_cast<double>(data.size());
    double var = 0.0;
    for (const auto& x : data.x) var += (x.values[i] - mean) * (x.values[i] - mean);
    var /= static_cast<double>(data.size());
    model.feature_mean[i] = mean;
    model.feature_scale[i] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
  if (hdim > 0) {
    Rng init(derive_seed(config.seed, std::string_view("init")));
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& w : model.hidden_weights) w = s * standard_normal(init);
    const double so = 1.0 / std::sqrt(static_cast<double>(hdim));
    for (double& w : model.weights) w = so * standard_normal(init);
  }

  Rng order_rng(derive_seed(config.seed, std::string_view("shuffle")));
  const std::span<const double> class_w(config.class_weights);
  const std::size_t in_dim = hdim > 0 ? hdim : dim;

  std::vector<double> g_w(model.weights.size()), g_b(k), g_hw(model.hidden_weights.size()), g_hb(hdim);
  std::vector<double> dh(hdim);

  TrainResult result;
  double best_f1 = -1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0) {
      data = epochs(epoch);
      check_set(data, labels, dim, fp, "training set");
      if (data.size() == 0) throw data_error("empty training set at epoch " + std::to_string(epoch));
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, order_rng);

    std::fill(g_w.begin(), g_w.end(), 0.0);
    std::fill(g_b.begin(), g_b.end(), 0.0);
    std::fill(g_hw.begin(), g_hw.end(), 0.0);
    std::fill(g_hb.begin(), g_hb.end(), 0.0);
    double epoch_loss = 0.0;
    std::size_t accumulated = 0;
    int micro = 0;

    auto step = [&] {
      const double scale = config.learning_rate / static_cast<double>(accumulated);
      for (std::size_t i = 0; i < g_w.size(); ++i) model.weights[i] -= scale * g_w[i];
      for (std::size_t i = 0; i < k; ++i) model.bias[i] -= scale * g_b[i];
      for (std::size_t i = 0; i < g_hw.size(); ++i) model.hidden_weights[i] -= scale * g_hw[i];
      for (std::size_t i = 0; i < hdim; ++i) model.hidden_bias[i] -= scale * g_hb[i];
      std::fill(g_w.begin(), g_w.end(), 0.0);
      std::fill(g_b.begin(), g_b.end(), 0.0);
      std::fill(g_hw.begin(), g_hw.end(), 0.0);
      std::fill(g_hb.begin(), g_hb.end(), 0.0);
      accumulated = 0;
      micro = 0;
    };

    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const Forward f = forward(model, data.x[idx].values);
        const CrossEntropy ce = weighted_ce(softmax(f.logits), data.y[idx], class_w);
        if (ce.clamped) ++result.clamp_events;
        epoch_loss += ce.loss;
        const std::vector<double>& in = hdim > 0 ? f.h : f.z;
        for (std::size_t i = 0; i < in_dim; ++i) {
          const double xi = in[i];
          double* row = &g_w[i * k];
          for (std::size_t c = 0; c < k; ++c) row[c] += xi * ce.grad[c];
        }
        for (std::size_t c = 0; c < k; ++c) g_b[c] += ce.grad[c];
        if (hdim > 0) {
          for (std::size_t j = 0; j < hdim; ++j) {
            double s = 0.0;
            const double* row = &model.weights[j * k];
            for (std::size_t c = 0; c < k; ++c) s += row[c] * ce.grad[c];
            dh[j] = s * (1.0 - f.h[j] * f.h[j]);
          }
          for (std::size_t i = 0; i < dim; ++i) {
            const double zi = f.z[i];
            double* row = &g_hw[i * hdim];
            for (std::size_t j = 0; j < hdim; ++j) row[j] += zi * dh[j];
          }
          for (std::size_t j = 0; j < hdim; ++j) g_hb[j] += dh[j];
        }
      }
      accumulated += end - start;
      if (++micro == config.grad_accum_steps || end == order.size()) step();
    }

    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss) || !model.parameters_finite())
      throw runtime_error("non-finite loss at epoch " + std::to_string(epoch + 1) + " (learning rate " +
                          std::to_string(config.learning_rate) + " too large?)");

    const double f1 = val_set.size() > 0 ? evaluate_f1(model, val_set) : evaluate_f1(model, data);
    result.trace.push_back({epoch + 1, epoch_loss, f1});
    if (f1 > best_f1) {
      best_f1 = f1;
      result.model = model;
      result.best_epoch = epoch + 1;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

ModelBackend::ModelBackend(ClassifierModel model,
                           std::shared_ptr<const std::unordered_map<std::string, FeatureVector>> features)
    : model_(std::move(model)), features_(std::move(features)) {}

ProbDist ModelBackend::probs(const std::string& record_id) {
  auto it = features_->find(record_id);
  if (it == features_->end()) throw data_error("no features for record '" + record_id + "'");
  return model_.predict(it->second);
}

ProbDist ExternalProbsBackend::probs(const std::string& record_id) {
  auto it = table_.find(record_id);
  if (it == table_.end())
    throw data_error("external probabilities for " + labels_.name() + " missing record '" + record_id + "'");
  return it->second;
}

ExternalProbsBackend parse_external_probs(std::istream& in, const LabelSpace& labels) {
  ExternalProbsBackend backend(labels);
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "external probs line " + std::to_string(line) + ": ";
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw data_error(where + "invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("probs") || !j["probs"].is_array())
      throw data_error(where + "expected {\"id\": string, \"probs\": [...]}");
    if (auto t = j.find("task"); t != j.end() && t->is_string()) {
      const std::string task = t->get<std::string>();
      if (task != labels.name() && !(task == std::string(to_string(labels.task)) && !labels.includes_typical))
        continue;
    }
    const std::string id = j["id"].get<std::string>();
    ProbDist d;
    for (const auto& v : j["probs"]) {
      if (!v.is_number()) throw data_error(where + "non-numeric probability");
      d.p.push_back(v.get<double>());
    }
    if (d.size() != labels.size())
      throw data_error(where + "expected " + std::to_string(labels.size()) + " probabilities for " + labels.name() +
                       ", got " + std::to_string(d.size()));
    double sum = 0.0;
    for (double p : d.p) {
      if (!std::isfinite(p) || p < 0.0 || p > 1.0) throw data_error(where + "probability outside [0, 1]");
      sum += p;
    }
    const double off = std::abs(sum - 1.0);
    if (off > 1e-3) throw data_error(where + "probabilities sum to " + std::to_string(sum));
    if (off > 1e-6) {
      for (double& p : d.p) p /= sum;
      backend.add_warning(where + "renormalized probabilities for '" + id + "' (sum " + std::to_string(sum) + ")");
    }
    if (backend.contains(id)) throw data_error(where + "duplicate id '" + id + "'");
    backend.insert(id, std::move(d));
  }
  return backend;
}

ExternalProbsBackend load_external_probs(const std::filesystem::path& path, const LabelSpace& labels) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open external probabilities: " + path.string());
  return parse_external_probs(in, labels);
}

}  // namespace ssd
