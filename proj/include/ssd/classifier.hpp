#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssd/dataset.hpp"
#include "ssd/features.hpp"

namespace ssd {

/// Probability vector aligned with a LabelSpace.
struct ProbDist {
  std::vector<double> p;

  std::size_t size() const noexcept { return p.size(); }
  /// Lowest index among maxima.
  std::size_t argmax() const noexcept;
  /// Entries in [0, 1] and summing to 1 within `tol`.
  bool valid(double tol = 1e-9) const noexcept;
};

ProbDist softmax(std::span<const double> logits);

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> grad;  ///< w.r.t. logits
  bool clamped = false;      ///< p_gold fell below the 1e-12 floor
};

inline constexpr double kProbFloor = 1e-12;

/// loss = -w_gold log p_gold, grad = w_gold (p - onehot(gold)). Empty weights mean all ones.
CrossEntropy weighted_ce(const ProbDist& dist, int gold, std::span<const double> weights);

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 20;
  int batch_size = 32;
  int grad_accum_steps = 1;
  std::vector<double> class_weights;  ///< empty: unweighted
  int hidden_units = 0;               ///< 0: softmax regression
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LabeledFeatures {
  std::vector<FeatureVector> x;
  std::vector<int> y;
  std::size_t size() const noexcept { return y.size(); }
};

class ClassifierModel {
 public:
  ClassifierModel() = default;
  /// Zero-initialized linear model (or tanh hidden layer of `hidden` units).
  ClassifierModel(LabelSpace labels, std::size_t input_dim, std::uint64_t fingerprint, std::size_t hidden = 0);

  const LabelSpace& labels() const noexcept { return labels_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t hidden_units() const noexcept { return hidden_; }
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

  /// Throws on fingerprint or dimension mismatch.
  ProbDist predict(const FeatureVector& f) const;
  std::vector<double> logits(std::span<const double> x) const;

  void save(const std::filesystem::path& path) const;
  static ClassifierModel load(const std::filesystem::path& path);

  bool parameters_finite() const noexcept;

  // Parameters are public to the trainer and to serialization.
  std::vector<double> feature_mean;   ///< D
  std::vector<double> feature_scale;  ///< D, multiplicative
  std::vector<double> hidden_weights; ///< D x H row-major
  std::vector<double> hidden_bias;    ///< H
  std::vector<double> weights;        ///< In x K row-major, In = H or D
  std::vector<double> bias;           ///< K

 private:
  LabelSpace labels_;
  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  std::uint64_t fingerprint_ = 0;
};

struct EpochTrace {
  int epoch = 0;
  double train_loss = 0.0;
  double val_macro_f1 = 0.0;
};

struct TrainResult {
  ClassifierModel model;
  std::vector<EpochTrace> trace;
  int best_epoch = 0;
  std::size_t clamp_events = 0;
};

/// Supplies the (possibly re-augmented) training set for each epoch.
using EpochData = std::function<LabeledFeatures(int epoch)>;

/// Mini-batch gradient descent with literal gradient accumulation (gradients of
/// k micro-batches are summed, then one step on their mean). Validation Macro F1
/// is computed after every epoch and the best epoch's parameters are returned
/// (earliest on ties). An empty validation set selects on training Macro F1.
TrainResult train(const LabeledFeatures& train_set, const LabeledFeatures& val_set, const LabelSpace& labels,
                  const TrainConfig& config);
TrainResult train(const EpochData& epochs, const LabeledFeatures& val_set, const LabelSpace& labels,
                  const TrainConfig& config);

/// Source of class probabilities per record: a trained model over cached
/// features, or probabilities produced elsewhere.
class ProbBackend {
 public:
  virtual ~ProbBackend() = default;
  virtual const LabelSpace& labels() const = 0;
  /// Throws data_error when the record is unknown to the backend.
  virtual ProbDist probs(const std::string& record_id) = 0;
};

class ModelBackend final : public ProbBackend {
 public:
  ModelBackend(ClassifierModel model, std::shared_ptr<const std::unordered_map<std::string, FeatureVector>> features);
  const LabelSpace& labels() const override { return model_.labels(); }
  ProbDist probs(const std::string& record_id) override;
  const ClassifierModel& model() const noexcept { return model_; }

 private:
  ClassifierModel model_;
  std::shared_ptr<const std::unordered_map<std::string, FeatureVector>> features_;
};

class ExternalProbsBackend final : public ProbBackend {
 public:
  explicit ExternalProbsBackend(LabelSpace labels) : labels_(std::move(labels)) {}
  const LabelSpace& labels() const override { return labels_; }
  ProbDist probs(const std::string& record_id) override;

  void insert(const std::string& id, ProbDist dist) { table_[id] = std::move(dist); }
  bool contains(const std::string& id) const { return table_.count(id) != 0; }
  std::size_t size() const noexcept { return table_.size(); }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

 private:
  LabelSpace labels_;
  std::unordered_map<std::string, ProbDist> table_;
  std::vector<std::string> warnings_;
};

/// JSON-Lines of {"id", "probs": [...], optional "task"}. Lines whose "task"
/// names a different space (e.g. "T3" when loading T2) are skipped. Sums within
/// 1e-6 of 1 are accepted, within 1e-3 renormalized with a warning, otherwise rejected.
ExternalProbsBackend load_external_probs(const std::filesystem::path& path, const LabelSpace& labels);
ExternalProbsBackend parse_external_probs(std::istream& in, const LabelSpace& labels);

}  // namespace ssd
